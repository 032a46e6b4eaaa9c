//! Checks shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resample_pinn::diffnet::{Direction, JetProvider, Mlp, NetworkConfig};
use resample_pinn::pde::{self, CollocationSet, LossWeights, PinnObjective};
use resample_pinn::training::Problem;

/// `|a - b|` relative to the larger magnitude, with an absolute floor for
/// quantities that are zero up to roundoff.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Richardson-extrapolated central difference, fourth order.
fn first_difference(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Richardson-extrapolated second difference, fourth order.
fn second_difference(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    let f0 = f(0.0);
    let d = |h: f64| (f(h) - 2.0 * f0 + f(-h)) / (h * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

#[derive(Debug, Default, Clone, Copy)]
pub struct DerivativeReport {
    pub networks: usize,
    pub max_first: f64,
    pub max_second: f64,
}

/// Input derivatives of `networks` random default-architecture networks
/// against value-only finite differences at random points of the unit square.
pub fn derivative_check(networks: usize, points: usize, seed: u64) -> DerivativeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DerivativeReport {
        networks,
        ..DerivativeReport::default()
    };
    for k in 0..networks {
        let net = Mlp::from_seed(NetworkConfig::default(), seed.wrapping_add(k as u64)).unwrap();
        for _ in 0..points {
            let (t, x) = (rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
            for dir in [Direction::T, Direction::X] {
                let jet = net.jet(t, x, dir).unwrap();
                let f = |s: f64| match dir {
                    Direction::T => net.forward(t + s, x).unwrap(),
                    Direction::X => net.forward(t, x + s).unwrap(),
                };
                let d1 = first_difference(&f, 1e-3);
                let d2 = second_difference(&f, 2e-2);
                report.max_first = report.max_first.max(rel_err(jet.d1, d1, 1e-6));
                report.max_second = report.max_second.max(rel_err(jet.d2, d2, 1e-5));
            }
        }
    }
    report
}

fn training_objective(problem: &Problem, weights: LossWeights, rng: &mut ChaCha8Rng) -> (CollocationSet, PinnObjective) {
    let d = problem.domain;
    let set = CollocationSet {
        interior: (0..24)
            .map(|_| (rng.gen_range(0.0..d.t_max), rng.gen_range(d.x_min..d.x_max)))
            .collect(),
        inlet: (0..6).map(|_| rng.gen_range(0.0..d.t_max)).collect(),
        outlet: (0..6).map(|_| rng.gen_range(0.0..d.t_max)).collect(),
        initial: (0..6).map(|_| rng.gen_range(d.x_min..d.x_max)).collect(),
    };
    let obj = PinnObjective::new(problem.props, &problem.inlet, weights, &set, &d).unwrap();
    (set, obj)
}

/// Reverse-mode parameter gradients of the training loss against central
/// differences of the point-by-point loss, `params` random coordinates per network.
pub fn gradient_check(networks: usize, params: usize, seed: u64) -> f64 {
    let problem = Problem::default();
    let weights = LossWeights {
        pde: 4e8,
        inlet: 1.0,
        outlet: 1e9,
        initial: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for k in 0..networks {
        let cfg = problem.scaled_network(NetworkConfig::default());
        let net = Mlp::from_seed(cfg, seed.wrapping_add(1000 + k as u64)).unwrap();
        let (set, obj) = training_objective(&problem, weights, &mut rng);
        let (_, grad) = net.loss_gradient(obj.points(), &obj).unwrap();
        let loss_at = |net: &Mlp| {
            pde::assemble_loss(net, &problem.props, &problem.inlet, &weights, &set, &problem.domain).unwrap()
        };
        let g = grad.as_slice();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..params {
            let i = rng.gen_range(0..g.len());
            let mut plus = net.clone();
            plus.params_mut().as_mut_slice()[i] += h;
            let mut minus = net.clone();
            minus.params_mut().as_mut_slice()[i] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(g[i], fd, 1e-6 * scale));
        }
    }
    worst
}

pub mod sampling_suite {
    //! Property checks on the PMF and the three samplers.

    use proptest::prelude::*;
    use proptest::test_runner::{Config, TestCaseError, TestRunner};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use resample_pinn::pde::DomainSpec;
    use resample_pinn::sampling::{
        self, build_reference_grid, compute_pmf, CoefficientPolicy, Method, Pmf, PmfConfig, ResidualField, SamplerConfig,
    };

    pub type Check = Result<(), String>;

    fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check {
        let mut runner = TestRunner::new(Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        });
        runner.run(&strategy, test).map_err(|e| e.to_string())
    }

    /// Non-negative residuals with at least one positive entry.
    fn residuals() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 1e-6f64..10.0], 1..400)
            .prop_filter("needs a positive entry", |v| v.iter().any(|&e| e > 0.0))
    }

    pub fn normalization() -> Check {
        run(256, (residuals(), 0.25f64..4.0, 0.0f64..3.0), |(eps, k, c)| {
            let pmf = compute_pmf(&ResidualField::new(eps).unwrap(), &PmfConfig { k, c }).unwrap();
            let sum: f64 = pmf.probabilities().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {}", sum);
            prop_assert!(pmf.probabilities().iter().all(|&p| p >= 0.0));
            Ok(())
        })
    }

    pub fn zero_offset_reduction() -> Check {
        run(256, (residuals(), 0.5f64..3.0), |(eps, k)| {
            let pmf = compute_pmf(&ResidualField::new(eps.clone()).unwrap(), &PmfConfig { k, c: 0.0 }).unwrap();
            let total: f64 = eps.iter().map(|e| e.powf(k)).sum();
            for (p, e) in pmf.probabilities().iter().zip(&eps) {
                prop_assert!((p - e.powf(k) / total).abs() <= 1e-12);
            }
            let squared = compute_pmf(&ResidualField::new(eps.clone()).unwrap(), &PmfConfig::default()).unwrap();
            let total2: f64 = eps.iter().map(|e| e * e).sum();
            for (p, e) in squared.probabilities().iter().zip(&eps) {
                prop_assert!((p - e * e / total2).abs() <= 1e-12);
            }
            Ok(())
        })
    }

    pub fn scale_invariance() -> Check {
        run(256, (residuals(), 0.5f64..3.0, -3.0f64..3.0), |(eps, k, log_gamma)| {
            let gamma = 10f64.powf(log_gamma);
            let cfg = PmfConfig { k, c: 0.0 };
            let base = compute_pmf(&ResidualField::new(eps.clone()).unwrap(), &cfg).unwrap();
            let scaled = compute_pmf(&ResidualField::new(eps.iter().map(|e| e * gamma).collect()).unwrap(), &cfg).unwrap();
            for (a, b) in base.probabilities().iter().zip(scaled.probabilities()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            Ok(())
        })
    }

    pub fn monotonicity() -> Check {
        // Residuals bounded away from underflow so eps^k stays distinct.
        let eps = prop::collection::vec(1e-3f64..10.0, 2..200);
        run(256, (eps, 0.5f64..3.0), |(eps, k)| {
            let pmf = compute_pmf(&ResidualField::new(eps.clone()).unwrap(), &PmfConfig { k, c: 0.0 }).unwrap();
            let p = pmf.probabilities();
            for i in 0..eps.len() {
                for j in 0..eps.len() {
                    if eps[i] > eps[j] {
                        prop_assert!(p[i] > p[j], "eps {} > {} but p {} <= {}", eps[i], eps[j], p[i], p[j]);
                    }
                }
            }
            Ok(())
        })
    }

    fn domains() -> impl Strategy<Value = DomainSpec> {
        (1.0f64..1e4, -5.0f64..5.0, 0.1f64..10.0).prop_map(|(t_max, x_min, len)| DomainSpec {
            t_max,
            x_min,
            x_max: x_min + len,
        })
    }

    fn policy(rf: usize, constant: bool, raw: Vec<(f64, f64)>) -> CoefficientPolicy {
        if !constant {
            return CoefficientPolicy::Random;
        }
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for p in raw {
            if pairs.len() == rf - 1 {
                break;
            }
            if !pairs.contains(&p) {
                pairs.push(p);
            }
        }
        CoefficientPolicy::Constant { pairs }
    }

    pub fn asm3_geometry() -> Check {
        let strategy = (
            domains(),
            2usize..25,
            2usize..25,
            2usize..7,
            1usize..200,
            any::<bool>(),
            prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 8),
            any::<u64>(),
        );
        run(256, strategy, |(domain, n_t, n_x, rf, ppe, constant, raw, seed)| {
            let grid = build_reference_grid(&domain, n_t, n_x).unwrap();
            let cfg = SamplerConfig {
                method: Method::Asm3,
                refinement_factor: rf,
                points_per_event: ppe,
                asm2_candidate_pool: ppe,
                coefficient_policy: policy(rf, constant, raw),
                ..SamplerConfig::default()
            };
            prop_assume!(cfg.validate().is_ok());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eps: Vec<f64> = (0..grid.len()).map(|i| 1.0 + (i % 7) as f64).collect();
            let field = ResidualField::new(eps).unwrap();
            let batch = sampling::asm3_resample(&grid, &field, &cfg, &domain, &mut rng).unwrap();
            let m = cfg.asm3_parent_count();
            prop_assert_eq!(batch.parent_indices.len(), m);
            prop_assert_eq!(batch.refined_points.len(), m * (rf - 1));
            let tol_t = 1e-12 * domain.t_max;
            let tol_x = 1e-12 * (domain.x_max.abs() + domain.x_min.abs() + 1.0);
            for (j, &(t, x)) in batch.refined_points.iter().enumerate() {
                let (pt, px) = grid.point(batch.parent_of(j).unwrap());
                prop_assert!((t - pt).abs() <= grid.h_t() + tol_t);
                prop_assert!((x - px).abs() <= grid.h_x() + tol_x);
                prop_assert!(domain.contains(t, x), "child ({}, {}) outside", t, x);
            }
            Ok(())
        })
    }

    pub fn asm1_subset() -> Check {
        run(128, (domains(), 2usize..25, 2usize..25, 1usize..300, any::<u64>()), |(domain, n_t, n_x, ppe, seed)| {
            let grid = build_reference_grid(&domain, n_t, n_x).unwrap();
            let cfg = SamplerConfig {
                method: Method::Asm1,
                points_per_event: ppe,
                asm2_candidate_pool: ppe,
                ..SamplerConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eps: Vec<f64> = (0..grid.len()).map(|i| ((i * 37) % 11) as f64 + 0.5).collect();
            let batch = sampling::asm1_select(&grid, &ResidualField::new(eps).unwrap(), &cfg, &mut rng).unwrap();
            prop_assert_eq!(batch.refined_points.len(), ppe);
            let points = grid.points();
            for (&p, &i) in batch.refined_points.iter().zip(&batch.parent_indices) {
                prop_assert_eq!(p, points[i]);
                prop_assert!(points.contains(&p));
            }
            Ok(())
        })
    }

    pub fn asm2_top_m() -> Check {
        run(128, (domains(), 1usize..200, 0usize..400, any::<u64>()), |(domain, m, extra, seed)| {
            let cfg = SamplerConfig {
                method: Method::Asm2,
                points_per_event: m,
                asm2_candidate_pool: m + extra,
                ..SamplerConfig::default()
            };
            let score = |(t, x): (f64, f64)| (t * 0.37 + x * 11.0).sin() * 3.0;
            let mut seen = Vec::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = sampling::asm2_select(
                &domain,
                |c: &[(f64, f64)]| {
                    seen = c.to_vec();
                    Ok(c.iter().map(|&p| score(p)).collect())
                },
                &cfg,
                &mut rng,
            )
            .unwrap();
            prop_assert_eq!(batch.refined_points.len(), m);
            let min_selected = batch.refined_points.iter().map(|&p| score(p).abs()).fold(f64::INFINITY, f64::min);
            let mut selected = batch.refined_points.clone();
            let mut rejected_max: f64 = 0.0;
            for p in &seen {
                if let Some(k) = selected.iter().position(|q| q == p) {
                    selected.swap_remove(k);
                } else {
                    rejected_max = rejected_max.max(score(*p).abs());
                }
            }
            prop_assert!(selected.is_empty());
            prop_assert!(min_selected >= rejected_max);
            prop_assert!(batch.refined_points.iter().all(|&(t, x)| domain.contains(t, x)));
            Ok(())
        })
    }

    /// Residual one on the left half of the column and zero on the right:
    /// every selected point lies on the left, for many seeds.
    pub fn asm2_left_half() -> Check {
        let domain = DomainSpec::default();
        let cfg = SamplerConfig {
            method: Method::Asm2,
            ..SamplerConfig::default()
        };
        run(64, any::<u64>(), |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = sampling::asm2_select(
                &domain,
                |c: &[(f64, f64)]| Ok(c.iter().map(|&(_, x)| if x < 0.5 { 1.0 } else { 0.0 }).collect()),
                &cfg,
                &mut rng,
            )
            .unwrap();
            prop_assert_eq!(batch.refined_points.len(), 150);
            prop_assert!(batch.refined_points.iter().all(|&(_, x)| x < 0.5));
            Ok(())
        })
    }

    #[derive(Debug, Clone, Copy)]
    pub struct FrequencyReport {
        pub within_3se: f64,
        pub worst_se: f64,
    }

    /// 10^5 repetitions of 150 draws from the uniform PMF over 441 indices;
    /// per-index counts against the binomial standard error.
    pub fn multinomial_frequencies(seed: u64) -> FrequencyReport {
        let n = 441;
        let (reps, draws) = (100_000usize, 150usize);
        let pmf = Pmf::uniform(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u64; n];
        for _ in 0..reps {
            for i in sampling::sample_parents(&pmf, draws, &mut rng) {
                counts[i] += 1;
            }
        }
        let total = (reps * draws) as f64;
        let p = 1.0 / n as f64;
        let se = (total * p * (1.0 - p)).sqrt();
        let z: Vec<f64> = counts.iter().map(|&c| (c as f64 - total * p).abs() / se).collect();
        FrequencyReport {
            within_3se: z.iter().filter(|&&v| v <= 3.0).count() as f64 / n as f64,
            worst_se: z.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn all() -> Vec<(&'static str, Check)> {
        let freq = multinomial_frequencies(2024);
        let freq_check = if freq.within_3se >= 0.99 && freq.worst_se <= 5.0 {
            Ok(())
        } else {
            Err(format!("{freq:?}"))
        };
        vec![
            ("pmf normalization", normalization()),
            ("pmf c=0 reduction", zero_offset_reduction()),
            ("pmf scale invariance", scale_invariance()),
            ("pmf monotonicity", monotonicity()),
            ("asm3 geometry", asm3_geometry()),
            ("asm1 subset", asm1_subset()),
            ("asm2 top-m", asm2_top_m()),
            ("asm2 left half", asm2_left_half()),
            ("multinomial frequencies", freq_check),
        ]
    }
}
