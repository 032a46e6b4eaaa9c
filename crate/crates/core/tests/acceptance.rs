//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! The comparison study at desk scale dominates the runtime (15 training runs).

mod common;

use std::fs;
use std::time::Instant;

use resample_pinn::experiment::{self, median, ExperimentConfig, RunSummary};
use resample_pinn::fdsolver::FdConfig;
use resample_pinn::sampling::Method;
use resample_pinn::training::{self, Problem, TrainConfig};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn report(id: usize, name: &str, seconds: f64, o: &Outcome) {
    let verdict = if o.passed { "PASS" } else { "FAIL" };
    println!("[{verdict}] {id}. {name} ({seconds:.1}s): {}", o.detail);
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let clock = Instant::now();
    let o = f();
    (o, clock.elapsed().as_secs_f64())
}

fn derivative_engine() -> Outcome {
    let clock = Instant::now();
    let d = common::derivative_check(100, 4, 11);
    let g = common::gradient_check(100, 20, 5);
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        d.max_first <= 1e-5 && d.max_second <= 1e-4 && g <= 1e-4 && secs < 60.0,
        format!(
            "max rel error first {:.2e}, second {:.2e}, gradient {:.2e} over {} networks",
            d.max_first, d.max_second, g, d.networks
        ),
    )
}

fn oracle_validity() -> Outcome {
    let clock = Instant::now();
    let r = experiment::verify_oracle(&FdConfig::default(), 20, 4).expect("probe solves");
    let secs = clock.elapsed().as_secs_f64();
    let orders: Vec<String> = r.convergence.orders.iter().map(|o| format!("{o:.3}")).collect();
    outcome(
        r.passed() && secs < 120.0,
        format!("orders [{}], default-grid error {:.2e}", orders.join(", "), r.default_error),
    )
}

fn sampling_algebra() -> Outcome {
    let clock = Instant::now();
    let results = common::sampling_suite::all();
    let secs = clock.elapsed().as_secs_f64();
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    let detail = if failed.is_empty() {
        format!("{} property suites hold", results.len())
    } else {
        failed.join("; ")
    };
    outcome(failed.is_empty() && secs < 60.0, detail)
}

fn protocol_fidelity() -> Outcome {
    let clock = Instant::now();
    let problem = Problem::default();
    let net = resample_pinn::diffnet::NetworkConfig::default();
    let mut problems = Vec::new();
    for (label, method, rf) in [
        ("asm1", Method::Asm1, 2),
        ("asm2", Method::Asm2, 2),
        ("asm3a", Method::Asm3, 2),
        ("asm3b", Method::Asm3, 4),
    ] {
        let mut cfg = TrainConfig {
            dry_run: true,
            ..TrainConfig::default()
        };
        cfg.sampler.method = method;
        cfg.sampler.refinement_factor = rf;
        let out = training::train(&net, &problem, &cfg).expect("dry run");
        let events = &out.log.events;
        if events.len() != 14 {
            problems.push(format!("{label}: {} events", events.len()));
        }
        for (n, e) in events.iter().enumerate() {
            let want = if method == Method::Asm3 { 441 + 150 } else { 441 + 150 * (n + 1) };
            if e.active_interior != want {
                problems.push(format!("{label} event {n}: {} active, want {want}", e.active_interior));
            }
            if label == "asm3b" && e.parents != 50 {
                problems.push(format!("asm3b event {n}: {} parents", e.parents));
            }
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    if secs >= 10.0 {
        problems.push(format!("took {secs:.1}s"));
    }
    let detail = if problems.is_empty() {
        "14 events; 441+150 (asm3), 441+150n (asm1/asm2); 50 parents per asm3b event".to_string()
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn desk_config(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(experiment::preset("desk").unwrap()).unwrap();
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn comparative_direction(report: &experiment::CompareReport) -> Outcome {
    let m = |label: &str| report.row(label).expect("row").median_l2;
    let base = m("base");
    let adaptive_ok = ["asm1", "asm2", "asm3a", "asm3b"].iter().all(|l| m(l) <= base);
    let rf_ok = m("asm3b") <= m("asm3a");
    outcome(
        adaptive_ok && rf_ok,
        format!(
            "median rel L2 base {:.4e}, asm1 {:.4e}, asm2 {:.4e}, asm3a {:.4e}, asm3b {:.4e}",
            base,
            m("asm1"),
            m("asm2"),
            m("asm3a"),
            m("asm3b")
        ),
    )
}

fn event_times<'a>(runs: impl Iterator<Item = &'a RunSummary>) -> Vec<f64> {
    runs.flat_map(|r| r.manifest.timings.event_sampling_seconds.iter().copied()).collect()
}

fn cost_asymmetry(report: &experiment::CompareReport) -> Outcome {
    let asm2 = event_times(report.runs_of("asm2"));
    let asm3 = event_times(report.runs_of("asm3a").chain(report.runs_of("asm3b")));
    let (m2, m3) = (median(&asm2), median(&asm3));
    outcome(
        asm2.len() >= 5 && asm3.len() >= 5 && m3 < m2,
        format!(
            "median per-event sampling time asm3 {:.3}ms ({} events) vs asm2 {:.3}ms ({} events)",
            m3 * 1e3,
            asm3.len(),
            m2 * 1e3,
            asm2.len()
        ),
    )
}

fn verification_style(report: &experiment::CompareReport) -> Outcome {
    let r2: Vec<f64> = report.runs_of("asm3a").map(|r| r.metrics.r_squared_outlet).collect();
    let worst = r2.iter().copied().fold(f64::INFINITY, f64::min);
    let shown: Vec<String> = r2.iter().map(|v| format!("{v:.5}")).collect();
    outcome(
        !r2.is_empty() && worst >= 0.95,
        format!("outlet R2 per asm3a seed [{}]", shown.join(", ")),
    )
}

fn repetition_statistics(dir: &std::path::Path) -> Outcome {
    let mut cfg = ExperimentConfig::from_toml_str(experiment::preset("paper").unwrap()).unwrap();
    cfg.seeds = vec![0];
    cfg.output_dir = dir.to_path_buf();
    let runs = experiment::cmd_run(&cfg, Some(1)).expect("full-protocol run");
    let r = &runs[0];
    let total: usize = r.histogram.values().sum();
    let events = r.metrics.events;
    let max = r.histogram.values().copied().max().unwrap_or(0);
    outcome(
        total == 150 * events && max >= 2,
        format!(
            "full protocol asm3a seed 0: {events} events, {total} parent draws, {} distinct, max repetition {max}",
            r.histogram.len()
        ),
    )
}

fn determinism(report: &experiment::CompareReport, dir: &std::path::Path) -> Outcome {
    let mut problems = Vec::new();
    // Rerun of one comparison run at full desk scale.
    let original = report.runs_of("asm3a").next().expect("asm3a run");
    let cfg = ExperimentConfig::load(&original.dir.join("config.toml")).unwrap();
    let oracle = experiment::solve_oracle(&cfg).unwrap();
    let rerun_dir = dir.join("rerun");
    experiment::run_single(&cfg, "asm3a", original.metrics.seed, &oracle, &rerun_dir).unwrap();
    for f in ["metrics.json", "batches.csv", "train_log.csv", "checkpoint.bin"] {
        if fs::read(original.dir.join(f)).unwrap() != fs::read(rerun_dir.join(f)).unwrap() {
            problems.push(format!("asm3a rerun: {f} differs"));
        }
    }
    // Short runs of every method, twice each, through the run command.
    for (method, rf) in [(Method::None, 2), (Method::Asm1, 2), (Method::Asm2, 2), (Method::Asm3, 4)] {
        let mut short = desk_config(dir).with_method(method, rf).unwrap();
        short.training.epochs = 300;
        short.training.resample_period = 100;
        short.seeds = vec![3];
        let mut bytes = Vec::new();
        for rep in 0..2 {
            short.output_dir = dir.join(format!("short_{method}_{rf}_{rep}"));
            experiment::cmd_run(&short, Some(1)).unwrap();
            bytes.push(fs::read(short.output_dir.join("seed_3/metrics.json")).unwrap());
        }
        if bytes[0] != bytes[1] {
            problems.push(format!("{method} rf {rf}: metrics.json differs"));
        }
    }
    let detail = if problems.is_empty() {
        "metrics.json byte-identical on rerun (desk asm3a and short runs of all methods)".to_string()
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut all = Vec::new();

    let (o, s) = timed(derivative_engine);
    report(1, "derivative engine", s, &o);
    all.push(o.passed);

    let (o, s) = timed(oracle_validity);
    report(2, "oracle validity", s, &o);
    all.push(o.passed);

    let (o, s) = timed(sampling_algebra);
    report(3, "sampling algebra", s, &o);
    all.push(o.passed);

    let (o, s) = timed(protocol_fidelity);
    report(4, "protocol fidelity", s, &o);
    all.push(o.passed);

    let clock = Instant::now();
    let compare = experiment::cmd_compare(&desk_config(&tmp.path().join("compare")), None).expect("desk comparison");
    let compare_secs = clock.elapsed().as_secs_f64();
    print!("{}", compare.to_text());

    let o = comparative_direction(&compare);
    report(5, "comparative direction", compare_secs, &o);
    all.push(o.passed);

    let o = cost_asymmetry(&compare);
    report(6, "cost asymmetry", 0.0, &o);
    all.push(o.passed);

    let o = verification_style(&compare);
    report(7, "outlet breakthrough R2", 0.0, &o);
    all.push(o.passed);

    let (o, s) = timed(|| repetition_statistics(&tmp.path().join("full")));
    report(8, "repetition statistics", s, &o);
    all.push(o.passed);

    let (o, s) = timed(|| determinism(&compare, tmp.path()));
    report(9, "determinism", s, &o);
    all.push(o.passed);

    let passed = all.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", all.len());
    if passed != all.len() {
        std::process::exit(1);
    }
}
