//! Full-batch Adam training with periodic adaptive resampling of the interior
//! collocation set.

use std::time::Instant;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::{Mlp, NetworkConfig, NetworkParams, ParamGradient};
use crate::error::{Error, Result};
use crate::pde::{self, CollocationSet, DomainSpec, InletPulseSpec, LossTerms, LossWeights, MediumProperties, PinnObjective};
use crate::sampling::{
    self, build_reference_grid, compute_pmf, Method, Pmf, ReferenceGrid, ResidualField, SampleBatch, SamplerConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("training.adam.learning_rate", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("training.adam.beta1", "betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("training.adam.epsilon", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        AdamState {
            config,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(params: &mut NetworkParams, grad: &ParamGradient, state: &mut AdamState) -> Result<()> {
    let g = grad.as_slice();
    if g.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::Numeric("gradient and parameter shapes differ".into()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for (((theta, &gi), m), v) in params
        .as_mut_slice()
        .iter_mut()
        .zip(g)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * gi;
        *v = beta2 * *v + (1.0 - beta2) * gi * gi;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *theta -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

/// Collocation layout: reference grid resolution plus boundary point counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollocationConfig {
    pub n_t: usize,
    pub n_x: usize,
    pub n_inlet: usize,
    pub n_outlet: usize,
    pub n_initial: usize,
}

impl Default for CollocationConfig {
    fn default() -> Self {
        CollocationConfig {
            n_t: 21,
            n_x: 21,
            n_inlet: 101,
            n_outlet: 101,
            n_initial: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Problem {
    pub props: MediumProperties,
    pub domain: DomainSpec,
    pub inlet: InletPulseSpec,
    pub collocation: CollocationConfig,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.props.validate()?;
        self.domain.validate()?;
        self.inlet.validate()
    }

    pub fn reference_grid(&self) -> Result<ReferenceGrid> {
        build_reference_grid(&self.domain, self.collocation.n_t, self.collocation.n_x)
    }

    pub fn boundary_points(&self) -> CollocationSet {
        let c = &self.collocation;
        CollocationSet::boundary_grid(&self.domain, c.n_inlet, c.n_outlet, c.n_initial)
    }

    /// Network configuration with the input map sending the domain to the unit square.
    pub fn scaled_network(&self, mut config: NetworkConfig) -> NetworkConfig {
        config.input_scale = [1.0 / self.domain.t_max, 1.0 / self.domain.length()];
        config.input_offset = [0.0, self.domain.x_min];
        config
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub resample_period: usize,
    /// Also resample before the first update.
    pub resample_at_start: bool,
    /// Also resample after the last update (affects batches only).
    pub resample_at_end: bool,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub log_every: usize,
    /// Run the schedule and sampling without computing gradients.
    pub dry_run: bool,
    #[serde(skip)]
    pub sampler: SamplerConfig,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15000,
            resample_period: 1000,
            resample_at_start: false,
            resample_at_end: false,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            log_every: 100,
            dry_run: false,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("training.epochs", "must be >= 1"));
        }
        if self.resample_period == 0 {
            return Err(Error::config("training.resample_period", "must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("training.log_every", "must be >= 1"));
        }
        self.adam.validate()?;
        self.weights.validate()?;
        self.sampler.validate()
    }

    /// Epochs at which a resampling event fires, in order.
    pub fn event_epochs(&self) -> Vec<usize> {
        if self.sampler.method == Method::None {
            return Vec::new();
        }
        let mut out: Vec<usize> = (1..self.epochs).filter(|e| e % self.resample_period == 0).collect();
        if self.resample_at_start {
            out.insert(0, 0);
        }
        if self.resample_at_end && self.epochs.is_multiple_of(self.resample_period) {
            out.push(self.epochs);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub loss: f64,
    pub pde: f64,
    pub inlet: f64,
    pub outlet: f64,
    pub initial: f64,
    pub active_interior: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub event_index: usize,
    pub epoch: usize,
    pub active_interior: usize,
    pub parents: usize,
    pub children: usize,
    /// Residual evaluation plus point selection, seconds.
    pub sampling_seconds: f64,
    pub fell_back_to_uniform: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    pub events: Vec<EventRecord>,
    pub warnings: Vec<String>,
    pub training_seconds: f64,
}

impl TrainLog {
    /// Loss history without wall-clock data, so reruns write identical bytes.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(e)?;
        }
        if self.entries.is_empty() {
            w.write_record(["epoch", "loss", "pde", "inlet", "outlet", "initial", "active_interior"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Mlp,
    pub log: TrainLog,
    pub batches: Vec<SampleBatch>,
    pub grid: ReferenceGrid,
}

/// Seeds the sampler stream independently of network initialisation.
fn sampler_rng(train_seed: u64, sampler_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(sampler_seed ^ train_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(1);
    rng
}

/// Residual magnitudes at `points` from one batched jet pass.
pub fn batch_residuals(net: &Mlp, props: &MediumProperties, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    let jets = net.eval_batch(points)?;
    Ok((0..points.len())
        .map(|k| pde::residual_from_jets(props, &jets, k).abs())
        .collect())
}

pub fn train(net_config: &NetworkConfig, problem: &Problem, cfg: &TrainConfig) -> Result<TrainOutcome> {
    problem.validate()?;
    cfg.validate()?;
    let net_config = problem.scaled_network(net_config.clone());
    let mut network = Mlp::from_seed(net_config, cfg.seed)?;
    let grid = problem.reference_grid()?;
    let reference = grid.points();
    let boundary = problem.boundary_points();
    let mut rng = sampler_rng(cfg.seed, cfg.sampler.seed);
    let mut adam = AdamState::new(cfg.adam, network.params().len());
    let accumulate = cfg.sampler.accumulate();

    let build_objective = |interior: Vec<(f64, f64)>| -> Result<PinnObjective> {
        let set = CollocationSet {
            interior,
            ..boundary.clone()
        };
        PinnObjective::new(problem.props, &problem.inlet, cfg.weights, &set, &problem.domain)
    };

    let mut batches: Vec<SampleBatch> = Vec::new();
    let mut active: Vec<(f64, f64)> = Vec::new();
    let mut objective = build_objective(reference.clone())?;
    let mut log = TrainLog::default();
    let events = cfg.event_epochs();
    let mut next_event = 0;
    let started = Instant::now();

    let mut resample = |epoch: usize,
                        network: &Mlp,
                        batches: &mut Vec<SampleBatch>,
                        active: &mut Vec<(f64, f64)>,
                        log: &mut TrainLog|
     -> Result<Vec<(f64, f64)>> {
        let event_index = batches.len();
        let clock = Instant::now();
        let mut fell_back = false;
        let mut batch = match cfg.sampler.method {
            Method::None => unreachable!("no events without a method"),
            Method::Asm2 => sampling::asm2_select(
                &problem.domain,
                |cands: &[(f64, f64)]| batch_residuals(network, &problem.props, cands),
                &cfg.sampler,
                &mut rng,
            )?,
            Method::Asm1 | Method::Asm3 => {
                let field = ResidualField::new(batch_residuals(network, &problem.props, &reference)?)?;
                let pmf = match compute_pmf(&field, &cfg.sampler.pmf) {
                    Ok(p) => p,
                    Err(Error::DegenerateDistribution(why)) => {
                        let msg = format!("event {event_index} at epoch {epoch}: {why}; sampling parents uniformly");
                        warn!("{msg}");
                        log.warnings.push(msg);
                        fell_back = true;
                        Pmf::uniform(field.len())
                    }
                    Err(e) => return Err(e),
                };
                if cfg.sampler.method == Method::Asm1 {
                    sampling::asm1_from_pmf(&grid, &pmf, &cfg.sampler, &mut rng)
                } else {
                    sampling::asm3_from_pmf(&grid, &pmf, &cfg.sampler, &problem.domain, &mut rng)?
                }
            }
        };
        let seconds = clock.elapsed().as_secs_f64();
        batch.event_index = event_index;
        if !accumulate {
            active.clear();
        }
        active.extend_from_slice(&batch.refined_points);
        let expected = if accumulate {
            batches.iter().map(|b| b.refined_points.len()).sum::<usize>() + batch.refined_points.len()
        } else {
            batch.refined_points.len()
        };
        if active.len() != expected {
            return Err(Error::Numeric("active collocation count broke its accumulation rule".into()));
        }
        log.events.push(EventRecord {
            event_index,
            epoch,
            active_interior: reference.len() + active.len(),
            parents: batch.parent_indices.len(),
            children: batch.refined_points.len(),
            sampling_seconds: seconds,
            fell_back_to_uniform: fell_back,
        });
        batches.push(batch);
        let mut interior = reference.clone();
        interior.extend_from_slice(active);
        Ok(interior)
    };

    for epoch in 0..cfg.epochs {
        if events.get(next_event) == Some(&epoch) {
            let interior = resample(epoch, &network, &mut batches, &mut active, &mut log)?;
            objective = build_objective(interior)?;
            next_event += 1;
        }
        if cfg.dry_run {
            continue;
        }
        let (loss, grad) = network.loss_gradient(objective.points(), &objective)?;
        if epoch % cfg.log_every == 0 {
            log.entries.push(log_entry(epoch, loss, &network, &objective)?);
        }
        adam_step(network.params_mut(), &grad, &mut adam)?;
    }
    if !cfg.dry_run {
        let jets = network.eval_batch(objective.points())?;
        let terms = objective.terms(&jets);
        let loss = terms.weighted_total(objective.weights());
        if !loss.is_finite() {
            return Err(Error::NumericOverflow { term: "total".into() });
        }
        log.entries.push(entry_from_terms(cfg.epochs, loss, terms, &objective));
    }
    if events.get(next_event) == Some(&cfg.epochs) {
        resample(cfg.epochs, &network, &mut batches, &mut active, &mut log)?;
    }
    log.training_seconds = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        network,
        log,
        batches,
        grid,
    })
}

fn log_entry(epoch: usize, loss: f64, network: &Mlp, objective: &PinnObjective) -> Result<LogEntry> {
    let jets = network.eval_batch(objective.points())?;
    Ok(entry_from_terms(epoch, loss, objective.terms(&jets), objective))
}

fn entry_from_terms(epoch: usize, loss: f64, terms: LossTerms, objective: &PinnObjective) -> LogEntry {
    LogEntry {
        epoch,
        loss,
        pde: terms.pde,
        inlet: terms.inlet,
        outlet: terms.outlet,
        initial: terms.initial,
        active_interior: objective.interior_count(),
    }
}
