//! Experiment runner: TOML configuration, single runs, the five-way
//! comparison, oracle verification and figure-data exports.
//!
//! Every run writes into its own directory:
//!
//! ```text
//! config.toml     resolved configuration for this run
//! checkpoint.bin  trained parameters
//! train_log.csv   loss history
//! batches.csv     sampled parents and children per event
//! metrics.json    error metrics, byte-identical across reruns
//! manifest.json   hashes, file list and wall-clock timings
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffnet::{Mlp, NetworkConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::fdsolver::{self, DiffusionProbe, FdConfig, FdSolution};
use crate::metrics::{self, EvalGrid, EvalGridConfig, Heatmap};
use crate::pde::{DomainSpec, InletPulseSpec, MediumProperties};
use crate::sampling::{self, build_reference_grid, CoefficientPolicy, Method, Pmf, SamplerConfig};
use crate::training::{self, CollocationConfig, Problem, TrainConfig};

/// Environment variable capping the number of concurrent runs.
pub const THREADS_ENV: &str = "RESAMPLE_PINN_THREADS";

const PAPER_PRESET: &str = include_str!("../configs/paper.toml");
const DESK_PRESET: &str = include_str!("../configs/desk.toml");

/// Bundled configuration text by name (`paper` or `desk`).
pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "paper" => Some(PAPER_PRESET),
        "desk" => Some(DESK_PRESET),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub network: NetworkConfig,
    pub medium: MediumProperties,
    pub domain: DomainSpec,
    pub inlet: InletPulseSpec,
    pub collocation: CollocationConfig,
    pub sampler: SamplerConfig,
    pub training: TrainConfig,
    pub oracle: FdConfig,
    pub metrics: EvalGridConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            network: NetworkConfig::default(),
            medium: MediumProperties::default(),
            domain: DomainSpec::default(),
            inlet: InletPulseSpec::default(),
            collocation: CollocationConfig::default(),
            sampler: SamplerConfig::default(),
            training: TrainConfig::default(),
            oracle: FdConfig::default(),
            metrics: EvalGridConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        self.network.validate()?;
        self.problem().validate()?;
        let c = &self.collocation;
        if c.n_t < 2 || c.n_x < 2 {
            return Err(Error::config("collocation.n_t", "reference grid needs at least 2 nodes per axis"));
        }
        if c.n_inlet == 0 || c.n_outlet == 0 || c.n_initial == 0 {
            return Err(Error::config("collocation.n_inlet", "boundary point counts must be > 0"));
        }
        self.sampler.validate()?;
        self.train_config(0).validate()?;
        self.oracle.validate()?;
        if self.metrics.n_t < 2 || self.metrics.n_x < 2 {
            return Err(Error::config("metrics.n_t", "evaluation grid needs at least 2 nodes per axis"));
        }
        Ok(())
    }

    pub fn problem(&self) -> Problem {
        Problem {
            props: self.medium,
            domain: self.domain,
            inlet: self.inlet,
            collocation: self.collocation,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            sampler: self.sampler.clone(),
            seed,
            ..self.training.clone()
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Copy with the sampler switched to `method` and `rf`. Constant
    /// coefficient policies are swapped for the preset matching `rf`.
    pub fn with_method(&self, method: Method, rf: usize) -> Result<Self> {
        let mut out = self.clone();
        out.sampler.method = method;
        out.sampler.refinement_factor = rf;
        if let CoefficientPolicy::Constant { pairs } = &out.sampler.coefficient_policy {
            if pairs.len() != rf - 1 {
                out.sampler.coefficient_policy = CoefficientPolicy::preset(rf).ok_or_else(|| {
                    Error::config("sampler.coefficient_policy", format!("no constant preset for RF = {rf}"))
                })?;
            }
        }
        Ok(out)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Worker count: explicit override, then the environment cap, then all cores.
pub fn worker_count(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Creates `dir`, refusing one that already has entries.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Shared oracle solve with its content hash.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub solution: Arc<FdSolution>,
    pub hash: String,
    pub seconds: f64,
}

pub fn solve_oracle(cfg: &ExperimentConfig) -> Result<Oracle> {
    let clock = Instant::now();
    let solution = fdsolver::solve(&cfg.medium, &cfg.domain, &cfg.inlet, &cfg.oracle)?;
    let seconds = clock.elapsed().as_secs_f64();
    let hash = hex_digest(&solution.table_bytes());
    info!("oracle {}x{} solved in {seconds:.2}s", cfg.oracle.n_x_cells, cfg.oracle.n_t_steps);
    Ok(Oracle {
        solution: Arc::new(solution),
        hash,
        seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPeak {
    pub t: f64,
    pub x: f64,
    pub value: f64,
}

/// Contents of `metrics.json`. No wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub method: Method,
    pub refinement_factor: usize,
    pub seed: u64,
    pub relative_l2: f64,
    pub r_squared_outlet: f64,
    pub final_loss: f64,
    pub events: usize,
    pub parent_draws: usize,
    pub max_repetition: usize,
    pub residual_peak: ResidualPeak,
    pub eval_grid: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub oracle_seconds: f64,
    pub training_seconds: f64,
    pub event_sampling_seconds: Vec<f64>,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub label: String,
    pub seed: u64,
    pub config_hash: String,
    pub oracle_hash: String,
    pub oracle_grid: [usize; 2],
    pub eval_grid: [usize; 2],
    pub peclet_warning: bool,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub timings: Timings,
}

/// In-memory result of one (method, seed) run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub metrics: RunMetrics,
    pub manifest: RunManifest,
    pub histogram: BTreeMap<usize, usize>,
}

pub const RUN_FILES: [&str; 6] = [
    "config.toml",
    "checkpoint.bin",
    "train_log.csv",
    "batches.csv",
    "metrics.json",
    "manifest.json",
];

/// Trains one seed of `cfg` and writes its artifacts into `dir`.
pub fn run_single(cfg: &ExperimentConfig, label: &str, seed: u64, oracle: &Oracle, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let problem = cfg.problem();
    let train_cfg = cfg.train_config(seed);
    info!("{label} seed {seed}: training {} epochs", train_cfg.epochs);
    let outcome = training::train(&cfg.network, &problem, &train_cfg)?;
    let net = &outcome.network;

    let resolved = ExperimentConfig {
        seeds: vec![seed],
        output_dir: dir.to_path_buf(),
        ..cfg.clone()
    };
    fs::write(dir.join("config.toml"), resolved.to_toml()?)?;
    net.params().write_checkpoint(BufWriter::new(File::create(dir.join("checkpoint.bin"))?))?;
    outcome.log.write_csv(BufWriter::new(File::create(dir.join("train_log.csv"))?))?;
    sampling::write_batches_csv(
        BufWriter::new(File::create(dir.join("batches.csv"))?),
        &outcome.grid,
        &outcome.batches,
    )?;

    let grid = EvalGrid::new(&cfg.domain, &cfg.metrics)?;
    let relative_l2 = metrics::relative_l2(&grid.predict(net)?, &grid.reference(&oracle.solution)?)?;
    let r_squared_outlet = metrics::r_squared(
        &metrics::outlet_prediction(net, &oracle.solution)?,
        &oracle.solution.outlet_series(),
    )?;
    let residual = residual_heatmap(net, &problem)?;
    let ((t, x), value) = residual.argmax();
    let histogram = sampling::repetition_histogram(&outcome.batches);
    let final_loss = outcome
        .log
        .final_loss()
        .ok_or_else(|| Error::Numeric("training produced no log entries".into()))?;
    let run_metrics = RunMetrics {
        label: label.to_string(),
        method: cfg.sampler.method,
        refinement_factor: cfg.sampler.refinement_factor,
        seed,
        relative_l2,
        r_squared_outlet,
        final_loss,
        events: outcome.batches.len(),
        parent_draws: histogram.values().sum(),
        max_repetition: histogram.values().copied().max().unwrap_or(0),
        residual_peak: ResidualPeak { t, x, value },
        eval_grid: [cfg.metrics.n_t, cfg.metrics.n_x],
    };
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&run_metrics)? + "\n")?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        label: label.to_string(),
        seed,
        config_hash: cfg.hash(),
        oracle_hash: oracle.hash.clone(),
        oracle_grid: [cfg.oracle.n_x_cells, cfg.oracle.n_t_steps],
        eval_grid: [cfg.metrics.n_t, cfg.metrics.n_x],
        peclet_warning: oracle.solution.peclet_warning,
        warnings: outcome.log.warnings.clone(),
        files: RUN_FILES.iter().map(|s| s.to_string()).collect(),
        timings: Timings {
            oracle_seconds: oracle.seconds,
            training_seconds: outcome.log.training_seconds,
            event_sampling_seconds: outcome.log.events.iter().map(|e| e.sampling_seconds).collect(),
        },
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    info!("{label} seed {seed}: relative L2 {relative_l2:.4e}, outlet R2 {r_squared_outlet:.5}");
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        metrics: run_metrics,
        manifest,
        histogram,
    })
}

fn run_jobs(jobs: Vec<(ExperimentConfig, String, u64, PathBuf)>, oracle: &Oracle, threads: usize) -> Result<Vec<RunSummary>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|(cfg, label, seed, dir)| run_single(cfg, label, *seed, oracle, dir))
            .collect()
    })
}

/// Trains the configured method once per seed under `output_dir/seed_<n>`.
pub fn cmd_run(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    prepare_output_dir(&cfg.output_dir)?;
    let oracle = solve_oracle(cfg)?;
    let label = cfg.sampler.method.to_string();
    let jobs = cfg
        .seeds
        .iter()
        .map(|&s| (cfg.clone(), label.clone(), s, cfg.output_dir.join(format!("seed_{s}"))))
        .collect();
    run_jobs(jobs, &oracle, worker_count(threads))
}

/// The five rows of the comparison: label, method, refinement factor.
pub const COMPARE_VARIANTS: [(&str, Method, usize); 5] = [
    ("base", Method::None, 2),
    ("asm1", Method::Asm1, 2),
    ("asm2", Method::Asm2, 2),
    ("asm3a", Method::Asm3, 2),
    ("asm3b", Method::Asm3, 4),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub label: String,
    pub method: Method,
    pub refinement_factor: usize,
    pub runs: usize,
    pub median_l2: f64,
    pub min_l2: f64,
    pub max_l2: f64,
    pub median_r_squared: f64,
    pub median_training_seconds: f64,
    pub median_event_sampling_seconds: f64,
    pub oracle_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub runs: Vec<RunSummary>,
    pub oracle_hash: String,
}

impl CompareReport {
    pub fn row(&self, label: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn runs_of<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a RunSummary> + 'a {
        self.runs.iter().filter(move |r| r.metrics.label == label)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<6} {:>3} {:>5} {:>11} {:>11} {:>11} {:>9} {:>10} {:>12}\n",
            "method", "rf", "runs", "median_l2", "min_l2", "max_l2", "median_r2", "train_s", "sample_s"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<6} {:>3} {:>5} {:>11.4e} {:>11.4e} {:>11.4e} {:>9.5} {:>10.2} {:>12.3e}",
                r.label,
                r.refinement_factor,
                r.runs,
                r.median_l2,
                r.min_l2,
                r.max_l2,
                r.median_r_squared,
                r.median_training_seconds,
                r.median_event_sampling_seconds
            );
        }
        let _ = writeln!(s, "oracle {} ({:.2}s)", self.oracle_hash, self.rows.first().map_or(0.0, |r| r.oracle_seconds));
        s
    }
}

/// Median of a non-empty list; mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every variant across every seed against one shared oracle solve and
/// writes `compare.csv` and `compare.txt` next to the run directories.
pub fn cmd_compare(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<CompareReport> {
    cfg.validate()?;
    prepare_output_dir(&cfg.output_dir)?;
    let oracle = solve_oracle(cfg)?;
    let mut jobs = Vec::new();
    for (label, method, rf) in COMPARE_VARIANTS {
        let variant = cfg.with_method(method, rf)?;
        variant.validate()?;
        for &seed in &cfg.seeds {
            let dir = cfg.output_dir.join(label).join(format!("seed_{seed}"));
            jobs.push((variant.clone(), label.to_string(), seed, dir));
        }
    }
    let runs = run_jobs(jobs, &oracle, worker_count(threads))?;
    let rows = COMPARE_VARIANTS
        .iter()
        .map(|&(label, method, rf)| {
            let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.metrics.label == label).collect();
            let l2: Vec<f64> = mine.iter().map(|r| r.metrics.relative_l2).collect();
            let events: Vec<f64> = mine
                .iter()
                .flat_map(|r| r.manifest.timings.event_sampling_seconds.iter().copied())
                .collect();
            CompareRow {
                label: label.to_string(),
                method,
                refinement_factor: rf,
                runs: mine.len(),
                median_l2: median(&l2),
                min_l2: l2.iter().copied().fold(f64::INFINITY, f64::min),
                max_l2: l2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                median_r_squared: median(&mine.iter().map(|r| r.metrics.r_squared_outlet).collect::<Vec<_>>()),
                median_training_seconds: median(
                    &mine.iter().map(|r| r.manifest.timings.training_seconds).collect::<Vec<_>>(),
                ),
                median_event_sampling_seconds: if events.is_empty() { 0.0 } else { median(&events) },
                oracle_seconds: oracle.seconds,
            }
        })
        .collect();
    let report = CompareReport {
        rows,
        runs,
        oracle_hash: oracle.hash,
    };
    report.write_csv(BufWriter::new(File::create(cfg.output_dir.join("compare.csv"))?))?;
    fs::write(cfg.output_dir.join("compare.txt"), report.to_text())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleVerification {
    /// Probe error at the configured oracle resolution.
    pub default_error: f64,
    pub default_grid: (usize, usize),
    pub convergence: fdsolver::ConvergenceReport,
    pub order_range: (f64, f64),
    pub error_limit: f64,
}

impl OracleVerification {
    pub fn passed(&self) -> bool {
        self.convergence.within(self.order_range.0, self.order_range.1) && self.default_error < self.error_limit
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("diffusion probe (analytic sine mode)\n");
        for ((cells, steps), err) in &self.convergence.errors {
            let _ = writeln!(s, "  {cells:>6} cells {steps:>6} steps  error {err:.4e}");
        }
        for (k, o) in self.convergence.orders.iter().enumerate() {
            let _ = writeln!(s, "  order {}->{}: {o:.3}", k, k + 1);
        }
        let _ = writeln!(
            s,
            "  {}x{} error {:.4e} (limit {:.0e})",
            self.default_grid.0, self.default_grid.1, self.default_error, self.error_limit
        );
        let _ = writeln!(
            s,
            "{}: orders within [{}, {}], error below limit",
            if self.passed() { "PASS" } else { "FAIL" },
            self.order_range.0,
            self.order_range.1
        );
        s
    }
}

pub fn verify_oracle(cfg: &FdConfig, base_cells: usize, levels: usize) -> Result<OracleVerification> {
    let probe = DiffusionProbe::default();
    Ok(OracleVerification {
        default_error: probe.relative_error(cfg)?,
        default_grid: (cfg.n_x_cells, cfg.n_t_steps),
        convergence: probe.convergence(base_cells, base_cells, levels)?,
        order_range: (1.7, 2.3),
        error_limit: 1e-4,
    })
}

/// Runs the probe suite; a failed gate becomes an acceptance error.
pub fn cmd_verify_oracle(cfg: &FdConfig, base_cells: usize, levels: usize) -> Result<OracleVerification> {
    let report = verify_oracle(cfg, base_cells, levels)?;
    if !report.passed() {
        return Err(Error::Acceptance(report.to_text()));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleDemo {
    pub parent: (f64, f64),
    pub children: Vec<(f64, f64)>,
    pub h_t: f64,
    pub h_x: f64,
}

impl SampleDemo {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "t", "x"])?;
        w.write_record(["parent".to_string(), self.parent.0.to_string(), self.parent.1.to_string()])?;
        for (t, x) in &self.children {
            w.write_record(["child".to_string(), t.to_string(), x.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One parent drawn uniformly from a 5x5 grid over `domain`, refined with
/// random coefficients.
pub fn cmd_sample_demo(domain: &DomainSpec, rf: usize, seed: u64) -> Result<SampleDemo> {
    if rf < 2 {
        return Err(Error::config("rf", "refinement factor must be >= 2"));
    }
    let grid = build_reference_grid(domain, 5, 5)?;
    let cfg = SamplerConfig {
        method: Method::Asm3,
        refinement_factor: rf,
        points_per_event: rf - 1,
        asm2_candidate_pool: rf - 1,
        seed,
        ..SamplerConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parents = sampling::sample_parents(&Pmf::uniform(grid.len()), 1, &mut rng);
    let batch = sampling::refine(&grid, &parents, &cfg, domain, &mut rng)?;
    Ok(SampleDemo {
        parent: grid.point(parents[0]),
        children: batch.refined_points,
        h_t: grid.h_t(),
        h_x: grid.h_x(),
    })
}

/// Which field `export-heatmap` renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapKind {
    /// `|r|` on the reference grid.
    Residual,
    /// `|c_net - c_oracle|` on the evaluation grid.
    Error,
}

pub fn load_network(run_dir: &Path) -> Result<(ExperimentConfig, Mlp)> {
    let cfg = ExperimentConfig::load(&run_dir.join("config.toml"))?;
    let params = NetworkParams::read_checkpoint(File::open(run_dir.join("checkpoint.bin"))?)?;
    let net = Mlp::new(cfg.problem().scaled_network(cfg.network.clone()), params)?;
    Ok((cfg, net))
}

pub fn residual_heatmap(net: &Mlp, problem: &Problem) -> Result<Heatmap> {
    let grid = problem.reference_grid()?;
    let field = metrics::residual_field_on(&grid.points(), net, &problem.props)?;
    Heatmap::new(
        grid.t_nodes().to_vec(),
        grid.x_nodes().to_vec(),
        field.values().to_vec(),
        "PDE residual |r| on the reference grid",
    )
}

pub fn error_heatmap(net: &Mlp, cfg: &ExperimentConfig, oracle: &FdSolution) -> Result<Heatmap> {
    let grid = EvalGrid::new(&cfg.domain, &cfg.metrics)?;
    let err = grid
        .predict(net)?
        .iter()
        .zip(grid.reference(oracle)?)
        .map(|(p, r)| (p - r).abs())
        .collect();
    Heatmap::new(grid.t_axis, grid.x_axis, err, "absolute error against the oracle")
}

/// Writes `<kind>_heatmap.csv` and `<kind>_heatmap.svg` for a finished run into `out_dir`.
pub fn cmd_export_heatmap(run_dir: &Path, kind: HeatmapKind, out_dir: &Path) -> Result<[PathBuf; 2]> {
    let (cfg, net) = load_network(run_dir)?;
    let (map, stem) = match kind {
        HeatmapKind::Residual => (residual_heatmap(&net, &cfg.problem())?, "residual_heatmap"),
        HeatmapKind::Error => {
            let oracle = solve_oracle(&cfg)?;
            (error_heatmap(&net, &cfg, &oracle.solution)?, "error_heatmap")
        }
    };
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let svg_path = out_dir.join(format!("{stem}.svg"));
    map.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    fs::write(&svg_path, map.to_svg())?;
    Ok([csv_path, svg_path])
}
