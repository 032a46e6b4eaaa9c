//! Command-line front end for the resampling PINN lab.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use resample_pinn::experiment::{self, ExperimentConfig, HeatmapKind};
use resample_pinn::fdsolver::FdConfig;
use resample_pinn::pde::DomainSpec;
use resample_pinn::sampling::Method;
use resample_pinn::{Error, Result};

#[derive(Parser)]
#[command(name = "resample-pinn", version, about = "Adaptive collocation sampling for a 1-D transport PINN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured method once per seed.
    Run(ConfigArgs),
    /// Train base, ASM1, ASM2, ASM3 (RF 2) and ASM3 (RF 4) across all seeds.
    Compare(ConfigArgs),
    /// Check the finite-difference oracle against the analytic diffusion probe.
    VerifyOracle {
        /// Cells (and steps) on the coarsest convergence level.
        #[arg(long, default_value_t = 20)]
        base_cells: usize,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 2000)]
        cells: usize,
        #[arg(long, default_value_t = 6000)]
        steps: usize,
    },
    /// Refine one parent of a small grid and print parent and children as CSV.
    SampleDemo {
        #[arg(long, default_value_t = 2)]
        rf: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a residual or error heat map for a finished run directory.
    ExportHeatmap {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Field::Residual)]
        field: Field,
        /// Defaults to the run directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Field {
    Residual,
    Error,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment file.
    #[arg(required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled configuration instead of a file.
    #[arg(long, value_parser = ["paper", "desk"], conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long)]
    rf: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    period: Option<usize>,
    #[arg(long)]
    points_per_event: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Concurrent runs; falls back to RESAMPLE_PINN_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "none" => Ok(Method::None),
        "asm1" => Ok(Method::Asm1),
        "asm2" => Ok(Method::Asm2),
        "asm3" => Ok(Method::Asm3),
        _ => Err(format!("unknown method `{s}` (none, asm1, asm2, asm3)")),
    }
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::from_toml_str(
                experiment::preset(name).ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`")))?,
            )?,
            (None, None) => return Err(Error::config("config", "a config path or --preset is required")),
        };
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(m) = self.method {
            cfg.sampler.method = m;
        }
        if let Some(rf) = self.rf {
            cfg = cfg.with_method(cfg.sampler.method, rf)?;
        }
        if let Some(e) = self.epochs {
            cfg.training.epochs = e;
        }
        if let Some(p) = self.period {
            cfg.training.resample_period = p;
        }
        if let Some(n) = self.points_per_event {
            cfg.sampler.points_per_event = n;
        }
        if let Some(lr) = self.lr {
            cfg.training.adam.learning_rate = lr;
        }
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            for run in experiment::cmd_run(&cfg, args.threads)? {
                let m = &run.metrics;
                println!(
                    "{} seed {}: relative L2 {:.4e}, outlet R2 {:.5} -> {}",
                    m.label,
                    m.seed,
                    m.relative_l2,
                    m.r_squared_outlet,
                    run.dir.display()
                );
            }
        }
        Command::Compare(args) => {
            let cfg = args.load()?;
            let report = experiment::cmd_compare(&cfg, args.threads)?;
            print!("{}", report.to_text());
        }
        Command::VerifyOracle {
            base_cells,
            levels,
            cells,
            steps,
        } => {
            let cfg = FdConfig {
                n_x_cells: cells,
                n_t_steps: steps,
                ..FdConfig::default()
            };
            let report = experiment::verify_oracle(&cfg, base_cells, levels)?;
            print!("{}", report.to_text());
            if !report.passed() {
                return Err(Error::Acceptance("oracle verification failed".into()));
            }
        }
        Command::SampleDemo { rf, seed, out } => {
            let demo = experiment::cmd_sample_demo(&DomainSpec::default(), rf, seed)?;
            match out {
                Some(path) => demo.write_csv(std::fs::File::create(path)?)?,
                None => demo.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::ExportHeatmap { run_dir, field, out_dir } => {
            let kind = match field {
                Field::Residual => HeatmapKind::Residual,
                Field::Error => HeatmapKind::Error,
            };
            let out_dir = out_dir.unwrap_or_else(|| run_dir.clone());
            for path in experiment::cmd_export_heatmap(&run_dir, kind, &out_dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
