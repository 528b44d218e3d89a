use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use enmkf::data::{generate_synthetic, truth_path, write_csv, write_truth_csv};
use enmkf::ensemble::FilterKind;
use enmkf::experiment::{
    compare_methods, convergence_study, read_diagnostics, run_filter, run_series, stopping_series,
    write_rows, DataSource, RunConfig, StoppingRule,
};
use enmkf::{Error, ErrorKind, Result};
use serde::Serialize;

/// Joint state and parameter estimation for building walls with ensemble
/// Kalman filters.
#[derive(Debug, Parser)]
#[command(name = "enmkf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one filter and write diagnostics.csv and summary.json.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV to assimilate instead of the configured source.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Assimilate at most this many records.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate a synthetic measurement campaign and its noiseless truth.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Campaign length in minutes.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Final estimates of both methods across ensemble sizes and seeds.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ensemble sizes.
        #[arg(long, value_delimiter = ',', default_value = "25,50,100")]
        sizes: Vec<usize>,
        /// Minute at which the estimates are read.
        #[arg(long, default_value_t = 3000)]
        t_eval: i64,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
    },
    /// Paired-seed comparison of EnMKF and EnKF on synthetic data.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        /// Methods to pair, `first,second`.
        #[arg(long, value_delimiter = ',', default_value = "enmkf,enkf")]
        methods: Vec<FilterKind>,
    },
    /// Evaluate the stopping rule over a filter run.
    Stopcheck {
        #[command(flatten)]
        common: Common,
        /// Existing diagnostics.csv; when absent the configured filter is run.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        rel_tol: f64,
        /// Window in minutes.
        #[arg(long, default_value_t = 500)]
        window: usize,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    method: Option<FilterKind>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    ar_order: Option<u8>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(method) = self.method {
            cfg.method = method;
        }
        if let Some(m) = self.ensemble_size {
            cfg.ensemble_size = m;
        }
        if let Some(order) = self.ar_order {
            cfg.ar_order = order;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct StopRow {
    t_min: i64,
    stop: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Filter {
            common,
            data,
            steps,
        } => {
            let mut cfg = common.load()?;
            if let Some(path) = data {
                cfg.data = DataSource::Csv { path };
            }
            if steps.is_some() {
                cfg.steps = steps;
            }
            let out = run_filter(&cfg)?;
            let s = &out.summary;
            println!(
                "{} steps: R = {:.5} ± {:.2e}, rhoC = {:.1} ± {:.2e} ({:.1}s)",
                s.steps, s.r_mean, s.r_std, s.rho_c_mean, s.rho_c_std, s.wall_clock_s
            );
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Synth { common, horizon } => {
            let cfg = common.load()?;
            let mut spec = match cfg.data {
                DataSource::Synthetic(spec) => spec,
                DataSource::Csv { .. } => {
                    return Err(Error::config("synth needs a synthetic data source"))
                }
            };
            if let Some(h) = horizon {
                spec.horizon_min = h;
            }
            if let Some(seed) = common.seed {
                spec.seed = seed;
            }
            let data = generate_synthetic(&spec)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("measurements.csv");
            write_csv(&path, &data.records)?;
            write_truth_csv(truth_path(&path), &data.truth)?;
            println!("wrote {} records to {}", data.records.len(), path.display());
        }
        Command::Converge {
            common,
            sizes,
            t_eval,
            replicates,
        } => {
            let cfg = common.load()?;
            let study = convergence_study(&cfg, &sizes, t_eval, replicates)?;
            study.write(&cfg.output_dir)?;
            for a in &study.aggregate {
                println!(
                    "{:>6} M={:<5} mean |R error| {:.3e}  mean |rhoC error| {:.3e}",
                    a.method, a.m, a.r_mae, a.rho_c_mae
                );
            }
        }
        Command::Compare {
            common,
            replicates,
            methods,
        } => {
            let cfg = common.load()?;
            let pair: [FilterKind; 2] = methods
                .try_into()
                .map_err(|_| Error::config("--methods takes exactly two methods"))?;
            let rep = compare_methods(&cfg, pair, replicates)?;
            rep.write(&cfg.output_dir)?;
            for s in &rep.summaries {
                println!(
                    "{:>6} collapse rate {:.2}  median final std R {:.2e} rhoC {:.2e}  median flux residual var {:.2} / {:.2}",
                    s.method,
                    s.collapse_rate,
                    s.median_r_std_final,
                    s.median_rho_c_std_final,
                    s.median_fint_residual_var,
                    s.median_fext_residual_var
                );
            }
        }
        Command::Stopcheck {
            common,
            diagnostics,
            rel_tol,
            window,
        } => {
            let cfg = common.load()?;
            let rule = StoppingRule {
                rel_tol,
                window_min: window,
            };
            rule.validate()?;
            let history = match diagnostics {
                Some(path) => read_diagnostics(path)?,
                None => {
                    let (records, _) = cfg.load_data()?;
                    run_series(&cfg, &records)?
                }
            };
            let series = stopping_series(&history, &rule)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let rows: Vec<StopRow> = series
                .iter()
                .map(|&(t_min, stop)| StopRow { t_min, stop })
                .collect();
            write_rows(cfg.output_dir.join("stopping.csv"), &rows)?;
            match series.iter().find(|s| s.1) {
                Some((k, _)) => println!("stopping rule first satisfied at minute {k}"),
                None => println!("stopping rule not satisfied"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
