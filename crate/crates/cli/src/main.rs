use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cape_core::datagen::generate_dataset;
use cape_core::harness::{
    accountant_table, cape_epsilon_for, delta_curves, h_ratio_table, maps_for_record, mean_correlation,
    noise_demo, run_once, run_sweep, write_csv_rows, write_dataset, write_spatial_maps, write_sweep,
    Algorithm, ExperimentConfig, Mode, RunRecord, RunSpec, ACCOUNTANT_CSV, DELTA_CURVES_CSV, H_RATIO_CSV,
    NOISE_DEMO_CSV,
};
use cape_core::{CapeError, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

const DEFAULT_OUTPUT: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "cape", version, about = "Correlated-noise differentially private decentralized PCA and ICA")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration. Missing keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long, short, global = true, env = "CAPE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run whatever the configuration's `mode` selects.
    Run,
    /// Zero-sum noise, pooled-variance and variance-gain tables.
    NoiseDemo {
        #[arg(long, value_delimiter = ',')]
        sites: Option<Vec<usize>>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// δ of CAPE, conventional and pooled releases over a τ grid, plus H(n).
    DeltaCurves {
        #[arg(long, value_delimiter = ',')]
        sites: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Overall ε of naive, strong, Rényi and moments accounting.
    AccountantCompare {
        #[arg(long)]
        sigma_w_sq: Option<f64>,
        #[arg(long)]
        sigma_b_sq: Option<f64>,
        #[arg(long)]
        delta_target: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        iterations: Option<Vec<u64>>,
    },
    /// Write a synthetic dataset per seed.
    GenData {
        #[arg(long)]
        subjects: Option<usize>,
    },
    /// Run one algorithm per seed and store the run records.
    RunDjica {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Grid over algorithms, ε_i and subject counts.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<Algorithm>>,
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        subjects: Option<Vec<usize>>,
        /// Also store every run record as JSON.
        #[arg(long)]
        save_records: bool,
    },
    /// Recovered spatial maps of a stored run.
    ExportMaps {
        /// Run record written by `run-djica`.
        record: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    epsilon_i: Option<f64>,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Give DP-djICA the per-iteration budget matching CAPE's RDP total.
    #[arg(long)]
    match_baseline: bool,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = Some(dir.clone());
    }
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn report(path: &Path) {
    println!("{}", path.display());
}

fn write_rows<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let path = dir.join(name);
    write_csv_rows(&path, rows)?;
    report(&path);
    Ok(())
}

fn cmd_noise_demo(cfg: &ExperimentConfig) -> Result<()> {
    let dir = output_dir(cfg)?;
    write_rows(&dir, NOISE_DEMO_CSV, &noise_demo(cfg)?)
}

fn cmd_delta_curves(cfg: &ExperimentConfig) -> Result<()> {
    let dir = output_dir(cfg)?;
    write_rows(&dir, DELTA_CURVES_CSV, &delta_curves(cfg)?)?;
    write_rows(&dir, H_RATIO_CSV, &h_ratio_table(cfg)?)
}

fn cmd_accountant(cfg: &ExperimentConfig) -> Result<()> {
    let dir = output_dir(cfg)?;
    write_rows(&dir, ACCOUNTANT_CSV, &accountant_table(cfg)?)
}

fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let dir = output_dir(cfg)?;
    for &seed in &cfg.seeds {
        let ds = generate_dataset(&cfg.dataset, seed)?;
        let sub = dir.join(format!("data_seed{seed}"));
        write_dataset(&sub, &ds)?;
        report(&sub);
    }
    Ok(())
}

fn run_spec(cfg: &ExperimentConfig, seed: u64, match_baseline: bool) -> Result<RunSpec> {
    let baseline_epsilon = if match_baseline && cfg.algorithm == Algorithm::DpDjica {
        let j = cfg.ica.max_iter.max(1);
        Some(cape_epsilon_for(cfg, cfg.privacy.epsilon_i, j)? / j as f64)
    } else {
        None
    };
    Ok(RunSpec {
        algorithm: cfg.algorithm,
        subjects: cfg.dataset.subjects,
        epsilon_i: cfg.privacy.epsilon_i,
        seed,
        baseline_epsilon,
    })
}

fn cmd_run(cfg: &ExperimentConfig, match_baseline: bool) -> Result<()> {
    let dir = output_dir(cfg)?;
    for &seed in &cfg.seeds {
        let spec = run_spec(cfg, seed, match_baseline)?;
        let rec = run_once(cfg, &spec).map_err(|e| e.context(spec.describe()))?;
        let stem = format!("run_{}_seed{seed}", cfg.algorithm.name());
        let json = dir.join(format!("{stem}.json"));
        rec.save(&json)?;
        write_rows(&dir, &format!("{stem}_history.csv"), &rec.history)?;
        info!("{}: q = {:.4} after {} iterations", spec.describe(), rec.q_ngi, rec.iterations);
        report(&json);
    }
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig, save_records: bool) -> Result<()> {
    let dir = output_dir(cfg)?;
    let out = run_sweep(cfg)?;
    write_sweep(&dir, &out)?;
    if save_records {
        let rec_dir = dir.join("records");
        std::fs::create_dir_all(&rec_dir)?;
        for rec in out.records.iter().flatten() {
            let eps = rec.epsilon_i.map_or_else(|| "none".to_string(), |e| e.to_string());
            rec.save(&rec_dir.join(format!(
                "{}_M{}_eps{eps}_seed{}.json",
                rec.algorithm.name(),
                rec.dataset.subjects,
                rec.seed
            )))?;
        }
    }
    for row in &out.summary {
        info!("{row:?}");
    }
    report(&dir);
    Ok(())
}

fn cmd_export_maps(cfg: &ExperimentConfig, record: &Path) -> Result<()> {
    let rec = RunRecord::load(record)?;
    let ds = generate_dataset(&rec.dataset, rec.seed)?;
    let maps = maps_for_record(&rec, &ds)?;
    let stem = record.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let dir = output_dir(cfg)?.join(format!("maps_{stem}"));
    write_spatial_maps(&dir, &maps)?;
    info!("mean matched correlation {:.4}", mean_correlation(&maps));
    report(&dir);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Run => {
            cfg.validate()?;
            match cfg.mode {
                Mode::NoiseDemo => cmd_noise_demo(&cfg),
                Mode::DeltaCurves => cmd_delta_curves(&cfg),
                Mode::AccountantCompare => cmd_accountant(&cfg),
                Mode::RunDjica => cmd_run(&cfg, cfg.sweep.match_baseline_epsilon),
                Mode::Sweep => cmd_sweep(&cfg, false),
            }
        }
        Command::NoiseDemo { sites, tau, trials } => {
            let p = &mut cfg.noise_demo;
            set(&mut p.sites, sites);
            set(&mut p.tau, tau);
            set(&mut p.trials, trials);
            cfg.validate()?;
            cmd_noise_demo(&cfg)
        }
        Command::DeltaCurves { sites, epsilons, points } => {
            let p = &mut cfg.delta_curves;
            set(&mut p.sites, sites);
            set(&mut p.epsilons, epsilons);
            set(&mut p.points, points);
            cfg.validate()?;
            cmd_delta_curves(&cfg)
        }
        Command::AccountantCompare {
            sigma_w_sq,
            sigma_b_sq,
            delta_target,
            iterations,
        } => {
            let p = &mut cfg.accountant;
            set(&mut p.sigma_w_sq, sigma_w_sq);
            set(&mut p.sigma_b_sq, sigma_b_sq);
            set(&mut p.delta_target, delta_target);
            set(&mut p.iterations, iterations);
            cfg.validate()?;
            cmd_accountant(&cfg)
        }
        Command::GenData { subjects } => {
            set(&mut cfg.dataset.subjects, subjects);
            cfg.validate()?;
            cmd_gen_data(&cfg)
        }
        Command::RunDjica { run } => {
            set(&mut cfg.algorithm, run.algorithm);
            set(&mut cfg.privacy.epsilon_i, run.epsilon_i);
            set(&mut cfg.dataset.subjects, run.subjects);
            set(&mut cfg.ica.max_iter, run.max_iter);
            cfg.validate()?;
            cmd_run(&cfg, run.match_baseline)
        }
        Command::Sweep {
            algorithms,
            epsilons,
            subjects,
            save_records,
        } => {
            set(&mut cfg.sweep.algorithms, algorithms);
            set(&mut cfg.sweep.epsilons, epsilons);
            set(&mut cfg.sweep.subjects, subjects);
            cfg.validate()?;
            cmd_sweep(&cfg, save_records)
        }
        Command::ExportMaps { record } => cmd_export_maps(&cfg, &record),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn exit_code(err: &CapeError) -> u8 {
    if err.is_config() { 2 } else { 3 }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
