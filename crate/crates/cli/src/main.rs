//! `tpgate`: Coulomb tables, trion spectra, response tables, gate synthesis,
//! trajectories and field scans from a single JSON run configuration.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tpgate::control::Gate;
use tpgate::effective::Encoding;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{sha256_hex, OutputDir};

#[derive(Debug, Parser)]
#[command(name = "tpgate", version, about = "Trion-exciton-polariton gate synthesis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads for tables and scans (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Cache directory (overrides `cache_dir` and TPGATE_CACHE_DIR).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Form factor and diagonal Coulomb elements versus field.
    Coulomb {
        #[command(flatten)]
        common: Common,
        /// Comma-separated α values (overrides `coulomb.alphas`).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        alphas: Option<Vec<f64>>,
    },
    /// Trion binding energies and the singlet/triplet crossing estimate.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Field-dependent inputs of the effective model.
    Response {
        #[command(flatten)]
        common: Common,
    },
    /// Optimize pulses and field for a target gate.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gate: Option<Gate>,
        #[arg(long)]
        encoding: Option<EncodingArg>,
        /// Gate time in ps.
        #[arg(long)]
        tf: Option<f64>,
        #[arg(long)]
        pulses: Option<usize>,
        #[arg(long)]
        trajectory: bool,
        #[arg(long)]
        scan: bool,
        #[arg(long)]
        tomography: bool,
        /// Apply the synthesized gate K times.
        #[arg(long, value_name = "K")]
        repeat: Option<usize>,
    },
    /// Population trajectory under a pulse train or a stored result.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        result: Option<PathBuf>,
        #[arg(long)]
        encoding: Option<EncodingArg>,
    },
    /// Fidelity versus field for a stored result.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        result: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum EncodingArg {
    Exciton,
    Trion,
    Qudit,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Exciton => Encoding::Exciton,
            EncodingArg::Trion => Encoding::Trion,
            EncodingArg::Qudit => Encoding::Qudit,
        }
    }
}

fn load(common: &Common) -> Result<(RunConfig, String), CliError> {
    let (mut cfg, hash) = match &common.config {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            (RunConfig::load(path)?, sha256_hex(&bytes))
        }
        None => (RunConfig::default(), sha256_hex(b"")),
    };
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(j) = common.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(d) = &common.cache_dir {
        cfg.cache_dir = Some(d.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok((cfg, hash))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Coulomb { common, .. } => ("coulomb", common),
        Command::Spectrum { common } => ("spectrum", common),
        Command::Response { common } => ("response", common),
        Command::Synthesize { common, .. } => ("synthesize", common),
        Command::Evolve { common, .. } => ("evolve", common),
        Command::Scan { common, .. } => ("scan", common),
    };
    let (mut cfg, config_hash) = load(common)?;
    let mut art = commands::Artifacts::default();
    match &cli.command {
        Command::Coulomb { alphas: Some(a), .. } => cfg.coulomb.alphas = a.clone(),
        Command::Synthesize { gate, encoding, tf, pulses, trajectory, scan, tomography, repeat, .. } => {
            cfg.gate = gate.or(cfg.gate);
            cfg.encoding = encoding.map(Encoding::from).or(cfg.encoding);
            if tf.is_some() {
                cfg.synthesis.gate_time = *tf;
            }
            if let Some(m) = pulses {
                cfg.synthesis.pulses = *m;
            }
            if cfg.gate.is_none() {
                return Err(CliError::Usage("synthesize needs a target gate (--gate)".into()));
            }
            art = commands::Artifacts { trajectory: *trajectory, scan: *scan, tomography: *tomography, repeat: *repeat };
        }
        Command::Evolve { result, encoding, .. } => {
            if result.is_some() {
                cfg.evolve.result = result.clone();
            }
            cfg.encoding = encoding.map(Encoding::from).or(cfg.encoding);
        }
        Command::Scan { result, .. } => {
            if result.is_some() {
                cfg.evolve.result = result.clone();
            }
        }
        _ => {}
    }
    cfg.validate()?;
    if let Some(j) = cfg.jobs {
        // fails only if a pool already exists, which keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }

    let mut out = OutputDir::create(&cfg.output_dir)?;
    out.inputs.insert("config".into(), config_hash);
    let result = match &cli.command {
        Command::Coulomb { .. } => commands::coulomb(&cfg, &mut out),
        Command::Spectrum { .. } => commands::spectrum(&cfg, &mut out),
        Command::Response { .. } => commands::response(&cfg, &mut out),
        Command::Synthesize { .. } => commands::synthesize(&cfg, &mut out, &art),
        Command::Evolve { .. } => commands::evolve_cmd(&cfg, &mut out),
        Command::Scan { .. } => commands::scan(&cfg, &mut out),
    };
    if let Err(e) = &result {
        out.note("error", e.to_string());
    }
    out.finish(name, &cfg)?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tpgate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
