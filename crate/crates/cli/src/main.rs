use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use evstdp::harness::export::{export_filters, export_reconstructions};
use evstdp::harness::runner::{self, ExperimentData};
use evstdp::harness::{ExperimentConfig, RecordRow, RECORD_COLUMNS};
use evstdp::RepresentationNetwork;

const AFTER_HELP: &str =
    "Any config key can also be set directly, e.g. `--D 64 --lambda 0.5 --iters 2000`.
Precedence: defaults < --config file < --key overrides < --seed / --out-dir.";

#[derive(Parser)]
#[command(name = "evstdp", version, about = "Spiking WTA feature learning with local STDP", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key=value` config file; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct Snapshot {
    /// Trained `weights.txt`.
    #[arg(long)]
    weights: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network, writing weights.txt, record.csv and filters/.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a snapshot on the test tiles.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        snapshot: Snapshot,
    },
    /// Write original and reconstructed test images to recon/.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        snapshot: Snapshot,
        /// Number of test images to reconstruct.
        #[arg(long, default_value_t = 4)]
        images: usize,
        /// Window stride; defaults to the evaluation stride.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Write each neuron's weights as a PGM image to filters/.
    ExportFilters {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        snapshot: Snapshot,
    },
    /// Train once per regularizer value.
    SweepLambda {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,1,10,10000")]
        lambdas: Vec<f64>,
    },
    /// Train once per layer size.
    SweepD {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
        ds: Vec<usize>,
    },
    /// K-means codebooks on the same training patches and test tiles.
    BaselineKmeans {
        #[command(flatten)]
        common: Common,
        /// Codebook sizes; defaults to the configured D.
        #[arg(long, value_delimiter = ',')]
        ds: Vec<usize>,
        /// Also score this snapshot for comparison.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

const OWN_FLAGS: &[&str] = &[
    "config", "seed", "out-dir", "weights", "images", "stride", "lambdas", "ds", "help", "version",
];

type Overrides = Vec<(String, String)>;

/// Splits `--key value` config overrides out of the argument list, leaving
/// the flags clap knows about.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut kept = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(name) = arg.strip_prefix("--") else {
            kept.push(arg);
            continue;
        };
        let (key, inline) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (name.to_string(), None),
        };
        if key.is_empty() || OWN_FLAGS.contains(&key.as_str()) {
            kept.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .with_context(|| format!("`--{key}` needs a value"))?,
        };
        overrides.push((key.replace('-', "_"), value));
    }
    Ok((kept, overrides))
}

fn build_config(common: &Common, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_row(r: &RecordRow) {
    println!(
        "{},{:.5},{:.5},{:.5},{:.5},{:.5},{:.5},{:.5},{:.5},{:.4}",
        r.iteration,
        r.corr_loss,
        r.rms_loss,
        r.sparsity,
        r.breadth_tuning,
        r.theta,
        r.w_max,
        r.w_min,
        r.w_mean,
        r.m_z_mean
    );
}

fn load_snapshot(cfg: &ExperimentConfig, snap: &Snapshot) -> Result<RepresentationNetwork> {
    Ok(RepresentationNetwork::load(&snap.weights, cfg.encoder)?)
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    match cli.command {
        Command::Train { common } => {
            let cfg = build_config(&common, overrides)?;
            println!("{}", RECORD_COLUMNS.join(","));
            let outcome = runner::run_training(&cfg, print_row)?;
            eprintln!(
                "trained {} presentations; last {} m_z mean {:.3}; outputs in {}",
                outcome.presentations,
                outcome.recent_active.len(),
                outcome.recent_active_mean(),
                cfg.out_dir.display()
            );
        }
        Command::Eval { common, snapshot } => {
            let cfg = build_config(&common, overrides)?;
            let net = load_snapshot(&cfg, &snapshot)?;
            let data = ExperimentData::load(&cfg)?;
            let ev = runner::evaluate_snapshot(&cfg, &data, &net)?;
            let r = ev.report;
            println!("corr_loss,rms_loss,sparsity,breadth_tuning,m_z_mean,patches,flat,silent");
            println!(
                "{},{},{},{},{},{},{},{}",
                r.corr_loss,
                r.rms_loss,
                r.sparsity,
                r.breadth_tuning,
                ev.m_z_mean,
                r.patches,
                r.corr_skipped,
                r.silent
            );
        }
        Command::Reconstruct {
            common,
            snapshot,
            images,
            stride,
        } => {
            let cfg = build_config(&common, overrides)?;
            let net = load_snapshot(&cfg, &snapshot)?;
            if net.inputs() != cfg.inputs() {
                bail!(
                    "snapshot has {} inputs but the configured patch is {}x{}",
                    net.inputs(),
                    cfg.patch_side(),
                    cfg.patch_side()
                );
            }
            let data = ExperimentData::load(&cfg)?;
            let picked: Vec<usize> = (0..images.min(data.test.len())).collect();
            let dir = cfg.out_dir.join("recon");
            let recons = export_reconstructions(
                &net,
                &data.test.select(&picked),
                stride.unwrap_or(cfg.stride()),
                cfg.seed,
                &dir,
            )?;
            println!(
                "wrote {} reconstructions to {}",
                recons.len(),
                dir.display()
            );
        }
        Command::ExportFilters { common, snapshot } => {
            let cfg = build_config(&common, overrides)?;
            let net = load_snapshot(&cfg, &snapshot)?;
            let dir = cfg.out_dir.join("filters");
            let written = export_filters(&net, &dir)?;
            println!("wrote {} images to {}", written.len(), dir.display());
        }
        Command::SweepLambda { common, lambdas } => {
            let cfg = build_config(&common, overrides)?;
            let data = ExperimentData::load(&cfg)?;
            let rows = runner::run_lambda_sweep(&cfg, &data, &lambdas)?;
            print!("{}", runner::lambda_table(&rows));
        }
        Command::SweepD { common, ds } => {
            let cfg = build_config(&common, overrides)?;
            let data = ExperimentData::load(&cfg)?;
            let rows = runner::run_d_sweep(&cfg, &data, &ds)?;
            print!("{}", runner::size_table(&rows));
        }
        Command::BaselineKmeans {
            common,
            ds,
            weights,
        } => {
            let cfg = build_config(&common, overrides)?;
            let net = weights
                .map(|w| RepresentationNetwork::load(&w, cfg.encoder))
                .transpose()?;
            let sizes = if ds.is_empty() { vec![cfg.neurons] } else { ds };
            let data = ExperimentData::load(&cfg)?;
            let rows = runner::run_kmeans_baseline(&cfg, &data, &sizes, net.as_ref())?;
            print!("{}", runner::baseline_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
