//! Command-line front end for the aerial access point simulator.
//!
//! Resolution order for every setting: scale preset, then the optional TOML
//! config file, then flags. The resolved configuration is snapshotted into
//! the output directory, so any run can be reproduced from its artifacts.

use anyhow::Result;
use clap::Parser;
use papsim_core::harness::{self, CliOverrides, Phase, ProfileName, RunMode, Scale};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "papsim",
    version,
    about = "Deterministic flight/radio/battery simulator with a TD3 trainer and scripted baselines"
)]
struct Args {
    /// What to run: train-offline, train-online, eval, or baseline.
    #[arg(long)]
    mode: RunMode,
    /// TOML config file; its keys override the scale preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Training episodes per repetition.
    #[arg(long)]
    episodes: Option<usize>,
    /// Directory for artifacts (config snapshot, metrics, checkpoints, trajectories).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Propagation environment: suburban, urban, or dense-urban.
    #[arg(long)]
    profile: Option<ProfileName>,
    /// Problem size preset: paper or desk.
    #[arg(long)]
    scale: Option<Scale>,
    /// Saved actor checkpoint to evaluate (eval mode only).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let overrides = CliOverrides {
        mode: Some(args.mode),
        seed: args.seed,
        episodes: args.episodes,
        out_dir: args.out.clone(),
        profile: args.profile,
        scale: args.scale,
    };
    let config = harness::load_config(args.config.as_deref(), &overrides)?;
    let artifacts = harness::execute(&config, args.checkpoint.as_deref())?;

    println!(
        "{} run complete ({} scale, {} profile, seed {})",
        config.run.mode, config.run.scale, config.run.profile, config.run.seed
    );
    println!("artifacts: {}", artifacts.out_dir.display());
    if let Some(checkpoint) = &artifacts.checkpoint {
        println!("checkpoint: {}", checkpoint.display());
    }
    if let Some(best) = artifacts.best_mean_eval_fee_mbit_per_j {
        println!("best mean evaluation FEE: {best:.6} Mbit/J");
    }
    for phase in [Phase::Eval, Phase::Test] {
        let rows: Vec<_> = artifacts.metrics.iter().filter(|m| m.phase == phase).collect();
        if rows.is_empty() {
            continue;
        }
        let mean = rows.iter().map(|m| m.fee_mbit_per_j).sum::<f64>() / rows.len() as f64;
        println!(
            "{} episodes: {}, mean FEE {mean:.6} Mbit/J",
            match phase {
                Phase::Eval => "evaluation",
                Phase::Test => "test",
                Phase::Train => unreachable!(),
            },
            rows.len()
        );
    }
    Ok(())
}
