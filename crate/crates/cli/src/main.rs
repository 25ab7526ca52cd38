#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ptwh::syk::RightConvention;
use ptwh::teleport::EvolutionMode;

use crate::config::{parse_enum, UsageError};
use crate::output::{Format, Output, RunManifest};

#[derive(Parser)]
#[command(name = "ptwh", version, about = "PT-symmetric SYK wormhole teleportation simulator")]
struct Cli {
    /// Worker threads; falls back to PTWH_THREADS, then to all cores.
    #[arg(long, global = true, env = "PTWH_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complex spectrum of H_eff(γ) for one realization.
    #[command(after_help = commands::SPECTRUM_HELP)]
    Spectrum(SpectrumFlags),
    /// Critical γ, cusp exponent and pair trajectories for one realization.
    #[command(after_help = commands::BIFURCATION_HELP)]
    Bifurcation(BifurcationFlags),
    /// Critical-γ statistics over a disorder ensemble.
    #[command(name = "ep-stats", after_help = commands::EP_STATS_HELP)]
    EpStats(EpStatsFlags),
    /// One teleportation run.
    #[command(after_help = commands::TELEPORT_HELP)]
    Teleport(TeleportFlags),
    /// Ensemble-averaged fidelity over γ, g or both.
    #[command(name = "fidelity-sweep", after_help = commands::FIDELITY_SWEEP_HELP)]
    FidelitySweep(FidelitySweepFlags),
    /// Ensemble-averaged fidelity on a (t, γ) grid.
    #[command(after_help = commands::HEATMAP_HELP)]
    Heatmap(HeatmapFlags),
}

#[derive(Args)]
struct IoFlags {
    /// JSON config (or a run manifest); explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output table; a manifest is written next to it. Stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

impl IoFlags {
    fn output(&self) -> Output {
        Output {
            out: self.out.clone(),
            format: self.format,
        }
    }
}

#[derive(Args, Serialize)]
struct ModelFlags {
    /// Majorana modes per side.
    #[arg(long)]
    n_majorana: Option<usize>,
    /// Disorder energy scale.
    #[arg(long)]
    j: Option<f64>,
    /// Right-side Hamiltonian: conjugated or identical.
    #[arg(long, value_parser = parse_enum::<RightConvention>)]
    right_convention: Option<RightConvention>,
}

#[derive(Args, Serialize)]
struct ProtocolFlags {
    /// Evolution time.
    #[arg(long)]
    t: Option<f64>,
    /// Inverse temperature of the thermofield double.
    #[arg(long)]
    beta: Option<f64>,
    /// factorized or full.
    #[arg(long, value_parser = parse_enum::<EvolutionMode>)]
    evolution_mode: Option<EvolutionMode>,
    /// Left qubit receiving the message (1-based).
    #[arg(long)]
    insert_qubit: Option<usize>,
    /// Right qubit read out against the reference (1-based).
    #[arg(long)]
    readout_qubit: Option<usize>,
}

#[derive(Args, Serialize)]
struct EnsembleFlags {
    /// Base seed; realization i uses a seed derived from (base, i).
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
}

#[derive(Args, Serialize)]
pub struct SpectrumFlags {
    #[command(flatten)]
    #[serde(skip)]
    io: IoFlags,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[arg(long)]
    seed: Option<u64>,
    /// Two-sided coupling inside H_eff.
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long)]
    gamma_steps: Option<usize>,
}

#[derive(Args, Serialize)]
pub struct BifurcationFlags {
    #[command(flatten)]
    #[serde(skip)]
    io: IoFlags,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    g: Option<f64>,
    /// Level pair "a,b" in H0 order; the first pair to coalesce when absent.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pair: Option<Vec<usize>>,
    /// Upper end of the detection scan.
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long)]
    gamma_steps: Option<usize>,
    /// Bisection tolerance on γ_c.
    #[arg(long)]
    tol: Option<f64>,
    /// Evenly spaced points below 0.8 γ_c in the trajectory grid.
    #[arg(long)]
    coarse: Option<usize>,
    /// Geometric points approaching γ_c from either side.
    #[arg(long)]
    fine: Option<usize>,
}

#[derive(Args, Serialize)]
pub struct EpStatsFlags {
    #[command(flatten)]
    #[serde(skip)]
    io: IoFlags,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    #[serde(flatten)]
    ensemble: EnsembleFlags,
    /// Samples at or below this are excluded from the log-normal fit.
    #[arg(long)]
    filter_threshold: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long)]
    gamma_steps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Serialize)]
pub struct TeleportFlags {
    #[command(flatten)]
    #[serde(skip)]
    io: IoFlags,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    #[serde(flatten)]
    protocol: ProtocolFlags,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args, Serialize)]
pub struct FidelitySweepFlags {
    #[command(flatten)]
    #[serde(skip)]
    io: IoFlags,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    #[serde(flatten)]
    protocol: ProtocolFlags,
    #[command(flatten)]
    #[serde(flatten)]
    ensemble: EnsembleFlags,
    /// gamma, g or both.
    #[arg(long, value_parser = parse_enum::<commands::Axis>)]
    axis: Option<commands::Axis>,
    /// Coupling used when g is not swept.
    #[arg(long)]
    g: Option<f64>,
    /// Non-Hermiticity used when γ is not swept.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    g_min: Option<f64>,
    #[arg(long)]
    g_max: Option<f64>,
    #[arg(long)]
    g_steps: Option<usize>,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long)]
    gamma_steps: Option<usize>,
    /// Explicit γ values; replaces the min/max/steps grid.
    #[arg(long, value_delimiter = ',')]
    gamma_values: Option<Vec<f64>>,
    /// Also write per-realization rows to `<out>.raw.<ext>`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    raw: Option<bool>,
}

#[derive(Args, Serialize)]
pub struct HeatmapFlags {
    #[command(flatten)]
    #[serde(skip)]
    io: IoFlags,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    #[serde(flatten)]
    protocol: ProtocolFlags,
    #[command(flatten)]
    #[serde(flatten)]
    ensemble: EnsembleFlags,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_steps: Option<usize>,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long)]
    gamma_steps: Option<usize>,
    /// Explicit γ values; replaces the min/max/steps grid.
    #[arg(long, value_delimiter = ',')]
    gamma_values: Option<Vec<f64>>,
}

/// What a command did, for the manifest and the exit status.
pub struct Outcome {
    pub config_snapshot: serde_json::Value,
    pub seeds_used: Vec<u64>,
    pub attempted: usize,
    pub failed: usize,
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return config::usage("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let start = Instant::now();
    let (name, io, outcome) = match &cli.command {
        Command::Spectrum(f) => ("spectrum", &f.io, commands::spectrum(f)?),
        Command::Bifurcation(f) => ("bifurcation", &f.io, commands::bifurcation(f)?),
        Command::EpStats(f) => ("ep-stats", &f.io, commands::ep_stats(f)?),
        Command::Teleport(f) => ("teleport", &f.io, commands::teleport(f)?),
        Command::FidelitySweep(f) => ("fidelity-sweep", &f.io, commands::fidelity_sweep(f)?),
        Command::Heatmap(f) => ("heatmap", &f.io, commands::heatmap(f)?),
    };
    io.output().manifest(&RunManifest {
        command: name.to_string(),
        config_snapshot: outcome.config_snapshot,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time: start.elapsed().as_secs_f64(),
        seeds_used: outcome.seeds_used,
    })?;
    if outcome.failed > 0 {
        eprintln!("{} of {} realizations failed", outcome.failed, outcome.attempted);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_column() {
        let mut cmd = Cli::command();
        for (name, headers) in commands::TABLES {
            let help = cmd.find_subcommand_mut(name).unwrap().render_long_help().to_string();
            assert!(help.contains(&headers.join(", ")), "{name}: {help}");
        }
    }
}
