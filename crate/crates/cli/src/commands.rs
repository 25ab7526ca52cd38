use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ptwh::ensemble::{
    derive_seed, freedman_diaconis_width, histogram, run_ensemble, HistogramBin, LognormalFit, NormalFit,
    SweepConfig,
};
use ptwh::layout::RegisterLayout;
use ptwh::spectral::{
    analyze_cusp, detect_critical_gamma, find_pair_onset, linspace, sweep_spectrum, two_level_eigenvalues, PtFamily,
};
use ptwh::syk::{RightConvention, SykRealization};
use ptwh::teleport::{mean_std, protocol_sweep, run_protocol, temporal_heatmap, EvolutionMode, ProtocolConfig, ProtocolRunner};

use crate::config::{resolve, usage};
use crate::{BifurcationFlags, EpStatsFlags, FidelitySweepFlags, HeatmapFlags, Outcome, SpectrumFlags, TeleportFlags};

pub const SPECTRUM_COLUMNS: &[&str] = &["gamma", "level_index", "re_lambda", "im_lambda", "phase_label"];
pub const BIFURCATION_COLUMNS: &[&str] = &[
    "gamma",
    "re_low",
    "im_low",
    "re_high",
    "im_high",
    "gap",
    "two_level_re_plus",
    "two_level_im_plus",
    "two_level_re_minus",
    "two_level_im_minus",
];
pub const EP_STATS_COLUMNS: &[&str] = &[
    "index",
    "seed",
    "gamma_c",
    "pair_low",
    "pair_high",
    "two_level_gamma_c",
    "simultaneous",
    "degenerate",
    "passes_filter",
];
pub const TELEPORT_COLUMNS: &[&str] = &[
    "seed",
    "g",
    "t",
    "gamma",
    "beta",
    "fidelity",
    "log10_success_probability",
    "log_offset",
    "evolution_mode",
    "sector",
    "weight",
    "gained_weight",
];
pub const FIDELITY_SWEEP_COLUMNS: &[&str] = &[
    "g",
    "gamma",
    "t",
    "mean_fidelity",
    "std_fidelity",
    "mean_log10_success_probability",
    "n_realizations",
];
pub const RAW_COLUMNS: &[&str] = &["seed", "g", "t", "gamma", "fidelity", "log10_success_probability", "evolution_mode"];
pub const HEATMAP_COLUMNS: &[&str] = &["t", "gamma", "mean_fidelity", "std_fidelity", "n_realizations", "peak_time"];

#[cfg(test)]
pub const TABLES: &[(&str, &[&str])] = &[
    ("spectrum", SPECTRUM_COLUMNS),
    ("bifurcation", BIFURCATION_COLUMNS),
    ("ep-stats", EP_STATS_COLUMNS),
    ("teleport", TELEPORT_COLUMNS),
    ("fidelity-sweep", FIDELITY_SWEEP_COLUMNS),
    ("heatmap", HEATMAP_COLUMNS),
];

pub const SPECTRUM_HELP: &str = "\
Columns: gamma, level_index, re_lambda, im_lambda, phase_label
One row per level per γ; level_index follows the tracked trajectory that starts at the
level_index-th eigenvalue of H0 in ascending order. phase_label is exact_PT or broken_PT.";

pub const BIFURCATION_HELP: &str = "\
Columns: gamma, re_low, im_low, re_high, im_high, gap, two_level_re_plus, two_level_im_plus, two_level_re_minus, two_level_im_minus
low/high are the tracked pair levels; the two_level columns are the reduced 2x2 model.
Summary (critical γ, cusp exponent, two-level prediction) goes to stderr and <out>.summary.json.";

pub const EP_STATS_HELP: &str = "\
Columns: index, seed, gamma_c, pair_low, pair_high, two_level_gamma_c, simultaneous, degenerate, passes_filter
gamma_c is empty when the phase stays exact over the scan. Fits and the log-histogram go to
<out>.summary.json.";

pub const TELEPORT_HELP: &str = "\
Columns: seed, g, t, gamma, beta, fidelity, log10_success_probability, log_offset, evolution_mode, sector, weight, gained_weight
One row per V_PT sector; weight is before the gain, gained_weight after it (sums to P).";

pub const FIDELITY_SWEEP_HELP: &str = "\
Columns: g, gamma, t, mean_fidelity, std_fidelity, mean_log10_success_probability, n_realizations
Rows ordered by g, then γ. With --raw, <out>.raw.<ext> holds
seed, g, t, gamma, fidelity, log10_success_probability, evolution_mode per realization.";

pub const HEATMAP_HELP: &str = "\
Columns: t, gamma, mean_fidelity, std_fidelity, n_realizations, peak_time
Rows ordered by t, then γ. peak_time is argmax_t of mean_fidelity for the row's γ.";

fn require_seed(seed: Option<u64>, flag: &str) -> anyhow::Result<u64> {
    match seed {
        Some(s) => Ok(s),
        None => usage(format!("{flag} is required (flag or config)")),
    }
}

fn grid(name: &str, lo: f64, hi: f64, steps: usize) -> anyhow::Result<Vec<f64>> {
    if steps == 0 || !(lo.is_finite() && hi.is_finite()) || hi < lo || (steps > 1 && hi == lo) {
        return usage(format!("invalid {name} grid: min {lo}, max {hi}, steps {steps}"));
    }
    Ok(linspace(lo, hi, steps))
}

fn explicit_or_grid(name: &str, values: &Option<Vec<f64>>, lo: f64, hi: f64, steps: usize) -> anyhow::Result<Vec<f64>> {
    match values {
        Some(v) if v.is_empty() || v.windows(2).any(|w| w[1] <= w[0]) => {
            usage(format!("{name} values must be non-empty and strictly ascending"))
        }
        Some(v) => Ok(v.clone()),
        None => grid(name, lo, hi, steps),
    }
}

fn spectral_realization(seed: u64, n: usize, j: f64, rc: RightConvention) -> anyhow::Result<SykRealization> {
    Ok(SykRealization::sample(seed, j, RegisterLayout::spectral(n)?, rc)?)
}

fn snapshot(params: &impl Serialize) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::to_value(params)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    pub seed: Option<u64>,
    pub g: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_steps: usize,
    pub n_majorana: usize,
    pub j: f64,
    pub right_convention: RightConvention,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            seed: None,
            g: 1.0,
            gamma_min: 0.0,
            gamma_max: 0.3,
            gamma_steps: 301,
            n_majorana: 6,
            j: 1.0,
            right_convention: RightConvention::Conjugated,
        }
    }
}

pub fn spectrum(flags: &SpectrumFlags) -> anyhow::Result<Outcome> {
    let p: SpectrumParams = resolve("spectrum", flags.io.config.as_deref(), flags)?;
    let seed = require_seed(p.seed, "--seed")?;
    let gammas = grid("gamma", p.gamma_min, p.gamma_max, p.gamma_steps)?;
    let r = spectral_realization(seed, p.n_majorana, p.j, p.right_convention)?;
    let sweep = sweep_spectrum(&r, p.g, &gammas)?;
    flags.io.output().table(SPECTRUM_COLUMNS, &sweep.rows())?;
    match sweep.transition_interval {
        Some((a, b)) => eprintln!("first exact-to-broken interval: ({a}, {b})"),
        None => eprintln!("spectrum stays PT-exact on the grid"),
    }
    Ok(Outcome {
        config_snapshot: snapshot(&p)?,
        seeds_used: vec![seed],
        attempted: 1,
        failed: 0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationParams {
    pub seed: Option<u64>,
    pub g: f64,
    pub pair: Option<[usize; 2]>,
    pub gamma_max: f64,
    pub gamma_steps: usize,
    pub tol: f64,
    pub coarse: usize,
    pub fine: usize,
    pub n_majorana: usize,
    pub j: f64,
    pub right_convention: RightConvention,
}

impl Default for BifurcationParams {
    fn default() -> Self {
        Self {
            seed: None,
            g: 1.0,
            pair: None,
            gamma_max: 0.3,
            gamma_steps: 301,
            tol: 1e-10,
            coarse: 40,
            fine: 24,
            n_majorana: 6,
            j: 1.0,
            right_convention: RightConvention::Conjugated,
        }
    }
}

#[derive(Debug, Serialize)]
struct BifurcationRow {
    gamma: f64,
    re_low: f64,
    im_low: f64,
    re_high: f64,
    im_high: f64,
    gap: f64,
    two_level_re_plus: f64,
    two_level_im_plus: f64,
    two_level_re_minus: f64,
    two_level_im_minus: f64,
}

#[derive(Debug, Serialize)]
struct BifurcationSummary {
    seed: u64,
    g: f64,
    pair_low: usize,
    pair_high: usize,
    pair_chosen: bool,
    gamma_c: f64,
    bracket_width: f64,
    simultaneous: bool,
    cusp_exponent: Option<f64>,
    cusp_fit_error: Option<String>,
    two_level_gamma_c: f64,
    two_level_gap: f64,
    two_level_coupling: f64,
    isolation: f64,
    relative_deviation: f64,
    real_part_locking: Option<f64>,
}

pub fn bifurcation(flags: &BifurcationFlags) -> anyhow::Result<Outcome> {
    let mut p: BifurcationParams = resolve("bifurcation", flags.io.config.as_deref(), flags)?;
    let seed = require_seed(p.seed, "--seed")?;
    if !(p.tol > 0.0) {
        return usage("--tol must be positive");
    }
    if let Some([a, b]) = p.pair {
        p.pair = Some([a.min(b), a.max(b)]);
    }
    let scan = grid("gamma", 0.0, p.gamma_max, p.gamma_steps)?;
    let r = spectral_realization(seed, p.n_majorana, p.j, p.right_convention)?;
    let family = PtFamily::from_realization(&r, p.g)?;
    let ep = match p.pair {
        Some([a, b]) => find_pair_onset(&family, (a, b), &scan, p.tol)?,
        None => detect_critical_gamma(&family, &scan, p.tol)?,
    };
    let Some(ep) = ep else {
        anyhow::bail!("no exceptional point for this pair below gamma = {}", p.gamma_max);
    };
    let cusp = analyze_cusp(&family, &ep, p.coarse, p.fine)?;
    let (gc, pair, model, sweep) = (cusp.estimate.gamma_c, cusp.estimate.pair_indices, &cusp.model, &cusp.sweep);
    let rows: Vec<BifurcationRow> = sweep
        .gamma_grid
        .iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let (lo, hi) = (sweep.trajectories[pair.0][k], sweep.trajectories[pair.1][k]);
            let (plus, minus) = two_level_eigenvalues(model, gamma);
            BifurcationRow {
                gamma,
                re_low: lo.re,
                im_low: lo.im,
                re_high: hi.re,
                im_high: hi.im,
                gap: (hi - lo).norm(),
                two_level_re_plus: plus.re,
                two_level_im_plus: plus.im,
                two_level_re_minus: minus.re,
                two_level_im_minus: minus.im,
            }
        })
        .collect();
    let out = flags.io.output();
    out.table(BIFURCATION_COLUMNS, &rows)?;
    let summary = BifurcationSummary {
        seed,
        g: p.g,
        pair_low: pair.0,
        pair_high: pair.1,
        pair_chosen: p.pair.is_some(),
        gamma_c: gc,
        bracket_width: cusp.estimate.bracket_width,
        simultaneous: cusp.estimate.simultaneous,
        cusp_exponent: cusp.estimate.cusp_exponent,
        cusp_fit_error: cusp.fit_error.clone(),
        two_level_gamma_c: model.gamma_c(),
        two_level_gap: model.gap(),
        two_level_coupling: model.v.norm(),
        isolation: model.isolation,
        relative_deviation: (model.gamma_c() - gc).abs() / gc,
        real_part_locking: cusp.real_part_locking,
    };
    out.sidecar_json("summary", &summary)?;
    eprintln!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(Outcome {
        config_snapshot: snapshot(&p)?,
        seeds_used: vec![seed],
        attempted: 1,
        failed: 0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpStatsParams {
    pub base_seed: Option<u64>,
    pub realizations: usize,
    pub filter_threshold: f64,
    pub g: f64,
    pub gamma_max: f64,
    pub gamma_steps: usize,
    pub tol: f64,
    pub n_majorana: usize,
    pub j: f64,
    pub right_convention: RightConvention,
}

impl Default for EpStatsParams {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            base_seed: None,
            realizations: 100,
            filter_threshold: s.filter_threshold,
            g: s.g,
            gamma_max: s.gamma_max,
            gamma_steps: s.gamma_steps,
            tol: s.tol,
            n_majorana: s.n_majorana,
            j: s.j,
            right_convention: s.right_convention,
        }
    }
}

#[derive(Debug, Serialize)]
struct EpRow {
    index: usize,
    seed: u64,
    gamma_c: Option<f64>,
    pair_low: Option<usize>,
    pair_high: Option<usize>,
    two_level_gamma_c: Option<f64>,
    simultaneous: bool,
    degenerate: bool,
    passes_filter: bool,
}

#[derive(Debug, Serialize)]
struct EpSummary {
    n_realizations: usize,
    n_failed: usize,
    n_no_transition: usize,
    n_degenerate: usize,
    n_filtered: usize,
    filter_threshold: f64,
    lognormal_fit: Option<LognormalFit>,
    unfiltered_lognormal_fit: Option<LognormalFit>,
    normal_fit: Option<NormalFit>,
    /// Freedman–Diaconis histogram of `ln γ_c` over the filtered samples.
    log_histogram: Vec<HistogramBin>,
    failures: Vec<ptwh::ensemble::EnsembleFailure>,
}

pub fn ep_stats(flags: &EpStatsFlags) -> anyhow::Result<Outcome> {
    let p: EpStatsParams = resolve("ep-stats", flags.io.config.as_deref(), flags)?;
    let base = require_seed(p.base_seed, "--base-seed")?;
    if p.realizations == 0 {
        return usage("--realizations must be at least 1");
    }
    grid("gamma", 0.0, p.gamma_max, p.gamma_steps)?;
    let sweep = SweepConfig {
        n_majorana: p.n_majorana,
        j: p.j,
        g: p.g,
        gamma_max: p.gamma_max,
        gamma_steps: p.gamma_steps,
        tol: p.tol,
        filter_threshold: p.filter_threshold,
        right_convention: p.right_convention,
    };
    let result = run_ensemble(base, p.realizations, &ProtocolConfig::default(), &sweep, &[])?;
    let rows: Vec<EpRow> = result
        .records
        .iter()
        .map(|r| EpRow {
            index: result.seeds.iter().position(|s| *s == r.seed).expect("record seed comes from the seed list"),
            seed: r.seed,
            gamma_c: r.gamma_c,
            pair_low: r.pair.map(|p| p.0),
            pair_high: r.pair.map(|p| p.1),
            two_level_gamma_c: r.two_level_prediction,
            simultaneous: r.simultaneous,
            degenerate: r.degenerate,
            passes_filter: r.gamma_c.is_some_and(|g| g > p.filter_threshold),
        })
        .collect();
    let logs: Vec<f64> = result.filtered_samples.iter().map(|x| x.ln()).collect();
    let log_histogram = match freedman_diaconis_width(&logs) {
        Some(w) => {
            let origin = logs.iter().cloned().fold(f64::INFINITY, f64::min);
            histogram(&logs, origin, w)
        }
        None => Vec::new(),
    };
    let summary = EpSummary {
        n_realizations: p.realizations,
        n_failed: result.failures.len(),
        n_no_transition: result.n_no_transition,
        n_degenerate: result.n_degenerate,
        n_filtered: result.filtered_samples.len(),
        filter_threshold: p.filter_threshold,
        lognormal_fit: result.lognormal_fit,
        unfiltered_lognormal_fit: result.unfiltered_lognormal_fit,
        normal_fit: result.normal_fit,
        log_histogram,
        failures: result.failures.clone(),
    };
    let out = flags.io.output();
    out.table(EP_STATS_COLUMNS, &rows)?;
    out.sidecar_json("summary", &summary)?;
    match (&summary.lognormal_fit, &summary.normal_fit) {
        (Some(ln), Some(n)) => eprintln!(
            "log-normal fit on {} samples: mu = {:.4}, sigma = {:.4}, KS = {:.4} (normal KS = {:.4})",
            ln.n, ln.mu, ln.sigma, ln.ks, n.ks
        ),
        _ => eprintln!(
            "only {} samples above {}; no fit",
            summary.n_filtered, summary.filter_threshold
        ),
    }
    Ok(Outcome {
        config_snapshot: snapshot(&p)?,
        seeds_used: result.seeds.clone(),
        attempted: p.realizations,
        failed: result.failures.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleportParams {
    pub seed: Option<u64>,
    pub g: f64,
    pub gamma: f64,
    pub t: f64,
    pub beta: f64,
    pub evolution_mode: EvolutionMode,
    pub insert_qubit: usize,
    pub readout_qubit: usize,
    pub n_majorana: usize,
    pub j: f64,
    pub right_convention: RightConvention,
}

impl Default for TeleportParams {
    fn default() -> Self {
        let c = ProtocolConfig::default();
        Self {
            seed: None,
            g: c.g,
            gamma: c.gamma,
            t: c.t,
            beta: c.beta,
            evolution_mode: c.evolution_mode,
            insert_qubit: c.insert_qubit,
            readout_qubit: c.readout_qubit,
            n_majorana: 6,
            j: 1.0,
            right_convention: RightConvention::Conjugated,
        }
    }
}

#[derive(Debug, Serialize)]
struct TeleportRow {
    seed: u64,
    g: f64,
    t: f64,
    gamma: f64,
    beta: f64,
    fidelity: f64,
    log10_success_probability: f64,
    log_offset: f64,
    evolution_mode: EvolutionMode,
    sector: i32,
    weight: f64,
    gained_weight: f64,
}

fn protocol_config(
    g: f64,
    gamma: f64,
    t: f64,
    beta: f64,
    evolution_mode: EvolutionMode,
    insert_qubit: usize,
    readout_qubit: usize,
) -> anyhow::Result<ProtocolConfig> {
    let c = ProtocolConfig {
        g,
        t,
        gamma,
        beta,
        evolution_mode,
        insert_qubit,
        readout_qubit,
    };
    if let Err(e) = c.validate() {
        return usage(e.to_string());
    }
    Ok(c)
}

pub fn teleport(flags: &TeleportFlags) -> anyhow::Result<Outcome> {
    let p: TeleportParams = resolve("teleport", flags.io.config.as_deref(), flags)?;
    let seed = require_seed(p.seed, "--seed")?;
    let cfg = protocol_config(p.g, p.gamma, p.t, p.beta, p.evolution_mode, p.insert_qubit, p.readout_qubit)?;
    let r = SykRealization::sample(seed, p.j, RegisterLayout::protocol(p.n_majorana)?, p.right_convention)?;
    let res = run_protocol(&r, &cfg)?;
    let rows: Vec<TeleportRow> = res
        .sector_weights
        .iter()
        .map(|(&sector, &weight)| TeleportRow {
            seed,
            g: cfg.g,
            t: cfg.t,
            gamma: cfg.gamma,
            beta: cfg.beta,
            fidelity: res.fidelity,
            log10_success_probability: res.log10_success_probability,
            log_offset: res.log_offset,
            evolution_mode: cfg.evolution_mode,
            sector,
            weight,
            gained_weight: res.gained_sector_weights.get(&sector).copied().unwrap_or(0.0),
        })
        .collect();
    flags.io.output().table(TELEPORT_COLUMNS, &rows)?;
    eprintln!(
        "fidelity = {:.6}, log10 P = {:.6}",
        res.fidelity, res.log10_success_probability
    );
    Ok(Outcome {
        config_snapshot: snapshot(&p)?,
        seeds_used: vec![seed],
        attempted: 1,
        failed: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Gamma,
    G,
    Both,
}

/// Protocol runners for `n` derived seeds; seeds whose realization cannot be
/// built are reported and skipped.
fn build_runners(
    base: u64,
    n: usize,
    n_majorana: usize,
    j: f64,
    rc: RightConvention,
) -> anyhow::Result<(Vec<u64>, Vec<ProtocolRunner>, usize)> {
    let layout = RegisterLayout::protocol(n_majorana)?;
    let seeds: Vec<u64> = (0..n as u64).map(|i| derive_seed(base, i)).collect();
    let built: Vec<_> = seeds
        .par_iter()
        .map(|&s| SykRealization::sample(s, j, layout, rc).and_then(|r| ProtocolRunner::new(&r)))
        .collect();
    let mut runners = Vec::new();
    let mut failed = 0;
    for (seed, b) in seeds.iter().zip(built) {
        match b {
            Ok(r) => runners.push(r),
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                failed += 1;
            }
        }
    }
    if runners.is_empty() {
        anyhow::bail!("no realization could be built");
    }
    Ok((seeds, runners, failed))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelitySweepParams {
    pub base_seed: Option<u64>,
    pub realizations: usize,
    pub axis: Axis,
    pub g: f64,
    pub gamma: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub g_steps: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_steps: usize,
    pub gamma_values: Option<Vec<f64>>,
    pub raw: bool,
    pub t: f64,
    pub beta: f64,
    pub evolution_mode: EvolutionMode,
    pub insert_qubit: usize,
    pub readout_qubit: usize,
    pub n_majorana: usize,
    pub j: f64,
    pub right_convention: RightConvention,
}

impl Default for FidelitySweepParams {
    fn default() -> Self {
        let c = ProtocolConfig::default();
        Self {
            base_seed: None,
            realizations: 20,
            axis: Axis::Gamma,
            g: c.g,
            gamma: c.gamma,
            g_min: 0.0,
            g_max: 15.0,
            g_steps: 61,
            gamma_min: 0.0,
            gamma_max: 0.3,
            gamma_steps: 31,
            gamma_values: None,
            raw: false,
            t: c.t,
            beta: c.beta,
            evolution_mode: c.evolution_mode,
            insert_qubit: c.insert_qubit,
            readout_qubit: c.readout_qubit,
            n_majorana: 6,
            j: 1.0,
            right_convention: RightConvention::Conjugated,
        }
    }
}

#[derive(Debug, Serialize)]
struct FidelityRow {
    g: f64,
    gamma: f64,
    t: f64,
    mean_fidelity: f64,
    std_fidelity: f64,
    mean_log10_success_probability: f64,
    n_realizations: usize,
}

pub fn fidelity_sweep(flags: &FidelitySweepFlags) -> anyhow::Result<Outcome> {
    let p: FidelitySweepParams = resolve("fidelity-sweep", flags.io.config.as_deref(), flags)?;
    let base = require_seed(p.base_seed, "--base-seed")?;
    if p.realizations == 0 {
        return usage("--realizations must be at least 1");
    }
    let cfg = protocol_config(p.g, p.gamma, p.t, p.beta, p.evolution_mode, p.insert_qubit, p.readout_qubit)?;
    let g_grid = match p.axis {
        Axis::Gamma => vec![p.g],
        Axis::G | Axis::Both => grid("g", p.g_min, p.g_max, p.g_steps)?,
    };
    let gamma_grid = match p.axis {
        Axis::G => vec![p.gamma],
        Axis::Gamma | Axis::Both => explicit_or_grid("gamma", &p.gamma_values, p.gamma_min, p.gamma_max, p.gamma_steps)?,
    };
    if gamma_grid.iter().any(|g| *g < 0.0) {
        return usage("gamma values must be >= 0");
    }
    let (seeds, runners, failed) = build_runners(base, p.realizations, p.n_majorana, p.j, p.right_convention)?;
    let raw = protocol_sweep(&runners, &cfg, &g_grid, &[cfg.t], &gamma_grid)?;
    let block = g_grid.len() * gamma_grid.len();
    let rows: Vec<FidelityRow> = (0..block)
        .map(|k| {
            let samples: Vec<_> = raw.iter().skip(k).step_by(block).collect();
            let fidelities: Vec<f64> = samples.iter().map(|r| r.fidelity).collect();
            let log_p: Vec<f64> = samples.iter().map(|r| r.log10_success_probability).collect();
            let (mean, std) = mean_std(&fidelities);
            let (mean_log_p, _) = mean_std(&log_p);
            FidelityRow {
                g: samples[0].g,
                gamma: samples[0].gamma,
                t: samples[0].t,
                mean_fidelity: mean,
                std_fidelity: std,
                mean_log10_success_probability: mean_log_p,
                n_realizations: samples.len(),
            }
        })
        .collect();
    let out = flags.io.output();
    out.table(FIDELITY_SWEEP_COLUMNS, &rows)?;
    if p.raw {
        out.sidecar_table("raw", RAW_COLUMNS, &raw)?;
    }
    Ok(Outcome {
        config_snapshot: snapshot(&p)?,
        seeds_used: seeds,
        attempted: p.realizations,
        failed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapParams {
    pub base_seed: Option<u64>,
    pub realizations: usize,
    pub g: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_steps: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_steps: usize,
    pub gamma_values: Option<Vec<f64>>,
    pub beta: f64,
    pub evolution_mode: EvolutionMode,
    pub insert_qubit: usize,
    pub readout_qubit: usize,
    pub n_majorana: usize,
    pub j: f64,
    pub right_convention: RightConvention,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        let c = ProtocolConfig::default();
        Self {
            base_seed: None,
            realizations: 20,
            g: 10.0,
            t_min: 0.0,
            t_max: 20.0,
            t_steps: 81,
            gamma_min: 0.0,
            gamma_max: 0.3,
            gamma_steps: 31,
            gamma_values: None,
            beta: c.beta,
            evolution_mode: c.evolution_mode,
            insert_qubit: c.insert_qubit,
            readout_qubit: c.readout_qubit,
            n_majorana: 6,
            j: 1.0,
            right_convention: RightConvention::Conjugated,
        }
    }
}

#[derive(Debug, Serialize)]
struct HeatmapRow {
    t: f64,
    gamma: f64,
    mean_fidelity: f64,
    std_fidelity: f64,
    n_realizations: usize,
    peak_time: f64,
}

pub fn heatmap(flags: &HeatmapFlags) -> anyhow::Result<Outcome> {
    let p: HeatmapParams = resolve("heatmap", flags.io.config.as_deref(), flags)?;
    let base = require_seed(p.base_seed, "--base-seed")?;
    if p.realizations == 0 {
        return usage("--realizations must be at least 1");
    }
    let cfg = protocol_config(p.g, 0.0, p.t_min, p.beta, p.evolution_mode, p.insert_qubit, p.readout_qubit)?;
    let t_grid = grid("t", p.t_min, p.t_max, p.t_steps)?;
    let gamma_grid = explicit_or_grid("gamma", &p.gamma_values, p.gamma_min, p.gamma_max, p.gamma_steps)?;
    if gamma_grid.iter().any(|g| *g < 0.0) {
        return usage("gamma values must be >= 0");
    }
    let (seeds, runners, failed) = build_runners(base, p.realizations, p.n_majorana, p.j, p.right_convention)?;
    let table = temporal_heatmap(&runners, &cfg, &t_grid, &gamma_grid)?;
    let rows: Vec<HeatmapRow> = table
        .cells
        .iter()
        .map(|c| HeatmapRow {
            t: c.t,
            gamma: c.gamma,
            mean_fidelity: c.mean_fidelity,
            std_fidelity: c.std_fidelity,
            n_realizations: c.n_realizations,
            peak_time: table.peak_time(c.gamma).expect("every grid gamma has a peak"),
        })
        .collect();
    flags.io.output().table(HEATMAP_COLUMNS, &rows)?;
    for (gamma, t) in &table.peak_times {
        eprintln!("gamma = {gamma}: peak at t = {t}");
    }
    Ok(Outcome {
        config_snapshot: snapshot(&p)?,
        seeds_used: seeds,
        attempted: p.realizations,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_reject_bad_ranges() {
        assert!(grid("gamma", 0.3, 0.1, 5).is_err());
        assert!(grid("gamma", 0.0, 0.3, 0).is_err());
        assert_eq!(grid("gamma", 0.0, 0.3, 301).unwrap().len(), 301);
        assert!(explicit_or_grid("gamma", &Some(vec![0.2, 0.1]), 0.0, 1.0, 2).is_err());
    }
}
