//! Disorder ensembles: critical-γ samples, log-normal fits, level spacings
//! and fidelity statistics.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal, Normal};

use crate::error::{Error, Result};
use crate::layout::RegisterLayout;
use crate::linalg::eig_hermitian;
use crate::spectral::{detect_critical_gamma, linspace, two_level_reduce_family, PtFamily};
use crate::syk::{RightConvention, SykRealization};
use crate::teleport::{mean_std, ProtocolConfig, ProtocolRunner};

/// Reference mean gap ratios.
pub const R_POISSON: f64 = 0.3863;
pub const R_GOE: f64 = 0.5359;
pub const R_GUE: f64 = 0.6027;

/// Seed of realization `index`: first word of ChaCha20 stream `index` keyed by `base_seed`.
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_majorana: usize,
    pub j: f64,
    /// Coupling strength inside `H_eff` for the spectral analysis.
    pub g: f64,
    pub gamma_max: f64,
    pub gamma_steps: usize,
    pub tol: f64,
    pub filter_threshold: f64,
    pub right_convention: RightConvention,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_majorana: 6,
            j: 1.0,
            g: 1.0,
            gamma_max: 0.3,
            gamma_steps: 301,
            tol: 1e-6,
            filter_threshold: 0.015,
            right_convention: RightConvention::Conjugated,
        }
    }
}

impl SweepConfig {
    pub fn scan_grid(&self) -> Vec<f64> {
        linspace(0.0, self.gamma_max, self.gamma_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub seed: u64,
    pub gamma_c: Option<f64>,
    pub pair: Option<(usize, usize)>,
    /// `|E_n − E_m| / 2|v|` for the detected pair.
    pub two_level_prediction: Option<f64>,
    /// Several conjugate pairs broke inside the final bracket.
    pub simultaneous: bool,
    /// The detected pair is degenerate in `H0`, so `γ_c` is zero up to the
    /// bisection tolerance.
    pub degenerate: bool,
    /// Fidelity on the ensemble's fidelity grid (empty when no grid is set).
    pub fidelities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalFit {
    pub mu: f64,
    pub sigma: f64,
    /// One-sample Kolmogorov–Smirnov statistic against the fitted CDF.
    pub ks: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mean: f64,
    pub std: f64,
    pub ks: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityStat {
    pub gamma: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub records: Vec<RealizationRecord>,
    pub gamma_c_samples: Vec<Option<f64>>,
    pub filter_threshold: f64,
    pub filtered_samples: Vec<f64>,
    pub lognormal_fit: Option<LognormalFit>,
    pub unfiltered_lognormal_fit: Option<LognormalFit>,
    /// Normal fit on the filtered samples, for comparing KS statistics.
    pub normal_fit: Option<NormalFit>,
    pub fidelity_gamma_grid: Vec<f64>,
    pub fidelity_stats: Vec<FidelityStat>,
    pub n_no_transition: usize,
    pub n_degenerate: usize,
    pub failures: Vec<EnsembleFailure>,
}

fn analyze_realization(
    seed: u64,
    protocol: &ProtocolConfig,
    sweep: &SweepConfig,
    fidelity_grid: &[f64],
) -> Result<RealizationRecord> {
    let realization = SykRealization::sample(
        seed,
        sweep.j,
        RegisterLayout::spectral(sweep.n_majorana)?,
        sweep.right_convention,
    )?;
    let family = PtFamily::from_realization(&realization, sweep.g)?;
    let ep = detect_critical_gamma(&family, &sweep.scan_grid(), sweep.tol)?;
    let (gamma_c, pair, prediction, simultaneous, degenerate) = match ep {
        Some(ep) => {
            let model = two_level_reduce_family(&family, ep.pair_indices)?;
            let degenerate = model.gap() < 1e-12 * family.h0().norm().max(1.0);
            (
                Some(ep.gamma_c),
                Some(ep.pair_indices),
                Some(model.gamma_c()),
                ep.simultaneous,
                degenerate,
            )
        }
        None => (None, None, None, false, false),
    };
    let fidelities = if fidelity_grid.is_empty() {
        Vec::new()
    } else {
        let runner = ProtocolRunner::new(&realization)?;
        runner
            .gamma_sweep(protocol, fidelity_grid)?
            .into_iter()
            .map(|r| r.fidelity)
            .collect()
    };
    Ok(RealizationRecord {
        seed,
        gamma_c,
        pair,
        two_level_prediction: prediction,
        simultaneous,
        degenerate,
        fidelities,
    })
}

/// Runs `n_realizations` seeds derived from `base_seed`. Fidelity statistics
/// are collected on `fidelity_grid` (skipped when empty).
pub fn run_ensemble(
    base_seed: u64,
    n_realizations: usize,
    protocol: &ProtocolConfig,
    sweep: &SweepConfig,
    fidelity_grid: &[f64],
) -> Result<EnsembleResult> {
    if n_realizations == 0 {
        return Err(Error::Domain("ensemble needs at least one realization".into()));
    }
    if !fidelity_grid.is_empty() {
        protocol.validate()?;
    }
    let seeds: Vec<u64> = (0..n_realizations as u64).map(|i| derive_seed(base_seed, i)).collect();
    let outcomes: Vec<Result<RealizationRecord>> = seeds
        .par_iter()
        .map(|&s| analyze_realization(s, protocol, sweep, fidelity_grid))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in seeds.iter().zip(outcomes) {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(EnsembleFailure {
                seed: *seed,
                error: e.to_string(),
            }),
        }
    }

    let gamma_c_samples: Vec<Option<f64>> = records.iter().map(|r| r.gamma_c).collect();
    let detected: Vec<f64> = gamma_c_samples.iter().flatten().copied().collect();
    let filtered_samples: Vec<f64> = detected.iter().copied().filter(|g| *g > sweep.filter_threshold).collect();
    let fidelity_stats = if fidelity_grid.is_empty() || records.is_empty() {
        Vec::new()
    } else {
        let sweeps: Vec<Vec<f64>> = records.iter().map(|r| r.fidelities.clone()).collect();
        fidelity_statistics(&sweeps, fidelity_grid)?
    };

    Ok(EnsembleResult {
        base_seed,
        seeds,
        n_no_transition: records.iter().filter(|r| r.gamma_c.is_none()).count(),
        n_degenerate: records.iter().filter(|r| r.degenerate).count(),
        lognormal_fit: fit_lognormal(&filtered_samples).ok(),
        unfiltered_lognormal_fit: fit_lognormal(&detected).ok(),
        normal_fit: fit_normal(&filtered_samples).ok(),
        records,
        gamma_c_samples,
        filter_threshold: sweep.filter_threshold,
        filtered_samples,
        fidelity_gamma_grid: fidelity_grid.to_vec(),
        fidelity_stats,
        failures,
    })
}

/// `max_i max(i/n − F(x_i), F(x_i) − (i−1)/n)` over the sorted samples.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn check_count(samples: &[f64]) -> Result<()> {
    if samples.len() < 10 {
        return Err(Error::Fit(format!("need at least 10 samples, got {}", samples.len())));
    }
    Ok(())
}

/// Maximum-likelihood log-normal fit: mean and population standard deviation of `ln x`.
pub fn fit_lognormal(samples: &[f64]) -> Result<LognormalFit> {
    if let Some(bad) = samples.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("log-normal fit needs positive samples, got {bad}")));
    }
    check_count(samples)?;
    let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let (mu, sigma) = mean_std(&logs);
    let ks = if sigma > 0.0 {
        let dist = LogNormal::new(mu, sigma).map_err(|e| Error::Fit(e.to_string()))?;
        ks_statistic(samples, |x| dist.cdf(x))
    } else {
        0.0
    };
    Ok(LognormalFit {
        mu,
        sigma,
        ks,
        n: samples.len(),
    })
}

pub fn fit_normal(samples: &[f64]) -> Result<NormalFit> {
    check_count(samples)?;
    let (mean, std) = mean_std(samples);
    let ks = if std > 0.0 {
        let dist = Normal::new(mean, std).map_err(|e| Error::Fit(e.to_string()))?;
        ks_statistic(samples, |x| dist.cdf(x))
    } else {
        0.0
    };
    Ok(NormalFit {
        mean,
        std,
        ks,
        n: samples.len(),
    })
}

/// Freedman–Diaconis bin width `2 IQR n^{-1/3}`.
pub fn freedman_diaconis_width(samples: &[f64]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (xs.len() - 1) as f64;
        let (lo, frac) = (pos.floor() as usize, pos.fract());
        xs[lo] + frac * (xs[(lo + 1).min(xs.len() - 1)] - xs[lo])
    };
    let w = 2.0 * (q(0.75) - q(0.25)) / (xs.len() as f64).cbrt();
    (w > 0.0).then_some(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins starting at `origin` and covering every sample.
pub fn histogram(samples: &[f64], origin: f64, width: f64) -> Vec<HistogramBin> {
    if samples.is_empty() || !(width > 0.0) {
        return Vec::new();
    }
    let max = samples.iter().cloned().fold(f64::MIN, f64::max);
    let n_bins = (((max - origin) / width).floor() as usize + 1).max(1);
    let mut counts = vec![0usize; n_bins];
    for &x in samples {
        if x >= origin {
            counts[(((x - origin) / width).floor() as usize).min(n_bins - 1)] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lo: origin + k as f64 * width,
            hi: origin + (k + 1) as f64 * width,
            count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingReport {
    pub n_levels: usize,
    /// Unfolded nearest-neighbour spacings in level order.
    pub spacings: Vec<f64>,
    /// Mean of `min(s_i, s_{i+1}) / max(s_i, s_{i+1})`, skipping pairs of zero gaps.
    pub mean_gap_ratio: f64,
    pub histogram: Vec<HistogramBin>,
    /// Fraction of unfolded spacings below 0.1.
    pub p_small: f64,
    /// Spacings equal to zero within `1e-12` of the level scale.
    pub zero_spacings: usize,
    /// Slope of `ln P(s' < s)` against `ln s` on `s ∈ [0.05, 0.5]`, minus one.
    pub small_s_exponent: Option<f64>,
    /// Too few levels for the unfolding to mean much.
    pub diagnostic_only: bool,
}

/// Half-width of the local-mean unfolding window (window of 11 spacings).
pub const UNFOLDING_HALF_WINDOW: usize = 5;

pub fn spacing_report(levels: &[f64]) -> Result<SpacingReport> {
    if levels.len() < 3 {
        return Err(Error::Domain("need at least three levels".into()));
    }
    let mut e = levels.to_vec();
    e.sort_by(f64::total_cmp);
    let raw: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = e.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let zero_spacings = raw.iter().filter(|d| **d <= 1e-12 * scale).count();

    let n = raw.len();
    let spacings: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(UNFOLDING_HALF_WINDOW);
            let hi = (i + UNFOLDING_HALF_WINDOW + 1).min(n);
            let local = raw[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
            if local > 0.0 {
                raw[i] / local
            } else {
                0.0
            }
        })
        .collect();

    let ratios: Vec<f64> = raw
        .windows(2)
        .filter(|w| w[0].max(w[1]) > 0.0)
        .map(|w| w[0].min(w[1]) / w[0].max(w[1]))
        .collect();
    let mean_gap_ratio = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let p_small = spacings.iter().filter(|s| **s < 0.1).count() as f64 / n as f64;

    let probes = linspace(0.05, 0.5, 10);
    let (xs, ys): (Vec<f64>, Vec<f64>) = probes
        .iter()
        .map(|&s| (s, spacings.iter().filter(|x| **x < s).count() as f64 / n as f64))
        .filter(|(_, c)| *c > 0.0)
        .unzip();
    let small_s_exponent = if xs.len() >= 3 {
        crate::spectral::fit_power_law(&xs, &ys).ok().map(|a| a - 1.0)
    } else {
        None
    };

    Ok(SpacingReport {
        n_levels: e.len(),
        histogram: histogram(&spacings, 0.0, 0.1),
        spacings,
        mean_gap_ratio,
        p_small,
        zero_spacings,
        small_s_exponent,
        diagnostic_only: e.len() < 20,
    })
}

/// Level statistics of `H_L + H_R + g V`.
pub fn spacing_statistics(realization: &SykRealization, g: f64) -> Result<SpacingReport> {
    let (levels, _) = eig_hermitian(realization.h0(g).matrix())?;
    spacing_report(&levels)
}

/// Pointwise mean and population standard deviation across realizations.
pub fn fidelity_statistics(sweeps: &[Vec<f64>], gamma_grid: &[f64]) -> Result<Vec<FidelityStat>> {
    if sweeps.is_empty() {
        return Err(Error::Grid("no fidelity sweeps".into()));
    }
    if let Some(bad) = sweeps.iter().find(|s| s.len() != gamma_grid.len()) {
        return Err(Error::Grid(format!(
            "sweep of length {} does not match the gamma grid of length {}",
            bad.len(),
            gamma_grid.len()
        )));
    }
    Ok(gamma_grid
        .iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let column: Vec<f64> = sweeps.iter().map(|s| s[k]).collect();
            let (mean, std) = mean_std(&column);
            FidelityStat {
                gamma,
                mean,
                std,
                n: column.len(),
            }
        })
        .collect())
}
