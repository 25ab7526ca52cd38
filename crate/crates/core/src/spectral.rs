//! Complex spectrum of `H0 + iγG` across γ: sweeps, level tracking,
//! exceptional-point detection and the two-level reduction.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, eigenvalues_general};
use crate::operator::{hermiticity_defect, spectral_norm};
use crate::syk::SykRealization;
use crate::C64;

/// Relative threshold on `max |Im λ|` separating the two phases.
pub const EPS_IMAG: f64 = 1e-9;

/// Maximum number of step halvings between two grid points during tracking.
pub const MAX_REFINE_DEPTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseLabel {
    #[serde(rename = "exact_PT")]
    ExactPt,
    #[serde(rename = "broken_PT")]
    BrokenPt,
}

impl PhaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::ExactPt => "exact_PT",
            PhaseLabel::BrokenPt => "broken_PT",
        }
    }
}

/// The one-parameter family `H(γ) = H0 + iγ G` with Hermitian `H0`.
#[derive(Debug, Clone)]
pub struct PtFamily {
    h0: DMatrix<C64>,
    generator: DMatrix<C64>,
    generator_norm: f64,
}

impl PtFamily {
    pub fn new(h0: DMatrix<C64>, generator: DMatrix<C64>) -> Result<Self> {
        if h0.shape() != generator.shape() || h0.nrows() != h0.ncols() {
            return Err(Error::Model(format!(
                "H0 {:?} and generator {:?} must be square and equal in size",
                h0.shape(),
                generator.shape()
            )));
        }
        if hermiticity_defect(&h0) > 1e-12 {
            return Err(Error::Model("H0 must be Hermitian".into()));
        }
        let generator_norm = spectral_norm(&generator);
        Ok(Self {
            h0,
            generator,
            generator_norm,
        })
    }

    /// `H_L + H_R + g V` with generator `V_PT`.
    pub fn from_realization(realization: &SykRealization, g: f64) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::Domain(format!("non-finite g = {g}")));
        }
        Self::new(realization.h0(g).into_matrix(), realization.v_pt().matrix().clone())
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn h0(&self) -> &DMatrix<C64> {
        &self.h0
    }

    pub fn generator(&self) -> &DMatrix<C64> {
        &self.generator
    }

    pub fn at(&self, gamma: f64) -> DMatrix<C64> {
        &self.h0 + &self.generator * C64::new(0.0, gamma)
    }

    /// Sorted eigenvalues, `max |Im λ| / ‖H(γ)‖₂` and the phase label at `gamma`.
    pub fn slice(&self, gamma: f64) -> Result<Slice> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::Domain(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        let h = self.at(gamma);
        let eigenvalues = eigenvalues_general(&h).map_err(|e| match e {
            Error::Spectral { dim, detail, .. } => Error::Spectral {
                dim,
                gamma: Some(gamma),
                detail,
            },
            other => other,
        })?;
        let norm = spectral_norm(&h).max(f64::MIN_POSITIVE);
        let max_imag = eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let label = if max_imag < EPS_IMAG * norm {
            PhaseLabel::ExactPt
        } else {
            PhaseLabel::BrokenPt
        };
        Ok(Slice {
            eigenvalues,
            norm,
            max_imag,
            label,
        })
    }

    pub fn phase(&self, gamma: f64) -> Result<PhaseLabel> {
        Ok(self.slice(gamma)?.label)
    }
}

#[derive(Debug, Clone)]
pub struct Slice {
    pub eigenvalues: Vec<C64>,
    pub norm: f64,
    pub max_imag: f64,
    pub label: PhaseLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSweep {
    pub gamma_grid: Vec<f64>,
    /// `trajectories[level][k]` is the level's eigenvalue at `gamma_grid[k]`.
    /// Level `j` starts as the `j`-th eigenvalue at the first grid point.
    pub trajectories: Vec<Vec<C64>>,
    pub phase_labels: Vec<PhaseLabel>,
    /// `‖H(γ)‖₂` per grid point.
    pub norms: Vec<f64>,
    /// First grid interval where the label flips from exact to broken.
    pub transition_interval: Option<(f64, f64)>,
    /// Midpoint of `transition_interval`.
    pub detected_gamma_c: Option<f64>,
    /// Extra diagonalizations spent on step halving during tracking.
    pub refinements: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub level_index: usize,
    pub re_lambda: f64,
    pub im_lambda: f64,
    pub phase_label: PhaseLabel,
}

impl SpectralSweep {
    pub fn n_levels(&self) -> usize {
        self.trajectories.len()
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        let mut rows = Vec::with_capacity(self.gamma_grid.len() * self.n_levels());
        for (k, &gamma) in self.gamma_grid.iter().enumerate() {
            for (level, traj) in self.trajectories.iter().enumerate() {
                rows.push(SweepRow {
                    gamma,
                    level_index: level,
                    re_lambda: traj[k].re,
                    im_lambda: traj[k].im,
                    phase_label: self.phase_labels[k],
                });
            }
        }
        rows
    }

    /// `max |Re λ_a − Re λ_b| / ‖H‖₂` over grid points above `gamma_c`.
    pub fn real_part_locking(&self, pair: (usize, usize), gamma_c: f64) -> Option<f64> {
        let (a, b) = pair;
        self.gamma_grid
            .iter()
            .enumerate()
            .filter(|(_, g)| **g > gamma_c)
            .map(|(k, _)| (self.trajectories[a][k].re - self.trajectories[b][k].re).abs() / self.norms[k])
            .reduce(f64::max)
    }
}

/// Greedy nearest-neighbour assignment: `out[i]` is the index in `next` matched to `prev[i]`.
fn greedy_match(prev: &[C64], next: &[C64]) -> Vec<usize> {
    let n = prev.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push(((p - q).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    let mut left = n;
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !taken[j] {
            out[i] = j;
            taken[j] = true;
            left -= 1;
            if left == 0 {
                break;
            }
        }
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Carries `prev` (in trajectory order at `g0`) to `g1`, halving the step
/// when one level moves much further than the typical one.
fn track_interval(
    family: &PtFamily,
    g0: f64,
    g1: f64,
    prev: &[C64],
    next: &[C64],
    depth: usize,
    refinements: &mut usize,
) -> Result<Vec<C64>> {
    let perm = greedy_match(prev, next);
    let mut disp: Vec<f64> = prev.iter().zip(&perm).map(|(p, &j)| (p - next[j]).norm()).collect();
    let max = disp.iter().cloned().fold(0.0, f64::max);
    let med = median(&mut disp);
    // ordinary motion is bounded by ‖G‖ per unit γ away from exceptional points
    let floor = (g1 - g0) * family.generator_norm;
    if depth < MAX_REFINE_DEPTH && max > 3.0 * med + floor {
        let mid = 0.5 * (g0 + g1);
        let mid_vals = family.slice(mid)?.eigenvalues;
        *refinements += 1;
        let at_mid = track_interval(family, g0, mid, prev, &mid_vals, depth + 1, refinements)?;
        return track_interval(family, mid, g1, &at_mid, next, depth + 1, refinements);
    }
    Ok(perm.iter().map(|&j| next[j]).collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Grid("gamma grid is empty".into()));
    }
    if grid.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::Grid("gamma grid entries must be finite and >= 0".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("gamma grid must be strictly ascending".into()));
    }
    Ok(())
}

pub fn sweep_family(family: &PtFamily, gamma_grid: &[f64]) -> Result<SpectralSweep> {
    check_grid(gamma_grid)?;
    let slices: Vec<Slice> = gamma_grid
        .par_iter()
        .map(|&g| family.slice(g))
        .collect::<Result<_>>()?;

    let n = family.dim();
    let mut trajectories: Vec<Vec<C64>> = (0..n).map(|_| Vec::with_capacity(gamma_grid.len())).collect();
    let mut current = slices[0].eigenvalues.clone();
    let mut refinements = 0;
    for (k, slice) in slices.iter().enumerate() {
        if k > 0 {
            current = track_interval(
                family,
                gamma_grid[k - 1],
                gamma_grid[k],
                &current,
                &slice.eigenvalues,
                0,
                &mut refinements,
            )?;
        }
        for (level, z) in current.iter().enumerate() {
            trajectories[level].push(*z);
        }
    }

    let phase_labels: Vec<PhaseLabel> = slices.iter().map(|s| s.label).collect();
    let transition_interval = phase_labels
        .windows(2)
        .position(|w| w[0] == PhaseLabel::ExactPt && w[1] == PhaseLabel::BrokenPt)
        .map(|k| (gamma_grid[k], gamma_grid[k + 1]));
    Ok(SpectralSweep {
        gamma_grid: gamma_grid.to_vec(),
        trajectories,
        norms: slices.iter().map(|s| s.norm).collect(),
        phase_labels,
        detected_gamma_c: transition_interval.map(|(a, b)| 0.5 * (a + b)),
        transition_interval,
        refinements,
    })
}

pub fn sweep_spectrum(realization: &SykRealization, g: f64, gamma_grid: &[f64]) -> Result<SpectralSweep> {
    sweep_family(&PtFamily::from_realization(realization, g)?, gamma_grid)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Grid from 0 that clusters geometrically below `gamma_c`: `coarse` evenly
/// spaced points up to `0.8 γ_c`, then `γ_c − 0.2 γ_c 2^{-k}` for `k < fine`.
pub fn cusp_grid(gamma_c: f64, coarse: usize, fine: usize) -> Vec<f64> {
    let mut grid = linspace(0.0, 0.8 * gamma_c, coarse.max(2));
    grid.pop();
    grid.extend((0..fine).map(|k| gamma_c - 0.2 * gamma_c * 0.5f64.powi(k as i32)));
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpMethod {
    BisectionFullEd,
    TwoLevelFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpEstimate {
    pub gamma_c: f64,
    /// Levels of `H0` (ascending order) that coalesce first.
    pub pair_indices: (usize, usize),
    pub method: EpMethod,
    pub bracket_width: f64,
    pub cusp_exponent: Option<f64>,
    /// More than one conjugate pair had left the real axis at the upper bracket.
    pub simultaneous: bool,
}

fn broken_pair_center(slice: &Slice) -> (f64, bool) {
    let thr = EPS_IMAG * slice.norm;
    let broken = slice.eigenvalues.iter().filter(|z| z.im > thr).count();
    let top = slice
        .eigenvalues
        .iter()
        .copied()
        .max_by(|a, b| a.im.total_cmp(&b.im).then(b.re.total_cmp(&a.re)))
        .expect("non-empty spectrum");
    (top.re, broken > 1)
}

pub fn find_critical_gamma_family(family: &PtFamily, bracket: (f64, f64), tol: f64) -> Result<EpEstimate> {
    let (mut lo, mut hi) = bracket;
    let bad = |reason: &str| Error::Bracket {
        lo: bracket.0,
        hi: bracket.1,
        reason: reason.to_string(),
    };
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi <= lo {
        return Err(bad("need 0 <= lo < hi"));
    }
    if !(tol > 0.0) {
        return Err(bad("tolerance must be positive"));
    }
    if family.phase(lo)? != PhaseLabel::ExactPt {
        return Err(bad("lower end is already PT-broken"));
    }
    let mut upper = family.slice(hi)?;
    if upper.label != PhaseLabel::BrokenPt {
        return Err(bad("upper end is still PT-exact"));
    }
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        let s = family.slice(mid)?;
        if s.label == PhaseLabel::BrokenPt {
            hi = mid;
            upper = s;
        } else {
            lo = mid;
        }
    }
    let (center, simultaneous) = broken_pair_center(&upper);

    // follow every level from γ = 0 to the lower bracket so the pair is
    // reported in the H0 ordering even if unrelated levels crossed on the way
    let tracked = if lo > 0.0 {
        let sweep = sweep_family(family, &linspace(0.0, lo, 33))?;
        sweep.trajectories.iter().map(|t| *t.last().expect("non-empty")).collect::<Vec<_>>()
    } else {
        family.slice(0.0)?.eigenvalues
    };
    let mut order: Vec<usize> = (0..tracked.len()).collect();
    order.sort_by(|&a, &b| tracked[a].re.total_cmp(&tracked[b].re));
    let (k, _) = order
        .windows(2)
        .enumerate()
        .map(|(k, w)| (k, (0.5 * (tracked[w[0]].re + tracked[w[1]].re) - center).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Model("need at least two levels".into()))?;
    let (a, b) = (order[k].min(order[k + 1]), order[k].max(order[k + 1]));

    Ok(EpEstimate {
        gamma_c: 0.5 * (lo + hi),
        pair_indices: (a, b),
        method: EpMethod::BisectionFullEd,
        bracket_width: hi - lo,
        cusp_exponent: None,
        simultaneous,
    })
}

pub fn find_critical_gamma(
    realization: &SykRealization,
    g: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<EpEstimate> {
    find_critical_gamma_family(&PtFamily::from_realization(realization, g)?, bracket, tol)
}

/// First exact-to-broken interval on `scan` (with the two-level prediction
/// inserted as an extra probe), refined by bisection. `None` when the phase
/// stays exact over the whole scan.
pub fn detect_critical_gamma(family: &PtFamily, scan: &[f64], tol: f64) -> Result<Option<EpEstimate>> {
    check_grid(scan)?;
    let mut probes = scan.to_vec();
    if let Ok(pred) = predict_first_ep(family) {
        let gc = pred.gamma_c();
        if gc.is_finite() && gc > scan[0] && gc < *scan.last().expect("non-empty") {
            probes.push(gc);
            probes.push(0.5 * gc);
        }
    }
    probes.sort_by(f64::total_cmp);
    probes.dedup();
    let labels: Vec<PhaseLabel> = probes.par_iter().map(|&g| family.phase(g)).collect::<Result<_>>()?;
    let Some(k) = labels
        .windows(2)
        .position(|w| w[0] == PhaseLabel::ExactPt && w[1] == PhaseLabel::BrokenPt)
    else {
        return Ok(None);
    };
    find_critical_gamma_family(family, (probes[k], probes[k + 1]), tol).map(Some)
}

/// Onset of the complex pair formed by levels `pair` of `H0`: first scan
/// interval where both tracked levels leave the real axis, refined by
/// bisection while tracking from the lower end. `None` when the pair stays
/// real over the scan.
pub fn find_pair_onset(family: &PtFamily, pair: (usize, usize), scan: &[f64], tol: f64) -> Result<Option<EpEstimate>> {
    let (a, b) = pair;
    if a >= family.dim() || b >= family.dim() || a == b {
        return Err(Error::Domain(format!("invalid level pair ({a}, {b})")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let sweep = sweep_family(family, scan)?;
    let broken = |vals: &[C64], norm: f64| {
        let thr = EPS_IMAG * norm;
        vals[a].im.abs() > thr && vals[b].im.abs() > thr
    };
    let at = |k: usize| -> Vec<C64> { sweep.trajectories.iter().map(|t| t[k]).collect() };
    let Some(k) = (0..scan.len()).find(|&k| broken(&at(k), sweep.norms[k])) else {
        return Ok(None);
    };
    if k == 0 {
        return Err(Error::Bracket {
            lo: scan[0],
            hi: scan[0],
            reason: "pair is complex at the start of the scan".into(),
        });
    }
    let (mut lo, mut hi) = (scan[k - 1], scan[k]);
    let mut state = at(k - 1);
    let mut refinements = 0;
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        let slice = family.slice(mid)?;
        let tracked = track_interval(family, lo, mid, &state, &slice.eigenvalues, 0, &mut refinements)?;
        if broken(&tracked, slice.norm) {
            hi = mid;
        } else {
            lo = mid;
            state = tracked;
        }
    }
    let thr = EPS_IMAG * family.slice(hi)?.norm;
    Ok(Some(EpEstimate {
        gamma_c: 0.5 * (lo + hi),
        pair_indices: (a.min(b), a.max(b)),
        method: EpMethod::BisectionFullEd,
        bracket_width: hi - lo,
        cusp_exponent: None,
        simultaneous: family.slice(hi)?.eigenvalues.iter().filter(|z| z.im > thr).count() > 1,
    }))
}

/// Trajectory grid for a cusp: `coarse` points below `0.8 γ_c`, geometric
/// offsets `0.2 γ_c 2^{-k}` on both sides of `γ_c` down to `min_offset`, then
/// an even stretch up to `2 γ_c`.
pub fn bifurcation_grid(gamma_c: f64, min_offset: f64, coarse: usize, fine: usize) -> Vec<f64> {
    let mut fine_eff = fine;
    while fine_eff > 0 && 0.2 * gamma_c * 0.5f64.powi(fine_eff as i32 - 1) < min_offset {
        fine_eff -= 1;
    }
    let mut grid = cusp_grid(gamma_c, coarse, fine_eff);
    grid.extend((0..fine_eff).rev().map(|k| gamma_c + 0.2 * gamma_c * 0.5f64.powi(k as i32)));
    grid.extend(linspace(1.2 * gamma_c, 2.0 * gamma_c, (coarse / 2).max(2)).into_iter().skip(1));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CuspAnalysis {
    /// Estimate re-bisected to `1e-9 γ_c`, with the fitted exponent filled in.
    pub estimate: EpEstimate,
    pub model: TwoLevelModel,
    pub sweep: SpectralSweep,
    pub fit_error: Option<String>,
    /// Largest `|Re λ_a − Re λ_b| / ‖H‖` on grid points above `γ_c`.
    pub real_part_locking: Option<f64>,
}

/// Resolves the square-root cusp of the pair in `ep`. Grid offsets stop where
/// the expected gap `ΔE₀ √(2δ/γ_c)` falls below `1e-6 ‖H‖`, since closer to a
/// nearly defective point eigenvalues are only good to about `√ε ‖H‖`.
pub fn analyze_cusp(family: &PtFamily, ep: &EpEstimate, coarse: usize, fine: usize) -> Result<CuspAnalysis> {
    let pair = ep.pair_indices;
    let mut estimate = ep.clone();
    let relative_tol = (1e-9 * ep.gamma_c).max(1e-15);
    if ep.bracket_width > relative_tol && ep.gamma_c > ep.bracket_width {
        let mut scan = linspace(0.0, ep.gamma_c - ep.bracket_width, 17);
        scan.push(ep.gamma_c + ep.bracket_width);
        if let Some(r) = find_pair_onset(family, pair, &scan, relative_tol)? {
            estimate = EpEstimate {
                simultaneous: ep.simultaneous,
                ..r
            };
        }
    }
    let gc = estimate.gamma_c;
    let model = two_level_reduce_family(family, pair)?;
    let norm = family.slice(gc)?.norm;
    let noise_offset = 0.5 * gc * (1e-6 * norm / model.gap()).powi(2);
    let min_offset = (10.0 * estimate.bracket_width).max(noise_offset);
    let sweep = sweep_family(family, &bifurcation_grid(gc, min_offset, coarse, fine))?;
    let fit_error = match fit_cusp_exponent(&sweep, pair, gc) {
        Ok(a) => {
            estimate.cusp_exponent = Some(a);
            None
        }
        Err(e) => Some(e.to_string()),
    };
    Ok(CuspAnalysis {
        real_part_locking: sweep.real_part_locking(pair, gc),
        estimate,
        model,
        sweep,
        fit_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelModel {
    pub e_n: f64,
    pub e_m: f64,
    /// `⟨n|G|m⟩`.
    pub v: C64,
    /// `⟨n|G|n⟩` and `⟨m|G|m⟩`.
    pub diag_n: f64,
    pub diag_m: f64,
    pub pair_indices: (usize, usize),
    /// Distance from the pair to the nearest other level over the pair gap.
    pub isolation: f64,
}

impl TwoLevelModel {
    /// Direct construction for analytic checks.
    pub fn from_parts(e_n: f64, e_m: f64, v: C64) -> Self {
        Self {
            e_n,
            e_m,
            v,
            diag_n: 0.0,
            diag_m: 0.0,
            pair_indices: (0, 1),
            isolation: f64::INFINITY,
        }
    }

    pub fn gap(&self) -> f64 {
        (self.e_n - self.e_m).abs()
    }

    /// `|E_n − E_m| / 2|v|`.
    pub fn gamma_c(&self) -> f64 {
        let v = self.v.norm();
        if self.gap() == 0.0 {
            0.0
        } else if v == 0.0 {
            f64::INFINITY
        } else {
            self.gap() / (2.0 * v)
        }
    }

    /// Both diagonal elements are below a tenth of `|v|`.
    pub fn is_valid(&self) -> bool {
        let v = self.v.norm();
        self.diag_n.abs() < 0.1 * v && self.diag_m.abs() < 0.1 * v
    }

    pub fn swapped(&self) -> Self {
        Self {
            e_n: self.e_m,
            e_m: self.e_n,
            v: self.v.conj(),
            diag_n: self.diag_m,
            diag_m: self.diag_n,
            pair_indices: (self.pair_indices.1, self.pair_indices.0),
            isolation: self.isolation,
        }
    }
}

/// `H0` eigenbasis and the generator expressed in it.
struct Reduction {
    energies: Vec<f64>,
    g_matrix: DMatrix<C64>,
}

impl Reduction {
    fn new(family: &PtFamily) -> Result<Self> {
        let (energies, u) = eig_hermitian(family.h0())?;
        let g_matrix = u.adjoint() * family.generator() * &u;
        Ok(Self { energies, g_matrix })
    }

    fn model(&self, n: usize, m: usize) -> TwoLevelModel {
        let (e_n, e_m) = (self.energies[n], self.energies[m]);
        let gap = (e_n - e_m).abs();
        let nearest = self
            .energies
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != n && *k != m)
            .map(|(_, e)| (e - e_n).abs().min((e - e_m).abs()))
            .fold(f64::INFINITY, f64::min);
        TwoLevelModel {
            e_n,
            e_m,
            v: self.g_matrix[(n, m)],
            diag_n: self.g_matrix[(n, n)].re,
            diag_m: self.g_matrix[(m, m)].re,
            pair_indices: (n, m),
            isolation: if gap > 0.0 { nearest / gap } else { f64::INFINITY },
        }
    }
}

pub fn two_level_reduce_family(family: &PtFamily, pair: (usize, usize)) -> Result<TwoLevelModel> {
    let (n, m) = pair;
    let dim = family.dim();
    if n == m || n >= dim || m >= dim {
        return Err(Error::Model(format!("invalid level pair ({n}, {m}) for dimension {dim}")));
    }
    Ok(Reduction::new(family)?.model(n, m))
}

pub fn two_level_reduce(realization: &SykRealization, g: f64, pair: (usize, usize)) -> Result<TwoLevelModel> {
    two_level_reduce_family(&PtFamily::from_realization(realization, g)?, pair)
}

/// Pair with the smallest two-level `γ_c` over all level pairs of `H0`.
pub fn predict_first_ep(family: &PtFamily) -> Result<TwoLevelModel> {
    let red = Reduction::new(family)?;
    let dim = family.dim();
    let mut best: Option<(f64, usize, usize)> = None;
    for n in 0..dim {
        for m in n + 1..dim {
            let v = red.g_matrix[(n, m)].norm();
            if v < 1e-12 * family.generator_norm.max(1.0) {
                continue;
            }
            let ratio = (red.energies[n] - red.energies[m]).abs() / (2.0 * v);
            if best.is_none_or(|(r, _, _)| ratio < r) {
                best = Some((ratio, n, m));
            }
        }
    }
    let (_, n, m) = best.ok_or_else(|| Error::Model("generator couples no pair of levels".into()))?;
    Ok(red.model(n, m))
}

/// `Ē ± sqrt((ΔE/2)² − (γ|v|)²)`, with the `+` root first.
pub fn two_level_eigenvalues(model: &TwoLevelModel, gamma: f64) -> (C64, C64) {
    let mean = 0.5 * (model.e_n + model.e_m);
    let half = 0.5 * (model.e_n - model.e_m);
    let disc = C64::new(half * half - (gamma * model.v.norm()).powi(2), 0.0).sqrt();
    (C64::new(mean, 0.0) + disc, C64::new(mean, 0.0) - disc)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Fit("need at least two paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit("power-law fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Ok(linear_fit(&lx, &ly).slope)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// Exponent of `ΔE ∝ (γ_c − γ)^a` from the tracked pair on grid points in
/// `(0.8 γ_c, γ_c)`.
pub fn fit_cusp_exponent(sweep: &SpectralSweep, pair: (usize, usize), gamma_c: f64) -> Result<f64> {
    let (a, b) = pair;
    if a >= sweep.n_levels() || b >= sweep.n_levels() {
        return Err(Error::Fit(format!("pair ({a}, {b}) outside the sweep")));
    }
    let mut offsets = Vec::new();
    let mut gaps = Vec::new();
    for (k, &g) in sweep.gamma_grid.iter().enumerate() {
        if g > 0.8 * gamma_c && g < gamma_c {
            offsets.push(gamma_c - g);
            gaps.push((sweep.trajectories[a][k] - sweep.trajectories[b][k]).norm());
        }
    }
    if offsets.len() < 8 {
        return Err(Error::Fit(format!(
            "only {} grid points resolve the gap inside (0.8 γ_c, γ_c); need 8",
            offsets.len()
        )));
    }
    fit_power_law(&offsets, &gaps)
}

/// Quadratic coefficient `c` in `ΔE(γ) ≈ ΔE₀ + c γ²` from the two-level
/// eigenvalues on `(0, gamma_small]`.
pub fn gap_attraction_coefficient(model: &TwoLevelModel, gamma_small: f64) -> Result<f64> {
    let de0 = model.gap();
    if !(gamma_small > 0.0) || gamma_small * model.v.norm() >= 0.1 * de0 / 2.0 {
        return Err(Error::Regime(format!(
            "gamma_small |v| = {} must be below ΔE₀/20 = {}",
            gamma_small * model.v.norm(),
            de0 / 20.0
        )));
    }
    let samples = linspace(0.0, gamma_small, 9);
    let points: Vec<(f64, f64)> = samples[1..]
        .iter()
        .map(|&g| {
            let (p, m) = two_level_eigenvalues(model, g);
            (g * g, (p - m).norm() - de0)
        })
        .collect();
    Ok(quadratic_through_origin(&points))
}

/// Same coefficient measured on the full spectrum for levels `pair` of `H0`.
pub fn measure_gap_attraction(family: &PtFamily, pair: (usize, usize), gamma_small: f64) -> Result<f64> {
    let samples = linspace(0.0, gamma_small, 9);
    let sweep = sweep_family(family, &samples)?;
    let (a, b) = pair;
    let gap = |k: usize| (sweep.trajectories[a][k] - sweep.trajectories[b][k]).norm();
    let de0 = gap(0);
    let points: Vec<(f64, f64)> = (1..samples.len()).map(|k| (samples[k].powi(2), gap(k) - de0)).collect();
    Ok(quadratic_through_origin(&points))
}

fn quadratic_through_origin(points: &[(f64, f64)]) -> f64 {
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    sxy / sxx
}

/// Block-diagonal `H0` and generator with `[[E_n, 0], [0, E_m]]` and
/// off-diagonal `v` in the first block, padded with spectator levels whose
/// generator elements vanish.
pub fn direct_sum_family(e_n: f64, e_m: f64, v: f64, spectators: &[f64]) -> Result<PtFamily> {
    let dim = 2 + spectators.len();
    let mut h0 = DMatrix::zeros(dim, dim);
    let mut gen = DMatrix::zeros(dim, dim);
    h0[(0, 0)] = C64::new(e_n, 0.0);
    h0[(1, 1)] = C64::new(e_m, 0.0);
    gen[(0, 1)] = C64::new(v, 0.0);
    gen[(1, 0)] = C64::new(v, 0.0);
    for (k, e) in spectators.iter().enumerate() {
        h0[(k + 2, k + 2)] = C64::new(*e, 0.0);
    }
    PtFamily::new(h0, gen)
}
