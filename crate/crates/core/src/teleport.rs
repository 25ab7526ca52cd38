//! The wormhole teleportation protocol with PT gain re-weighting.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{QubitRole, RegisterLayout, Side};
use crate::linalg::{eig_hermitian, matrix_exponential};
use crate::operator::{embed, OperatorMatrix, StateVector};
use crate::syk::{build_coupling_v, pt_generator_diagonal, SykRealization};
use crate::tfd::{bell_target, prepare_initial_state, thermofield_double};
use crate::C64;

/// Squared-norm exponents `2γtδ_max` above this are rescaled by an explicit log offset.
pub const LOG_OFFSET_THRESHOLD: f64 = 700.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionMode {
    /// Hermitian protocol followed by `e^{γ t V_PT}`.
    #[default]
    Factorized,
    /// The last right evolution runs under `H_R + iγ V_PT`.
    Full,
}

impl EvolutionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvolutionMode::Factorized => "factorized",
            EvolutionMode::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub g: f64,
    pub t: f64,
    pub gamma: f64,
    pub beta: f64,
    pub evolution_mode: EvolutionMode,
    /// 1-based left qubit swapped with the message.
    pub insert_qubit: usize,
    /// 1-based right qubit read out against the reference.
    pub readout_qubit: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            g: 1.0,
            t: 10.0,
            gamma: 0.0,
            beta: 4.0,
            evolution_mode: EvolutionMode::Factorized,
            insert_qubit: 1,
            readout_qubit: 1,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.g, self.t, self.gamma, self.beta].iter().all(|x| x.is_finite());
        if !finite || self.t < 0.0 || self.gamma < 0.0 || self.beta < 0.0 {
            return Err(Error::Domain(format!(
                "need finite g and t, gamma, beta >= 0; got g = {}, t = {}, gamma = {}, beta = {}",
                self.g, self.t, self.gamma, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeleportResult {
    pub config: ProtocolConfig,
    pub fidelity: f64,
    /// `⟨ψ̃|ψ̃⟩` of the post-gain state; infinite once it leaves double range.
    pub success_probability: f64,
    pub log10_success_probability: f64,
    /// Natural-log amplitude offset divided out of the stored state.
    pub log_offset: f64,
    #[serde(skip)]
    pub output_state: Option<StateVector>,
    /// `δ → Σ |a_k|²` of the Hermitian protocol output (sums to 1).
    pub sector_weights: BTreeMap<i32, f64>,
    /// `δ → Σ |ã_k|²` of the post-gain state, in units of `e^{2 log_offset}`
    /// (sums to the success probability when the offset is zero).
    pub gained_sector_weights: BTreeMap<i32, f64>,
}

/// Unnormalized post-gain state `e^{−log_offset} e^{γ t V_PT} |ψ⟩`.
#[derive(Debug, Clone)]
pub struct GainedState {
    pub state: StateVector,
    pub log_offset: f64,
}

impl GainedState {
    pub fn log10_norm_squared(&self) -> f64 {
        (self.state.norm_squared().ln() + 2.0 * self.log_offset) / std::f64::consts::LN_10
    }
}

/// Multiplies each amplitude by `e^{γ t δ}` with `δ` the matching diagonal
/// entry of `V_PT`.
pub fn apply_pt_gain(state: &StateVector, v_pt_diagonal: &[f64], gamma: f64, t: f64) -> Result<GainedState> {
    if state.dim() != v_pt_diagonal.len() {
        return Err(Error::layout(format!(
            "state of dimension {} does not match V_PT of dimension {}",
            state.dim(),
            v_pt_diagonal.len()
        )));
    }
    if !(gamma.is_finite() && t.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gain exponent gamma = {gamma}, t = {t}")));
    }
    let delta_max = v_pt_diagonal.iter().cloned().fold(f64::MIN, f64::max);
    let top = gamma * t * delta_max;
    let log_offset = if 2.0 * top > LOG_OFFSET_THRESHOLD { top } else { 0.0 };
    let diag: Vec<C64> = v_pt_diagonal
        .iter()
        .map(|d| C64::new((gamma * t * d - log_offset).exp(), 0.0))
        .collect();
    Ok(GainedState {
        state: state.apply_diagonal(&diag),
        log_offset,
    })
}

/// `δ → Σ |a_k|²` over the computational basis.
pub fn sector_weights(state: &StateVector, v_pt_diagonal: &[f64]) -> BTreeMap<i32, f64> {
    let mut out = BTreeMap::new();
    for (a, d) in state.amplitudes().iter().zip(v_pt_diagonal) {
        *out.entry(d.round() as i32).or_insert(0.0) += a.norm_sqr();
    }
    out
}

/// Closed-form fidelity when the target component sits entirely in sector
/// `target_delta` with weight `target_weight`, and the full state has sector
/// weights `weights`: `w₀ e^{2γtδ₀} / Σ_j w_j e^{2γtδ_j}`.
pub fn sector_fidelity(target_weight: f64, target_delta: f64, weights: &[(f64, f64)], gamma: f64, t: f64) -> f64 {
    let top = weights.iter().map(|(d, _)| *d).fold(target_delta, f64::max);
    let den: f64 = weights.iter().map(|(d, w)| w * (2.0 * gamma * t * (d - top)).exp()).sum();
    target_weight * (2.0 * gamma * t * (target_delta - top)).exp() / den
}

/// `dF/dγ = 2 t F (δ₀ − ⟨δ⟩_γ)` for [`sector_fidelity`].
pub fn sector_fidelity_derivative(
    target_weight: f64,
    target_delta: f64,
    weights: &[(f64, f64)],
    gamma: f64,
    t: f64,
) -> f64 {
    let f = sector_fidelity(target_weight, target_delta, weights, gamma, t);
    let top = weights.iter().map(|(d, _)| *d).fold(target_delta, f64::max);
    let (num, den) = weights.iter().fold((0.0, 0.0), |(n, d), (delta, w)| {
        let e = w * (2.0 * gamma * t * (delta - top)).exp();
        (n + delta * e, d + e)
    });
    2.0 * t * f * (target_delta - num / den)
}

fn evolution_block(energies: &[f64], vecs: &DMatrix<C64>, phase: C64) -> DMatrix<C64> {
    let n = energies.len();
    let scaled = DMatrix::from_fn(n, n, |i, j| vecs[(i, j)] * (phase * energies[j]).exp());
    scaled * vecs.adjoint()
}

/// Cached pieces of one realization for repeated protocol runs.
#[derive(Debug, Clone)]
pub struct ProtocolRunner {
    realization: SykRealization,
    left: (Vec<f64>, DMatrix<C64>),
    right: (Vec<f64>, DMatrix<C64>),
    v_system: (Vec<f64>, DMatrix<C64>),
    v_pt_diagonal: Vec<f64>,
}

impl ProtocolRunner {
    /// Places the realization on a protocol layout if it is not on one already.
    pub fn new(realization: &SykRealization) -> Result<Self> {
        let realization = if realization.layout().has_protocol_qubits() {
            realization.clone()
        } else {
            realization.with_layout(RegisterLayout::protocol(realization.layout().n_majorana_per_side())?)?
        };
        let n = realization.layout().n_majorana_per_side();
        let v_block = build_coupling_v(&RegisterLayout::spectral(n)?)?;
        Ok(Self {
            left: eig_hermitian(realization.left_block().matrix())?,
            right: eig_hermitian(realization.right_block().matrix())?,
            v_system: eig_hermitian(v_block.matrix())?,
            v_pt_diagonal: pt_generator_diagonal(realization.layout()),
            realization,
        })
    }

    pub fn realization(&self) -> &SykRealization {
        &self.realization
    }

    pub fn layout(&self) -> &RegisterLayout {
        self.realization.layout()
    }

    pub fn v_pt_diagonal(&self) -> &[f64] {
        &self.v_pt_diagonal
    }

    pub fn delta_max(&self) -> f64 {
        self.v_pt_diagonal.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn initial_state(&self, beta: f64) -> Result<StateVector> {
        prepare_initial_state(&thermofield_double(&self.realization, beta)?, &self.realization)
    }

    fn left_evolution(&self, t: f64) -> DMatrix<C64> {
        evolution_block(&self.left.0, &self.left.1, C64::new(0.0, -t))
    }

    fn right_evolution(&self, t: f64) -> DMatrix<C64> {
        evolution_block(&self.right.0, &self.right.1, C64::new(0.0, -t))
    }

    fn coupling_gate(&self, g: f64) -> DMatrix<C64> {
        evolution_block(&self.v_system.0, &self.v_system.1, C64::new(0.0, g))
    }

    fn check_qubits(&self, config: &ProtocolConfig) -> Result<(usize, usize)> {
        let layout = self.layout();
        Ok((
            layout.qubit(QubitRole::Left(config.insert_qubit))?,
            layout.qubit(QubitRole::Right(config.readout_qubit))?,
        ))
    }

    /// `e^{igV} e^{−iH_L t} SWAP e^{iH_L t} |ψ⟩`, everything but the final right evolution.
    fn through_coupling(&self, psi: &StateVector, g: f64, t: f64, insert: usize) -> Result<StateVector> {
        let layout = self.layout();
        let left = layout.side_qubits(Side::Left);
        let message = layout.qubit(QubitRole::Message)?;
        let forward = self.left_evolution(t);
        let backward = forward.adjoint();
        let psi = psi.apply_local(&backward, &left)?;
        let psi = psi.swap_qubits(message, insert)?;
        let psi = psi.apply_local(&forward, &left)?;
        psi.apply_local(&self.coupling_gate(g), &layout.system_qubits())
    }

    /// `U_wh |ψ⟩` for the Hermitian protocol.
    pub fn hermitian_output(&self, psi: &StateVector, config: &ProtocolConfig) -> Result<StateVector> {
        config.validate()?;
        let (insert, _) = self.check_qubits(config)?;
        let psi = self.through_coupling(psi, config.g, config.t, insert)?;
        psi.apply_local(&self.right_evolution(config.t), &self.layout().side_qubits(Side::Right))
    }

    fn full_mode_output(&self, psi: &StateVector, config: &ProtocolConfig) -> Result<GainedState> {
        let (insert, _) = self.check_qubits(config)?;
        let layout = self.layout();
        let psi = self.through_coupling(psi, config.g, config.t, insert)?;
        let n_side = layout.n_side_qubits();
        let (gamma, t) = (config.gamma, config.t);
        let top = gamma * t * self.delta_max();
        let log_offset = if 2.0 * top > LOG_OFFSET_THRESHOLD { top } else { 0.0 };
        let half = log_offset / 2.0;

        // e^{−i(H_R + iγV_PT)t} = e^{γtΣZ_L} e^{(−iH_R − γΣZ_R)t}; the Z_L part commutes with H_R
        let right_block = self.realization.right_block();
        let d = right_block.dim();
        let z_right = DMatrix::from_fn(d, d, |i, j| {
            if i != j {
                return C64::new(0.0, 0.0);
            }
            let ones = i.count_ones() as f64;
            C64::new(n_side as f64 - 2.0 * ones, 0.0)
        });
        let generator = right_block.matrix() * C64::new(0.0, -1.0) - z_right * C64::new(gamma, 0.0)
            - DMatrix::identity(d, d) * C64::new(half / t.max(f64::MIN_POSITIVE), 0.0);
        let right_step = matrix_exponential(&OperatorMatrix::new(generator), C64::new(t, 0.0))?;
        let psi = psi.apply_local(right_step.matrix(), &layout.side_qubits(Side::Right))?;

        let nq = layout.n_qubits();
        let left = layout.side_qubits(Side::Left);
        let diag: Vec<C64> = (0..layout.dim())
            .map(|idx| {
                let zsum: f64 = left
                    .iter()
                    .map(|&q| if (idx >> (nq - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 })
                    .sum();
                C64::new((gamma * t * zsum - half).exp(), 0.0)
            })
            .collect();
        Ok(GainedState {
            state: psi.apply_diagonal(&diag),
            log_offset,
        })
    }

    /// Applies the gain stage to a Hermitian protocol output and reads out.
    pub fn finish(&self, psi_initial: &StateVector, hermitian: &StateVector, config: &ProtocolConfig) -> Result<TeleportResult> {
        config.validate()?;
        let (_, readout) = self.check_qubits(config)?;
        let gained = match config.evolution_mode {
            _ if config.gamma == 0.0 => GainedState {
                state: hermitian.clone(),
                log_offset: 0.0,
            },
            EvolutionMode::Factorized => apply_pt_gain(hermitian, &self.v_pt_diagonal, config.gamma, config.t)?,
            EvolutionMode::Full => self.full_mode_output(psi_initial, config)?,
        };
        let norm_sq = gained.state.norm_squared();
        if !(norm_sq > 0.0 && norm_sq.is_finite()) {
            return Err(Error::Numeric(format!("post-gain norm is {norm_sq}")));
        }
        let log10p = gained.log10_norm_squared();
        let output = gained.state.normalized()?;
        let fidelity = bell_fidelity(&output, self.layout(), readout)?;
        Ok(TeleportResult {
            config: *config,
            fidelity,
            success_probability: 10f64.powf(log10p),
            log10_success_probability: log10p,
            log_offset: gained.log_offset,
            sector_weights: sector_weights(hermitian, &self.v_pt_diagonal),
            gained_sector_weights: sector_weights(&gained.state, &self.v_pt_diagonal),
            output_state: Some(output),
        })
    }

    pub fn run(&self, config: &ProtocolConfig) -> Result<TeleportResult> {
        let psi0 = self.initial_state(config.beta)?;
        let herm = self.hermitian_output(&psi0, config)?;
        self.finish(&psi0, &herm, config)
    }

    /// Fidelity at every γ for one `(g, t, β)`, reusing the Hermitian output.
    pub fn gamma_sweep(&self, config: &ProtocolConfig, gammas: &[f64]) -> Result<Vec<TeleportResult>> {
        let psi0 = self.initial_state(config.beta)?;
        let herm = self.hermitian_output(&psi0, config)?;
        gammas
            .iter()
            .map(|&gamma| {
                let cfg = ProtocolConfig { gamma, ..*config };
                let mut r = self.finish(&psi0, &herm, &cfg)?;
                r.output_state = None;
                Ok(r)
            })
            .collect()
    }
}

/// `⟨Φ+|ρ|Φ+⟩` with `ρ` the reduced state on the reference and `readout`.
pub fn bell_fidelity(state: &StateVector, layout: &RegisterLayout, readout: usize) -> Result<f64> {
    let reference = layout.qubit(QubitRole::Reference)?;
    let rho = state.reduced_density(&[reference, readout])?;
    let f = rho.expectation(&bell_target())? / rho.trace().re;
    Ok(f.clamp(0.0, 1.0))
}

/// Full-register `e^{−iH_R t} e^{igV} e^{−iH_L t} SWAP(msg, L_insert) e^{iH_L t}`.
pub fn wormhole_unitary(realization: &SykRealization, g: f64, t: f64, insert_qubit: usize) -> Result<OperatorMatrix> {
    let layout = realization.layout();
    if !layout.has_protocol_qubits() {
        return Err(Error::layout("wormhole unitary needs a protocol layout"));
    }
    if !(g.is_finite() && t.is_finite()) {
        return Err(Error::Domain(format!("non-finite g = {g} or t = {t}")));
    }
    let message = layout.qubit(QubitRole::Message)?;
    let insert = layout.qubit(QubitRole::Left(insert_qubit))?;
    let swap_local = DMatrix::from_fn(4, 4, |r, c| {
        let s = [0, 2, 1, 3];
        if s[c] == r {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let swap = embed(&swap_local, &[message, insert], layout.n_qubits())?;
    let back = matrix_exponential(realization.h_l(), C64::new(0.0, t))?;
    let fwd = matrix_exponential(realization.h_l(), C64::new(0.0, -t))?;
    let gate = matrix_exponential(realization.v(), C64::new(0.0, g))?;
    let right = matrix_exponential(realization.h_r(), C64::new(0.0, -t))?;
    Ok(OperatorMatrix::new(
        right.matrix() * gate.matrix() * fwd.matrix() * swap * back.matrix(),
    ))
}

pub fn run_protocol(realization: &SykRealization, config: &ProtocolConfig) -> Result<TeleportResult> {
    ProtocolRunner::new(realization)?.run(config)
}

pub fn success_probability(result: &TeleportResult) -> f64 {
    result.success_probability
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub derivative: f64,
    /// The Bell-projected component's dominant `V_PT` sector is the top one.
    pub aligned: bool,
    pub dominant_sector: i32,
}

/// Central difference of the fidelity in γ, checked against one step halving.
pub fn fidelity_gamma_derivative_check(
    runner: &ProtocolRunner,
    config: &ProtocolConfig,
    dgamma: f64,
) -> Result<DerivativeCheck> {
    config.validate()?;
    if !(dgamma > 0.0) {
        return Err(Error::Step(format!("step must be positive, got {dgamma}")));
    }
    let psi0 = runner.initial_state(config.beta)?;
    let herm = runner.hermitian_output(&psi0, config)?;
    let f = |gamma: f64| -> Result<f64> {
        let cfg = ProtocolConfig { gamma, ..*config };
        Ok(runner.finish(&psi0, &herm, &cfg)?.fidelity)
    };
    let diff = |h: f64| -> Result<f64> {
        if config.gamma >= h {
            Ok((f(config.gamma + h)? - f(config.gamma - h)?) / (2.0 * h))
        } else {
            Ok((f(config.gamma + h)? - f(config.gamma)?) / h)
        }
    };
    let coarse = diff(dgamma)?;
    let fine = diff(dgamma / 2.0)?;
    if (coarse - fine).abs() > 0.1 * fine.abs() + 1e-6 {
        return Err(Error::Step(format!(
            "derivative moved from {coarse} to {fine} under step halving at dgamma = {dgamma}"
        )));
    }

    // Bell-projected component on (reference, readout)
    let layout = runner.layout();
    let (_, readout) = runner.check_qubits(config)?;
    let reference = layout.qubit(QubitRole::Reference)?;
    let b = bell_target();
    let proj = b.amplitudes() * b.amplitudes().adjoint();
    let projected = herm.apply_local(&proj, &[reference, readout])?;
    let weights = sector_weights(&projected, runner.v_pt_diagonal());
    let dominant_sector = weights
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
        .map(|(d, _)| *d)
        .unwrap_or(0);
    Ok(DerivativeCheck {
        derivative: fine,
        aligned: dominant_sector as f64 == runner.delta_max(),
        dominant_sector,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurificationCheck {
    /// Fidelity of a direct run at the large γ.
    pub direct: f64,
    /// Fidelity of the Hermitian output projected onto its top occupied sector.
    pub analytic: f64,
    pub sector: i32,
    pub gamma: f64,
}

/// Large-γ fidelity computed through the log-offset gain path and through
/// the top-sector projection.
pub fn purification_limit(runner: &ProtocolRunner, config: &ProtocolConfig, large_gamma: f64) -> Result<PurificationCheck> {
    let cfg = ProtocolConfig {
        gamma: large_gamma,
        evolution_mode: EvolutionMode::Factorized,
        ..*config
    };
    cfg.validate()?;
    let psi0 = runner.initial_state(cfg.beta)?;
    let herm = runner.hermitian_output(&psi0, &cfg)?;
    let direct = runner.finish(&psi0, &herm, &cfg)?.fidelity;

    let weights = sector_weights(&herm, runner.v_pt_diagonal());
    let total: f64 = weights.values().sum();
    let sector = *weights
        .iter()
        .rev()
        .find(|(_, w)| **w > 1e-30 * total)
        .map(|(d, _)| d)
        .ok_or_else(|| Error::Numeric("state has no weight".into()))?;
    let mask: Vec<C64> = runner
        .v_pt_diagonal()
        .iter()
        .map(|d| C64::new(if d.round() as i32 == sector { 1.0 } else { 0.0 }, 0.0))
        .collect();
    let projected = herm.apply_diagonal(&mask).normalized()?;
    let (_, readout) = runner.check_qubits(&cfg)?;
    let analytic = bell_fidelity(&projected, runner.layout(), readout)?;
    Ok(PurificationCheck {
        direct,
        analytic,
        sector,
        gamma: large_gamma,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolRow {
    pub seed: u64,
    pub g: f64,
    pub t: f64,
    pub gamma: f64,
    pub fidelity: f64,
    pub log10_success_probability: f64,
    pub evolution_mode: EvolutionMode,
}

/// Every `(realization, g, t, γ)` combination; rows ordered by realization,
/// then g, then t, then γ.
pub fn protocol_sweep(
    runners: &[ProtocolRunner],
    base: &ProtocolConfig,
    g_grid: &[f64],
    t_grid: &[f64],
    gamma_grid: &[f64],
) -> Result<Vec<ProtocolRow>> {
    let jobs: Vec<(usize, f64, f64)> = (0..runners.len())
        .flat_map(|r| g_grid.iter().flat_map(move |&g| t_grid.iter().map(move |&t| (r, g, t))))
        .collect();
    let blocks: Vec<Vec<ProtocolRow>> = jobs
        .par_iter()
        .map(|&(r, g, t)| {
            let runner = &runners[r];
            let cfg = ProtocolConfig { g, t, ..*base };
            let results = runner.gamma_sweep(&cfg, gamma_grid)?;
            Ok(results
                .into_iter()
                .map(|res| ProtocolRow {
                    seed: runner.realization().seed(),
                    g,
                    t,
                    gamma: res.config.gamma,
                    fidelity: res.fidelity,
                    log10_success_probability: res.log10_success_probability,
                    evolution_mode: base.evolution_mode,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub t: f64,
    pub gamma: f64,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub n_realizations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapTable {
    /// Ordered by t, then γ.
    pub cells: Vec<HeatmapCell>,
    /// `(γ, argmax_t mean fidelity)`.
    pub peak_times: Vec<(f64, f64)>,
}

impl HeatmapTable {
    pub fn peak_time(&self, gamma: f64) -> Option<f64> {
        self.peak_times.iter().find(|(g, _)| *g == gamma).map(|(_, t)| *t)
    }
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Disorder-averaged fidelity on a `(t, γ)` grid.
pub fn temporal_heatmap(
    runners: &[ProtocolRunner],
    base: &ProtocolConfig,
    t_grid: &[f64],
    gamma_grid: &[f64],
) -> Result<HeatmapTable> {
    if runners.is_empty() || t_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::Grid("heatmap needs realizations, t values and gamma values".into()));
    }
    let rows = protocol_sweep(runners, base, &[base.g], t_grid, gamma_grid)?;
    let (nt, ng) = (t_grid.len(), gamma_grid.len());
    let mut samples = vec![Vec::with_capacity(runners.len()); nt * ng];
    // rows come in (realization, t, γ) order
    for (i, row) in rows.iter().enumerate() {
        samples[i % (nt * ng)].push(row.fidelity);
    }
    let mut cells = Vec::with_capacity(nt * ng);
    for (ti, &t) in t_grid.iter().enumerate() {
        for (gi, &gamma) in gamma_grid.iter().enumerate() {
            let (mean, std) = mean_std(&samples[ti * ng + gi]);
            cells.push(HeatmapCell {
                t,
                gamma,
                mean_fidelity: mean,
                std_fidelity: std,
                n_realizations: runners.len(),
            });
        }
    }
    let peak_times = gamma_grid
        .iter()
        .enumerate()
        .map(|(gi, &gamma)| {
            let best = (0..nt)
                .max_by(|&a, &b| {
                    cells[a * ng + gi]
                        .mean_fidelity
                        .total_cmp(&cells[b * ng + gi].mean_fidelity)
                        .then(b.cmp(&a))
                })
                .expect("non-empty t grid");
            (gamma, t_grid[best])
        })
        .collect();
    Ok(HeatmapTable { cells, peak_times })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::max_abs;
    use crate::syk::RightConvention;

    fn runner(seed: u64) -> ProtocolRunner {
        let r = SykRealization::sample(seed, 1.0, RegisterLayout::protocol(6).unwrap(), RightConvention::Conjugated).unwrap();
        ProtocolRunner::new(&r).unwrap()
    }

    #[test]
    fn trivial_unitary_is_swap() {
        let r = runner(1);
        let u = wormhole_unitary(r.realization(), 0.0, 0.0, 1).unwrap();
        let layout = r.layout();
        let mut expect = DMatrix::zeros(256, 256);
        for c in 0..256usize {
            let (m, l) = ((c >> 6) & 1, (c >> 5) & 1);
            let row = (c & !(0b11 << 5)) | (l << 6) | (m << 5);
            expect[(row, c)] = C64::new(1.0, 0.0);
        }
        assert_eq!(layout.qubit(QubitRole::Left(1)).unwrap(), 2);
        assert!(max_abs(&(u.matrix() - expect)) < 1e-12);
    }

    #[test]
    fn unitary_is_unitary_and_matches_fast_path() {
        let r = runner(2);
        for (g, t) in [(0.7, 1.3), (4.0, 7.5), (12.0, 20.0)] {
            let u = wormhole_unitary(r.realization(), g, t, 1).unwrap();
            let defect = u.matrix().adjoint() * u.matrix() - DMatrix::identity(256, 256);
            assert!(max_abs(&defect) < 1e-10);
            let cfg = ProtocolConfig { g, t, ..Default::default() };
            let psi0 = r.initial_state(cfg.beta).unwrap();
            let fast = r.hermitian_output(&psi0, &cfg).unwrap();
            let slow = u.matrix() * psi0.amplitudes();
            assert!((fast.amplitudes() - slow).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_gamma_conserves_norm() {
        let r = runner(3);
        for t in [0.0, 2.5, 10.0, 20.0] {
            let res = r.run(&ProtocolConfig { g: 3.0, t, ..Default::default() }).unwrap();
            assert!((res.success_probability - 1.0).abs() < 1e-10);
            assert!((res.sector_weights.values().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(res.fidelity >= 0.0 && res.fidelity <= 1.0);
        }
    }

    #[test]
    fn zero_gamma_is_bit_identical_to_hermitian_protocol() {
        let r = runner(4);
        let cfg = ProtocolConfig { g: 2.0, t: 5.0, ..Default::default() };
        let psi0 = r.initial_state(cfg.beta).unwrap();
        let herm = r.hermitian_output(&psi0, &cfg).unwrap().normalized().unwrap();
        let res = r.run(&cfg).unwrap();
        assert_eq!(res.output_state.unwrap().amplitudes(), herm.amplitudes());
    }

    #[test]
    fn gain_identity_and_diagonal_action() {
        let d = vec![6.0, 0.0, -2.0, 4.0];
        let psi = StateVector::from_vec(vec![C64::new(0.5, 0.0); 4]);
        let same = apply_pt_gain(&psi, &d, 0.0, 10.0).unwrap();
        assert_eq!(same.state.amplitudes(), psi.amplitudes());
        let one = apply_pt_gain(&StateVector::basis(4, 0), &d, 1.0, 1.0).unwrap();
        assert!((one.state.amplitudes()[0].re - 6f64.exp()).abs() < 1e-12 * 6f64.exp());
    }

    #[test]
    fn gain_norm_matches_sector_sum() {
        let r = runner(5);
        let cfg = ProtocolConfig { g: 1.0, t: 10.0, ..Default::default() };
        let psi0 = r.initial_state(cfg.beta).unwrap();
        let herm = r.hermitian_output(&psi0, &cfg).unwrap();
        let w = sector_weights(&herm, r.v_pt_diagonal());
        for gamma in [0.05, 0.1, 0.2] {
            let gained = apply_pt_gain(&herm, r.v_pt_diagonal(), gamma, 10.0).unwrap();
            let oracle: f64 = w.iter().map(|(d, x)| x * (2.0 * gamma * 10.0 * *d as f64).exp()).sum();
            assert!((gained.state.norm_squared() / oracle - 1.0).abs() < 1e-10);
            let res = r.finish(&psi0, &herm, &ProtocolConfig { gamma, ..cfg }).unwrap();
            let gsum: f64 = res.gained_sector_weights.values().sum();
            assert!((gsum / res.success_probability - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn log_offset_keeps_fidelity_and_probability() {
        let r = runner(6);
        let cfg = ProtocolConfig { g: 2.0, t: 10.0, gamma: 12.0, ..Default::default() };
        let res = r.run(&cfg).unwrap();
        assert!(res.log_offset > 0.0);
        assert!(res.log10_success_probability.is_finite());
        let g2 = 350.0 / (10.0 * 6.0) * 0.99;
        let a = r.run(&ProtocolConfig { gamma: g2, ..cfg }).unwrap();
        assert_eq!(a.log_offset, 0.0);
        let psi0 = r.initial_state(cfg.beta).unwrap();
        let herm = r.hermitian_output(&psi0, &cfg).unwrap();
        let w = sector_weights(&herm, r.v_pt_diagonal());
        let top = 6.0;
        let ln_p = |gamma: f64| {
            2.0 * gamma * 10.0 * top
                + w.iter().map(|(d, x)| x * (2.0 * gamma * 10.0 * (*d as f64 - top)).exp()).sum::<f64>().ln()
        };
        for (res, gamma) in [(&res, 12.0), (&a, g2)] {
            let expect = ln_p(gamma) / std::f64::consts::LN_10;
            assert!((res.log10_success_probability - expect).abs() < 1e-9 * expect.abs());
        }
    }

    #[test]
    fn sector_fidelity_derivative_signs() {
        let weights = [(6.0, 0.01), (4.0, 0.3), (2.0, 0.4), (0.0, 0.29)];
        let (g, t) = (0.1, 10.0);
        let aligned = sector_fidelity_derivative(0.01, 6.0, &weights, g, t);
        assert!(aligned >= -1e-8);
        let mis = sector_fidelity_derivative(0.3, 4.0, &[(6.0, 0.6), (4.0, 0.3), (0.0, 0.1)], g, t);
        assert!(mis < 0.0);
        let h = 1e-6;
        let fd = (sector_fidelity(0.01, 6.0, &weights, g + h, t) - sector_fidelity(0.01, 6.0, &weights, g - h, t)) / (2.0 * h);
        assert!((fd - aligned).abs() < 1e-6 * aligned.abs().max(1.0));
    }

    #[test]
    fn purification_two_ways_agree() {
        let r = runner(7);
        for g in [1.0, 5.0] {
            let cfg = ProtocolConfig { g, t: 10.0, ..Default::default() };
            let p = r_purification(&r, &cfg);
            assert_eq!(p.sector, 6);
            assert!((p.direct - p.analytic).abs() < 1e-6, "{p:?}");
            // the δ_max sector pins the readout qubit to |1⟩
            assert!(p.analytic <= 0.5 + 1e-12);
        }
    }

    fn r_purification(r: &ProtocolRunner, cfg: &ProtocolConfig) -> PurificationCheck {
        purification_limit(r, cfg, 50.0).unwrap()
    }

    #[test]
    fn full_mode_matches_dense_evolution() {
        let r = runner(8);
        let cfg = ProtocolConfig {
            g: 1.5,
            t: 2.0,
            gamma: 0.1,
            evolution_mode: EvolutionMode::Full,
            ..Default::default()
        };
        let res = r.run(&cfg).unwrap();
        let real = r.realization();
        let psi0 = r.initial_state(cfg.beta).unwrap();
        let layout = r.layout();
        let message = layout.qubit(QubitRole::Message).unwrap();
        let amps = psi0.amplitudes().clone();
        let back = matrix_exponential(real.h_l(), C64::new(0.0, cfg.t)).unwrap();
        let fwd = matrix_exponential(real.h_l(), C64::new(0.0, -cfg.t)).unwrap();
        let gate = matrix_exponential(real.v(), C64::new(0.0, cfg.g)).unwrap();
        let step = OperatorMatrix::new(real.h_r().matrix() + real.v_pt().matrix() * C64::new(0.0, cfg.gamma));
        let last = matrix_exponential(&step, C64::new(0.0, -cfg.t)).unwrap();
        let s = StateVector::new(back.matrix() * amps).swap_qubits(message, 2).unwrap();
        let out = last.matrix() * gate.matrix() * fwd.matrix() * s.amplitudes();
        let p: f64 = out.norm_squared();
        assert!((res.success_probability / p - 1.0).abs() < 1e-9);
        let normed = StateVector::new(out).normalized().unwrap();
        let f = bell_fidelity(&normed, layout, layout.qubit(QubitRole::Right(1)).unwrap()).unwrap();
        assert!((f - res.fidelity).abs() < 1e-10);
    }

    #[test]
    fn heatmap_degenerate_grid_reduces_to_single_run() {
        let r = runner(9);
        let cfg = ProtocolConfig { g: 3.0, t: 4.0, gamma: 0.1, ..Default::default() };
        let table = temporal_heatmap(std::slice::from_ref(&r), &cfg, &[4.0], &[0.1]).unwrap();
        let direct = r.run(&cfg).unwrap();
        assert_eq!(table.cells.len(), 1);
        assert_eq!(table.cells[0].mean_fidelity, direct.fidelity);
        assert_eq!(table.cells[0].std_fidelity, 0.0);
        assert_eq!(table.peak_time(0.1), Some(4.0));
    }

    #[test]
    fn invalid_config_rejected() {
        let r = runner(1);
        assert!(r.run(&ProtocolConfig { t: -1.0, ..Default::default() }).is_err());
        assert!(r.run(&ProtocolConfig { gamma: -0.1, ..Default::default() }).is_err());
        assert!(r.run(&ProtocolConfig { insert_qubit: 4, ..Default::default() }).is_err());
    }
}
