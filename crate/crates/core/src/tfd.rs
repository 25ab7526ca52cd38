//! Thermofield-double preparation and the protocol's Bell pairs.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::eig_hermitian;
use crate::operator::StateVector;
use crate::syk::SykRealization;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalConfig {
    pub beta: f64,
    /// `Σ_i e^{−β E_i}` over the single-side spectrum.
    pub partition_function: f64,
}

impl ThermalConfig {
    pub fn new(realization: &SykRealization, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let (energies, _) = eig_hermitian(realization.left_block().matrix())?;
        let partition_function = energies.iter().map(|e| (-beta * e).exp()).sum();
        Ok(Self {
            beta,
            partition_function,
        })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta must be finite and >= 0, got {beta}")))
    }
}

/// `Z^{-1/2} Σ_i e^{−β E_i / 2} |E_i⟩_L ⊗ |E_i*⟩_R` on the left and right
/// blocks only (dimension `2^N`, left block in the high bits).
pub fn thermofield_double(realization: &SykRealization, beta: f64) -> Result<StateVector> {
    check_beta(beta)?;
    let (energies, vecs) = eig_hermitian(realization.left_block().matrix())?;
    let d = energies.len();
    // shifting by the ground energy only changes the overall norm
    let e0 = energies[0];
    let mut amps = DVector::zeros(d * d);
    for (i, e) in energies.iter().enumerate() {
        let w = (-beta * (e - e0) / 2.0).exp();
        let u = vecs.column(i);
        for a in 0..d {
            for b in 0..d {
                amps[a * d + b] += u[a] * u[b].conj() * w;
            }
        }
    }
    StateVector::new(amps).normalized()
}

/// `(|00⟩ + |11⟩)/√2`.
pub fn bell_target() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::from_vec(vec![C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)])
}

/// `|Φ+⟩_{ref,msg} ⊗ |TFD⟩_{L,R}` on a protocol layout.
pub fn prepare_initial_state(tfd: &StateVector, realization: &SykRealization) -> Result<StateVector> {
    let layout = realization.layout();
    if !layout.has_protocol_qubits() {
        return Err(Error::layout("initial state needs reference and message qubits"));
    }
    if tfd.dim() != 1 << layout.system_qubits().len() {
        return Err(Error::layout(format!(
            "TFD of dimension {} does not match the {}-qubit system",
            tfd.dim(),
            layout.system_qubits().len()
        )));
    }
    bell_target().tensor(tfd).normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{QubitRole, RegisterLayout};
    use crate::operator::{max_abs, partial_trace};
    use crate::syk::RightConvention;
    use nalgebra::DMatrix;

    fn realization(seed: u64, layout: RegisterLayout) -> SykRealization {
        SykRealization::sample(seed, 1.0, layout, RightConvention::Conjugated).unwrap()
    }

    #[test]
    fn infinite_temperature_left_marginal_is_maximally_mixed() {
        let r = realization(4, RegisterLayout::spectral(6).unwrap());
        let tfd = thermofield_double(&r, 0.0).unwrap();
        let roles = [QubitRole::Left(1), QubitRole::Left(2), QubitRole::Left(3)];
        let rho = partial_trace(&tfd, &roles, r.layout()).unwrap();
        let expect = DMatrix::<C64>::identity(8, 8) / C64::new(8.0, 0.0);
        assert!(max_abs(&(rho.matrix() - expect)) < 1e-12);
    }

    #[test]
    fn low_temperature_projects_on_ground_pair() {
        let r = realization(8, RegisterLayout::spectral(6).unwrap());
        let (energies, vecs) = eig_hermitian(r.left_block().matrix()).unwrap();
        // ground states of the N = 6 block come in degenerate doublets;
        // the TFD projects onto the whole ground multiplet
        let mult = energies.iter().filter(|e| (*e - energies[0]).abs() < 1e-9).count();
        let tfd = thermofield_double(&r, 1e3).unwrap();
        let mut overlap = 0.0;
        let d = energies.len();
        for i in 0..mult {
            let u = vecs.column(i);
            let pair = DVector::from_fn(d * d, |k, _| u[k / d] * u[k % d].conj());
            overlap += pair.dotc(tfd.amplitudes()).norm_sqr();
        }
        assert!((overlap - 1.0).abs() < 1e-6, "{overlap}");
    }

    #[test]
    fn two_sided_energies_agree_with_thermal_average() {
        let r = realization(13, RegisterLayout::spectral(6).unwrap());
        let (energies, _) = eig_hermitian(r.left_block().matrix()).unwrap();
        for beta in [0.0, 1.0, 4.0, 20.0] {
            let tfd = thermofield_double(&r, beta).unwrap();
            let el = tfd.inner(&r.h_l().apply(&tfd)).re;
            let er = tfd.inner(&r.h_r().apply(&tfd)).re;
            let z: f64 = energies.iter().map(|e| (-beta * e).exp()).sum();
            let oracle = energies.iter().map(|e| e * (-beta * e).exp()).sum::<f64>() / z;
            assert!((el - er).abs() < 1e-10);
            assert!((el - oracle).abs() < 1e-10);
            assert!((tfd.norm_squared() - 1.0).abs() < 1e-12);
            let cfg = ThermalConfig::new(&r, beta).unwrap();
            assert!((cfg.partition_function - z).abs() < 1e-12 * z);
        }
    }

    #[test]
    fn initial_state_has_bell_reference_pair() {
        let r = realization(2, RegisterLayout::protocol(6).unwrap());
        let tfd = thermofield_double(&r, 4.0).unwrap();
        let psi = prepare_initial_state(&tfd, &r).unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
        let rho = partial_trace(&psi, &[QubitRole::Reference, QubitRole::Message], r.layout()).unwrap();
        let b = bell_target();
        let proj = b.amplitudes() * b.amplitudes().adjoint();
        assert!(max_abs(&(rho.matrix() - proj)) < 1e-12);
        let rho_ref = partial_trace(&psi, &[QubitRole::Reference], r.layout()).unwrap();
        assert!(max_abs(&(rho_ref.matrix() - DMatrix::identity(2, 2) * C64::new(0.5, 0.0))) < 1e-12);
    }

    #[test]
    fn initial_state_requires_protocol_layout() {
        let r = realization(2, RegisterLayout::spectral(6).unwrap());
        let tfd = thermofield_double(&r, 1.0).unwrap();
        assert!(matches!(prepare_initial_state(&tfd, &r), Err(Error::Layout(_))));
    }

    #[test]
    fn bell_target_basics() {
        let b = bell_target();
        assert!((b.norm_squared() - 1.0).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi_plus = StateVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(0.0, 0.0)]);
        assert_eq!(b.inner(&psi_plus).norm(), 0.0);
        assert!((b.inner(&b).norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_beta_rejected() {
        let r = realization(2, RegisterLayout::spectral(6).unwrap());
        assert!(thermofield_double(&r, -1.0).is_err());
    }
}
