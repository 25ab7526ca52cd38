use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use ptwh::layout::{QubitRole, RegisterLayout, Side};
use ptwh::linalg::{eigenvalues_general, matrix_exponential};
use ptwh::operator::{max_abs, partial_trace, spectral_norm, StateVector};
use ptwh::pauli::jordan_wigner_majorana;
use ptwh::spectral::{direct_sum_family, find_critical_gamma_family, PtFamily};
use ptwh::syk::{assemble_h_eff, pt_transform, RightConvention, SykRealization};
use ptwh::teleport::{apply_pt_gain, sector_weights, ProtocolConfig, ProtocolRunner};
use ptwh::tfd::thermofield_double;
use ptwh::C64;

fn realization(seed: u64, layout: RegisterLayout) -> SykRealization {
    SykRealization::sample(seed, 24.0, layout, RightConvention::Conjugated).unwrap()
}

fn random_state(dim: usize, parts: &[(f64, f64)]) -> StateVector {
    let amps: Vec<C64> = (0..dim).map(|k| C64::new(parts[k].0, parts[k].1)).collect();
    StateVector::from_vec(amps).normalized().unwrap()
}

#[test]
fn majoranas_obey_the_clifford_algebra() {
    for n in [4, 6, 8] {
        let layout = RegisterLayout::spectral(n).unwrap();
        let id = DMatrix::<C64>::identity(layout.dim(), layout.dim());
        let chis: Vec<_> = [Side::Left, Side::Right]
            .into_iter()
            .flat_map(|s| (1..=n).map(move |m| (s, m)))
            .map(|(s, m)| jordan_wigner_majorana(&layout, s, m).unwrap().into_matrix())
            .collect();
        for (a, x) in chis.iter().enumerate() {
            for (b, y) in chis.iter().enumerate() {
                let anti = x * y + y * x;
                let side_a = a / n;
                let side_b = b / n;
                if side_a == side_b {
                    let expect = if a == b { &id * C64::new(2.0, 0.0) } else { &id * C64::new(0.0, 0.0) };
                    assert!(max_abs(&(anti - expect)) < 1e-12, "n = {n}, modes {a}, {b}");
                }
            }
        }
    }
}

#[test]
fn thermofield_double_is_normalized() {
    let layout = RegisterLayout::spectral(6).unwrap();
    let r = realization(11, layout);
    for beta in [0.0, 1.0, 4.0] {
        let tfd = thermofield_double(&r, beta).unwrap();
        assert_relative_eq!(tfd.norm_squared(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn critical_gamma_follows_gap_over_twice_the_coupling() {
    for (e_n, e_m, v) in [(0.0, 1.0, 0.5), (-1.0, 0.2, 0.3), (2.0, 2.001, 0.01)] {
        let fam = direct_sum_family(e_n, e_m, v, &[5.0]).unwrap();
        let exact = (e_m - e_n) / (2.0 * v);
        let ep = find_critical_gamma_family(&fam, (0.0, 2.0 * exact), 1e-13).unwrap();
        assert_relative_eq!(ep.gamma_c, exact, max_relative = 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn couplings_give_hermitian_blocks_and_pt_symmetric_h_eff(seed in any::<u64>(), gamma in 0.0f64..0.5, g in -5.0f64..5.0) {
        let layout = RegisterLayout::spectral(6).unwrap();
        let r = realization(seed, layout);
        for op in [r.h_l(), r.h_r(), r.v(), r.v_pt()] {
            prop_assert!(op.hermiticity_defect() <= 1e-12 * max_abs(op.matrix()).max(1.0));
        }
        let h = assemble_h_eff(&r, g, gamma).unwrap();
        prop_assert!(max_abs(&(pt_transform(&layout, h.matrix()) - h.matrix())) < 1e-10);
    }

    #[test]
    fn spectra_are_closed_under_conjugation(seed in any::<u64>(), gamma in 0.0f64..0.3) {
        let r = realization(seed, RegisterLayout::spectral(6).unwrap());
        let fam = PtFamily::from_realization(&r, 2.0).unwrap();
        let h = fam.at(gamma);
        let eigs = eigenvalues_general(&h).unwrap();
        let tol = 1e-6 * spectral_norm(&h);
        for z in &eigs {
            let nearest = eigs.iter().map(|w| (w - z.conj()).norm()).fold(f64::MAX, f64::min);
            prop_assert!(nearest < tol, "{z} has no partner within {tol}");
        }
    }

    #[test]
    fn exponential_inverts_with_negated_scale(seed in any::<u64>(), s in -3.0f64..3.0, hermitian in any::<bool>()) {
        let r = realization(seed, RegisterLayout::spectral(4).unwrap());
        let op = if hermitian { r.h_l().clone() } else { assemble_h_eff(&r, 1.0, 0.2).unwrap() };
        let scale = C64::new(0.0, s);
        let forward = matrix_exponential(&op, scale).unwrap().into_matrix();
        let back = matrix_exponential(&op, -scale).unwrap().into_matrix();
        let id = DMatrix::<C64>::identity(op.dim(), op.dim());
        prop_assert!(max_abs(&(forward * back - id)) < 1e-9);
    }

    #[test]
    fn partial_trace_is_a_density_matrix(parts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 256)) {
        let layout = RegisterLayout::protocol(6).unwrap();
        let psi = random_state(layout.dim(), &parts);
        for keep in [vec![QubitRole::Reference, QubitRole::Right(1)], vec![QubitRole::Left(2)], vec![QubitRole::Message, QubitRole::Left(1), QubitRole::Right(3)]] {
            let rho = partial_trace(&psi, &keep, &layout).unwrap();
            assert_relative_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
            prop_assert!(rho.trace().im.abs() < 1e-12);
            prop_assert!(max_abs(&(rho.matrix() - rho.matrix().adjoint())) < 1e-12);
            prop_assert!(rho.min_eigenvalue() > -1e-12);
        }
    }

    #[test]
    fn gain_reweights_sectors_exactly(parts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 256), gamma in 0.0f64..0.3, t in 0.0f64..20.0) {
        let runner = ProtocolRunner::new(&realization(5, RegisterLayout::protocol(6).unwrap())).unwrap();
        let diag = runner.v_pt_diagonal();
        let psi = random_state(diag.len(), &parts);
        let before = sector_weights(&psi, diag);
        assert_relative_eq!(before.values().sum::<f64>(), 1.0, epsilon = 1e-12);
        let gained = apply_pt_gain(&psi, diag, gamma, t).unwrap();
        let after = sector_weights(&gained.state, diag);
        for (d, w) in &before {
            let expect = w * (2.0 * (gamma * t * *d as f64 - gained.log_offset)).exp();
            assert_relative_eq!(after[d], expect, max_relative = 1e-10, epsilon = 1e-300);
        }
    }

    #[test]
    fn hermitian_protocol_conserves_probability(seed in any::<u64>(), g in 0.0f64..15.0, t in 0.0f64..20.0) {
        let runner = ProtocolRunner::new(&realization(seed, RegisterLayout::protocol(6).unwrap())).unwrap();
        let res = runner.run(&ProtocolConfig { g, t, ..ProtocolConfig::default() }).unwrap();
        prop_assert!((res.success_probability - 1.0).abs() < 1e-10);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&res.fidelity));
        assert_relative_eq!(res.sector_weights.values().sum::<f64>(), 1.0, epsilon = 1e-10);
    }
}
