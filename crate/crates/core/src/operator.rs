//! Dense operators, state vectors and reduced density matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::layout::{QubitRole, RegisterLayout};
use crate::C64;

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Dense square operator on a register. `hermitian` is a construction tag, not
/// a recomputed property.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    matrix: DMatrix<C64>,
    hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(matrix: DMatrix<C64>) -> Self {
        assert!(matrix.is_square(), "operator must be square");
        Self {
            matrix,
            hermitian: false,
        }
    }

    pub fn hermitian(matrix: DMatrix<C64>) -> Self {
        assert!(matrix.is_square(), "operator must be square");
        debug_assert!(hermiticity_defect(&matrix) < 1e-12);
        Self {
            matrix,
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::hermitian(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::hermitian(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn is_tagged_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `max |M - M†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    /// Entrywise complex conjugate in the computational basis.
    pub fn conjugate(&self) -> Self {
        Self {
            matrix: self.matrix.conjugate(),
            hermitian: self.hermitian,
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            matrix: &self.matrix * s,
            hermitian: self.hermitian && s.im == 0.0,
        }
    }

    pub fn commutator(&self, other: &OperatorMatrix) -> DMatrix<C64> {
        &self.matrix * &other.matrix - &other.matrix * &self.matrix
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|c| (0..n).all(|r| r == c || self.matrix[(r, c)] == C64::new(0.0, 0.0)))
    }

    pub fn diagonal_real(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn apply(&self, state: &StateVector) -> StateVector {
        StateVector::new(&self.matrix * state.amplitudes())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        spectral_norm(&self.matrix)
    }
}

impl std::ops::Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix {
            matrix: &self.matrix + &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl std::ops::Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix {
            matrix: &self.matrix - &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl std::ops::Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix::new(&self.matrix * &rhs.matrix)
    }
}

pub(crate) fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for c in 0..n {
        for r in 0..=c {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Bit mask / offsets for addressing a subset of register qubits.
struct QubitSubset {
    /// Offset into the full index for every sub-index (sub-index is big-endian
    /// over the listed qubits).
    offsets: Vec<usize>,
    mask: usize,
}

impl QubitSubset {
    fn new(n_qubits: usize, qubits: &[usize]) -> Self {
        let k = qubits.len();
        let mut offsets = vec![0usize; 1 << k];
        let mut mask = 0usize;
        for (j, &q) in qubits.iter().enumerate() {
            let bit = 1usize << (n_qubits - 1 - q);
            mask |= bit;
            let sub_bit = 1usize << (k - 1 - j);
            for (s, off) in offsets.iter_mut().enumerate() {
                if s & sub_bit != 0 {
                    *off |= bit;
                }
            }
        }
        Self { offsets, mask }
    }

    /// Full indices with every subset qubit cleared.
    fn bases(&self, dim: usize) -> impl Iterator<Item = usize> + '_ {
        (0..dim).filter(move |i| i & self.mask == 0)
    }
}

fn check_subset(n_qubits: usize, qubits: &[usize], op_dim: usize) -> Result<()> {
    if op_dim != 1 << qubits.len() {
        return Err(Error::layout(format!(
            "operator of dimension {op_dim} cannot act on {} qubits",
            qubits.len()
        )));
    }
    for (i, &q) in qubits.iter().enumerate() {
        if q >= n_qubits {
            return Err(Error::layout(format!("qubit {q} outside register of {n_qubits} qubits")));
        }
        if qubits[..i].contains(&q) {
            return Err(Error::layout(format!("qubit {q} listed twice")));
        }
    }
    Ok(())
}

/// Embeds an operator acting on `qubits` (in the given order) into the full register.
pub fn embed(local: &DMatrix<C64>, qubits: &[usize], n_qubits: usize) -> Result<DMatrix<C64>> {
    check_subset(n_qubits, qubits, local.nrows())?;
    let dim = 1usize << n_qubits;
    let sub = QubitSubset::new(n_qubits, qubits);
    let mut out = DMatrix::zeros(dim, dim);
    for base in sub.bases(dim) {
        for (c, &oc) in sub.offsets.iter().enumerate() {
            for (r, &or) in sub.offsets.iter().enumerate() {
                let v = local[(r, c)];
                if v != C64::new(0.0, 0.0) {
                    out[(base | or, base | oc)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Pure state with a cached squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
    norm_squared: f64,
}

impl StateVector {
    pub fn new(amplitudes: DVector<C64>) -> Self {
        let norm_squared = amplitudes.norm_squared();
        Self {
            amplitudes,
            norm_squared,
        }
    }

    pub fn from_vec(v: Vec<C64>) -> Self {
        Self::new(DVector::from_vec(v))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.norm_squared
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_squared - 1.0).abs() < 1e-10
    }

    pub fn normalized(&self) -> Result<Self> {
        if !(self.norm_squared > 0.0) || !self.norm_squared.is_finite() {
            return Err(Error::Numeric(format!(
                "cannot normalize a state with squared norm {}",
                self.norm_squared
            )));
        }
        Ok(Self::new(&self.amplitudes / C64::new(self.norm_squared.sqrt(), 0.0)))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        StateVector::new(self.amplitudes.kronecker(&other.amplitudes))
    }

    /// Applies `op` to the listed qubits (first listed qubit is the most
    /// significant bit of `op`'s index).
    pub fn apply_local(&self, op: &DMatrix<C64>, qubits: &[usize]) -> Result<StateVector> {
        let n = self.n_qubits()?;
        check_subset(n, qubits, op.nrows())?;
        let sub = QubitSubset::new(n, qubits);
        let k = sub.offsets.len();
        let mut out = DVector::zeros(self.dim());
        let mut gather = DVector::zeros(k);
        for base in sub.bases(self.dim()) {
            for (s, &o) in sub.offsets.iter().enumerate() {
                gather[s] = self.amplitudes[base | o];
            }
            let res = op * &gather;
            for (s, &o) in sub.offsets.iter().enumerate() {
                out[base | o] = res[s];
            }
        }
        Ok(StateVector::new(out))
    }

    /// Multiplies each amplitude by the matching diagonal entry.
    pub fn apply_diagonal(&self, diag: &[C64]) -> StateVector {
        assert_eq!(diag.len(), self.dim());
        StateVector::new(DVector::from_iterator(
            self.dim(),
            self.amplitudes.iter().zip(diag).map(|(a, d)| a * d),
        ))
    }

    /// Exchanges two qubits.
    pub fn swap_qubits(&self, a: usize, b: usize) -> Result<StateVector> {
        let n = self.n_qubits()?;
        if a >= n || b >= n {
            return Err(Error::layout(format!("swap of qubits {a}, {b} in register of {n}")));
        }
        let (ba, bb) = (1usize << (n - 1 - a), 1usize << (n - 1 - b));
        let out = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| {
                let (xa, xb) = (i & ba != 0, i & bb != 0);
                let j = if xa == xb { i } else { i ^ ba ^ bb };
                self.amplitudes[j]
            }),
        );
        Ok(StateVector::new(out))
    }

    fn n_qubits(&self) -> Result<usize> {
        let d = self.dim();
        if d == 0 || !d.is_power_of_two() {
            return Err(Error::layout(format!("state dimension {d} is not a power of two")));
        }
        Ok(d.trailing_zeros() as usize)
    }

    /// Reduced density matrix over `keep` (in the given order), tracing out the rest.
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let n = self.n_qubits()?;
        if keep.is_empty() {
            return Err(Error::layout("partial trace must keep at least one qubit"));
        }
        check_subset(n, keep, 1 << keep.len())?;
        let sub = QubitSubset::new(n, keep);
        let k = sub.offsets.len();
        let mut rho = DMatrix::zeros(k, k);
        for base in sub.bases(self.dim()) {
            for (c, &oc) in sub.offsets.iter().enumerate() {
                let ac = self.amplitudes[base | oc].conj();
                if ac == C64::new(0.0, 0.0) {
                    continue;
                }
                for (r, &or) in sub.offsets.iter().enumerate() {
                    rho[(r, c)] += self.amplitudes[base | or] * ac;
                }
            }
        }
        Ok(DensityMatrix {
            matrix: rho,
            qubits: keep.to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
    qubits: Vec<usize>,
}

impl DensityMatrix {
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Register positions the rows are indexed by.
    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `⟨ψ|ρ|ψ⟩` for a pure state on the kept qubits.
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        if psi.dim() != self.matrix.nrows() {
            return Err(Error::layout(format!(
                "state of dim {} vs density matrix of dim {}",
                psi.dim(),
                self.matrix.nrows()
            )));
        }
        Ok(psi.amplitudes().dotc(&(&self.matrix * psi.amplitudes())).re)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Reduced density matrix over the qubits holding `keep`.
pub fn partial_trace(state: &StateVector, keep: &[QubitRole], layout: &RegisterLayout) -> Result<DensityMatrix> {
    if state.dim() != layout.dim() {
        return Err(Error::layout(format!(
            "state of dim {} does not match layout of dim {}",
            state.dim(),
            layout.dim()
        )));
    }
    let qubits = keep.iter().map(|r| layout.qubit(*r)).collect::<Result<Vec<_>>>()?;
    state.reduced_density(&qubits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_state(n_qubits: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<C64> = (0..1 << n_qubits)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        StateVector::from_vec(v).normalized().unwrap()
    }

    /// Explicit index-summation partial trace for a 3-qubit state keeping qubits (a, b).
    fn brute_trace_3(psi: &StateVector, a: usize, b: usize) -> DMatrix<C64> {
        let t = (0..3).find(|q| *q != a && *q != b).unwrap();
        let bit = |i: usize, q: usize| (i >> (2 - q)) & 1;
        let mut rho = DMatrix::zeros(4, 4);
        for r in 0..4usize {
            for cc in 0..4usize {
                let mut acc = c(0.0);
                for e in 0..2usize {
                    let mut ir = 0;
                    let mut ic = 0;
                    for i in 0..8usize {
                        if bit(i, a) == r >> 1 && bit(i, b) == r & 1 && bit(i, t) == e {
                            ir = i;
                        }
                        if bit(i, a) == cc >> 1 && bit(i, b) == cc & 1 && bit(i, t) == e {
                            ic = i;
                        }
                    }
                    acc += psi.amplitudes()[ir] * psi.amplitudes()[ic].conj();
                }
                rho[(r, cc)] = acc;
            }
        }
        rho
    }

    #[test]
    fn product_state_partial_trace() {
        let zero = StateVector::basis(2, 0);
        let psi = random_state(2, 3);
        let full = zero.tensor(&psi);
        let rho = full.reduced_density(&[0]).unwrap();
        assert!((rho.matrix()[(0, 0)] - c(1.0)).norm() < 1e-12);
        assert!(rho.matrix()[(1, 1)].norm() < 1e-12);
        assert!(rho.matrix()[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let s = 0.5f64.sqrt();
        let bell = StateVector::from_vec(vec![c(s), c(0.0), c(0.0), c(s)]);
        for q in [0, 1] {
            let rho = bell.reduced_density(&[q]).unwrap();
            let expect = DMatrix::<C64>::identity(2, 2) * c(0.5);
            assert!(max_abs(&(rho.matrix() - expect)) < 1e-12);
        }
    }

    #[test]
    fn random_three_qubit_trace_matches_brute_force() {
        for seed in 0..5 {
            let psi = random_state(3, seed);
            for (a, b) in [(0, 1), (0, 2), (1, 2), (2, 0)] {
                let rho = psi.reduced_density(&[a, b]).unwrap();
                assert!(max_abs(&(rho.matrix() - brute_trace_3(&psi, a, b))) < 1e-12);
                assert!((rho.trace() - c(1.0)).norm() < 1e-10);
                assert!(hermiticity_defect(rho.matrix()) < 1e-10);
                assert!(rho.min_eigenvalue() > -1e-10);
            }
        }
    }

    #[test]
    fn partial_trace_by_role() {
        let layout = RegisterLayout::protocol(4).unwrap();
        let psi = random_state(layout.n_qubits(), 11);
        let rho = partial_trace(&psi, &[QubitRole::Reference, QubitRole::Right(1)], &layout).unwrap();
        assert_eq!(rho.qubits(), &[0, 4]);
        let spectral = RegisterLayout::spectral(4).unwrap();
        let psi2 = random_state(spectral.n_qubits(), 1);
        assert!(partial_trace(&psi2, &[QubitRole::Message], &spectral).is_err());
        assert!(partial_trace(&psi2, &[], &spectral).is_err());
    }

    #[test]
    fn apply_local_matches_embedding() {
        let psi = random_state(4, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let op = DMatrix::from_fn(4, 4, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        for qubits in [[0usize, 1], [3, 1], [2, 0]] {
            let local = psi.apply_local(&op, &qubits).unwrap();
            let full = embed(&op, &qubits, 4).unwrap() * psi.amplitudes();
            assert!((local.amplitudes() - full).norm() < 1e-12);
        }
    }

    #[test]
    fn swap_qubits_matches_local_swap() {
        let psi = random_state(3, 5);
        let mut swap = DMatrix::zeros(4, 4);
        for (r, cc) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            swap[(r, cc)] = c(1.0);
        }
        let a = psi.swap_qubits(0, 2).unwrap();
        let b = psi.apply_local(&swap, &[0, 2]).unwrap();
        assert!((a.amplitudes() - b.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn norm_cache_tracks_amplitudes() {
        let psi = random_state(5, 1);
        let scaled = StateVector::new(psi.amplitudes() * c(3.0));
        assert!((scaled.norm_squared() - scaled.inner(&scaled).re).abs() < 1e-12 * 9.0);
        assert!(psi.is_normalized());
        assert!(!scaled.is_normalized());
    }
}
