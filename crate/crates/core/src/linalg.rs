//! Eigendecompositions and matrix exponentials.
//!
//! Eigenproblems are delegated to `faer`; storage and everything else stays in
//! `nalgebra`. The two crates share `num_complex::Complex<f64>`, so conversion
//! is a plain element copy.

use faer::{Mat, MatRef};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operator::{spectral_norm, OperatorMatrix};
use crate::C64;

/// Residual threshold below which an eigenpair is considered accurate.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Eigenvector-matrix condition number above which the exponential falls back
/// to scaling and squaring.
pub const EXP_CONDITION_GUARD: f64 = 1e6;

fn to_faer(m: &DMatrix<C64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, C64>) -> DMatrix<C64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Full complex eigendecomposition of a general square matrix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<C64>,
    right_eigenvectors: DMatrix<C64>,
    residual_norms: Vec<f64>,
    near_defective: Vec<bool>,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    /// Column `j` pairs with eigenvalue `j`; columns have unit norm.
    pub fn right_eigenvectors(&self) -> &DMatrix<C64> {
        &self.right_eigenvectors
    }

    /// `‖Hv − λv‖ / ‖H‖₂` per pair.
    pub fn residual_norms(&self) -> &[f64] {
        &self.residual_norms
    }

    /// Pairs that coalesce with another eigenpair (parallel eigenvectors at a
    /// shared eigenvalue) or fail the residual check.
    pub fn near_defective(&self) -> &[bool] {
        &self.near_defective
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }
}

/// Deterministic order: real part, then imaginary part.
pub fn sort_eigenvalues(values: &mut [C64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

fn check_finite(m: &DMatrix<C64>) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("matrix has non-finite entries".into()))
    }
}

pub fn eig_general(m: &OperatorMatrix) -> Result<Spectrum> {
    eig_general_matrix(m.matrix())
}

pub fn eig_general_matrix(m: &DMatrix<C64>) -> Result<Spectrum> {
    check_finite(m)?;
    let n = m.nrows();
    let evd = to_faer(m).eigen().map_err(|e| Error::Spectral {
        dim: n,
        gamma: None,
        detail: format!("{e:?}"),
    })?;
    let values: Vec<C64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
    let vectors = from_faer(evd.U());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .re
            .total_cmp(&values[b].re)
            .then(values[a].im.total_cmp(&values[b].im))
    });
    let eigenvalues: Vec<C64> = order.iter().map(|&i| values[i]).collect();
    let mut right_eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = vectors.column(src);
        let norm = col.norm();
        let col = if norm > 0.0 { col / C64::new(norm, 0.0) } else { col.into_owned() };
        right_eigenvectors.set_column(dst, &col);
    }

    let scale = spectral_norm(m).max(f64::MIN_POSITIVE);
    let residual_norms: Vec<f64> = (0..n)
        .map(|j| {
            let v = right_eigenvectors.column(j);
            (m * v - v * eigenvalues[j]).norm() / scale
        })
        .collect();

    let mut near_defective: Vec<bool> = residual_norms.iter().map(|r| *r >= RESIDUAL_TOLERANCE).collect();
    let close = 1e-6 * scale;
    for i in 0..n {
        for j in i + 1..n {
            if (eigenvalues[i] - eigenvalues[j]).norm() > close {
                continue;
            }
            let overlap = right_eigenvectors.column(i).dotc(&right_eigenvectors.column(j)).norm();
            if overlap > 1.0 - 1e-6 {
                near_defective[i] = true;
                near_defective[j] = true;
            }
        }
    }

    Ok(Spectrum {
        eigenvalues,
        right_eigenvectors,
        residual_norms,
        near_defective,
    })
}

/// Eigenvalues only, in deterministic order.
pub fn eigenvalues_general(m: &DMatrix<C64>) -> Result<Vec<C64>> {
    check_finite(m)?;
    let n = m.nrows();
    let mut values = to_faer(m).eigenvalues().map_err(|e| Error::Spectral {
        dim: n,
        gamma: None,
        detail: format!("{e:?}"),
    })?;
    sort_eigenvalues(&mut values);
    Ok(values)
}

/// Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix.
pub fn eig_hermitian(m: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    check_finite(m)?;
    let n = m.nrows();
    let evd = to_faer(m).self_adjoint_eigen(faer::Side::Lower).map_err(|e| Error::Spectral {
        dim: n,
        gamma: None,
        detail: format!("{e:?}"),
    })?;
    let values: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i].re).collect();
    let vectors = from_faer(evd.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut out = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        out.set_column(dst, &vectors.column(src));
    }
    Ok((sorted, out))
}

/// `exp(scale · M)`.
///
/// Hermitian-tagged inputs go through the unitary eigenbasis. Other inputs use
/// the general eigendecomposition when its eigenvector matrix is well
/// conditioned, and Padé scaling-and-squaring otherwise.
pub fn matrix_exponential(m: &OperatorMatrix, scale: C64) -> Result<OperatorMatrix> {
    if !(scale.re.is_finite() && scale.im.is_finite()) {
        return Err(Error::Numeric(format!("non-finite exponent scale {scale}")));
    }
    check_finite(m.matrix())?;
    let n = m.dim();
    if scale == C64::new(0.0, 0.0) {
        return Ok(OperatorMatrix::identity(n));
    }
    let out = if m.is_tagged_hermitian() {
        let (vals, vecs) = eig_hermitian(m.matrix())?;
        let phases: Vec<C64> = vals.iter().map(|&l| (scale * l).exp()).collect();
        let scaled = DMatrix::from_fn(n, n, |i, j| vecs[(i, j)] * phases[j]);
        let e = scaled * vecs.adjoint();
        if scale.im == 0.0 {
            OperatorMatrix::hermitian(symmetrize(e))
        } else {
            OperatorMatrix::new(e)
        }
    } else {
        match exp_by_eigenbasis(m.matrix(), scale)? {
            Some(e) => OperatorMatrix::new(e),
            None => OperatorMatrix::new((m.matrix() * scale).exp()),
        }
    };
    check_finite(out.matrix())?;
    Ok(out)
}

fn exp_by_eigenbasis(m: &DMatrix<C64>, scale: C64) -> Result<Option<DMatrix<C64>>> {
    let n = m.nrows();
    let evd = to_faer(m).eigen().map_err(|e| Error::Spectral {
        dim: n,
        gamma: None,
        detail: format!("{e:?}"),
    })?;
    let vecs = from_faer(evd.U());
    let sv = vecs.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin >= EXP_CONDITION_GUARD {
        return Ok(None);
    }
    let Some(inv) = vecs.clone().try_inverse() else {
        return Ok(None);
    };
    let factors: Vec<C64> = (0..n).map(|i| (scale * evd.S().column_vector()[i]).exp()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| vecs[(i, j)] * factors[j]);
    Ok(Some(scaled * inv))
}

fn symmetrize(m: DMatrix<C64>) -> DMatrix<C64> {
    let adj = m.adjoint();
    (m + adj) * C64::new(0.5, 0.0)
}
