//! Disordered SYK couplings and the two-sided operators built from them.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{RegisterLayout, Side};
use crate::operator::{embed, OperatorMatrix};
use crate::pauli::{majorana_string, Pauli, PauliString};
use crate::C64;

/// Interaction order. Only quartic couplings are supported.
pub const Q: usize = 4;

/// `(q - 1)!` and `q!` for `q = 4`.
const Q_MINUS_ONE_FACTORIAL: f64 = 6.0;
const Q_FACTORIAL: f64 = 24.0;

/// How the right Hamiltonian relates to the left one on its own block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightConvention {
    /// `H_R = H_L*`, which pairs `|E⟩_L` with `|E*⟩_R` in the TFD.
    #[default]
    Conjugated,
    /// `H_R` is a literal copy of `H_L` on the right block.
    Identical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// 1-based Majorana indices, strictly increasing.
    pub indices: [usize; 4],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SykCouplings {
    pub seed: u64,
    pub n_majorana: usize,
    pub j: f64,
    pub q: usize,
    /// Lexicographic order over index tuples.
    pub values: Vec<Coupling>,
}

/// Every strictly increasing 4-tuple over `1..=n`, in lexicographic order.
pub fn quartic_index_tuples(n: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            for k in j + 1..=n {
                for l in k + 1..=n {
                    out.push([i, j, k, l]);
                }
            }
        }
    }
    out
}

/// Standard deviation of a single coupling, `J sqrt((q-1)! / N^(q-1))`.
pub fn coupling_std(n: usize, j: f64) -> f64 {
    j * (Q_MINUS_ONE_FACTORIAL / (n as f64).powi(Q as i32 - 1)).sqrt()
}

pub fn sample_couplings(seed: u64, n: usize, j: f64) -> Result<SykCouplings> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::Model(format!("need an even Majorana count >= 4, got {n}")));
    }
    if !(j > 0.0 && j.is_finite()) {
        return Err(Error::Model(format!("coupling scale must be positive, got {j}")));
    }
    let normal = Normal::new(0.0, coupling_std(n, j)).map_err(|e| Error::Model(e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = quartic_index_tuples(n)
        .into_iter()
        .map(|indices| Coupling {
            indices,
            value: normal.sample(&mut rng),
        })
        .collect();
    Ok(SykCouplings {
        seed,
        n_majorana: n,
        j,
        q: Q,
        values,
    })
}

impl SykCouplings {
    /// Couplings with every entry zero except the listed ones.
    pub fn from_entries(n: usize, entries: &[([usize; 4], f64)]) -> Result<Self> {
        let mut values: Vec<Coupling> = quartic_index_tuples(n)
            .into_iter()
            .map(|indices| Coupling { indices, value: 0.0 })
            .collect();
        for (idx, v) in entries {
            let slot = values
                .iter_mut()
                .find(|c| c.indices == *idx)
                .ok_or_else(|| Error::Model(format!("{idx:?} is not an increasing index tuple in 1..={n}")))?;
            slot.value = *v;
        }
        Ok(Self {
            seed: 0,
            n_majorana: n,
            j: 1.0,
            q: Q,
            values,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.q != Q {
            return Err(Error::Model(format!("only q = 4 is supported, got {}", self.q)));
        }
        let expect = quartic_index_tuples(self.n_majorana);
        if self.values.len() != expect.len() || self.values.iter().zip(&expect).any(|(c, e)| c.indices != *e) {
            return Err(Error::Model("coupling table does not list every quartic tuple in order".into()));
        }
        if self.values.iter().any(|c| !c.value.is_finite()) {
            return Err(Error::Model("non-finite coupling".into()));
        }
        Ok(())
    }
}

/// Side-local Majorana on an isolated block of `n_qubits` qubits.
fn block_majorana(n_qubits: usize, mode: usize) -> PauliString {
    let k = mode.div_ceil(2);
    let mut factors = std::collections::BTreeMap::new();
    for q in 0..k - 1 {
        factors.insert(q, Pauli::Z);
    }
    factors.insert(k - 1, if mode % 2 == 1 { Pauli::X } else { Pauli::Y });
    PauliString::from_factors(n_qubits, &factors).expect("mode checked by caller")
}

/// `−(1/q!) Σ J_ijkl χ_i χ_j χ_k χ_l` on a single side's block (dimension `2^(N/2)`).
pub fn syk_block_hamiltonian(couplings: &SykCouplings) -> Result<OperatorMatrix> {
    couplings.validate()?;
    let nq = couplings.n_majorana / 2;
    let chi: Vec<PauliString> = (1..=couplings.n_majorana).map(|m| block_majorana(nq, m)).collect();
    let mut h = DMatrix::zeros(1 << nq, 1 << nq);
    for c in &couplings.values {
        if c.value == 0.0 {
            continue;
        }
        let [i, j, k, l] = c.indices;
        let s = &(&(&chi[i - 1] * &chi[j - 1]) * &chi[k - 1]) * &chi[l - 1];
        s.accumulate_into(C64::new(-c.value / Q_FACTORIAL, 0.0), &mut h);
    }
    Ok(OperatorMatrix::hermitian(h))
}

fn check_layout(couplings: &SykCouplings, layout: &RegisterLayout) -> Result<()> {
    if couplings.n_majorana != layout.n_majorana_per_side() {
        return Err(Error::layout(format!(
            "couplings for N = {} do not fit a layout with N = {}",
            couplings.n_majorana,
            layout.n_majorana_per_side()
        )));
    }
    Ok(())
}

/// SYK Hamiltonian for one side, embedded in the full register.
pub fn build_syk_hamiltonian(
    couplings: &SykCouplings,
    side: Side,
    layout: &RegisterLayout,
    convention: RightConvention,
) -> Result<OperatorMatrix> {
    check_layout(couplings, layout)?;
    let mut block = syk_block_hamiltonian(couplings)?;
    if side == Side::Right && convention == RightConvention::Conjugated {
        block = block.conjugate();
    }
    Ok(OperatorMatrix::hermitian(embed(
        block.matrix(),
        &layout.side_qubits(side),
        layout.n_qubits(),
    )?))
}

/// `Σ_{i=2}^{N/2} n_i` with `n_i = (I − χ_{L,2i−1} χ_{R,2i−1}) / 2`.
///
/// The pair `χ_{L,2i−1} χ_{R,2i−1}` is Hermitian because the two strings
/// commute; its `+1` eigenspace contains the infinite-temperature TFD, so
/// `V |TFD(β=0)⟩ = 0`.
pub fn build_coupling_v(layout: &RegisterLayout) -> Result<OperatorMatrix> {
    let dim = layout.dim();
    let mut v = DMatrix::zeros(dim, dim);
    let half = C64::new(0.5, 0.0);
    for i in 2..=layout.n_side_qubits() {
        let pair = &majorana_string(layout, Side::Left, 2 * i - 1)? * &majorana_string(layout, Side::Right, 2 * i - 1)?;
        PauliString::identity(layout.n_qubits()).accumulate_into(half, &mut v);
        pair.accumulate_into(-half, &mut v);
    }
    Ok(OperatorMatrix::hermitian(v))
}

/// Diagonal of `Σ_k (Z_L^k − Z_R^k)` over the computational basis.
pub fn pt_generator_diagonal(layout: &RegisterLayout) -> Vec<f64> {
    let n = layout.n_qubits();
    let left = layout.side_qubits(Side::Left);
    let right = layout.side_qubits(Side::Right);
    let z = |idx: usize, q: usize| if (idx >> (n - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 };
    (0..layout.dim())
        .map(|idx| left.iter().map(|&q| z(idx, q)).sum::<f64>() - right.iter().map(|&q| z(idx, q)).sum::<f64>())
        .collect()
}

pub fn build_pt_generator(layout: &RegisterLayout) -> OperatorMatrix {
    let diag: Vec<C64> = pt_generator_diagonal(layout).into_iter().map(|d| C64::new(d, 0.0)).collect();
    OperatorMatrix::hermitian(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
}

/// Register index with the left and right blocks exchanged.
pub fn lr_swap_index(layout: &RegisterLayout, idx: usize) -> usize {
    let n = layout.n_qubits();
    let mut out = idx;
    for (l, r) in layout.side_qubits(Side::Left).into_iter().zip(layout.side_qubits(Side::Right)) {
        let (bl, br) = (1usize << (n - 1 - l), 1usize << (n - 1 - r));
        let (xl, xr) = (idx & bl != 0, idx & br != 0);
        out &= !(bl | br);
        if xl {
            out |= br;
        }
        if xr {
            out |= bl;
        }
    }
    out
}

/// `(PT) M (PT)⁻¹` with `P` the block swap and `T` entrywise conjugation.
pub fn pt_transform(layout: &RegisterLayout, m: &DMatrix<C64>) -> DMatrix<C64> {
    let perm: Vec<usize> = (0..layout.dim()).map(|i| lr_swap_index(layout, i)).collect();
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(perm[r], perm[c])].conj())
}

/// One disorder draw with every operator needed downstream.
#[derive(Debug, Clone)]
pub struct SykRealization {
    couplings: SykCouplings,
    layout: RegisterLayout,
    convention: RightConvention,
    h_l: OperatorMatrix,
    h_r: OperatorMatrix,
    v: OperatorMatrix,
    v_pt: OperatorMatrix,
    left_block: OperatorMatrix,
}

/// Everything needed to rebuild a realization bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationExport {
    pub seed: u64,
    pub n_majorana: usize,
    pub j: f64,
    pub q: usize,
    pub right_convention: RightConvention,
    pub protocol_qubits: bool,
    pub couplings: Vec<Coupling>,
}

impl SykRealization {
    pub fn new(couplings: SykCouplings, layout: RegisterLayout, convention: RightConvention) -> Result<Self> {
        check_layout(&couplings, &layout)?;
        let left_block = syk_block_hamiltonian(&couplings)?;
        let right_block = match convention {
            RightConvention::Conjugated => left_block.conjugate(),
            RightConvention::Identical => left_block.clone(),
        };
        let n = layout.n_qubits();
        let h_l = OperatorMatrix::hermitian(embed(left_block.matrix(), &layout.side_qubits(Side::Left), n)?);
        let h_r = OperatorMatrix::hermitian(embed(right_block.matrix(), &layout.side_qubits(Side::Right), n)?);
        Ok(Self {
            v: build_coupling_v(&layout)?,
            v_pt: build_pt_generator(&layout),
            couplings,
            layout,
            convention,
            h_l,
            h_r,
            left_block,
        })
    }

    /// Samples couplings from `seed` and assembles all operators.
    pub fn sample(seed: u64, j: f64, layout: RegisterLayout, convention: RightConvention) -> Result<Self> {
        let couplings = sample_couplings(seed, layout.n_majorana_per_side(), j)?;
        Self::new(couplings, layout, convention)
    }

    pub fn couplings(&self) -> &SykCouplings {
        &self.couplings
    }

    pub fn seed(&self) -> u64 {
        self.couplings.seed
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn convention(&self) -> RightConvention {
        self.convention
    }

    pub fn h_l(&self) -> &OperatorMatrix {
        &self.h_l
    }

    pub fn h_r(&self) -> &OperatorMatrix {
        &self.h_r
    }

    pub fn v(&self) -> &OperatorMatrix {
        &self.v
    }

    pub fn v_pt(&self) -> &OperatorMatrix {
        &self.v_pt
    }

    /// `H_L` restricted to the left block (dimension `2^(N/2)`).
    pub fn left_block(&self) -> &OperatorMatrix {
        &self.left_block
    }

    /// `H_R` restricted to the right block.
    pub fn right_block(&self) -> OperatorMatrix {
        match self.convention {
            RightConvention::Conjugated => self.left_block.conjugate(),
            RightConvention::Identical => self.left_block.clone(),
        }
    }

    /// `H_L + H_R + g V`, the Hermitian part of `H_eff`.
    pub fn h0(&self, g: f64) -> OperatorMatrix {
        let m = self.h_l.matrix() + self.h_r.matrix() + self.v.matrix() * C64::new(g, 0.0);
        OperatorMatrix::hermitian(m)
    }

    /// Same realization placed on a different layout with the same `N`.
    pub fn with_layout(&self, layout: RegisterLayout) -> Result<Self> {
        Self::new(self.couplings.clone(), layout, self.convention)
    }

    pub fn export(&self) -> RealizationExport {
        RealizationExport {
            seed: self.couplings.seed,
            n_majorana: self.couplings.n_majorana,
            j: self.couplings.j,
            q: self.couplings.q,
            right_convention: self.convention,
            protocol_qubits: self.layout.has_protocol_qubits(),
            couplings: self.couplings.values.clone(),
        }
    }

    pub fn from_export(e: &RealizationExport) -> Result<Self> {
        let layout = if e.protocol_qubits {
            RegisterLayout::protocol(e.n_majorana)?
        } else {
            RegisterLayout::spectral(e.n_majorana)?
        };
        let couplings = SykCouplings {
            seed: e.seed,
            n_majorana: e.n_majorana,
            j: e.j,
            q: e.q,
            values: e.couplings.clone(),
        };
        Self::new(couplings, layout, e.right_convention)
    }
}

/// `H_L + H_R + iγ V_PT + g V`.
pub fn assemble_h_eff(realization: &SykRealization, g: f64, gamma: f64) -> Result<OperatorMatrix> {
    if !g.is_finite() || !gamma.is_finite() {
        return Err(Error::Domain(format!("non-finite g = {g} or gamma = {gamma}")));
    }
    if gamma < 0.0 {
        return Err(Error::Domain(format!("gamma must be >= 0, got {gamma}")));
    }
    let h0 = realization.h0(g);
    if gamma == 0.0 {
        return Ok(h0);
    }
    let m = h0.matrix() + realization.v_pt().matrix() * C64::new(0.0, gamma);
    Ok(OperatorMatrix::new(m))
}
