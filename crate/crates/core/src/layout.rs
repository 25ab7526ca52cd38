//! Qubit bookkeeping for the two-sided register.
//!
//! Qubits are numbered big-endian: qubit 0 is the most significant bit of a
//! basis-state index. The role order is fixed as
//! `[reference, message, left block, right block]`; spectral-only layouts drop
//! the two protocol qubits and start directly with the left block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Role of a single qubit. Side indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QubitRole {
    Reference,
    Message,
    Left(usize),
    Right(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    n_majorana_per_side: usize,
    protocol_qubits: bool,
}

impl RegisterLayout {
    fn new(n_majorana_per_side: usize, protocol_qubits: bool) -> Result<Self> {
        if n_majorana_per_side < 4 || !n_majorana_per_side.is_multiple_of(2) {
            return Err(Error::layout(format!(
                "majorana count per side must be even and >= 4, got {n_majorana_per_side}"
            )));
        }
        // 2^(2 + N) must stay addressable; N = 20 already means a 4M-dim register.
        if n_majorana_per_side > 20 {
            return Err(Error::layout(format!(
                "majorana count per side {n_majorana_per_side} is beyond dense exact diagonalization"
            )));
        }
        Ok(Self {
            n_majorana_per_side,
            protocol_qubits,
        })
    }

    /// Left and right blocks only (dimension `2^N`).
    pub fn spectral(n_majorana_per_side: usize) -> Result<Self> {
        Self::new(n_majorana_per_side, false)
    }

    /// Reference and message qubits followed by both blocks (dimension `2^(N + 2)`).
    pub fn protocol(n_majorana_per_side: usize) -> Result<Self> {
        Self::new(n_majorana_per_side, true)
    }

    pub fn n_majorana_per_side(&self) -> usize {
        self.n_majorana_per_side
    }

    pub fn n_side_qubits(&self) -> usize {
        self.n_majorana_per_side / 2
    }

    pub fn has_protocol_qubits(&self) -> bool {
        self.protocol_qubits
    }

    pub fn n_qubits(&self) -> usize {
        self.n_majorana_per_side + if self.protocol_qubits { 2 } else { 0 }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits()
    }

    fn block_offset(&self, side: Side) -> usize {
        let base = if self.protocol_qubits { 2 } else { 0 };
        match side {
            Side::Left => base,
            Side::Right => base + self.n_side_qubits(),
        }
    }

    /// Register positions of one side's block, in order.
    pub fn side_qubits(&self, side: Side) -> Vec<usize> {
        let off = self.block_offset(side);
        (off..off + self.n_side_qubits()).collect()
    }

    /// Left block followed by right block.
    pub fn system_qubits(&self) -> Vec<usize> {
        let mut q = self.side_qubits(Side::Left);
        q.extend(self.side_qubits(Side::Right));
        q
    }

    pub fn qubit(&self, role: QubitRole) -> Result<usize> {
        let n = self.n_side_qubits();
        match role {
            QubitRole::Reference if self.protocol_qubits => Ok(0),
            QubitRole::Message if self.protocol_qubits => Ok(1),
            QubitRole::Reference | QubitRole::Message => Err(Error::layout(format!(
                "{role:?} qubit requested from a layout without protocol qubits"
            ))),
            QubitRole::Left(k) | QubitRole::Right(k) if k == 0 || k > n => Err(Error::layout(
                format!("side qubit index {k} outside 1..={n}"),
            )),
            QubitRole::Left(k) => Ok(self.block_offset(Side::Left) + k - 1),
            QubitRole::Right(k) => Ok(self.block_offset(Side::Right) + k - 1),
        }
    }

    pub fn role(&self, qubit: usize) -> Result<QubitRole> {
        self.roles()
            .get(qubit)
            .copied()
            .ok_or_else(|| Error::layout(format!("qubit {qubit} outside register of {} qubits", self.n_qubits())))
    }

    pub fn roles(&self) -> Vec<QubitRole> {
        let n = self.n_side_qubits();
        let mut roles = Vec::with_capacity(self.n_qubits());
        if self.protocol_qubits {
            roles.push(QubitRole::Reference);
            roles.push(QubitRole::Message);
        }
        roles.extend((1..=n).map(QubitRole::Left));
        roles.extend((1..=n).map(QubitRole::Right));
        roles
    }

    pub fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit < self.n_qubits() {
            Ok(())
        } else {
            Err(Error::layout(format!(
                "qubit {qubit} outside register of {} qubits",
                self.n_qubits()
            )))
        }
    }
}
