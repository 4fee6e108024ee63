//! Stabilizer–destabilizer tableau.
//!
//! Rows `0..n` are the destabilizers `d_i`, rows `n..2n` the stabilizers
//! `s_i`. Every row is a Hermitian Pauli string (phase exponent 0 or 2).
//! The tableau is kept in the Aaronson–Gottesman gauge: stabilizers commute
//! with each other, destabilizers commute with each other, and `d_i`
//! anticommutes with `s_j` iff `i == j`.

use std::fmt;

use crate::error::SimError;
use crate::gate::Gate;
use crate::pauli::{Pauli, PauliString};

#[derive(Clone, PartialEq, Eq)]
pub struct Tableau {
    num_qubits: usize,
    rows: Vec<PauliString>,
}

/// Bit `i` is set iff the queried Pauli anticommutes with `s_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexShift {
    pub beta: Vec<u64>,
}

impl IndexShift {
    pub fn get(&self, i: usize) -> bool {
        (self.beta[i >> 6] >> (i & 63)) & 1 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.beta.iter().all(|&w| w == 0)
    }

    /// Smallest index with a set bit.
    pub fn first_set(&self) -> Option<usize> {
        self.beta
            .iter()
            .enumerate()
            .find(|(_, w)| **w != 0)
            .map(|(k, w)| k * 64 + w.trailing_zeros() as usize)
    }
}

/// `q = i^phase_exp · d_β · s_γ` with both products taken in ascending index
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub beta: Vec<u64>,
    pub gamma: Vec<u64>,
    pub phase_exp: u8,
}

impl Decomposition {
    /// Phase exponent of `q |b_α⟩ = i^k |b_{α⊕β}⟩`.
    pub fn xi_exp(&self, alpha: &[u64]) -> u8 {
        let parity: u32 = self.gamma.iter().zip(alpha).map(|(g, a)| (g & a).count_ones()).sum();
        (self.phase_exp + 2 * (parity & 1) as u8) & 3
    }
}

fn letter_mul(a: Pauli, b: Pauli) -> (Pauli, u8) {
    let mut pa = PauliString::single(1, 0, a);
    pa.mul_assign_right_unchecked(&PauliString::single(1, 0, b));
    (pa.get(0), pa.phase_exp())
}

/// Conjugation lookup for one qubit, indexed by `x | z << 1`: new `(x, z)`
/// bits and the phase increment.
fn single_qubit_table(gate: Gate) -> Option<[(bool, bool, u8); 4]> {
    let [(lx, nx), (lz, nz)] = gate.single_qubit_images()?;
    let (ly, k) = letter_mul(lx, lz);
    // Y = i·X·Z, so U Y U† = i · img(X) · img(Z).
    let y_phase = (1 + k + 2 * nx as u8 + 2 * nz as u8) & 3;
    debug_assert!(y_phase & 1 == 0);
    let (xx, xz) = lx.bits();
    let (zx, zz) = lz.bits();
    let (yx, yz) = ly.bits();
    Some([
        (false, false, 0),
        (xx, xz, 2 * nx as u8),
        (zx, zz, 2 * nz as u8),
        (yx, yz, y_phase),
    ])
}

impl Tableau {
    /// The tableau of `|0…0⟩`: `d_i = X_i`, `s_i = Z_i`.
    pub fn new(num_qubits: usize) -> Self {
        let mut rows = Vec::with_capacity(2 * num_qubits);
        for q in 0..num_qubits {
            rows.push(PauliString::single(num_qubits, q, Pauli::X));
        }
        for q in 0..num_qubits {
            rows.push(PauliString::single(num_qubits, q, Pauli::Z));
        }
        Tableau { num_qubits, rows }
    }

    /// Builds a tableau from explicit rows and checks the invariants.
    pub fn from_rows(destabilizers: Vec<PauliString>, stabilizers: Vec<PauliString>) -> Result<Self, String> {
        let n = stabilizers.len();
        if destabilizers.len() != n {
            return Err(format!("{} destabilizers for {} stabilizers", destabilizers.len(), n));
        }
        if destabilizers.iter().chain(&stabilizers).any(|r| r.num_qubits() != n) {
            return Err("row length does not match qubit count".into());
        }
        let mut rows = destabilizers;
        rows.extend(stabilizers);
        let t = Tableau { num_qubits: n, rows };
        t.check_invariants()?;
        Ok(t)
    }

    #[inline]
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    #[inline]
    pub fn destabilizer(&self, i: usize) -> &PauliString {
        &self.rows[i]
    }

    #[inline]
    pub fn stabilizer(&self, i: usize) -> &PauliString {
        &self.rows[self.num_qubits + i]
    }

    pub fn destabilizers(&self) -> &[PauliString] {
        &self.rows[..self.num_qubits]
    }

    pub fn stabilizers(&self) -> &[PauliString] {
        &self.rows[self.num_qubits..]
    }

    fn check_targets(&self, gate: Gate, targets: &[usize]) -> Result<(), SimError> {
        let arity = gate.arity();
        if !targets.len().is_multiple_of(arity) {
            return Err(SimError::WrongArity {
                gate: gate.name(),
                expected: arity,
                got: targets.len(),
            });
        }
        for &q in targets {
            if q >= self.num_qubits {
                return Err(SimError::QubitOutOfRange {
                    qubit: q,
                    num_qubits: self.num_qubits,
                });
            }
        }
        if arity == 2 {
            for pair in targets.chunks_exact(2) {
                if pair[0] == pair[1] {
                    return Err(SimError::DuplicateTarget(pair[0]));
                }
            }
        }
        Ok(())
    }

    /// Replaces every row `r` by `U r U†`. Single-qubit gates broadcast over
    /// `targets`; two-qubit gates consume consecutive pairs.
    pub fn conjugate_gate(&mut self, gate: Gate, targets: &[usize]) -> Result<(), SimError> {
        if !gate.is_clifford() {
            return Err(SimError::CorruptState(format!("{gate} is not a Clifford gate")));
        }
        self.check_targets(gate, targets)?;
        if let Some(table) = single_qubit_table(gate) {
            for &q in targets {
                for row in &mut self.rows {
                    let idx = row.x(q) as usize | (row.z(q) as usize) << 1;
                    let (x, z, ph) = table[idx];
                    row.set_x(q, x);
                    row.set_z(q, z);
                    row.add_phase_exp(ph);
                }
            }
            return Ok(());
        }
        for pair in targets.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            match gate {
                Gate::CX => self.apply_cx(a, b),
                Gate::CZ => self.apply_cz(a, b),
                Gate::CY => {
                    // CY = S_b · CX · S_b†
                    self.conjugate_gate(Gate::SDag, &[b])?;
                    self.apply_cx(a, b);
                    self.conjugate_gate(Gate::S, &[b])?;
                }
                Gate::Swap => {
                    for row in &mut self.rows {
                        let (xa, za, xb, zb) = (row.x(a), row.z(a), row.x(b), row.z(b));
                        row.set_x(a, xb);
                        row.set_z(a, zb);
                        row.set_x(b, xa);
                        row.set_z(b, za);
                    }
                }
                _ => unreachable!("two-qubit gate {gate}"),
            }
        }
        Ok(())
    }

    fn apply_cx(&mut self, c: usize, t: usize) {
        for row in &mut self.rows {
            let (xc, zc, xt, zt) = (row.x(c), row.z(c), row.x(t), row.z(t));
            if xc && zt && (xt == zc) {
                row.add_phase_exp(2);
            }
            row.set_x(t, xt ^ xc);
            row.set_z(c, zc ^ zt);
        }
    }

    fn apply_cz(&mut self, a: usize, b: usize) {
        for row in &mut self.rows {
            let (xa, za, xb, zb) = (row.x(a), row.z(a), row.x(b), row.z(b));
            if xa && xb && (za ^ zb) {
                row.add_phase_exp(2);
            }
            row.set_z(a, za ^ xb);
            row.set_z(b, zb ^ xa);
        }
    }

    fn check_len(&self, q: &PauliString) -> Result<(), SimError> {
        if q.num_qubits() != self.num_qubits {
            return Err(SimError::LengthMismatch {
                left: self.num_qubits,
                right: q.num_qubits(),
            });
        }
        Ok(())
    }

    fn anticommutation_bits(&self, rows: &[PauliString], q: &PauliString) -> Vec<u64> {
        let mut bits = vec![0u64; self.num_qubits.div_ceil(64).max(1)];
        for (i, r) in rows.iter().enumerate() {
            if r.anticommutes_unchecked(q) {
                bits[i >> 6] |= 1 << (i & 63);
            }
        }
        bits
    }

    /// `β(q)`: which stabilizers `q` anticommutes with.
    pub fn index_shift(&self, q: &PauliString) -> Result<IndexShift, SimError> {
        self.check_len(q)?;
        Ok(IndexShift {
            beta: self.anticommutation_bits(self.stabilizers(), q),
        })
    }

    /// Writes `q` as `i^k · d_β · s_γ`.
    pub fn decompose(&self, q: &PauliString) -> Result<Decomposition, SimError> {
        self.check_len(q)?;
        let beta = self.anticommutation_bits(self.stabilizers(), q);
        let gamma = self.anticommutation_bits(self.destabilizers(), q);
        let mut acc = PauliString::identity(self.num_qubits);
        for i in 0..self.num_qubits {
            if (beta[i >> 6] >> (i & 63)) & 1 == 1 {
                acc.mul_assign_right_unchecked(self.destabilizer(i));
            }
        }
        for i in 0..self.num_qubits {
            if (gamma[i >> 6] >> (i & 63)) & 1 == 1 {
                acc.mul_assign_right_unchecked(self.stabilizer(i));
            }
        }
        if acc.x_words() != q.x_words() || acc.z_words() != q.z_words() {
            return Err(SimError::CorruptState(format!(
                "tableau does not span {q}; reconstructed {acc}"
            )));
        }
        Ok(Decomposition {
            beta,
            gamma,
            phase_exp: (q.phase_exp() + 4 - acc.phase_exp()) & 3,
        })
    }

    /// Measurement pivot for a Pauli `p` that anticommutes with at least one
    /// stabilizer. Picks the smallest such index `i`, multiplies every other
    /// anticommuting row by `s_i`, then sets `d_i ← s_i` and
    /// `s_i ← ±p` (negated when `outcome_minus`). Returns `i`.
    pub fn pivot_measure(&mut self, p: &PauliString, outcome_minus: bool) -> Result<usize, SimError> {
        self.check_len(p)?;
        if !p.is_hermitian() {
            return Err(SimError::NonHermitian(p.to_string()));
        }
        let n = self.num_qubits;
        let pivot = (0..n)
            .find(|&i| self.stabilizer(i).anticommutes_unchecked(p))
            .ok_or_else(|| SimError::NoPivot(p.to_string()))?;
        let s_pivot = self.rows[n + pivot].clone();
        for (r, row) in self.rows.iter_mut().enumerate() {
            if r == pivot || r == n + pivot {
                continue;
            }
            if row.anticommutes_unchecked(p) {
                row.mul_assign_right_unchecked(&s_pivot);
            }
        }
        self.rows[pivot] = s_pivot;
        let mut new_stab = p.clone();
        if outcome_minus {
            new_stab.add_phase_exp(2);
        }
        self.rows[n + pivot] = new_stab;
        Ok(pivot)
    }

    /// Eigenvalue (`true` for −1) of `p` on `|b_α⟩` when `p` is `±` an element
    /// of the stabilizer group.
    pub fn diagonal_eigenvalue(&self, p: &PauliString, alpha: &[u64]) -> Result<bool, SimError> {
        let dec = self.decompose(p)?;
        if dec.beta.iter().any(|&w| w != 0) {
            return Err(SimError::NotInStabilizerGroup(p.to_string()));
        }
        match dec.xi_exp(alpha) {
            0 => Ok(false),
            2 => Ok(true),
            _ => Err(SimError::NonHermitian(p.to_string())),
        }
    }

    /// Checks Hermitian rows, the commutation pattern and full rank.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.num_qubits;
        if self.rows.len() != 2 * n {
            return Err("wrong row count".into());
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.is_hermitian() {
                return Err(format!("row {r} = {row} has an imaginary phase"));
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i < j && self.stabilizer(i).anticommutes_unchecked(self.stabilizer(j)) {
                    return Err(format!("s_{i} and s_{j} anticommute"));
                }
                if i < j && self.destabilizer(i).anticommutes_unchecked(self.destabilizer(j)) {
                    return Err(format!("d_{i} and d_{j} anticommute"));
                }
                let anti = self.destabilizer(i).anticommutes_unchecked(self.stabilizer(j));
                if anti != (i == j) {
                    return Err(format!("d_{i}/s_{j} commutation is wrong"));
                }
            }
        }
        if gf2_rank(&self.rows, n) != 2 * n {
            return Err("rows are not independent".into());
        }
        Ok(())
    }
}

/// Rank over GF(2) of the symplectic vectors `(x | z)` of `rows`.
pub(crate) fn gf2_rank(rows: &[PauliString], num_qubits: usize) -> usize {
    let words = num_qubits.div_ceil(64);
    let mut m: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| r.x_words().iter().chain(r.z_words()).copied().collect())
        .collect();
    rank_of_bitrows(&mut m, 2 * words * 64)
}

/// Gaussian elimination over GF(2) on packed rows; destroys `m`.
pub(crate) fn rank_of_bitrows(m: &mut [Vec<u64>], num_cols: usize) -> usize {
    let mut rank = 0;
    for col in 0..num_cols {
        let (w, b) = (col >> 6, col & 63);
        let Some(p) = (rank..m.len()).find(|&r| (m[r][w] >> b) & 1 == 1) else {
            continue;
        };
        m.swap(rank, p);
        let pivot_row = m[rank].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != rank && (row[w] >> b) & 1 == 1 {
                for (a, c) in row.iter_mut().zip(&pivot_row) {
                    *a ^= c;
                }
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

impl fmt::Display for Tableau {
    /// One row per line, destabilizers first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Tableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
