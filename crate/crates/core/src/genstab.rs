//! Generalized stabilizer states.
//!
//! A pure state is `|φ⟩ = Σ_α v_α d_α |ψ_S⟩`, where `|ψ_S⟩` is the stabilizer
//! state of the tableau, `d_α` is the ordered product of destabilizers
//! selected by the bits of `α`, and only nonzero `v_α` are stored.
//!
//! Global phase is not tracked: every operation is exact up to one overall
//! phase shared by all coefficients.

use std::f64::consts::FRAC_PI_8;

use num_complex::Complex64;

use crate::error::SimError;
use crate::gate::Gate;
use crate::pauli::{Pauli, PauliString};
use crate::tableau::{rank_of_bitrows, Decomposition, Tableau};

/// Coefficient indices are packed into one `u64`.
pub const MAX_QUBITS: usize = 64;
/// Largest register `dense_statevector` will expand.
pub const MAX_DENSE_QUBITS: usize = 14;
/// Coefficients with smaller magnitude are dropped after merges.
pub const PRUNE_THRESHOLD: f64 = 1e-12;
/// Default coefficient capacity per state.
pub const DEFAULT_CAPACITY: usize = 4096;
/// Both measurement branches below this weight means the state is corrupt.
pub const MIN_BRANCH_PROBABILITY: f64 = 1e-12;

/// How a measurement outcome is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureChoice {
    /// Outcome −1 iff `u >= P(+1)`.
    Uniform(f64),
    /// Project onto the given outcome (`true` = −1).
    Forced(bool),
}

/// Result of a Pauli measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    /// `true` for eigenvalue −1 (record bit 1).
    pub minus: bool,
    /// Probability of the returned outcome before projection.
    pub probability: f64,
    /// Whether the outcome was fixed by the state (`β(P) = 0`).
    pub deterministic_basis: bool,
}

/// Coset-bound analysis of a `T`-layer on a qubit support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CosetAnalysis {
    pub support: Vec<usize>,
    /// Rank of the Z-type stabilizer subgroup supported inside `support`.
    pub r_q: usize,
    /// `2^(|support| - r_q)`.
    pub bound: u128,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    key: u64,
    direct: Complex64,
    swapped: Complex64,
}

#[inline]
fn mul_i_pow(v: Complex64, k: u8) -> Complex64 {
    match k & 3 {
        0 => v,
        1 => Complex64::new(-v.im, v.re),
        2 => -v,
        _ => Complex64::new(v.im, -v.re),
    }
}

#[inline]
fn xi_exp(dec: &Decomposition, alpha: u64) -> u8 {
    (dec.phase_exp + 2 * ((dec.gamma[0] & alpha).count_ones() & 1) as u8) & 3
}

/// `T = a·I + b·Z` (upper signs) and `T† = a*·I + b*·Z`, each up to the
/// global phase removed below.
fn t_coefficients(dagger: bool) -> (Complex64, Complex64) {
    let (s, c) = FRAC_PI_8.sin_cos();
    let phase = Complex64::from_polar(1.0, if dagger { -FRAC_PI_8 } else { FRAC_PI_8 });
    let a = phase * c;
    let b = phase * Complex64::new(0.0, if dagger { s } else { -s });
    (a, b)
}

#[derive(Clone)]
pub struct GenStabState {
    tableau: Tableau,
    entries: Vec<(u64, Complex64)>,
    pending: Vec<Pending>,
    capacity: usize,
}

impl GenStabState {
    /// `|0…0⟩` with the default coefficient capacity.
    pub fn init_zero(num_qubits: usize) -> Result<Self, SimError> {
        Self::with_capacity(num_qubits, DEFAULT_CAPACITY)
    }

    pub fn with_capacity(num_qubits: usize, capacity: usize) -> Result<Self, SimError> {
        if num_qubits > MAX_QUBITS {
            return Err(SimError::TooManyQubits {
                requested: num_qubits,
                max: MAX_QUBITS,
            });
        }
        let capacity = capacity.max(1);
        let mut entries = Vec::with_capacity(capacity);
        entries.push((0, Complex64::new(1.0, 0.0)));
        Ok(GenStabState {
            tableau: Tableau::new(num_qubits),
            entries,
            pending: Vec::with_capacity(2 * capacity),
            capacity,
        })
    }

    /// Returns to `|0…0⟩` reusing the existing buffers.
    pub fn reset_from(&mut self, fresh: &Tableau) {
        self.tableau.clone_from(fresh);
        self.entries.clear();
        self.entries.push((0, Complex64::new(1.0, 0.0)));
    }

    pub fn set_capacity(&mut self, capacity: usize) {
        self.capacity = capacity.max(1);
        self.entries.reserve(self.capacity.saturating_sub(self.entries.len()));
        self.pending
            .reserve((2 * self.capacity).saturating_sub(self.pending.len()));
    }

    pub fn num_qubits(&self) -> usize {
        self.tableau.num_qubits()
    }

    pub fn tableau(&self) -> &Tableau {
        &self.tableau
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `|v|`, the number of stored coefficients.
    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v.norm_sqr()).sum()
    }

    /// Coefficients sorted by index.
    pub fn entries(&self) -> Vec<(u64, Complex64)> {
        let mut out = self.entries.clone();
        out.sort_unstable_by_key(|e| e.0);
        out
    }

    fn check_qubit(&self, q: usize) -> Result<(), SimError> {
        if q >= self.num_qubits() {
            return Err(SimError::QubitOutOfRange {
                qubit: q,
                num_qubits: self.num_qubits(),
            });
        }
        Ok(())
    }

    /// Clifford gates co-rotate the basis, so only the tableau changes.
    pub fn apply_clifford(&mut self, gate: Gate, targets: &[usize]) -> Result<(), SimError> {
        self.tableau.conjugate_gate(gate, targets)
    }

    /// Applies a Hermitian Pauli: `v_α` moves to `α ⊕ β(e)` times `ξ_α(e)`.
    pub fn apply_pauli(&mut self, e: &PauliString) -> Result<(), SimError> {
        if !e.is_hermitian() {
            return Err(SimError::NonHermitian(e.to_string()));
        }
        let dec = self.tableau.decompose(e)?;
        let beta = dec.beta[0];
        for (alpha, v) in self.entries.iter_mut() {
            *v = mul_i_pow(*v, xi_exp(&dec, *alpha));
            *alpha ^= beta;
        }
        Ok(())
    }

    /// Any gate, including `T`/`T_DAG`.
    pub fn apply_gate(&mut self, gate: Gate, targets: &[usize]) -> Result<(), SimError> {
        match gate {
            Gate::T | Gate::TDag => {
                for &q in targets {
                    self.apply_t(q, gate == Gate::TDag)?;
                }
                Ok(())
            }
            _ => self.apply_clifford(gate, targets),
        }
    }

    /// `T_q` (or `T_q†`): every coefficient feeds `α` and `α ⊕ β(Z_q)`.
    ///
    /// On overflow the state is left unusable and `SimError::Overflow` is
    /// returned.
    pub fn apply_t(&mut self, q: usize, dagger: bool) -> Result<(), SimError> {
        self.check_qubit(q)?;
        let z = PauliString::single(self.num_qubits(), q, Pauli::Z);
        let dec = self.tableau.decompose(&z)?;
        let (a, b) = t_coefficients(dagger);
        let beta = dec.beta[0];
        if beta == 0 {
            for (alpha, v) in self.entries.iter_mut() {
                let lam = mul_i_pow(b, xi_exp(&dec, *alpha));
                *v *= a + lam;
            }
            self.entries.retain(|(_, v)| v.norm() >= PRUNE_THRESHOLD);
            return self.ensure_nonempty();
        }
        self.pending.clear();
        for &(alpha, v) in &self.entries {
            self.pending.push(Pending {
                key: alpha,
                direct: a * v,
                swapped: Complex64::new(0.0, 0.0),
            });
            self.pending.push(Pending {
                key: alpha ^ beta,
                direct: mul_i_pow(b * v, xi_exp(&dec, alpha)),
                swapped: Complex64::new(0.0, 0.0),
            });
        }
        let merged = self.merge_pending(Complex64::new(1.0, 0.0), 1.0);
        if merged > self.capacity {
            return Err(SimError::Overflow {
                capacity: self.capacity,
                needed: merged,
            });
        }
        self.ensure_nonempty()
    }

    fn ensure_nonempty(&self) -> Result<(), SimError> {
        if self.entries.is_empty() {
            return Err(SimError::CorruptState("all coefficients vanished".into()));
        }
        Ok(())
    }

    /// Sorts `pending` by key, sums duplicates, and rebuilds `entries` from
    /// `(direct + sign·swapped) * scale`, dropping negligible coefficients.
    /// Returns the number of surviving coefficients even if it exceeds the
    /// capacity (entries are then truncated to the capacity).
    fn merge_pending(&mut self, sign: Complex64, scale: f64) -> usize {
        self.pending.sort_unstable_by_key(|p| p.key);
        self.entries.clear();
        let mut count = 0;
        let mut i = 0;
        while i < self.pending.len() {
            let key = self.pending[i].key;
            let mut d = Complex64::new(0.0, 0.0);
            let mut s = Complex64::new(0.0, 0.0);
            while i < self.pending.len() && self.pending[i].key == key {
                d += self.pending[i].direct;
                s += self.pending[i].swapped;
                i += 1;
            }
            let v = (d + sign * s) * scale;
            if v.norm() >= PRUNE_THRESHOLD {
                count += 1;
                if self.entries.len() < self.capacity {
                    self.entries.push((key, v));
                }
            }
        }
        count
    }

    /// Measures a Hermitian Pauli `p`, projects, and renormalizes.
    pub fn measure_pauli(&mut self, p: &PauliString, choice: MeasureChoice) -> Result<Measured, SimError> {
        if !p.is_hermitian() {
            return Err(SimError::NonHermitian(p.to_string()));
        }
        let dec = self.tableau.decompose(p)?;
        let beta = dec.beta[0];
        if beta == 0 {
            self.measure_diagonal(p, &dec, choice)
        } else {
            self.measure_pivot(p, &dec, choice)
        }
    }

    fn pick(p_plus: f64, p_minus: f64, choice: MeasureChoice) -> Result<(bool, f64), SimError> {
        let total = p_plus + p_minus;
        if p_plus < MIN_BRANCH_PROBABILITY && p_minus < MIN_BRANCH_PROBABILITY {
            return Err(SimError::CorruptState(format!(
                "both measurement branches vanish ({p_plus:e}, {p_minus:e})"
            )));
        }
        let prob_plus = p_plus / total;
        match choice {
            MeasureChoice::Uniform(u) => {
                let minus = u >= prob_plus;
                Ok((minus, if minus { 1.0 - prob_plus } else { prob_plus }))
            }
            MeasureChoice::Forced(minus) => {
                let prob = if minus { 1.0 - prob_plus } else { prob_plus };
                if prob < MIN_BRANCH_PROBABILITY {
                    return Err(SimError::InconsistentForcing { probability: prob });
                }
                Ok((minus, prob))
            }
        }
    }

    fn measure_diagonal(
        &mut self,
        p: &PauliString,
        dec: &Decomposition,
        choice: MeasureChoice,
    ) -> Result<Measured, SimError> {
        let mut weights = [0.0f64; 2];
        for &(alpha, v) in &self.entries {
            match xi_exp(dec, alpha) {
                0 => weights[0] += v.norm_sqr(),
                2 => weights[1] += v.norm_sqr(),
                _ => return Err(SimError::NonHermitian(p.to_string())),
            }
        }
        let (minus, probability) = Self::pick(weights[0], weights[1], choice)?;
        let keep = if minus { 2 } else { 0 };
        let scale = 1.0 / weights[minus as usize].sqrt();
        self.entries.retain_mut(|(alpha, v)| {
            if xi_exp(dec, *alpha) != keep {
                return false;
            }
            *v *= scale;
            v.norm() >= PRUNE_THRESHOLD
        });
        self.ensure_nonempty()?;
        Ok(Measured {
            minus,
            probability,
            deterministic_basis: true,
        })
    }

    fn measure_pivot(
        &mut self,
        p: &PauliString,
        dec: &Decomposition,
        choice: MeasureChoice,
    ) -> Result<Measured, SimError> {
        let beta = dec.beta[0];
        let pivot = beta.trailing_zeros();
        // Π_m|b_α⟩ = |b'_α⟩/√2 for α with the pivot bit clear, and
        // Π_m|b_α⟩ = m·ξ_α(P)·Π_m|b_{α⊕β}⟩ otherwise.
        self.pending.clear();
        for &(alpha, v) in &self.entries {
            if (alpha >> pivot) & 1 == 0 {
                self.pending.push(Pending {
                    key: alpha,
                    direct: v,
                    swapped: Complex64::new(0.0, 0.0),
                });
            } else {
                self.pending.push(Pending {
                    key: alpha ^ beta,
                    direct: Complex64::new(0.0, 0.0),
                    swapped: mul_i_pow(v, xi_exp(dec, alpha)),
                });
            }
        }
        self.pending.sort_unstable_by_key(|e| e.key);
        let mut folded: Vec<Pending> = Vec::new();
        let mut weights = [0.0f64; 2];
        {
            let mut i = 0;
            while i < self.pending.len() {
                let key = self.pending[i].key;
                let mut d = Complex64::new(0.0, 0.0);
                let mut s = Complex64::new(0.0, 0.0);
                while i < self.pending.len() && self.pending[i].key == key {
                    d += self.pending[i].direct;
                    s += self.pending[i].swapped;
                    i += 1;
                }
                weights[0] += (d + s).norm_sqr() / 2.0;
                weights[1] += (d - s).norm_sqr() / 2.0;
                folded.push(Pending {
                    key,
                    direct: d,
                    swapped: s,
                });
            }
        }
        let (minus, probability) = Self::pick(weights[0], weights[1], choice)?;
        self.pending.clear();
        self.pending.extend(folded);
        let sign = Complex64::new(if minus { -1.0 } else { 1.0 }, 0.0);
        // Each surviving amplitude is (d ± s)/√2; normalize by √(2·w).
        let scale = 1.0 / (2.0 * weights[minus as usize]).sqrt();
        self.merge_pending(sign, scale);
        self.tableau.pivot_measure(p, minus)?;
        self.ensure_nonempty()?;
        Ok(Measured {
            minus,
            probability,
            deterministic_basis: false,
        })
    }

    /// Rank of the Z-type stabilizer subgroup inside `support` and the
    /// resulting bound `2^(|Q| - r_Q)` on coefficients after a `T`-layer on
    /// `support`.
    pub fn coset_bound(&self, support: &[usize]) -> Result<CosetAnalysis, SimError> {
        let n = self.num_qubits();
        let mut q: Vec<usize> = support.to_vec();
        q.sort_unstable();
        q.dedup();
        for &x in &q {
            self.check_qubit(x)?;
        }
        let outside: Vec<usize> = (0..n).filter(|x| q.binary_search(x).is_err()).collect();
        // A generator combination is Z-type inside Q iff it has no X part and
        // no Z part outside Q; its dimension is n − rank([X | Z_outside]).
        let cols = n + outside.len();
        let words = cols.div_ceil(64).max(1);
        let mut m: Vec<Vec<u64>> = self
            .tableau
            .stabilizers()
            .iter()
            .map(|s| {
                let mut row = vec![0u64; words];
                let mut set = |c: usize| row[c >> 6] |= 1 << (c & 63);
                for i in 0..n {
                    if s.x(i) {
                        set(i);
                    }
                }
                for (k, &i) in outside.iter().enumerate() {
                    if s.z(i) {
                        set(n + k);
                    }
                }
                row
            })
            .collect();
        let rank = rank_of_bitrows(&mut m, cols);
        let r_q = n - rank;
        Ok(CosetAnalysis {
            bound: 1u128 << (q.len() - r_q),
            support: q,
            r_q,
        })
    }

    /// Expands the state into a dense vector (qubit 0 is the least
    /// significant index bit). The global phase is arbitrary.
    pub fn dense_statevector(&self) -> Result<Vec<Complex64>, SimError> {
        let n = self.num_qubits();
        if n > MAX_DENSE_QUBITS {
            return Err(SimError::TooManyQubits {
                requested: n,
                max: MAX_DENSE_QUBITS,
            });
        }
        let psi = stabilizer_state_vector(&self.tableau);
        let dim = psi.len();
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        let mut buf = vec![Complex64::new(0.0, 0.0); dim];
        for &(alpha, v) in &self.entries {
            let mut d = PauliString::identity(n);
            for k in 0..n {
                if (alpha >> k) & 1 == 1 {
                    d.mul_assign_right_unchecked(self.tableau.destabilizer(k));
                }
            }
            crate::oracle::apply_pauli_dense(&d, &psi, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += v * b;
            }
        }
        Ok(out)
    }
}

/// Dense `|ψ_S⟩` obtained by projecting a fixed generic vector with
/// `Π (I + s_i)/2`.
pub(crate) fn stabilizer_state_vector(t: &Tableau) -> Vec<Complex64> {
    let n = t.num_qubits();
    let dim = 1usize << n;
    let mut buf = vec![Complex64::new(0.0, 0.0); dim];
    for attempt in 0u64.. {
        // Unit-modulus entries with pseudo-random phases have expected
        // squared overlap 1 with any unit vector.
        let mut v: Vec<Complex64> = (0..dim as u64)
            .map(|x| {
                let h = (x.wrapping_add(attempt << 32))
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .rotate_left(29)
                    .wrapping_mul(0xBF58_476D_1CE4_E5B9);
                let theta = (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
                Complex64::from_polar(1.0, theta)
            })
            .collect();
        for s in t.stabilizers() {
            crate::oracle::apply_pauli_dense(s, &v, &mut buf);
            for (a, b) in v.iter_mut().zip(&buf) {
                *a = (*a + b) * 0.5;
            }
        }
        let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-3 {
            for a in &mut v {
                *a /= norm;
            }
            return v;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::DenseState;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm()
    }

    fn assert_matches(g: &GenStabState, d: &DenseState) {
        let f = fidelity(&g.dense_statevector().unwrap(), d.amplitudes());
        assert!((1.0 - f).abs() < 1e-10, "fidelity {f}");
    }

    fn plus_state() -> GenStabState {
        let mut g = GenStabState::init_zero(1).unwrap();
        g.apply_clifford(Gate::H, &[0]).unwrap();
        g
    }

    #[test]
    fn init_zero_examples() {
        let g = GenStabState::init_zero(1).unwrap();
        assert_eq!(g.entries(), vec![(0, Complex64::new(1.0, 0.0))]);
        let g = GenStabState::init_zero(5).unwrap();
        let v = g.dense_statevector().unwrap();
        assert!((v[0].norm() - 1.0).abs() < 1e-12);
        let g = GenStabState::init_zero(12).unwrap();
        assert!((g.norm_sqr() - 1.0).abs() < 1e-12);
        g.tableau().check_invariants().unwrap();
        assert!(matches!(
            GenStabState::init_zero(65),
            Err(SimError::TooManyQubits { .. })
        ));
    }

    #[test]
    fn bell_pair_expansion() {
        let mut g = GenStabState::init_zero(2).unwrap();
        assert!((g.dense_statevector().unwrap()[0].norm() - 1.0).abs() < 1e-12);
        g.apply_clifford(Gate::H, &[0]).unwrap();
        g.apply_clifford(Gate::CX, &[0, 1]).unwrap();
        let v = g.dense_statevector().unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (i, want) in [h, 0.0, 0.0, h].iter().enumerate() {
            assert!((v[i].norm() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn hadamard_twice_is_identity() {
        let mut g = GenStabState::init_zero(3).unwrap();
        g.apply_t(0, false).unwrap();
        let before = (g.tableau().clone(), g.entries());
        g.apply_clifford(Gate::H, &[1]).unwrap();
        g.apply_clifford(Gate::H, &[1]).unwrap();
        assert_eq!(g.tableau(), &before.0);
        assert_eq!(g.entries(), before.1);
    }

    #[test]
    fn t_on_zero_is_trivial() {
        let mut g = GenStabState::init_zero(2).unwrap();
        g.apply_t(1, false).unwrap();
        assert_eq!(g.num_entries(), 1);
        assert!((g.entries()[0].1 - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn t_on_plus_branches_with_eq1_weights() {
        let mut g = plus_state();
        g.apply_t(0, false).unwrap();
        assert_eq!(g.num_entries(), 2);
        let mut mags: Vec<f64> = g.entries().iter().map(|e| e.1.norm()).collect();
        mags.sort_by(f64::total_cmp);
        assert!((mags[0] - FRAC_PI_8.sin()).abs() < 1e-12);
        assert!((mags[1] - FRAC_PI_8.cos()).abs() < 1e-12);
    }

    #[test]
    fn four_t_gates_make_z() {
        let mut g = plus_state();
        for _ in 0..4 {
            g.apply_t(0, false).unwrap();
        }
        assert!(g.num_entries() <= 2);
        let mut d = DenseState::new(1);
        d.apply_gate(Gate::H, &[0]).unwrap();
        d.apply_gate(Gate::Z, &[0]).unwrap();
        assert_matches(&g, &d);
    }

    #[test]
    fn t_then_x_measurement_probability() {
        let mut g = plus_state();
        g.apply_t(0, false).unwrap();
        let x = PauliString::single(1, 0, Pauli::X);
        let m = g.measure_pauli(&x, MeasureChoice::Forced(false)).unwrap();
        let want = FRAC_PI_8.cos().powi(2);
        assert!((m.probability - want).abs() < 1e-12);
        assert!((want - 0.85355).abs() < 1e-5);
        assert_eq!(g.num_entries(), 1);
    }

    #[test]
    fn measuring_z_on_zero_is_deterministic() {
        let mut g = GenStabState::init_zero(3).unwrap();
        let z = PauliString::single(3, 0, Pauli::Z);
        let before = (g.tableau().clone(), g.entries());
        let m = g.measure_pauli(&z, MeasureChoice::Uniform(0.999)).unwrap();
        assert!(!m.minus);
        assert_eq!(m.probability, 1.0);
        assert_eq!(g.tableau(), &before.0);
        assert_eq!(g.entries(), before.1);
        assert!(matches!(
            g.measure_pauli(&z, MeasureChoice::Forced(true)),
            Err(SimError::InconsistentForcing { .. })
        ));
    }

    #[test]
    fn pauli_application_examples() {
        let mut g = plus_state();
        g.apply_t(0, false).unwrap();
        let before = g.entries();
        g.apply_pauli(&PauliString::identity(1)).unwrap();
        assert_eq!(g.entries(), before);
        let s0 = g.tableau().stabilizer(0).clone();
        g.apply_pauli(&s0).unwrap();
        for ((a0, v0), (a1, v1)) in before.iter().zip(g.entries()) {
            assert_eq!(*a0, a1);
            let lam = if g.tableau().diagonal_eigenvalue(&s0, &[a1]).unwrap() {
                -1.0
            } else {
                1.0
            };
            assert!((v0 * lam - v1).norm() < 1e-12);
        }
        let mut imag = s0.clone();
        imag.add_phase_exp(1);
        assert!(g.apply_pauli(&imag).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let mut g = GenStabState::with_capacity(3, 2).unwrap();
        g.apply_clifford(Gate::H, &[0, 1]).unwrap();
        g.apply_t(0, false).unwrap();
        assert!(matches!(
            g.apply_t(1, false),
            Err(SimError::Overflow { capacity: 2, needed: 4 })
        ));
    }

    #[test]
    fn coset_bound_on_zero_state() {
        let g = GenStabState::init_zero(6).unwrap();
        let c = g.coset_bound(&[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!((c.r_q, c.bound), (6, 1));
        let mut g = g;
        g.apply_clifford(Gate::H, &[0]).unwrap();
        let c = g.coset_bound(&[0, 1]).unwrap();
        assert_eq!((c.r_q, c.bound), (1, 2));
    }

    fn random_pauli(n: usize, rng: &mut StdRng) -> PauliString {
        let mut q = PauliString::identity(n);
        for i in 0..n {
            q.set(i, [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..4)]);
        }
        q.set_phase_exp(2 * rng.random_range(0..2u8));
        q
    }

    /// Random Clifford+T+Pauli+measurement trajectories, stepped in lockstep
    /// against the dense simulator with forced outcomes.
    #[test]
    fn random_trajectories_match_dense() {
        let mut rng = StdRng::seed_from_u64(77);
        let singles = [
            Gate::H,
            Gate::S,
            Gate::SDag,
            Gate::X,
            Gate::Y,
            Gate::Z,
            Gate::SqrtX,
            Gate::SqrtXDag,
            Gate::SqrtY,
            Gate::SqrtYDag,
            Gate::HXY,
            Gate::HNXY,
            Gate::HYZ,
            Gate::T,
            Gate::TDag,
        ];
        let doubles = [Gate::CX, Gate::CY, Gate::CZ, Gate::Swap];
        let mut measurements = 0;
        for _ in 0..40 {
            let n = rng.random_range(1..=8);
            let mut g = GenStabState::init_zero(n).unwrap();
            let mut d = DenseState::new(n);
            for _ in 0..40 {
                match rng.random_range(0..10) {
                    0..=4 => {
                        let gate = singles[rng.random_range(0..singles.len())];
                        let q = rng.random_range(0..n);
                        g.apply_gate(gate, &[q]).unwrap();
                        d.apply_gate(gate, &[q]).unwrap();
                    }
                    5..=6 if n > 1 => {
                        let gate = doubles[rng.random_range(0..doubles.len())];
                        let a = rng.random_range(0..n);
                        let b = (a + rng.random_range(1..n)) % n;
                        g.apply_gate(gate, &[a, b]).unwrap();
                        d.apply_gate(gate, &[a, b]).unwrap();
                    }
                    7 => {
                        let e = random_pauli(n, &mut rng);
                        g.apply_pauli(&e).unwrap();
                        d.apply_pauli(&e);
                    }
                    _ => {
                        let p = random_pauli(n, &mut rng);
                        if p.is_identity_up_to_phase() {
                            continue;
                        }
                        let before = g.num_entries();
                        let m = g.measure_pauli(&p, MeasureChoice::Uniform(rng.random())).unwrap();
                        let prob = d.measure_forced(&p, m.minus).unwrap();
                        assert!((prob - m.probability).abs() < 1e-10, "{prob} vs {}", m.probability);
                        assert!(g.num_entries() <= before);
                        measurements += 1;
                    }
                }
                assert!((g.norm_sqr() - 1.0).abs() < 1e-9);
                g.tableau().check_invariants().unwrap();
                assert_matches(&g, &d);
            }
        }
        assert!(measurements > 200);
    }
}
