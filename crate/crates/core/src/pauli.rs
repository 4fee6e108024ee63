//! Bit-packed Pauli strings with exact `i^k` phase tracking.
//!
//! A single-qubit letter is stored as an `(x, z)` bit pair: `I = (0,0)`,
//! `X = (1,0)`, `Y = (1,1)`, `Z = (0,1)`. The operator represented by a
//! [`PauliString`] is `i^phase_exp * P_0 ⊗ P_1 ⊗ ...` where each `P_q` is the
//! Hermitian letter (so `Y` is the usual Pauli-Y, not `XZ`).

use std::fmt;
use std::str::FromStr;

use crate::error::SimError;

/// A single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' | '_' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => '_',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

#[inline]
fn words_for(num_qubits: usize) -> usize {
    num_qubits.div_ceil(64)
}

/// An n-qubit Pauli operator with a phase in `{1, i, -1, -i}`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    num_qubits: usize,
    xs: Vec<u64>,
    zs: Vec<u64>,
    phase_exp: u8,
}

impl PauliString {
    pub fn identity(num_qubits: usize) -> Self {
        let words = words_for(num_qubits);
        PauliString {
            num_qubits,
            xs: vec![0; words],
            zs: vec![0; words],
            phase_exp: 0,
        }
    }

    /// Identity with a single letter placed on `qubit`.
    pub fn single(num_qubits: usize, qubit: usize, letter: Pauli) -> Self {
        let mut p = Self::identity(num_qubits);
        p.set(qubit, letter);
        p
    }

    /// Builds a string from `(qubit, letter)` terms. Repeated qubits multiply.
    pub fn from_terms(num_qubits: usize, terms: &[(usize, Pauli)]) -> Result<Self, SimError> {
        let mut acc = Self::identity(num_qubits);
        for &(q, letter) in terms {
            if q >= num_qubits {
                return Err(SimError::QubitOutOfRange { qubit: q, num_qubits });
            }
            let single = Self::single(num_qubits, q, letter);
            acc.mul_assign_right(&single)?;
        }
        Ok(acc)
    }

    #[inline]
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    #[inline]
    pub fn phase_exp(&self) -> u8 {
        self.phase_exp
    }

    pub fn set_phase_exp(&mut self, k: u8) {
        self.phase_exp = k & 3;
    }

    pub fn add_phase_exp(&mut self, k: u8) {
        self.phase_exp = (self.phase_exp + k) & 3;
    }

    /// True when the phase is real (`±1`), which for a Pauli string is
    /// equivalent to the operator being Hermitian.
    pub fn is_hermitian(&self) -> bool {
        self.phase_exp & 1 == 0
    }

    pub fn is_identity_up_to_phase(&self) -> bool {
        self.xs.iter().all(|&w| w == 0) && self.zs.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn x_words(&self) -> &[u64] {
        &self.xs
    }

    #[inline]
    pub fn z_words(&self) -> &[u64] {
        &self.zs
    }

    #[inline]
    pub fn x(&self, q: usize) -> bool {
        (self.xs[q >> 6] >> (q & 63)) & 1 == 1
    }

    #[inline]
    pub fn z(&self, q: usize) -> bool {
        (self.zs[q >> 6] >> (q & 63)) & 1 == 1
    }

    pub fn get(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x(q), self.z(q))
    }

    #[inline]
    pub fn set_x(&mut self, q: usize, v: bool) {
        let m = 1u64 << (q & 63);
        if v {
            self.xs[q >> 6] |= m;
        } else {
            self.xs[q >> 6] &= !m;
        }
    }

    #[inline]
    pub fn set_z(&mut self, q: usize, v: bool) {
        let m = 1u64 << (q & 63);
        if v {
            self.zs[q >> 6] |= m;
        } else {
            self.zs[q >> 6] &= !m;
        }
    }

    pub fn set(&mut self, q: usize, letter: Pauli) {
        let (x, z) = letter.bits();
        self.set_x(q, x);
        self.set_z(q, z);
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> usize {
        self.xs
            .iter()
            .zip(&self.zs)
            .map(|(x, z)| (x | z).count_ones() as usize)
            .sum()
    }

    /// Qubits carrying a non-identity letter, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.num_qubits).filter(|&q| self.x(q) || self.z(q)).collect()
    }

    /// Resets to the identity without reallocating.
    pub fn clear(&mut self) {
        self.xs.fill(0);
        self.zs.fill(0);
        self.phase_exp = 0;
    }

    pub fn copy_from(&mut self, other: &PauliString) {
        debug_assert_eq!(self.num_qubits, other.num_qubits);
        self.xs.copy_from_slice(&other.xs);
        self.zs.copy_from_slice(&other.zs);
        self.phase_exp = other.phase_exp;
    }

    fn check_len(&self, other: &PauliString) -> Result<(), SimError> {
        if self.num_qubits != other.num_qubits {
            return Err(SimError::LengthMismatch {
                left: self.num_qubits,
                right: other.num_qubits,
            });
        }
        Ok(())
    }

    /// `self <- self * rhs`, with the exact phase.
    pub fn mul_assign_right(&mut self, rhs: &PauliString) -> Result<(), SimError> {
        self.check_len(rhs)?;
        self.mul_assign_right_unchecked(rhs);
        Ok(())
    }

    /// `self <- self * rhs` without the length check. Lengths must match.
    pub fn mul_assign_right_unchecked(&mut self, rhs: &PauliString) {
        let mut plus = 0u32;
        let mut minus = 0u32;
        for w in 0..self.xs.len() {
            let (x1, z1) = (self.xs[w], self.zs[w]);
            let (x2, z2) = (rhs.xs[w], rhs.zs[w]);
            // X·Y, Y·Z, Z·X pick up +i; X·Z, Y·X, Z·Y pick up -i.
            let p = (x1 & !z1 & x2 & z2) | (x1 & z1 & !x2 & z2) | (!x1 & z1 & x2 & !z2);
            let m = (x1 & !z1 & !x2 & z2) | (x1 & z1 & x2 & !z2) | (!x1 & z1 & x2 & z2);
            plus += p.count_ones();
            minus += m.count_ones();
            self.xs[w] = x1 ^ x2;
            self.zs[w] = z1 ^ z2;
        }
        // -1 ≡ 3 (mod 4)
        let k = (self.phase_exp as u32 + rhs.phase_exp as u32 + plus + 3 * minus) & 3;
        self.phase_exp = k as u8;
    }

    /// Product `a · b`.
    pub fn mul(a: &PauliString, b: &PauliString) -> Result<PauliString, SimError> {
        let mut out = a.clone();
        out.mul_assign_right(b)?;
        Ok(out)
    }

    /// Symplectic inner product parity: false iff the two strings commute.
    #[inline]
    pub fn anticommutes_unchecked(&self, other: &PauliString) -> bool {
        let mut acc = 0u64;
        for w in 0..self.xs.len() {
            acc ^= (self.xs[w] & other.zs[w]) ^ (self.zs[w] & other.xs[w]);
        }
        acc.count_ones() & 1 == 1
    }

    pub fn commutes(&self, other: &PauliString) -> Result<bool, SimError> {
        self.check_len(other)?;
        Ok(!self.anticommutes_unchecked(other))
    }
}

/// Free-function form of [`PauliString::mul`].
pub fn pauli_mul(a: &PauliString, b: &PauliString) -> Result<PauliString, SimError> {
    PauliString::mul(a, b)
}

/// Free-function form of [`PauliString::commutes`].
pub fn commutes(a: &PauliString, b: &PauliString) -> Result<bool, SimError> {
    a.commutes(b)
}

impl fmt::Display for PauliString {
    /// Renders as `+XYZ_`, `-iXZ`, `+i__Y`, ...
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase_exp {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        f.write_str(prefix)?;
        for q in 0..self.num_qubits {
            write!(f, "{}", self.get(q).as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for PauliString {
    type Err = SimError;

    /// Parses the dense rendering produced by `Display`. The sign prefix is
    /// optional; `I` and `_` both mean identity.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (phase, body) = if let Some(rest) = s.strip_prefix("+i") {
            (1, rest)
        } else if let Some(rest) = s.strip_prefix("-i") {
            (3, rest)
        } else if let Some(rest) = s.strip_prefix('+') {
            (0, rest)
        } else if let Some(rest) = s.strip_prefix('-') {
            (2, rest)
        } else if let Some(rest) = s.strip_prefix('i') {
            (1, rest)
        } else {
            (0, s)
        };
        let letters: Vec<Pauli> = body
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| SimError::BadPauli(s.to_string())))
            .collect::<Result<_, _>>()?;
        let mut p = PauliString::identity(letters.len());
        for (q, l) in letters.into_iter().enumerate() {
            p.set(q, l);
        }
        p.phase_exp = phase;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    // Dense matrix for a Pauli string; qubit 0 is the least significant bit.
    fn dense(ps: &PauliString) -> Vec<Vec<C>> {
        let n = ps.num_qubits();
        let dim = 1usize << n;
        let mut m = vec![vec![C::new(0.0, 0.0); dim]; dim];
        let one = [[C::new(1., 0.), C::new(0., 0.)], [C::new(0., 0.), C::new(1., 0.)]];
        let x = [[C::new(0., 0.), C::new(1., 0.)], [C::new(1., 0.), C::new(0., 0.)]];
        let y = [[C::new(0., 0.), C::new(0., -1.)], [C::new(0., 1.), C::new(0., 0.)]];
        let z = [[C::new(1., 0.), C::new(0., 0.)], [C::new(0., 0.), C::new(-1., 0.)]];
        let phase = C::i().powu(ps.phase_exp() as u32);
        for (r, row) in m.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                let mut v = phase;
                for q in 0..n {
                    let mat = match ps.get(q) {
                        Pauli::I => &one,
                        Pauli::X => &x,
                        Pauli::Y => &y,
                        Pauli::Z => &z,
                    };
                    v *= mat[(r >> q) & 1][(c >> q) & 1];
                }
                *cell = v;
            }
        }
        m
    }

    fn matmul(a: &[Vec<C>], b: &[Vec<C>]) -> Vec<Vec<C>> {
        let d = a.len();
        let mut out = vec![vec![C::new(0., 0.); d]; d];
        for i in 0..d {
            for k in 0..d {
                for j in 0..d {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    fn close(a: &[Vec<C>], b: &[Vec<C>]) -> bool {
        a.iter()
            .zip(b)
            .all(|(ra, rb)| ra.iter().zip(rb).all(|(x, y)| (x - y).norm() < 1e-12))
    }

    fn all_two_qubit() -> Vec<PauliString> {
        let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        let mut out = Vec::new();
        for a in letters {
            for b in letters {
                let mut s = PauliString::identity(2);
                s.set(0, a);
                s.set(1, b);
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn x_times_z_is_minus_i_y() {
        let r = pauli_mul(&p("X"), &p("Z")).unwrap();
        assert_eq!(r.phase_exp(), 3);
        assert_eq!(r.get(0), Pauli::Y);
    }

    #[test]
    fn hermitian_squares_to_identity() {
        for s in all_two_qubit() {
            let r = pauli_mul(&s, &s).unwrap();
            assert!(r.is_identity_up_to_phase());
            assert_eq!(r.phase_exp(), 0);
        }
    }

    #[test]
    fn xx_times_zz_is_minus_yy() {
        let r = pauli_mul(&p("XX"), &p("ZZ")).unwrap();
        assert_eq!(r, p("-YY"));
    }

    #[test]
    fn commutation_examples() {
        assert!(!commutes(&p("X_"), &p("Z_")).unwrap());
        assert!(commutes(&p("XX"), &p("ZZ")).unwrap());
        assert!(commutes(&p("YZ"), &p("XX")).unwrap());
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(matches!(
            pauli_mul(&p("X"), &p("XX")),
            Err(SimError::LengthMismatch { .. })
        ));
        assert!(commutes(&p("X"), &p("XX")).is_err());
    }

    #[test]
    fn products_match_dense_matrices_for_all_pairs() {
        let base = all_two_qubit();
        for a in &base {
            for b in &base {
                for phase in 0..4u8 {
                    let mut a = a.clone();
                    a.set_phase_exp(phase);
                    let prod = pauli_mul(&a, b).unwrap();
                    assert!(close(&dense(&prod), &matmul(&dense(&a), &dense(b))), "{a} * {b}");
                    let ab = matmul(&dense(&a), &dense(b));
                    let ba = matmul(&dense(b), &dense(&a));
                    assert_eq!(close(&ab, &ba), commutes(&a, b).unwrap(), "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn display_round_trip() {
        for s in ["+XYZ_", "-iXZ", "+i__Y", "-Z"] {
            assert_eq!(p(s).to_string(), s);
        }
        assert_eq!(p("IXI").to_string(), "+_X_");
        assert!("XQ".parse::<PauliString>().is_err());
    }

    #[test]
    fn multiword_strings() {
        let n = 130;
        let a = PauliString::single(n, 129, Pauli::X);
        let b = PauliString::single(n, 129, Pauli::Z);
        let r = pauli_mul(&a, &b).unwrap();
        assert_eq!(r.get(129), Pauli::Y);
        assert_eq!(r.phase_exp(), 3);
        assert!(!commutes(&a, &b).unwrap());
        assert_eq!(r.weight(), 1);
        assert_eq!(r.support(), vec![129]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_pauli(n: usize) -> impl Strategy<Value = PauliString> {
            (proptest::collection::vec(0u8..4, n), 0u8..4).prop_map(move |(ls, ph)| {
                let mut s = PauliString::identity(n);
                for (q, l) in ls.into_iter().enumerate() {
                    s.set(q, [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][l as usize]);
                }
                s.set_phase_exp(ph);
                s
            })
        }

        proptest! {
            #[test]
            fn associative(a in arb_pauli(70), b in arb_pauli(70), c in arb_pauli(70)) {
                let l = pauli_mul(&pauli_mul(&a, &b).unwrap(), &c).unwrap();
                let r = pauli_mul(&a, &pauli_mul(&b, &c).unwrap()).unwrap();
                prop_assert_eq!(l, r);
            }

            #[test]
            fn swap_order_phase_matches_commutation(a in arb_pauli(70), b in arb_pauli(70)) {
                let ab = pauli_mul(&a, &b).unwrap();
                let ba = pauli_mul(&b, &a).unwrap();
                prop_assert_eq!(ab.x_words(), ba.x_words());
                prop_assert_eq!(ab.z_words(), ba.z_words());
                let diff = (ab.phase_exp() + 4 - ba.phase_exp()) & 3;
                let comm = commutes(&a, &b).unwrap();
                prop_assert_eq!(diff, if comm { 0 } else { 2 });
                prop_assert_eq!(comm, commutes(&b, &a).unwrap());
                prop_assert!(commutes(&a, &a).unwrap());
            }
        }
    }
}
