//! Pauli noise channels and the uniform depolarizing transformer.

use std::collections::BTreeSet;
use std::fmt;

use crate::circuit::{Basis, CircuitError, CircuitProgram, Instruction};
use crate::pauli::{Pauli, PauliString};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Depolarize1,
    Depolarize2,
    XError,
    ZError,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::Depolarize1,
        NoiseKind::Depolarize2,
        NoiseKind::XError,
        NoiseKind::ZError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Depolarize1 => "DEPOLARIZE1",
            NoiseKind::Depolarize2 => "DEPOLARIZE2",
            NoiseKind::XError => "X_ERROR",
            NoiseKind::ZError => "Z_ERROR",
        }
    }

    pub fn from_name(name: &str) -> Option<NoiseKind> {
        NoiseKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Qubits consumed per independent application.
    pub fn group_size(self) -> usize {
        match self {
            NoiseKind::Depolarize2 => 2,
            _ => 1,
        }
    }
}

/// A noise channel applied independently to each target (or target pair
/// for `DEPOLARIZE2`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseOp {
    pub kind: NoiseKind,
    pub targets: Vec<usize>,
    pub p: f64,
}

impl NoiseOp {
    pub fn new(kind: NoiseKind, targets: Vec<usize>, p: f64) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("{} probability {p} outside [0, 1]", kind.name()));
        }
        if targets.is_empty() || !targets.len().is_multiple_of(kind.group_size()) {
            return Err(format!("{} has {} targets", kind.name(), targets.len()));
        }
        if kind == NoiseKind::Depolarize2 && targets.chunks(2).any(|c| c[0] == c[1]) {
            return Err("DEPOLARIZE2 pair repeats a qubit".into());
        }
        Ok(NoiseOp { kind, targets, p })
    }

    /// Uniform draws consumed by one application of this op. Zero-strength
    /// channels consume none, so adding them never perturbs a trajectory.
    pub fn draws_needed(&self) -> usize {
        if self.p == 0.0 {
            0
        } else {
            self.targets.len() / self.kind.group_size()
        }
    }
}

impl fmt::Display for NoiseOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind.name(), self.p)?;
        for t in &self.targets {
            write!(f, " {t}")?;
        }
        Ok(())
    }
}

const LETTERS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

/// Picks one of `k` outcomes from a draw `u < p`.
fn branch(u: f64, p: f64, k: usize) -> usize {
    ((u / p * k as f64) as usize).min(k - 1)
}

/// Samples the error of `op` into `out` (cleared first), pulling exactly
/// `op.draws_needed()` uniforms from `draw`. Returns whether a non-identity
/// Pauli was produced.
pub fn sample_noise_into(op: &NoiseOp, mut draw: impl FnMut() -> f64, out: &mut PauliString) -> bool {
    out.clear();
    if op.p == 0.0 {
        return false;
    }
    let mut any = false;
    for group in op.targets.chunks(op.kind.group_size()) {
        let u = draw();
        if u >= op.p {
            continue;
        }
        any = true;
        match op.kind {
            NoiseKind::XError => out.set(group[0], Pauli::X),
            NoiseKind::ZError => out.set(group[0], Pauli::Z),
            NoiseKind::Depolarize1 => out.set(group[0], LETTERS[1 + branch(u, op.p, 3)]),
            NoiseKind::Depolarize2 => {
                let k = 1 + branch(u, op.p, 15);
                out.set(group[0], LETTERS[k / 4]);
                out.set(group[1], LETTERS[k % 4]);
            }
        }
    }
    any
}

/// Convenience wrapper returning a fresh Pauli on `num_qubits` qubits.
pub fn sample_noise(op: &NoiseOp, num_qubits: usize, u: &[f64]) -> PauliString {
    let mut out = PauliString::identity(num_qubits);
    let mut it = u.iter().copied();
    sample_noise_into(op, || it.next().expect("not enough draws"), &mut out);
    out
}

fn flip_kind(basis: Basis) -> NoiseKind {
    match basis {
        Basis::X => NoiseKind::ZError,
        Basis::Y | Basis::Z => NoiseKind::XError,
    }
}

struct Emitter {
    p: f64,
    out: Vec<Instruction>,
    declared: BTreeSet<usize>,
    layer: BTreeSet<usize>,
    layer_active: bool,
}

impl Emitter {
    fn noise(&mut self, kind: NoiseKind, targets: Vec<usize>) {
        self.out.push(Instruction::Noise(NoiseOp {
            kind,
            targets,
            p: self.p,
        }));
    }

    fn touch(&mut self, qubits: impl IntoIterator<Item = usize>) {
        self.layer.extend(qubits);
        self.layer_active = true;
    }

    fn close_layer(&mut self) {
        if self.layer_active {
            let idle: Vec<usize> = self.declared.difference(&self.layer).copied().collect();
            if !idle.is_empty() {
                self.noise(NoiseKind::Depolarize1, idle);
            }
        }
        self.layer.clear();
        self.layer_active = false;
    }

    fn push(&mut self, inst: Instruction) {
        match inst {
            Instruction::Gate { gate, targets } => {
                self.touch(targets.iter().copied());
                let kind = if gate.arity() == 2 {
                    NoiseKind::Depolarize2
                } else {
                    NoiseKind::Depolarize1
                };
                self.out.push(Instruction::Gate {
                    gate,
                    targets: targets.clone(),
                });
                self.noise(kind, targets);
            }
            Instruction::Measure {
                basis,
                reset,
                targets,
                flip,
            } => {
                let qubits: Vec<usize> = targets.iter().map(|t| t.qubit).collect();
                self.touch(qubits.iter().copied());
                self.noise(flip_kind(basis), qubits.clone());
                self.out.push(Instruction::Measure {
                    basis,
                    reset,
                    targets,
                    flip,
                });
                if reset {
                    self.noise(flip_kind(basis), qubits);
                }
            }
            Instruction::Reset { basis, targets } => {
                self.touch(targets.iter().copied());
                self.out.push(Instruction::Reset {
                    basis,
                    targets: targets.clone(),
                });
                self.noise(flip_kind(basis), targets);
            }
            Instruction::Mpp { products, .. } => {
                self.touch(products.iter().flat_map(|p| p.terms.iter().map(|t| t.0)));
                self.out.push(Instruction::Mpp { products, flip: self.p });
            }
            Instruction::Feedback {
                pauli,
                lookback,
                target,
            } => {
                self.touch([target]);
                self.out.push(Instruction::Feedback {
                    pauli,
                    lookback,
                    target,
                });
            }
            Instruction::Tick => {
                self.close_layer();
                self.out.push(Instruction::Tick);
            }
            Instruction::Repeat { .. } | Instruction::Noise(_) => unreachable!("flattened and noiseless"),
            other => self.out.push(other),
        }
    }
}

/// Inserts uniform depolarizing noise of strength `p`:
///
/// - `DEPOLARIZE1(p)`/`DEPOLARIZE2(p)` after every one-/two-qubit gate,
/// - `DEPOLARIZE1(p)` on qubits idle during a non-empty `TICK` layer,
/// - a flip (`X_ERROR`, or `Z_ERROR` for X-basis) before every measurement
///   and after every reset, including the reset half of `MR`,
/// - an outcome flip with probability `p` on each `MPP` product.
///
/// `REPEAT` blocks are unrolled. Classically controlled Paulis stay
/// noiseless but count as activity on their target.
pub fn apply_noise_model(prog: &CircuitProgram, p: f64) -> Result<CircuitProgram, CircuitError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CircuitError::new(format!("noise strength {p} outside [0, 1]")));
    }
    if prog.has_noise() {
        return Err(CircuitError::new("program already contains noise"));
    }
    let flat = prog.flattened();
    let mut em = Emitter {
        p,
        out: Vec::with_capacity(flat.len() * 2),
        declared: prog.touched_qubits().into_iter().collect(),
        layer: BTreeSet::new(),
        layer_active: false,
    };
    for inst in flat {
        em.push(inst);
    }
    CircuitProgram::from_instructions(em.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn counts(op: &NoiseOp, n: usize, trials: usize, seed: u64) -> std::collections::HashMap<String, usize> {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut out = PauliString::identity(n);
        let mut map = std::collections::HashMap::new();
        for _ in 0..trials {
            sample_noise_into(op, || rng.random(), &mut out);
            *map.entry(out.to_string()).or_insert(0) += 1;
        }
        map
    }

    fn within_3_sigma(count: usize, trials: usize, prob: f64) -> bool {
        let mean = trials as f64 * prob;
        let sigma = (trials as f64 * prob * (1.0 - prob)).sqrt();
        (count as f64 - mean).abs() <= 3.0 * sigma
    }

    #[test]
    fn zero_strength_is_identity_and_draws_nothing() {
        for kind in NoiseKind::ALL {
            let targets = if kind == NoiseKind::Depolarize2 {
                vec![0, 1]
            } else {
                vec![0]
            };
            let op = NoiseOp::new(kind, targets, 0.0).unwrap();
            assert_eq!(op.draws_needed(), 0);
            let mut out = PauliString::identity(2);
            assert!(!sample_noise_into(&op, || panic!("drew"), &mut out));
            assert!(out.is_identity_up_to_phase());
        }
    }

    #[test]
    fn depolarize1_full_strength_is_uniform() {
        let op = NoiseOp::new(NoiseKind::Depolarize1, vec![0], 1.0).unwrap();
        let trials = 100_000;
        let c = counts(&op, 1, trials, 1);
        assert_eq!(c.len(), 3);
        for letter in ["+X", "+Y", "+Z"] {
            assert!(within_3_sigma(c[letter], trials, 1.0 / 3.0), "{letter}: {}", c[letter]);
        }
    }

    #[test]
    fn depolarize2_spreads_over_fifteen_paulis() {
        let op = NoiseOp::new(NoiseKind::Depolarize2, vec![0, 1], 0.15).unwrap();
        let trials = 200_000;
        let c = counts(&op, 2, trials, 2);
        assert_eq!(c.len(), 16);
        for (k, &n) in &c {
            if k != "+__" {
                assert!(within_3_sigma(n, trials, 0.01), "{k}: {n}");
            }
        }
        assert!(within_3_sigma(c["+__"], trials, 0.85));
    }

    #[test]
    fn flip_channels_act_per_target() {
        let op = NoiseOp::new(NoiseKind::ZError, vec![0, 1], 0.5).unwrap();
        let trials = 40_000;
        let c = counts(&op, 2, trials, 3);
        for k in ["+__", "+Z_", "+_Z", "+ZZ"] {
            assert!(within_3_sigma(c[k], trials, 0.25), "{k}");
        }
        let x = NoiseOp::new(NoiseKind::XError, vec![1], 1.0).unwrap();
        assert_eq!(sample_noise(&x, 2, &[0.3]).to_string(), "+_X");
    }

    #[test]
    fn invalid_ops_rejected() {
        assert!(NoiseOp::new(NoiseKind::XError, vec![0], 1.5).is_err());
        assert!(NoiseOp::new(NoiseKind::Depolarize2, vec![0, 1, 2], 0.1).is_err());
        assert!(NoiseOp::new(NoiseKind::Depolarize2, vec![3, 3], 0.1).is_err());
        assert!(NoiseOp::new(NoiseKind::Depolarize1, vec![], 0.1).is_err());
    }

    #[test]
    fn empty_program_stays_empty() {
        let prog = parse_circuit("").unwrap();
        assert_eq!(apply_noise_model(&prog, 0.01).unwrap().to_string(), "");
    }

    #[test]
    fn golden_noisy_text() {
        let prog = parse_circuit("QUBIT_COORDS(0, 0) 0\nQUBIT_COORDS(1, 0) 1\nH 0\nTICK\nM 0").unwrap();
        let noisy = apply_noise_model(&prog, 0.001).unwrap();
        let want = "\
QUBIT_COORDS(0, 0) 0
QUBIT_COORDS(1, 0) 1
H 0
DEPOLARIZE1(0.001) 0
DEPOLARIZE1(0.001) 1
TICK
X_ERROR(0.001) 0
M 0
";
        assert_eq!(noisy.to_string(), want);
    }

    #[test]
    fn resets_measure_resets_and_mpp() {
        let prog = parse_circuit("R 0 1\nCX 0 1\nMR 1\nMX 0\nRX 2\nMPP X0*X2\nCX rec[-1] 1").unwrap();
        let noisy = apply_noise_model(&prog, 0.25).unwrap();
        let want = "\
R 0 1
X_ERROR(0.25) 0 1
CX 0 1
DEPOLARIZE2(0.25) 0 1
X_ERROR(0.25) 1
MR 1
X_ERROR(0.25) 1
Z_ERROR(0.25) 0
MX 0
RX 2
Z_ERROR(0.25) 2
MPP(0.25) X0*X2
CX rec[-1] 1
";
        assert_eq!(noisy.to_string(), want);
    }

    #[test]
    fn idle_noise_skips_empty_layers_and_trailing_layer() {
        let prog = parse_circuit("H 0\nTICK\nTICK\nH 1\nTICK\nH 0").unwrap();
        let text = apply_noise_model(&prog, 0.5).unwrap().to_string();
        // one after each H plus one idle line for each of the two closed layers
        assert_eq!(text.lines().filter(|l| l.starts_with("DEPOLARIZE1")).count(), 5);
        assert!(text.contains("TICK\nTICK\n"));
    }

    #[test]
    fn second_application_is_rejected() {
        let prog = parse_circuit("H 0\nM 0").unwrap();
        let once = apply_noise_model(&prog, 0.01).unwrap();
        assert!(apply_noise_model(&once, 0.01).is_err());
        let flipped = parse_circuit("M(0.1) 0").unwrap();
        assert!(apply_noise_model(&flipped, 0.01).is_err());
    }

    #[test]
    fn repeat_blocks_are_unrolled() {
        let prog = parse_circuit("REPEAT 2 {\n H 0\n TICK\n}\nM 0").unwrap();
        let noisy = apply_noise_model(&prog, 0.1).unwrap();
        assert_eq!(noisy.num_measurements(), 1);
        assert_eq!(noisy.to_string().matches("H 0").count(), 2);
    }
}
