//! Dense state-vector reference simulator and lockstep cross-checking.
//!
//! Gate actions are written directly as matrices on amplitudes, independent
//! of the conjugation tables used by the tableau. Qubit `k` is bit `k` of the
//! basis index.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use num_complex::Complex64;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{Basis, CircuitProgram, Instruction, MeasureTarget, PauliProduct};
use crate::error::SimError;
use crate::exec::{execute, Compiled, DenseView, Engine, Recorder, Replayer, ShotRecord, ShotStatus, UniformDriver};
use crate::gate::Gate;
use crate::genstab::{GenStabState, MeasureChoice, Measured};
use crate::noise::apply_noise_model;
use crate::pauli::{Pauli, PauliString};
use crate::sampler::{derive_seed, ShotRng};

pub const MAX_DENSE_QUBITS: usize = 14;
/// Forced outcomes below this probability are rejected.
pub const MIN_FORCED_PROBABILITY: f64 = 1e-12;

type Mat2 = [[Complex64; 2]; 2];

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Writes `P·input` into `out`.
pub fn apply_pauli_dense(p: &PauliString, input: &[Complex64], out: &mut [Complex64]) {
    let n = p.num_qubits();
    let (mut xm, mut zm) = (0usize, 0usize);
    for q in 0..n {
        xm |= (p.x(q) as usize) << q;
        zm |= (p.z(q) as usize) << q;
    }
    // Y = iXZ, so P|x⟩ = i^(phase + #Y) (-1)^(z·x) |x ⊕ xm⟩.
    let k = (p.phase_exp() as u32 + (xm & zm).count_ones()) & 3;
    let base = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)][k as usize];
    for (x, a) in input.iter().enumerate() {
        let sign = if (zm & x).count_ones() & 1 == 1 { -base } else { base };
        out[x ^ xm] = sign * a;
    }
}

fn single_qubit_matrix(g: Gate) -> Mat2 {
    let h = FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    match g {
        Gate::I => [[one, z], [z, one]],
        Gate::X => [[z, one], [one, z]],
        Gate::Y => [[z, c(0.0, -1.0)], [c(0.0, 1.0), z]],
        Gate::Z => [[one, z], [z, -one]],
        Gate::H => [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]],
        Gate::S => [[one, z], [z, c(0.0, 1.0)]],
        Gate::SDag => [[one, z], [z, c(0.0, -1.0)]],
        Gate::SqrtX => [[c(0.5, 0.5), c(0.5, -0.5)], [c(0.5, -0.5), c(0.5, 0.5)]],
        Gate::SqrtXDag => [[c(0.5, -0.5), c(0.5, 0.5)], [c(0.5, 0.5), c(0.5, -0.5)]],
        Gate::SqrtY => [[c(0.5, 0.5), c(-0.5, -0.5)], [c(0.5, 0.5), c(0.5, 0.5)]],
        Gate::SqrtYDag => [[c(0.5, -0.5), c(0.5, -0.5)], [c(-0.5, 0.5), c(0.5, -0.5)]],
        Gate::HXY => [[z, c(h, -h)], [c(h, h), z]],
        Gate::HNXY => [[z, c(h, h)], [c(h, -h), z]],
        Gate::HYZ => [[c(h, 0.0), c(0.0, -h)], [c(0.0, h), c(-h, 0.0)]],
        Gate::T => [[one, z], [z, Complex64::from_polar(1.0, FRAC_PI_4)]],
        Gate::TDag => [[one, z], [z, Complex64::from_polar(1.0, -FRAC_PI_4)]],
        Gate::CX | Gate::CY | Gate::CZ | Gate::Swap => unreachable!("two-qubit gate"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl DenseState {
    /// `|0…0⟩` on `num_qubits ≤ 14` qubits.
    pub fn new(num_qubits: usize) -> Self {
        Self::try_new(num_qubits).expect("dense register too large")
    }

    pub fn try_new(num_qubits: usize) -> Result<Self, SimError> {
        if num_qubits > MAX_DENSE_QUBITS {
            return Err(SimError::TooManyQubits {
                requested: num_qubits,
                max: MAX_DENSE_QUBITS,
            });
        }
        let mut amps = vec![c(0.0, 0.0); 1 << num_qubits];
        amps[0] = c(1.0, 0.0);
        Ok(DenseState { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check(&self, q: usize) -> Result<(), SimError> {
        if q >= self.num_qubits {
            return Err(SimError::QubitOutOfRange {
                qubit: q,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    fn apply_single(&mut self, m: &Mat2, q: usize) {
        let bit = 1 << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_controlled(&mut self, m: &Mat2, control: usize, target: usize) {
        let (cb, tb) = (1 << control, 1 << target);
        for i in 0..self.amps.len() {
            if i & cb != 0 && i & tb == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | tb]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | tb] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// Applies `gate` to each target (or target pair).
    pub fn apply_gate(&mut self, gate: Gate, targets: &[usize]) -> Result<(), SimError> {
        for &q in targets {
            self.check(q)?;
        }
        if gate.arity() == 1 {
            let m = single_qubit_matrix(gate);
            for &q in targets {
                self.apply_single(&m, q);
            }
            return Ok(());
        }
        if !targets.len().is_multiple_of(2) {
            return Err(SimError::WrongArity {
                gate: gate.name(),
                expected: 2,
                got: targets.len(),
            });
        }
        for pair in targets.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b {
                return Err(SimError::DuplicateTarget(a));
            }
            match gate {
                Gate::CX => self.apply_controlled(&single_qubit_matrix(Gate::X), a, b),
                Gate::CY => self.apply_controlled(&single_qubit_matrix(Gate::Y), a, b),
                Gate::CZ => self.apply_controlled(&single_qubit_matrix(Gate::Z), a, b),
                Gate::Swap => {
                    let (ab, bb) = (1 << a, 1 << b);
                    for i in 0..self.amps.len() {
                        if i & ab != 0 && i & bb == 0 {
                            self.amps.swap(i, i ^ ab ^ bb);
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(())
    }

    pub fn apply_pauli(&mut self, p: &PauliString) {
        let mut out = vec![c(0.0, 0.0); self.amps.len()];
        apply_pauli_dense(p, &self.amps, &mut out);
        self.amps = out;
    }

    /// Probability of outcome −1 when measuring Hermitian `p`.
    pub fn probability_minus(&self, p: &PauliString) -> f64 {
        let mut pp = vec![c(0.0, 0.0); self.amps.len()];
        apply_pauli_dense(p, &self.amps, &mut pp);
        let expect: f64 = self.amps.iter().zip(&pp).map(|(a, b)| (a.conj() * b).re).sum();
        ((1.0 - expect / self.norm_sqr()) / 2.0).clamp(0.0, 1.0)
    }

    /// Projects onto the eigenspace of `p` with the given outcome and returns
    /// the pre-projection probability of that outcome.
    pub fn measure_forced(&mut self, p: &PauliString, minus: bool) -> Result<f64, SimError> {
        if !p.is_hermitian() {
            return Err(SimError::NonHermitian(p.to_string()));
        }
        let mut pp = vec![c(0.0, 0.0); self.amps.len()];
        apply_pauli_dense(p, &self.amps, &mut pp);
        let sign = if minus { -1.0 } else { 1.0 };
        for (b, a) in pp.iter_mut().zip(&self.amps) {
            *b = (*a + sign * *b) * 0.5;
        }
        let weight: f64 = pp.iter().map(|a| a.norm_sqr()).sum();
        if weight < MIN_FORCED_PROBABILITY {
            return Err(SimError::InconsistentForcing { probability: weight });
        }
        let scale = 1.0 / weight.sqrt();
        for a in &mut pp {
            *a *= scale;
        }
        self.amps = pp;
        Ok(weight)
    }

    /// `|⟨self|other⟩|`.
    pub fn overlap(&self, other: &[Complex64]) -> f64 {
        self.amps
            .iter()
            .zip(other)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm()
    }
}

/// Tolerance on per-step infidelity and branch-probability deltas.
pub const CROSSCHECK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckFailure {
    pub circuit: usize,
    pub shot: u64,
    pub step: usize,
    pub message: String,
}

/// Outcome of comparing an engine with the dense reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub circuits: usize,
    pub shots: u64,
    pub steps: u64,
    pub measurements: u64,
    pub max_infidelity: f64,
    pub max_prob_delta: f64,
    /// Largest coefficient count the engine reached.
    pub max_entries: usize,
    pub failures: Vec<CrosscheckFailure>,
}

impl Default for CrosscheckReport {
    fn default() -> Self {
        CrosscheckReport {
            circuits: 0,
            shots: 0,
            steps: 0,
            measurements: 0,
            max_infidelity: 0.0,
            max_prob_delta: 0.0,
            max_entries: 0,
            failures: Vec::new(),
        }
    }
}

impl CrosscheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && self.max_infidelity <= CROSSCHECK_TOLERANCE
            && self.max_prob_delta <= CROSSCHECK_TOLERANCE
    }

    /// Combines reports from independent circuits or shots.
    pub fn merge(mut self, other: CrosscheckReport) -> Self {
        self.circuits += other.circuits;
        self.shots += other.shots;
        self.steps += other.steps;
        self.measurements += other.measurements;
        self.max_infidelity = self.max_infidelity.max(other.max_infidelity);
        self.max_prob_delta = self.max_prob_delta.max(other.max_prob_delta);
        self.max_entries = self.max_entries.max(other.max_entries);
        self.failures.extend(other.failures);
        self
    }
}

/// Runs an engine under test and the dense reference side by side, feeding
/// the dense state the outcomes the engine under test reports.
struct Lockstep<E> {
    engine: E,
    dense: DenseState,
    max_prob_delta: f64,
    measurements: u64,
}

impl<E: Engine> Engine for Lockstep<E> {
    fn apply_gate(&mut self, gate: Gate, targets: &[usize]) -> Result<(), SimError> {
        self.engine.apply_gate(gate, targets)?;
        self.dense.apply_gate(gate, targets)
    }

    fn apply_pauli(&mut self, p: &PauliString) -> Result<(), SimError> {
        self.engine.apply_pauli(p)?;
        Engine::apply_pauli(&mut self.dense, p)
    }

    fn measure(&mut self, p: &PauliString, choice: MeasureChoice) -> Result<Measured, SimError> {
        let m = self.engine.measure(p, choice)?;
        let prob = self.dense.measure_forced(p, m.minus)?;
        self.max_prob_delta = self.max_prob_delta.max((prob - m.probability).abs());
        self.measurements += 1;
        Ok(m)
    }

    fn num_entries(&self) -> usize {
        self.engine.num_entries()
    }
}

/// Cross-checks the generalized stabilizer engine against the dense
/// simulator on `shots` trajectories of `prog`.
pub fn crosscheck(prog: &CircuitProgram, shots: u64, seed: u64) -> Result<CrosscheckReport, SimError> {
    crosscheck_with(prog, shots, seed, GenStabState::init_zero)
}

/// Cross-checks any engine built by `make` against the dense simulator.
///
/// Each shot first runs the engine alone with recorded randomness (noise
/// Paulis, outcomes, flips). The tape is then replayed on a fresh engine and
/// the dense state in lockstep, comparing `|⟨ψ_dense|ψ_engine⟩|` after every
/// op and the branch probability of every measurement.
pub fn crosscheck_with<E, F>(
    prog: &CircuitProgram,
    shots: u64,
    seed: u64,
    make: F,
) -> Result<CrosscheckReport, SimError>
where
    E: Engine + DenseView,
    F: Fn(usize) -> Result<E, SimError>,
{
    let compiled = Compiled::new(prog)?;
    let n = compiled.num_qubits;
    DenseState::try_new(n)?;
    let mut report = CrosscheckReport {
        circuits: 1,
        ..Default::default()
    };
    let mut buf = PauliString::identity(n);
    let mut record = ShotRecord::default();
    for shot in 0..shots {
        report.shots += 1;
        let fail = |step: usize, message: String| CrosscheckFailure {
            circuit: 0,
            shot,
            step,
            message,
        };
        let mut rng = ShotRng::for_shot(seed, shot);
        let mut recorder = Recorder {
            inner: UniformDriver { draw: || rng.uniform() },
            tape: Vec::new(),
        };
        let mut first = make(n)?;
        let status = execute(
            &compiled,
            &mut first,
            &mut recorder,
            &mut record,
            false,
            &mut buf,
            |_, _| Ok(()),
        );
        if let Some((step, error)) = failure_of(status) {
            report.failures.push(fail(step, format!("recording run: {error}")));
            continue;
        }
        let recorded_bits = record.bits.clone();

        let mut lock = Lockstep {
            engine: make(n)?,
            dense: DenseState::new(n),
            max_prob_delta: 0.0,
            measurements: 0,
        };
        let mut replay = Replayer::new(&recorder.tape);
        let mut max_infidelity = 0.0f64;
        let mut first_bad: Option<(usize, f64)> = None;
        let status = execute(
            &compiled,
            &mut lock,
            &mut replay,
            &mut record,
            false,
            &mut buf,
            |step, lock| {
                let psi = lock.engine.state_vector()?;
                let infidelity = (1.0 - lock.dense.overlap(&psi)).abs();
                if infidelity > CROSSCHECK_TOLERANCE && first_bad.is_none() {
                    first_bad = Some((step, infidelity));
                }
                max_infidelity = max_infidelity.max(infidelity);
                Ok(())
            },
        );
        report.steps += compiled.ops.len() as u64;
        report.measurements += lock.measurements;
        report.max_infidelity = report.max_infidelity.max(max_infidelity);
        report.max_prob_delta = report.max_prob_delta.max(lock.max_prob_delta);
        report.max_entries = report.max_entries.max(record.max_entries);
        if let Some((step, error)) = failure_of(status) {
            report.failures.push(fail(step, format!("replay: {error}")));
        } else if let Some((step, inf)) = first_bad {
            report
                .failures
                .push(fail(step, format!("infidelity {inf:e} after op {step}")));
        } else if lock.max_prob_delta > CROSSCHECK_TOLERANCE {
            report
                .failures
                .push(fail(0, format!("probability delta {:e}", lock.max_prob_delta)));
        } else if record.bits != recorded_bits {
            report
                .failures
                .push(fail(0, "replayed record differs from recording".into()));
        }
    }
    Ok(report)
}

fn failure_of(status: ShotStatus) -> Option<(usize, String)> {
    match status {
        ShotStatus::Failed { step, error } => Some((step, error.to_string())),
        ShotStatus::Overflow { step } => Some((step, "coefficient capacity exceeded".into())),
        _ => None,
    }
}

/// Shape of generated random circuits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomCircuitSpec {
    pub min_qubits: usize,
    pub max_qubits: usize,
    /// Unitary gate applications, `T`/`T_DAG` included.
    pub max_gates: usize,
    pub max_t: usize,
    pub noise: f64,
    pub measurements: bool,
    pub feedback: bool,
}

impl Default for RandomCircuitSpec {
    fn default() -> Self {
        RandomCircuitSpec {
            min_qubits: 2,
            max_qubits: 10,
            max_gates: 40,
            max_t: 8,
            noise: 0.05,
            measurements: true,
            feedback: true,
        }
    }
}

const RANDOM_CLIFFORDS: [Gate; 13] = [
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
];
const RANDOM_PAIRS: [Gate; 4] = [Gate::CX, Gate::CY, Gate::CZ, Gate::Swap];

/// Generates a random Clifford+T program with mid-circuit measurements,
/// resets, feedback and uniform depolarizing noise.
pub fn random_circuit<R: Rng>(spec: &RandomCircuitSpec, rng: &mut R) -> CircuitProgram {
    let n = rng.random_range(spec.min_qubits.max(1)..=spec.max_qubits.max(spec.min_qubits.max(1)));
    let mut insts = Vec::new();
    let (mut gates, mut measured) = (0usize, 0usize);
    let letters = [Pauli::X, Pauli::Y, Pauli::Z];
    let mut t_budget = spec.max_t;
    while gates < spec.max_gates {
        let q = rng.random_range(0..n);
        let roll = rng.random_range(0..100);
        let inst = match roll {
            0..=39 => {
                gates += 1;
                Instruction::Gate {
                    gate: RANDOM_CLIFFORDS[rng.random_range(0..RANDOM_CLIFFORDS.len())],
                    targets: vec![q],
                }
            }
            40..=64 if n > 1 => {
                gates += 1;
                let b = (q + rng.random_range(1..n)) % n;
                Instruction::Gate {
                    gate: RANDOM_PAIRS[rng.random_range(0..RANDOM_PAIRS.len())],
                    targets: vec![q, b],
                }
            }
            65..=79 if t_budget > 0 => {
                gates += 1;
                t_budget -= 1;
                Instruction::Gate {
                    gate: if rng.random() { Gate::T } else { Gate::TDag },
                    targets: vec![q],
                }
            }
            80..=89 if spec.measurements => {
                measured += 1;
                let basis = [Basis::Z, Basis::Z, Basis::X, Basis::Y][rng.random_range(0..4)];
                Instruction::Measure {
                    basis,
                    reset: rng.random_bool(0.3),
                    targets: vec![MeasureTarget {
                        qubit: q,
                        inverted: false,
                    }],
                    flip: 0.0,
                }
            }
            90..=93 if spec.measurements => {
                measured += 1;
                let k = rng.random_range(1..=n.min(3));
                let mut qs: Vec<usize> = (0..n).collect();
                qs.shuffle(rng);
                Instruction::Mpp {
                    products: vec![PauliProduct {
                        terms: qs[..k].iter().map(|&q| (q, letters[rng.random_range(0..3)])).collect(),
                        inverted: false,
                    }],
                    flip: 0.0,
                }
            }
            94..=95 if spec.measurements => Instruction::Reset {
                basis: Basis::Z,
                targets: vec![q],
            },
            96..=99 if spec.feedback && measured > 0 => Instruction::Feedback {
                pauli: letters[rng.random_range(0..3)],
                lookback: rng.random_range(1..=measured),
                target: q,
            },
            _ => continue,
        };
        insts.push(inst);
        if rng.random_bool(0.2) {
            insts.push(Instruction::Tick);
        }
    }
    // Pin the register size so every generated qubit exists.
    insts.insert(
        0,
        Instruction::QubitCoords {
            coords: Vec::new(),
            qubits: (0..n).collect(),
        },
    );
    let prog = CircuitProgram::from_instructions(insts).expect("generated program is valid");
    if spec.noise > 0.0 {
        apply_noise_model(&prog, spec.noise).expect("noiseless input")
    } else {
        prog
    }
}

/// Circuit `index` of the random suite generated from `seed`.
pub fn suite_circuit(spec: &RandomCircuitSpec, seed: u64, index: usize) -> CircuitProgram {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, index as u64));
    random_circuit(spec, &mut rng)
}

/// Cross-checks `count` random circuits, `shots` trajectories each.
pub fn validate_random_suite(
    count: usize,
    shots: u64,
    seed: u64,
    spec: &RandomCircuitSpec,
) -> Result<CrosscheckReport, SimError> {
    let reports: Result<Vec<_>, SimError> = (0..count)
        .into_par_iter()
        .map(|i| {
            let prog = suite_circuit(spec, seed, i);
            let mut r = crosscheck(&prog, shots, seed ^ i as u64)?;
            for f in &mut r.failures {
                f.circuit = i;
            }
            Ok(r)
        })
        .collect();
    Ok(reports?
        .into_iter()
        .fold(CrosscheckReport::default(), CrosscheckReport::merge))
}
