//! Execution of compiled programs against a state engine.
//!
//! Programs are flattened into [`Op`]s with absolute record indices. The
//! interpreter is shared by the sampler (generalized stabilizer engine, RNG
//! driver) and the oracle (lockstep dense engine, replay driver), so both
//! consume randomness in exactly the same order:
//!
//! - each noise op draws once per target (or pair) when its strength is > 0,
//! - each measurement and each reset draws once, deterministic or not,
//! - each measurement with a flip probability > 0 draws once more.

use num_complex::Complex64;

use crate::circuit::{CircuitProgram, Instruction};
use crate::error::SimError;
use crate::gate::Gate;
use crate::genstab::{GenStabState, MeasureChoice, Measured};
use crate::noise::{sample_noise_into, NoiseOp};
use crate::oracle::DenseState;
use crate::pauli::{Pauli, PauliString};

/// A quantum state that can run compiled programs.
pub trait Engine {
    fn apply_gate(&mut self, gate: Gate, targets: &[usize]) -> Result<(), SimError>;
    fn apply_pauli(&mut self, p: &PauliString) -> Result<(), SimError>;
    fn measure(&mut self, p: &PauliString, choice: MeasureChoice) -> Result<Measured, SimError>;
    /// Stored coefficient count (1 for engines without a sparse form).
    fn num_entries(&self) -> usize {
        1
    }
}

/// Engines whose state can be expanded for comparison.
pub trait DenseView {
    fn state_vector(&self) -> Result<Vec<Complex64>, SimError>;
}

impl Engine for GenStabState {
    fn apply_gate(&mut self, gate: Gate, targets: &[usize]) -> Result<(), SimError> {
        GenStabState::apply_gate(self, gate, targets)
    }

    fn apply_pauli(&mut self, p: &PauliString) -> Result<(), SimError> {
        GenStabState::apply_pauli(self, p)
    }

    fn measure(&mut self, p: &PauliString, choice: MeasureChoice) -> Result<Measured, SimError> {
        self.measure_pauli(p, choice)
    }

    fn num_entries(&self) -> usize {
        GenStabState::num_entries(self)
    }
}

impl DenseView for GenStabState {
    fn state_vector(&self) -> Result<Vec<Complex64>, SimError> {
        self.dense_statevector()
    }
}

impl Engine for DenseState {
    fn apply_gate(&mut self, gate: Gate, targets: &[usize]) -> Result<(), SimError> {
        DenseState::apply_gate(self, gate, targets)
    }

    fn apply_pauli(&mut self, p: &PauliString) -> Result<(), SimError> {
        if !p.is_hermitian() {
            return Err(SimError::NonHermitian(p.to_string()));
        }
        DenseState::apply_pauli(self, p);
        Ok(())
    }

    fn measure(&mut self, p: &PauliString, choice: MeasureChoice) -> Result<Measured, SimError> {
        let minus = match choice {
            MeasureChoice::Forced(m) => m,
            MeasureChoice::Uniform(u) => u >= 1.0 - self.probability_minus(p),
        };
        let probability = self.measure_forced(p, minus)?;
        Ok(Measured {
            minus,
            probability,
            deterministic_basis: false,
        })
    }
}

impl DenseView for DenseState {
    fn state_vector(&self) -> Result<Vec<Complex64>, SimError> {
        Ok(self.amplitudes().to_vec())
    }
}

/// Source of the random decisions a shot makes.
pub trait Driver {
    /// Samples `op` into `out`; returns whether it is non-identity.
    fn noise(&mut self, step: usize, op: &NoiseOp, out: &mut PauliString) -> Result<bool, SimError>;
    fn measurement(&mut self, step: usize) -> Result<MeasureChoice, SimError>;
    /// Called with every measurement result (including resets).
    fn observe_outcome(&mut self, _step: usize, _measured: &Measured) {}
    fn flip(&mut self, step: usize, p: f64) -> Result<bool, SimError>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Clifford {
        gate: Gate,
        targets: Vec<usize>,
    },
    T {
        qubit: usize,
        dagger: bool,
    },
    Noise(NoiseOp),
    Measure {
        observable: PauliString,
        inverted: bool,
        flip: f64,
        /// Pauli applied after a −1 outcome to reset (`MR*`).
        reset: Option<PauliString>,
    },
    Reset {
        observable: PauliString,
        flip: PauliString,
    },
    Feedback {
        pauli: PauliString,
        record: usize,
    },
    Detector {
        index: usize,
        record: Vec<usize>,
    },
    Observable {
        index: usize,
        record: Vec<usize>,
    },
}

/// A flattened, record-resolved program ready for repeated execution.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub ops: Vec<Op>,
    pub num_qubits: usize,
    pub num_measurements: usize,
    pub num_detectors: usize,
    pub num_observables: usize,
}

impl Compiled {
    pub fn new(prog: &CircuitProgram) -> Result<Self, SimError> {
        let n = prog.num_qubits();
        let mut ops = Vec::new();
        let mut measured = 0usize;
        let mut detectors = 0usize;
        let single = |q: usize, l: Pauli| PauliString::single(n, q, l);
        for inst in prog.flattened() {
            match inst {
                Instruction::Gate { gate, targets } => match gate {
                    Gate::T | Gate::TDag => ops.extend(targets.into_iter().map(|qubit| Op::T {
                        qubit,
                        dagger: gate == Gate::TDag,
                    })),
                    _ => ops.push(Op::Clifford { gate, targets }),
                },
                Instruction::Feedback {
                    pauli,
                    lookback,
                    target,
                } => ops.push(Op::Feedback {
                    pauli: single(target, pauli),
                    record: measured - lookback,
                }),
                Instruction::Measure {
                    basis,
                    reset,
                    targets,
                    flip,
                } => {
                    for t in targets {
                        ops.push(Op::Measure {
                            observable: single(t.qubit, basis.pauli()),
                            inverted: t.inverted,
                            flip,
                            reset: reset.then(|| single(t.qubit, basis.flip())),
                        });
                        measured += 1;
                    }
                }
                Instruction::Reset { basis, targets } => {
                    for q in targets {
                        ops.push(Op::Reset {
                            observable: single(q, basis.pauli()),
                            flip: single(q, basis.flip()),
                        });
                    }
                }
                Instruction::Mpp { products, flip } => {
                    for p in products {
                        let observable = PauliString::from_terms(n, &p.terms)?;
                        ops.push(Op::Measure {
                            observable,
                            inverted: p.inverted,
                            flip,
                            reset: None,
                        });
                        measured += 1;
                    }
                }
                Instruction::Noise(op) => ops.push(Op::Noise(op)),
                Instruction::Detector { lookbacks, .. } => {
                    ops.push(Op::Detector {
                        index: detectors,
                        record: lookbacks.iter().map(|k| measured - k).collect(),
                    });
                    detectors += 1;
                }
                Instruction::ObservableInclude { index, lookbacks } => ops.push(Op::Observable {
                    index,
                    record: lookbacks.iter().map(|k| measured - k).collect(),
                }),
                Instruction::Tick | Instruction::QubitCoords { .. } | Instruction::ShiftCoords(_) => {}
                Instruction::Repeat { .. } => unreachable!("flattened"),
            }
        }
        Ok(Compiled {
            ops,
            num_qubits: n,
            num_measurements: measured,
            num_detectors: detectors,
            num_observables: prog.num_observables(),
        })
    }
}

/// How a shot ended.
#[derive(Debug, Clone, PartialEq)]
pub enum ShotStatus {
    Preserved,
    Discarded { detector: usize },
    Overflow { step: usize },
    Failed { step: usize, error: SimError },
}

/// Reusable per-shot output buffers.
#[derive(Debug, Clone, Default)]
pub struct ShotRecord {
    pub bits: Vec<bool>,
    pub observables: Vec<bool>,
    /// First detector whose parity was 1, whether or not the shot stopped.
    pub first_fired: Option<usize>,
    pub fired_count: usize,
    /// Largest coefficient count seen during the shot.
    pub max_entries: usize,
}

impl ShotRecord {
    pub fn reset(&mut self, prog: &Compiled) {
        self.bits.clear();
        self.bits.reserve(prog.num_measurements);
        self.observables.clear();
        self.observables.resize(prog.num_observables, false);
        self.first_fired = None;
        self.fired_count = 0;
        self.max_entries = 1;
    }
}

/// Runs `prog` to completion, or until a detector fires under postselection.
/// `after_step` is invoked after every op with its index.
pub fn execute<E, D, F>(
    prog: &Compiled,
    engine: &mut E,
    driver: &mut D,
    out: &mut ShotRecord,
    postselect: bool,
    noise_buf: &mut PauliString,
    mut after_step: F,
) -> ShotStatus
where
    E: Engine,
    D: Driver,
    F: FnMut(usize, &E) -> Result<(), SimError>,
{
    out.reset(prog);
    for (step, op) in prog.ops.iter().enumerate() {
        let result = step_once(op, step, engine, driver, out, noise_buf);
        match result {
            Ok(Some(detector)) if postselect => return ShotStatus::Discarded { detector },
            Ok(_) => {}
            Err(SimError::Overflow { .. }) => return ShotStatus::Overflow { step },
            Err(error) => return ShotStatus::Failed { step, error },
        }
        out.max_entries = out.max_entries.max(engine.num_entries());
        if let Err(error) = after_step(step, engine) {
            return ShotStatus::Failed { step, error };
        }
    }
    ShotStatus::Preserved
}

fn parity(bits: &[bool], record: &[usize]) -> bool {
    record.iter().fold(false, |acc, &i| acc ^ bits[i])
}

/// Executes one op; returns the detector index if a detector fired.
fn step_once<E: Engine, D: Driver>(
    op: &Op,
    step: usize,
    engine: &mut E,
    driver: &mut D,
    out: &mut ShotRecord,
    noise_buf: &mut PauliString,
) -> Result<Option<usize>, SimError> {
    match op {
        Op::Clifford { gate, targets } => engine.apply_gate(*gate, targets)?,
        Op::T { qubit, dagger } => engine.apply_gate(if *dagger { Gate::TDag } else { Gate::T }, &[*qubit])?,
        Op::Noise(noise) => {
            if driver.noise(step, noise, noise_buf)? {
                engine.apply_pauli(noise_buf)?;
            }
        }
        Op::Measure {
            observable,
            inverted,
            flip,
            reset,
        } => {
            let choice = driver.measurement(step)?;
            let m = engine.measure(observable, choice)?;
            driver.observe_outcome(step, &m);
            let flipped = *flip > 0.0 && driver.flip(step, *flip)?;
            out.bits.push(m.minus ^ inverted ^ flipped);
            if let (Some(x), true) = (reset, m.minus) {
                engine.apply_pauli(x)?;
            }
        }
        Op::Reset { observable, flip } => {
            let choice = driver.measurement(step)?;
            let m = engine.measure(observable, choice)?;
            driver.observe_outcome(step, &m);
            if m.minus {
                engine.apply_pauli(flip)?;
            }
        }
        Op::Feedback { pauli, record } => {
            if out.bits[*record] {
                engine.apply_pauli(pauli)?;
            }
        }
        Op::Detector { index, record } => {
            if parity(&out.bits, record) {
                out.fired_count += 1;
                if out.first_fired.is_none() {
                    out.first_fired = Some(*index);
                }
                return Ok(Some(*index));
            }
        }
        Op::Observable { index, record } => {
            out.observables[*index] ^= parity(&out.bits, record);
        }
    }
    Ok(None)
}

/// Driver pulling uniforms from a closure, used by the sampler.
pub struct UniformDriver<F: FnMut() -> f64> {
    pub draw: F,
}

impl<F: FnMut() -> f64> Driver for UniformDriver<F> {
    fn noise(&mut self, _step: usize, op: &NoiseOp, out: &mut PauliString) -> Result<bool, SimError> {
        Ok(sample_noise_into(op, &mut self.draw, out))
    }

    fn measurement(&mut self, _step: usize) -> Result<MeasureChoice, SimError> {
        Ok(MeasureChoice::Uniform((self.draw)()))
    }

    fn flip(&mut self, _step: usize, p: f64) -> Result<bool, SimError> {
        Ok((self.draw)() < p)
    }
}

/// One forced decision, keyed by op index.
#[derive(Debug, Clone, PartialEq)]
pub enum TapeEvent {
    Noise { step: usize, pauli: PauliString },
    Outcome { step: usize, minus: bool, probability: f64 },
    Flip { step: usize, flipped: bool },
}

/// Wraps a driver and records every decision it makes.
pub struct Recorder<D> {
    pub inner: D,
    pub tape: Vec<TapeEvent>,
}

impl<D: Driver> Driver for Recorder<D> {
    fn noise(&mut self, step: usize, op: &NoiseOp, out: &mut PauliString) -> Result<bool, SimError> {
        let any = self.inner.noise(step, op, out)?;
        self.tape.push(TapeEvent::Noise {
            step,
            pauli: out.clone(),
        });
        Ok(any)
    }

    fn measurement(&mut self, step: usize) -> Result<MeasureChoice, SimError> {
        self.inner.measurement(step)
    }

    fn observe_outcome(&mut self, step: usize, m: &Measured) {
        self.inner.observe_outcome(step, m);
        self.tape.push(TapeEvent::Outcome {
            step,
            minus: m.minus,
            probability: m.probability,
        });
    }

    fn flip(&mut self, step: usize, p: f64) -> Result<bool, SimError> {
        let flipped = self.inner.flip(step, p)?;
        self.tape.push(TapeEvent::Flip { step, flipped });
        Ok(flipped)
    }
}

/// Replays a recorded tape, forcing every decision.
pub struct Replayer<'a> {
    tape: &'a [TapeEvent],
    pos: usize,
}

impl<'a> Replayer<'a> {
    pub fn new(tape: &'a [TapeEvent]) -> Self {
        Replayer { tape, pos: 0 }
    }

    fn next(&mut self, step: usize) -> Result<&'a TapeEvent, SimError> {
        let ev = self
            .tape
            .get(self.pos)
            .ok_or_else(|| SimError::CorruptState(format!("tape exhausted at op {step}")))?;
        let at = match ev {
            TapeEvent::Noise { step, .. } | TapeEvent::Outcome { step, .. } | TapeEvent::Flip { step, .. } => *step,
        };
        if at != step {
            return Err(SimError::CorruptState(format!(
                "tape event for op {at} replayed at op {step}"
            )));
        }
        self.pos += 1;
        Ok(ev)
    }

    /// Recorded probability of the most recently replayed outcome.
    pub fn last_probability(&self) -> Option<f64> {
        match self.tape[..self.pos].last() {
            Some(TapeEvent::Outcome { probability, .. }) => Some(*probability),
            _ => None,
        }
    }
}

impl Driver for Replayer<'_> {
    fn noise(&mut self, step: usize, _op: &NoiseOp, out: &mut PauliString) -> Result<bool, SimError> {
        match self.next(step)? {
            TapeEvent::Noise { pauli, .. } => {
                out.copy_from(pauli);
                Ok(!pauli.is_identity_up_to_phase())
            }
            other => Err(SimError::CorruptState(format!("expected noise, found {other:?}"))),
        }
    }

    fn measurement(&mut self, step: usize) -> Result<MeasureChoice, SimError> {
        match self.next(step)? {
            TapeEvent::Outcome { minus, .. } => Ok(MeasureChoice::Forced(*minus)),
            other => Err(SimError::CorruptState(format!("expected outcome, found {other:?}"))),
        }
    }

    fn flip(&mut self, step: usize, _p: f64) -> Result<bool, SimError> {
        match self.next(step)? {
            TapeEvent::Flip { flipped, .. } => Ok(*flipped),
            other => Err(SimError::CorruptState(format!("expected flip, found {other:?}"))),
        }
    }
}
