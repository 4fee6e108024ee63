//! Circuit text format, instruction IR and circuit statistics.
//!
//! The format is a line-oriented subset of the Stim language extended with
//! `T`/`T_DAG`. Record bit 1 means eigenvalue −1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::gate::Gate;
use crate::noise::{NoiseKind, NoiseOp};
use crate::pauli::Pauli;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct CircuitError {
    pub line: Option<usize>,
    pub message: String,
}

impl CircuitError {
    pub fn new(message: impl Into<String>) -> Self {
        CircuitError {
            line: None,
            message: message.into(),
        }
    }

    fn at(line: usize, message: impl Into<String>) -> Self {
        CircuitError {
            line: Some(line),
            message: message.into(),
        }
    }
}

impl fmt::Display for CircuitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub fn pauli(self) -> Pauli {
        match self {
            Basis::X => Pauli::X,
            Basis::Y => Pauli::Y,
            Basis::Z => Pauli::Z,
        }
    }

    /// Pauli that flips this basis' eigenvalue, used to reset.
    pub fn flip(self) -> Pauli {
        match self {
            Basis::X => Pauli::Z,
            Basis::Y | Basis::Z => Pauli::X,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureTarget {
    pub qubit: usize,
    pub inverted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliProduct {
    pub terms: Vec<(usize, Pauli)>,
    pub inverted: bool,
}

/// One circuit instruction. Lookbacks are stored as positive `k` for
/// `rec[-k]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Gate {
        gate: Gate,
        targets: Vec<usize>,
    },
    /// Applies `pauli` to `target` iff `rec[-lookback]` is 1.
    Feedback {
        pauli: Pauli,
        lookback: usize,
        target: usize,
    },
    /// `M`/`MX`/`MY`, or `MR*` when `reset`. `flip` is a classical outcome
    /// flip probability.
    Measure {
        basis: Basis,
        reset: bool,
        targets: Vec<MeasureTarget>,
        flip: f64,
    },
    Reset {
        basis: Basis,
        targets: Vec<usize>,
    },
    Mpp {
        products: Vec<PauliProduct>,
        flip: f64,
    },
    Noise(NoiseOp),
    Detector {
        coords: Vec<f64>,
        lookbacks: Vec<usize>,
    },
    ObservableInclude {
        index: usize,
        lookbacks: Vec<usize>,
    },
    Tick,
    QubitCoords {
        coords: Vec<f64>,
        qubits: Vec<usize>,
    },
    ShiftCoords(Vec<f64>),
    Repeat {
        count: u64,
        body: Vec<Instruction>,
    },
}

impl Instruction {
    /// Measurement results this instruction appends (one iteration).
    pub fn measurements(&self) -> u64 {
        match self {
            Instruction::Measure { targets, .. } => targets.len() as u64,
            Instruction::Mpp { products, .. } => products.len() as u64,
            Instruction::Repeat { count, body } => count * body.iter().map(|i| i.measurements()).sum::<u64>(),
            _ => 0,
        }
    }

    fn qubits(&self, out: &mut Vec<usize>) {
        match self {
            Instruction::Gate { targets, .. } | Instruction::Reset { targets, .. } => out.extend(targets),
            Instruction::Feedback { target, .. } => out.push(*target),
            Instruction::Measure { targets, .. } => out.extend(targets.iter().map(|t| t.qubit)),
            Instruction::Mpp { products, .. } => out.extend(products.iter().flat_map(|p| p.terms.iter().map(|t| t.0))),
            Instruction::Noise(op) => out.extend(&op.targets),
            Instruction::QubitCoords { qubits, .. } => out.extend(qubits),
            Instruction::Repeat { body, .. } => body.iter().for_each(|i| i.qubits(out)),
            _ => {}
        }
    }
}

/// A validated program with derived record bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitProgram {
    instructions: Vec<Instruction>,
    num_qubits: usize,
    num_measurements: usize,
    /// Absolute measurement indices per detector, in execution order.
    detectors: Vec<Vec<usize>>,
    /// Absolute measurement indices per observable id.
    observables: BTreeMap<usize, Vec<usize>>,
}

impl CircuitProgram {
    /// Validates instructions and derives counts, detectors and observables.
    pub fn from_instructions(instructions: Vec<Instruction>) -> Result<Self, CircuitError> {
        let mut prog = CircuitProgram {
            instructions: Vec::new(),
            num_qubits: 0,
            num_measurements: 0,
            detectors: Vec::new(),
            observables: BTreeMap::new(),
        };
        let mut qubits = Vec::new();
        for inst in &instructions {
            validate(inst)?;
            inst.qubits(&mut qubits);
        }
        prog.num_qubits = qubits.iter().max().map_or(0, |m| m + 1);
        let mut count = 0usize;
        prog.walk(&instructions, &mut count)?;
        prog.num_measurements = count;
        prog.instructions = instructions;
        Ok(prog)
    }

    fn walk(&mut self, insts: &[Instruction], count: &mut usize) -> Result<(), CircuitError> {
        let resolve = |lookbacks: &[usize], count: usize| -> Result<Vec<usize>, CircuitError> {
            lookbacks
                .iter()
                .map(|&k| {
                    count
                        .checked_sub(k)
                        .ok_or_else(|| CircuitError::new(format!("rec[-{k}] reaches before the first measurement")))
                })
                .collect()
        };
        for inst in insts {
            match inst {
                Instruction::Repeat { count: reps, body } => {
                    for _ in 0..*reps {
                        self.walk(body, count)?;
                    }
                }
                Instruction::Detector { lookbacks, .. } => {
                    let abs = resolve(lookbacks, *count)?;
                    self.detectors.push(abs);
                }
                Instruction::ObservableInclude { index, lookbacks } => {
                    let abs = resolve(lookbacks, *count)?;
                    self.observables.entry(*index).or_default().extend(abs);
                }
                Instruction::Feedback { lookback, .. } => {
                    resolve(&[*lookback], *count)?;
                }
                other => *count += other.measurements() as usize,
            }
        }
        Ok(())
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_measurements(&self) -> usize {
        self.num_measurements
    }

    pub fn detectors(&self) -> &[Vec<usize>] {
        &self.detectors
    }

    pub fn observables(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.observables
    }

    /// Number of observable slots (`1 + max id`, or 0).
    pub fn num_observables(&self) -> usize {
        self.observables.keys().next_back().map_or(0, |k| k + 1)
    }

    /// Whether any noise channel or nonzero measurement flip is present.
    pub fn has_noise(&self) -> bool {
        fn any(insts: &[Instruction]) -> bool {
            insts.iter().any(|i| match i {
                Instruction::Noise(_) => true,
                Instruction::Measure { flip, .. } | Instruction::Mpp { flip, .. } => *flip > 0.0,
                Instruction::Repeat { body, .. } => any(body),
                _ => false,
            })
        }
        any(&self.instructions)
    }

    /// Instructions with every `REPEAT` unrolled.
    pub fn flattened(&self) -> Vec<Instruction> {
        fn go(insts: &[Instruction], out: &mut Vec<Instruction>) {
            for inst in insts {
                match inst {
                    Instruction::Repeat { count, body } => {
                        for _ in 0..*count {
                            go(body, out);
                        }
                    }
                    other => out.push(other.clone()),
                }
            }
        }
        let mut out = Vec::new();
        go(&self.instructions, &mut out);
        out
    }

    /// Distinct qubits mentioned anywhere, in increasing order.
    pub fn touched_qubits(&self) -> Vec<usize> {
        let mut q = Vec::new();
        for inst in &self.instructions {
            inst.qubits(&mut q);
        }
        q.sort_unstable();
        q.dedup();
        q
    }
}

fn validate(inst: &Instruction) -> Result<(), CircuitError> {
    let err = |m: String| Err(CircuitError::new(m));
    match inst {
        Instruction::Gate { gate, targets } => {
            if targets.is_empty() {
                return err(format!("{gate} has no targets"));
            }
            if gate.arity() == 2 {
                if targets.len() % 2 != 0 {
                    return err(format!("{gate} needs an even number of targets"));
                }
                if let Some(c) = targets.chunks(2).find(|c| c[0] == c[1]) {
                    return err(format!("{gate} pair repeats qubit {}", c[0]));
                }
            }
        }
        Instruction::Feedback { pauli, lookback, .. } => {
            if *pauli == Pauli::I || *lookback == 0 {
                return err("malformed feedback".into());
            }
        }
        Instruction::Measure { targets, flip, .. } => {
            if targets.is_empty() {
                return err("measurement has no targets".into());
            }
            check_probability(*flip)?;
        }
        Instruction::Reset { targets, .. } if targets.is_empty() => return err("reset has no targets".into()),
        Instruction::Mpp { products, flip } => {
            if products.is_empty() {
                return err("MPP has no products".into());
            }
            for p in products {
                let mut seen = BTreeSet::new();
                if p.terms.is_empty() || p.terms.iter().any(|t| t.1 == Pauli::I || !seen.insert(t.0)) {
                    return err("malformed Pauli product".into());
                }
            }
            check_probability(*flip)?;
        }
        Instruction::Noise(op) => {
            NoiseOp::new(op.kind, op.targets.clone(), op.p).map_err(CircuitError::new)?;
        }
        Instruction::Detector { lookbacks, .. } | Instruction::ObservableInclude { lookbacks, .. } => {
            if lookbacks.contains(&0) {
                return err("lookbacks must be negative".into());
            }
        }
        Instruction::Repeat { count, body } => {
            if *count == 0 {
                return err("REPEAT count must be at least 1".into());
            }
            for i in body {
                validate(i)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn check_probability(p: f64) -> Result<(), CircuitError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CircuitError::new(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Parsing

enum Target {
    Qubit(usize, bool),
    Rec(usize),
    Product(PauliProduct),
}

fn parse_target(tok: &str) -> Result<Target, String> {
    if let Some(inner) = tok.strip_prefix("rec[-").and_then(|t| t.strip_suffix(']')) {
        let k: usize = inner.parse().map_err(|_| format!("bad record target {tok:?}"))?;
        if k == 0 {
            return Err(format!("bad record target {tok:?}"));
        }
        return Ok(Target::Rec(k));
    }
    let (inverted, body) = match tok.strip_prefix('!') {
        Some(b) => (true, b),
        None => (false, tok),
    };
    if let Ok(q) = body.parse::<usize>() {
        return Ok(Target::Qubit(q, inverted));
    }
    let mut terms = Vec::new();
    for part in body.split('*') {
        let mut chars = part.chars();
        let letter = chars
            .next()
            .and_then(|c| Pauli::from_char(c.to_ascii_uppercase()))
            .filter(|&p| p != Pauli::I)
            .ok_or_else(|| format!("bad target {tok:?}"))?;
        let q: usize = chars.as_str().parse().map_err(|_| format!("bad target {tok:?}"))?;
        terms.push((q, letter));
    }
    Ok(Target::Product(PauliProduct { terms, inverted }))
}

fn parse_args(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|a| a.trim().parse::<f64>().map_err(|_| format!("bad argument {a:?}")))
        .collect()
}

fn measure_opcode(name: &str) -> Option<(Basis, bool)> {
    Some(match name {
        "M" | "MZ" => (Basis::Z, false),
        "MX" => (Basis::X, false),
        "MY" => (Basis::Y, false),
        "MR" | "MRZ" => (Basis::Z, true),
        "MRX" => (Basis::X, true),
        "MRY" => (Basis::Y, true),
        _ => return None,
    })
}

fn reset_opcode(name: &str) -> Option<Basis> {
    Some(match name {
        "R" | "RZ" => Basis::Z,
        "RX" => Basis::X,
        "RY" => Basis::Y,
        _ => return None,
    })
}

struct Parser<'a> {
    segments: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let mut segments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            let mut rest = line;
            while let Some(idx) = rest.find(['{', '}']) {
                let (head, tail) = rest.split_at(idx);
                if !head.trim().is_empty() {
                    segments.push((i + 1, head.trim()));
                }
                segments.push((i + 1, &tail[..1]));
                rest = &tail[1..];
            }
            if !rest.trim().is_empty() {
                segments.push((i + 1, rest.trim()));
            }
        }
        Parser { segments, pos: 0 }
    }

    fn block(&mut self, depth: usize, measured: &mut usize) -> Result<Vec<Instruction>, CircuitError> {
        let mut out = Vec::new();
        while self.pos < self.segments.len() {
            let (line, seg) = self.segments[self.pos];
            self.pos += 1;
            match seg {
                "}" if depth > 0 => return Ok(out),
                "}" => return Err(CircuitError::at(line, "unbalanced '}'")),
                "{" => return Err(CircuitError::at(line, "unexpected '{'")),
                _ => {}
            }
            if let Some(count) = seg.strip_prefix("REPEAT") {
                let count: u64 = count
                    .trim()
                    .parse()
                    .ok()
                    .filter(|&c| c >= 1)
                    .ok_or_else(|| CircuitError::at(line, "REPEAT needs a positive count"))?;
                if self.segments.get(self.pos).map(|s| s.1) != Some("{") {
                    return Err(CircuitError::at(line, "REPEAT must be followed by '{'"));
                }
                self.pos += 1;
                let start = *measured;
                let body = self.block(depth + 1, measured)?;
                if self.pos > self.segments.len() || self.segments[self.pos - 1].1 != "}" {
                    return Err(CircuitError::at(line, "unterminated REPEAT block"));
                }
                *measured = start + (*measured - start) * count as usize;
                out.push(Instruction::Repeat { count, body });
                continue;
            }
            let parsed = parse_line(seg).map_err(|m| CircuitError::at(line, m))?;
            for inst in parsed {
                let lookbacks: &[usize] = match &inst {
                    Instruction::Detector { lookbacks, .. } | Instruction::ObservableInclude { lookbacks, .. } => {
                        lookbacks
                    }
                    Instruction::Feedback { lookback, .. } => std::slice::from_ref(lookback),
                    _ => &[],
                };
                if let Some(k) = lookbacks.iter().find(|&&k| k > *measured) {
                    return Err(CircuitError::at(
                        line,
                        format!("rec[-{k}] is out of range ({} measurements so far)", *measured),
                    ));
                }
                validate(&inst).map_err(|e| CircuitError::at(line, e.message))?;
                *measured += inst.measurements() as usize;
                out.push(inst);
            }
        }
        if depth > 0 {
            let line = self.segments.last().map_or(0, |s| s.0);
            return Err(CircuitError::at(line, "unterminated REPEAT block"));
        }
        Ok(out)
    }
}

fn parse_line(seg: &str) -> Result<Vec<Instruction>, String> {
    let (head, rest) = match seg.find(char::is_whitespace) {
        Some(i) => (&seg[..i], seg[i..].trim()),
        None => (seg, ""),
    };
    // `NAME(args)` may contain spaces inside the parentheses.
    let (name, args, rest) = match head.find('(') {
        Some(i) => {
            let close = seg.find(')').ok_or("unclosed '('")?;
            (&seg[..i], parse_args(&seg[i + 1..close])?, seg[close + 1..].trim())
        }
        None => (head, Vec::new(), rest),
    };
    let targets: Vec<Target> = rest.split_whitespace().map(parse_target).collect::<Result<_, _>>()?;
    let qubits = |what: &str| -> Result<Vec<usize>, String> {
        targets
            .iter()
            .map(|t| match t {
                Target::Qubit(q, false) => Ok(*q),
                _ => Err(format!("{what} takes plain qubit targets")),
            })
            .collect()
    };
    let recs = |what: &str| -> Result<Vec<usize>, String> {
        targets
            .iter()
            .map(|t| match t {
                Target::Rec(k) => Ok(*k),
                _ => Err(format!("{what} takes rec[-k] targets")),
            })
            .collect()
    };
    let flip = |what: &str| -> Result<f64, String> {
        match args.as_slice() {
            [] => Ok(0.0),
            [p] => Ok(*p),
            _ => Err(format!("{what} takes at most one argument")),
        }
    };
    let no_args = |what: &str| -> Result<(), String> {
        if args.is_empty() {
            Ok(())
        } else {
            Err(format!("{what} takes no arguments"))
        }
    };

    if let Some(gate) = Gate::from_name(name) {
        no_args(name)?;
        return parse_gate(gate, &targets);
    }
    if let Some((basis, reset)) = measure_opcode(name) {
        let targets = targets
            .iter()
            .map(|t| match t {
                Target::Qubit(q, inv) => Ok(MeasureTarget {
                    qubit: *q,
                    inverted: *inv,
                }),
                _ => Err(format!("{name} takes qubit targets")),
            })
            .collect::<Result<_, _>>()?;
        return Ok(vec![Instruction::Measure {
            basis,
            reset,
            targets,
            flip: flip(name)?,
        }]);
    }
    if let Some(basis) = reset_opcode(name) {
        no_args(name)?;
        return Ok(vec![Instruction::Reset {
            basis,
            targets: qubits(name)?,
        }]);
    }
    if let Some(kind) = NoiseKind::from_name(name) {
        let [p] = args.as_slice() else {
            return Err(format!("{name} takes exactly one probability"));
        };
        let op = NoiseOp::new(kind, qubits(name)?, *p)?;
        return Ok(vec![Instruction::Noise(op)]);
    }
    let inst = match name {
        "MPP" => {
            let products = targets
                .into_iter()
                .map(|t| match t {
                    Target::Product(p) => Ok(p),
                    Target::Qubit(..) | Target::Rec(_) => Err("MPP takes Pauli products like X0*Z1".to_string()),
                })
                .collect::<Result<_, _>>()?;
            Instruction::Mpp {
                products,
                flip: flip(name)?,
            }
        }
        "DETECTOR" => Instruction::Detector {
            coords: args.clone(),
            lookbacks: recs(name)?,
        },
        "OBSERVABLE_INCLUDE" => {
            let [k] = args.as_slice() else {
                return Err("OBSERVABLE_INCLUDE takes one index argument".into());
            };
            if *k < 0.0 || k.fract() != 0.0 {
                return Err(format!("bad observable index {k}"));
            }
            Instruction::ObservableInclude {
                index: *k as usize,
                lookbacks: recs(name)?,
            }
        }
        "TICK" => {
            no_args(name)?;
            if !targets.is_empty() {
                return Err("TICK takes no targets".into());
            }
            Instruction::Tick
        }
        "QUBIT_COORDS" => Instruction::QubitCoords {
            coords: args.clone(),
            qubits: qubits(name)?,
        },
        "SHIFT_COORDS" => {
            if !targets.is_empty() {
                return Err("SHIFT_COORDS takes no targets".into());
            }
            Instruction::ShiftCoords(args.clone())
        }
        _ => return Err(format!("unknown opcode {name:?}")),
    };
    Ok(vec![inst])
}

/// Splits a gate line into unconditional runs and classically controlled
/// Paulis, preserving order.
fn parse_gate(gate: Gate, targets: &[Target]) -> Result<Vec<Instruction>, String> {
    let mut out = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    let flush = |run: &mut Vec<usize>, out: &mut Vec<Instruction>| {
        if !run.is_empty() {
            out.push(Instruction::Gate {
                gate,
                targets: std::mem::take(run),
            });
        }
    };
    let plain = |t: &Target| match t {
        Target::Qubit(q, false) => Some(*q),
        _ => None,
    };
    let controlled_pauli = match gate {
        Gate::CX | Gate::X => Some(Pauli::X),
        Gate::CY | Gate::Y => Some(Pauli::Y),
        Gate::CZ | Gate::Z => Some(Pauli::Z),
        _ => None,
    };
    let has_rec = targets.iter().any(|t| matches!(t, Target::Rec(_)));
    if gate.arity() == 1 && !has_rec {
        run = targets
            .iter()
            .map(|t| plain(t).ok_or(format!("{gate} takes qubit targets")))
            .collect::<Result<_, _>>()?;
        flush(&mut run, &mut out);
        if out.is_empty() {
            return Err(format!("{gate} has no targets"));
        }
        return Ok(out);
    }
    if !targets.len().is_multiple_of(2) {
        return Err(format!("{gate} needs target pairs"));
    }
    for pair in targets.chunks(2) {
        match (&pair[0], &pair[1]) {
            (Target::Rec(k), t) | (t, Target::Rec(k)) if gate == Gate::CZ || matches!(pair[0], Target::Rec(_)) => {
                let pauli = controlled_pauli.ok_or(format!("{gate} cannot be classically controlled"))?;
                let target = plain(t).ok_or(format!("{gate} feedback needs a qubit target"))?;
                flush(&mut run, &mut out);
                out.push(Instruction::Feedback {
                    pauli,
                    lookback: *k,
                    target,
                });
            }
            (a, b) => {
                let (Some(a), Some(b)) = (plain(a), plain(b)) else {
                    return Err(format!("bad {gate} targets"));
                };
                if gate.arity() == 1 {
                    return Err(format!("{gate} mixes record and qubit targets"));
                }
                run.extend([a, b]);
            }
        }
    }
    flush(&mut run, &mut out);
    Ok(out)
}

/// Parses circuit text into a validated program.
pub fn parse_circuit(text: &str) -> Result<CircuitProgram, CircuitError> {
    let mut parser = Parser::new(text);
    let mut measured = 0;
    let instructions = parser.block(0, &mut measured)?;
    CircuitProgram::from_instructions(instructions)
}

// ---------------------------------------------------------------------------
// Serialization

fn write_args(f: &mut fmt::Formatter<'_>, args: &[f64]) -> fmt::Result {
    if args.is_empty() {
        return Ok(());
    }
    f.write_str("(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    f.write_str(")")
}

fn write_flip(f: &mut fmt::Formatter<'_>, flip: f64) -> fmt::Result {
    if flip > 0.0 {
        write!(f, "({flip})")?;
    }
    Ok(())
}

fn write_recs(f: &mut fmt::Formatter<'_>, lookbacks: &[usize]) -> fmt::Result {
    for k in lookbacks {
        write!(f, " rec[-{k}]")?;
    }
    Ok(())
}

impl Instruction {
    fn write(&self, f: &mut fmt::Formatter<'_>, indent: usize) -> fmt::Result {
        let pad = "    ".repeat(indent);
        f.write_str(&pad)?;
        match self {
            Instruction::Gate { gate, targets } => {
                f.write_str(gate.name())?;
                for t in targets {
                    write!(f, " {t}")?;
                }
            }
            Instruction::Feedback {
                pauli,
                lookback,
                target,
            } => {
                write!(f, "C{} rec[-{lookback}] {target}", pauli.as_char())?;
            }
            Instruction::Measure {
                basis,
                reset,
                targets,
                flip,
            } => {
                let name = match (basis, reset) {
                    (Basis::Z, false) => "M",
                    (Basis::X, false) => "MX",
                    (Basis::Y, false) => "MY",
                    (Basis::Z, true) => "MR",
                    (Basis::X, true) => "MRX",
                    (Basis::Y, true) => "MRY",
                };
                f.write_str(name)?;
                write_flip(f, *flip)?;
                for t in targets {
                    write!(f, " {}{}", if t.inverted { "!" } else { "" }, t.qubit)?;
                }
            }
            Instruction::Reset { basis, targets } => {
                f.write_str(match basis {
                    Basis::Z => "R",
                    Basis::X => "RX",
                    Basis::Y => "RY",
                })?;
                for t in targets {
                    write!(f, " {t}")?;
                }
            }
            Instruction::Mpp { products, flip } => {
                f.write_str("MPP")?;
                write_flip(f, *flip)?;
                for p in products {
                    f.write_str(if p.inverted { " !" } else { " " })?;
                    for (i, (q, l)) in p.terms.iter().enumerate() {
                        if i > 0 {
                            f.write_str("*")?;
                        }
                        write!(f, "{}{q}", l.as_char())?;
                    }
                }
            }
            Instruction::Noise(op) => write!(f, "{op}")?,
            Instruction::Detector { coords, lookbacks } => {
                f.write_str("DETECTOR")?;
                write_args(f, coords)?;
                write_recs(f, lookbacks)?;
            }
            Instruction::ObservableInclude { index, lookbacks } => {
                write!(f, "OBSERVABLE_INCLUDE({index})")?;
                write_recs(f, lookbacks)?;
            }
            Instruction::Tick => f.write_str("TICK")?,
            Instruction::QubitCoords { coords, qubits } => {
                f.write_str("QUBIT_COORDS")?;
                write_args(f, coords)?;
                for q in qubits {
                    write!(f, " {q}")?;
                }
            }
            Instruction::ShiftCoords(args) => {
                f.write_str("SHIFT_COORDS")?;
                write_args(f, args)?;
            }
            Instruction::Repeat { count, body } => {
                writeln!(f, "REPEAT {count} {{")?;
                for inst in body {
                    inst.write(f, indent + 1)?;
                }
                write!(f, "{pad}}}")?;
            }
        }
        writeln!(f)
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, 0)
    }
}

impl fmt::Display for CircuitProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for inst in &self.instructions {
            inst.write(f, 0)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Statistics and record semantics

/// Gate-level statistics. Noise channels, annotations and classically
/// controlled Paulis are not gates. `depth` counts `TICK`-delimited layers
/// containing any gate, measurement or reset; `t_depth` those containing a
/// `T`/`T_DAG`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CircuitStats {
    pub total_qubits: usize,
    pub total_gates: u64,
    pub depth: u64,
    pub two_qubit_gates: u64,
    pub measurements: u64,
    pub t_count: u64,
    pub t_support_size: usize,
    pub t_depth: u64,
}

#[derive(Default)]
struct StatsWalker {
    stats: CircuitStats,
    t_support: BTreeSet<usize>,
    layer_active: bool,
    layer_has_t: bool,
}

impl StatsWalker {
    fn close_layer(&mut self) {
        self.stats.depth += self.layer_active as u64;
        self.stats.t_depth += self.layer_has_t as u64;
        self.layer_active = false;
        self.layer_has_t = false;
    }

    fn visit(&mut self, insts: &[Instruction]) {
        for inst in insts {
            match inst {
                Instruction::Gate { gate, targets } => {
                    self.layer_active = true;
                    let apps = (targets.len() / gate.arity()) as u64;
                    self.stats.total_gates += apps;
                    if gate.arity() == 2 {
                        self.stats.two_qubit_gates += apps;
                    }
                    if !gate.is_clifford() {
                        self.stats.t_count += apps;
                        self.t_support.extend(targets);
                        self.layer_has_t = true;
                    }
                }
                Instruction::Measure { .. } | Instruction::Mpp { .. } => {
                    self.layer_active = true;
                    self.stats.measurements += inst.measurements();
                }
                Instruction::Reset { .. } | Instruction::Feedback { .. } => self.layer_active = true,
                Instruction::Tick => self.close_layer(),
                Instruction::Repeat { count, body } => {
                    for _ in 0..*count {
                        self.visit(body);
                    }
                }
                _ => {}
            }
        }
    }
}

pub fn compute_stats(prog: &CircuitProgram) -> CircuitStats {
    let mut w = StatsWalker::default();
    w.visit(prog.instructions());
    w.close_layer();
    w.stats.total_qubits = prog.num_qubits();
    w.stats.t_support_size = w.t_support.len();
    w.stats
}

/// XOR of the record bits addressed by `lookbacks` (`k` means `rec[-k]`).
pub fn resolve_lookbacks(lookbacks: &[usize], record: &[bool]) -> Result<bool, CircuitError> {
    lookbacks.iter().try_fold(false, |acc, &k| {
        if k == 0 || k > record.len() {
            return Err(CircuitError::new(format!(
                "rec[-{k}] out of range for a record of {} bits",
                record.len()
            )));
        }
        Ok(acc ^ record[record.len() - k])
    })
}

/// XOR of the record bits at absolute indices.
pub fn resolve_detector(indices: &[usize], record: &[bool]) -> Result<bool, CircuitError> {
    indices.iter().try_fold(false, |acc, &i| {
        record
            .get(i)
            .map(|b| acc ^ b)
            .ok_or_else(|| CircuitError::new(format!("measurement {i} not yet recorded")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_program_counts() {
        let p = parse_circuit("H 0\nCX 0 1\nM 0 1").unwrap();
        assert_eq!(p.num_qubits(), 2);
        assert_eq!(p.num_measurements(), 2);
        let s = compute_stats(&p);
        assert_eq!((s.total_gates, s.two_qubit_gates, s.measurements), (2, 1, 2));
    }

    #[test]
    fn repeat_and_detector_lookbacks() {
        let p = parse_circuit("REPEAT 3 { M 0 }\nDETECTOR rec[-1] rec[-2]").unwrap();
        assert_eq!(p.num_measurements(), 3);
        assert_eq!(p.detectors(), &[vec![2, 1]]);
    }

    #[test]
    fn detectors_inside_repeat_resolve_per_iteration() {
        let p =
            parse_circuit("M 0\nREPEAT 2 {\n    M 0\n    DETECTOR rec[-1] rec[-2]\n}\nOBSERVABLE_INCLUDE(1) rec[-1]")
                .unwrap();
        assert_eq!(p.detectors(), &[vec![1, 0], vec![2, 1]]);
        assert_eq!(p.observables()[&1], vec![2]);
        assert_eq!(p.num_observables(), 2);
    }

    #[test]
    fn t_stats() {
        let s = compute_stats(&parse_circuit("T 0\nTICK\nT_DAG 0").unwrap());
        assert_eq!((s.t_count, s.t_support_size, s.t_depth, s.depth), (2, 1, 2, 2));
    }

    #[test]
    fn stats_layers_ignore_noise_and_annotations() {
        let text = "QUBIT_COORDS(0, 0) 0\nR 0 1 2\nTICK\nDEPOLARIZE1(0.1) 0\nTICK\nH 0\nT 1 2\nCX 0 1\nTICK\nM 0 1\nMPP X0*X1 Z2\nDETECTOR rec[-1]";
        let s = compute_stats(&parse_circuit(text).unwrap());
        assert_eq!(
            s,
            CircuitStats {
                total_qubits: 3,
                total_gates: 4,
                depth: 3,
                two_qubit_gates: 1,
                measurements: 4,
                t_count: 2,
                t_support_size: 2,
                t_depth: 1,
            }
        );
    }

    #[test]
    fn detector_resolution() {
        assert!(!resolve_lookbacks(&[], &[]).unwrap());
        assert!(resolve_lookbacks(&[1], &[true]).unwrap());
        assert!(!resolve_lookbacks(&[1, 3], &[true, false, true]).unwrap());
        assert!(resolve_lookbacks(&[2], &[true]).is_err());
        assert!(resolve_detector(&[0, 2], &[true, false, false]).unwrap());
        assert!(resolve_detector(&[5], &[true]).is_err());
    }

    #[test]
    fn feedback_forms() {
        let p = parse_circuit("M 0\nCX 0 1 rec[-1] 2\nX rec[-1] 3\nCZ 4 rec[-1]").unwrap();
        assert_eq!(
            p.instructions()[1..],
            [
                Instruction::Gate {
                    gate: Gate::CX,
                    targets: vec![0, 1]
                },
                Instruction::Feedback {
                    pauli: Pauli::X,
                    lookback: 1,
                    target: 2
                },
                Instruction::Feedback {
                    pauli: Pauli::X,
                    lookback: 1,
                    target: 3
                },
                Instruction::Feedback {
                    pauli: Pauli::Z,
                    lookback: 1,
                    target: 4
                },
            ]
        );
    }

    #[test]
    fn mpp_and_inverted_targets() {
        let p = parse_circuit("MPP(0.01) X0*Z1 !Y2\nM !3").unwrap();
        assert_eq!(p.num_measurements(), 3);
        assert_eq!(p.to_string(), "MPP(0.01) X0*Z1 !Y2\nM !3\n");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("H 0\nFOO 1", 2, "unknown opcode"),
            ("M 0\nDETECTOR rec[-2]", 2, "out of range"),
            ("REPEAT 2 {\nH 0", 2, "unterminated"),
            ("H 0\n}", 2, "unbalanced"),
            ("CX 0", 1, "pairs"),
            ("CX 1 1", 1, "repeats"),
            ("X_ERROR(2) 0", 1, "outside"),
            ("MPP X0*Z0", 1, "malformed"),
            ("H rec[-1]", 1, ""),
            ("REPEAT 0 {\n}", 1, "positive"),
            ("DETECTOR 0", 1, "rec"),
        ];
        for (text, line, needle) in cases {
            let e = parse_circuit(text).unwrap_err();
            assert_eq!(e.line, Some(line), "{text:?}: {e}");
            assert!(e.message.contains(needle), "{text:?}: {e}");
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let p = parse_circuit("# header\n\nH 0 # trailing\n  \nM 0\n").unwrap();
        assert_eq!(p.to_string(), "H 0\nM 0\n");
    }

    fn arb_instruction(depth: u32) -> BoxedStrategy<Instruction> {
        let q = 0usize..6;
        let gate = proptest::sample::select(Gate::ALL.to_vec());
        let leaf = prop_oneof![
            (gate, proptest::collection::vec(q.clone(), 1..4)).prop_filter_map("pairs", |(g, mut t)| {
                if g.arity() == 2 {
                    if t.len() < 2 || t[0] == t[1] {
                        return None;
                    }
                    t.truncate(2);
                }
                Some(Instruction::Gate { gate: g, targets: t })
            }),
            (
                0..3usize,
                any::<bool>(),
                proptest::collection::vec((q.clone(), any::<bool>()), 1..3),
                0..3u8
            )
                .prop_map(|(b, reset, t, f)| Instruction::Measure {
                    basis: [Basis::X, Basis::Y, Basis::Z][b],
                    reset,
                    targets: t
                        .into_iter()
                        .map(|(qubit, inverted)| MeasureTarget { qubit, inverted })
                        .collect(),
                    flip: [0.0, 0.125, 1e-3][f as usize],
                }),
            (0..3usize, proptest::collection::vec(q.clone(), 1..3)).prop_map(|(b, targets)| Instruction::Reset {
                basis: [Basis::X, Basis::Y, Basis::Z][b],
                targets
            }),
            (
                proptest::sample::subsequence(vec![0usize, 1, 2, 3], 1..3),
                1..4usize,
                any::<bool>()
            )
                .prop_map(|(qs, l, inverted)| Instruction::Mpp {
                    products: vec![PauliProduct {
                        terms: qs
                            .into_iter()
                            .map(|q| (q, [Pauli::X, Pauli::Y, Pauli::Z][l - 1]))
                            .collect(),
                        inverted,
                    }],
                    flip: 0.0,
                }),
            (0..4usize, q.clone(), 0.0..=1.0f64).prop_map(|(k, t, p)| {
                let kind = NoiseKind::ALL[k];
                let targets = if kind == NoiseKind::Depolarize2 {
                    vec![t, (t + 1) % 6]
                } else {
                    vec![t]
                };
                Instruction::Noise(NoiseOp { kind, targets, p })
            }),
            Just(Instruction::Tick),
            (proptest::collection::vec(-5.0..5.0f64, 0..3), q.clone()).prop_map(|(coords, q)| {
                Instruction::QubitCoords {
                    coords,
                    qubits: vec![q],
                }
            }),
            proptest::collection::vec(-5.0..5.0f64, 0..3).prop_map(Instruction::ShiftCoords),
        ];
        if depth == 0 {
            return leaf.boxed();
        }
        prop_oneof![
            4 => leaf,
            1 => (1..4u64, proptest::collection::vec(arb_instruction(depth - 1), 1..4))
                .prop_map(|(count, body)| Instruction::Repeat { count, body }),
        ]
        .boxed()
    }

    /// Appends record-referencing instructions that are valid by construction.
    fn with_record_refs(mut insts: Vec<Instruction>, picks: Vec<(u8, usize, usize)>) -> Vec<Instruction> {
        let measured: u64 = insts.iter().map(|i| i.measurements()).sum();
        if measured == 0 {
            return insts;
        }
        for (kind, a, b) in picks {
            let k = 1 + a % measured as usize;
            insts.push(match kind % 3 {
                0 => Instruction::Detector {
                    coords: vec![b as f64],
                    lookbacks: vec![k],
                },
                1 => Instruction::ObservableInclude {
                    index: b % 3,
                    lookbacks: vec![k],
                },
                _ => Instruction::Feedback {
                    pauli: [Pauli::X, Pauli::Y, Pauli::Z][b % 3],
                    lookback: k,
                    target: b % 6,
                },
            });
        }
        insts
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(
            insts in proptest::collection::vec(arb_instruction(2), 0..12),
            picks in proptest::collection::vec((any::<u8>(), any::<usize>(), any::<usize>()), 0..4),
        ) {
            let prog = CircuitProgram::from_instructions(with_record_refs(insts, picks)).unwrap();
            let text = prog.to_string();
            let back = parse_circuit(&text).unwrap();
            prop_assert_eq!(&back, &prog, "{}", text);
        }

        #[test]
        fn repeat_multiplies_measurements(count in 1..20u64, per in 1..5usize) {
            let body = vec!["0"; per].join(" ");
            let p = parse_circuit(&format!("REPEAT {count} {{\nM {body}\n}}")).unwrap();
            prop_assert_eq!(p.num_measurements() as u64, count * per as u64);
        }
    }
}
