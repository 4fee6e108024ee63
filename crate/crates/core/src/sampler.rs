//! Shot-parallel Monte Carlo sampling with postselection.
//!
//! Every shot owns a preallocated [`ShotContext`] and a private RNG stream
//! seeded by [`derive_seed`]. Shots never communicate; per-shot results are
//! folded into integer counters, so a run is a pure function of the program
//! and the [`SamplerConfig`], whatever the thread count.

use std::sync::Mutex;
use std::time::Instant;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;
use sha1::{Digest, Sha1};

use crate::circuit::CircuitProgram;
use crate::error::SimError;
use crate::exec::{execute, Compiled, ShotRecord, ShotStatus, UniformDriver};
use crate::genstab::{GenStabState, DEFAULT_CAPACITY};
use crate::noise::apply_noise_model;
use crate::pauli::PauliString;
use crate::tableau::Tableau;

/// Doublings attempted for a shot that overflowed.
pub const MAX_DOUBLINGS: u32 = 3;
pub const DEFAULT_BAYES_FACTOR: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SamplerConfig {
    pub shots: u64,
    /// Shots issued per wave.
    pub batch_size: usize,
    pub master_seed: u64,
    pub entry_capacity: usize,
    /// Worker threads; 0 means one per available core.
    pub threads: usize,
    pub postselect: bool,
    pub rerun_on_overflow: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            shots: 1000,
            batch_size: 4096,
            master_seed: 0,
            entry_capacity: DEFAULT_CAPACITY,
            threads: 0,
            postselect: true,
            rerun_on_overflow: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.batch_size == 0 {
            return Err(SimError::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.entry_capacity < 2 {
            return Err(SimError::InvalidArgument("entry_capacity must be at least 2".into()));
        }
        Ok(())
    }
}

/// First 8 bytes (little-endian) of `SHA-1(master_seed LE ‖ shot_index LE)`.
pub fn derive_seed(master_seed: u64, shot_index: u64) -> u64 {
    let mut h = Sha1::new();
    h.update(master_seed.to_le_bytes());
    h.update(shot_index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 20 bytes"))
}

/// Per-shot RNG: xoshiro256++ seeded through SplitMix64 from the derived
/// seed. Uniforms take the top 53 bits of each output.
pub struct ShotRng(Xoshiro256PlusPlus);

impl ShotRng {
    pub fn new(seed: u64) -> Self {
        ShotRng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn for_shot(master_seed: u64, shot_index: u64) -> Self {
        Self::new(derive_seed(master_seed, shot_index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Everything one shot needs, allocated once and reused.
pub struct ShotContext {
    pub state: GenStabState,
    fresh: Tableau,
    pub record: ShotRecord,
    noise_buf: PauliString,
}

impl ShotContext {
    pub fn new(prog: &Compiled, capacity: usize) -> Result<Self, SimError> {
        let state = GenStabState::with_capacity(prog.num_qubits, capacity)?;
        Ok(ShotContext {
            fresh: state.tableau().clone(),
            state,
            record: ShotRecord::default(),
            noise_buf: PauliString::identity(prog.num_qubits),
        })
    }
}

/// Runs shot `shot_index` from `|0…0⟩`.
pub fn run_shot(
    prog: &Compiled,
    ctx: &mut ShotContext,
    master_seed: u64,
    shot_index: u64,
    postselect: bool,
) -> ShotStatus {
    ctx.state.reset_from(&ctx.fresh);
    let mut rng = ShotRng::for_shot(master_seed, shot_index);
    let mut driver = UniformDriver { draw: || rng.uniform() };
    execute(
        prog,
        &mut ctx.state,
        &mut driver,
        &mut ctx.record,
        postselect,
        &mut ctx.noise_buf,
        |_, _| Ok(()),
    )
}

/// Order-insensitive per-run tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Counters {
    total: u64,
    preserved: u64,
    discarded: u64,
    overflow: u64,
    failed: u64,
    logical_errors: Vec<u64>,
    logical_error_shots: u64,
    max_entries: u64,
    /// `(shot, message)` of the lowest-indexed failed shot.
    first_failure: Option<(u64, String)>,
    overflowed: Vec<u64>,
}

impl Counters {
    fn new(num_observables: usize) -> Self {
        Counters {
            logical_errors: vec![0; num_observables],
            ..Default::default()
        }
    }

    fn add(&mut self, shot: u64, status: &ShotStatus, record: &ShotRecord) {
        self.total += 1;
        self.max_entries = self.max_entries.max(record.max_entries as u64);
        match status {
            ShotStatus::Preserved => {
                self.preserved += 1;
                let mut any = false;
                for (c, &bit) in self.logical_errors.iter_mut().zip(&record.observables) {
                    *c += bit as u64;
                    any |= bit;
                }
                self.logical_error_shots += any as u64;
            }
            ShotStatus::Discarded { .. } => self.discarded += 1,
            ShotStatus::Overflow { .. } => {
                self.overflow += 1;
                self.overflowed.push(shot);
            }
            ShotStatus::Failed { step, error } => {
                self.failed += 1;
                let msg = format!("shot {shot}, op {step}: {error}");
                self.note_failure(shot, msg);
            }
        }
    }

    fn note_failure(&mut self, shot: u64, msg: String) {
        if self.first_failure.as_ref().is_none_or(|(s, _)| shot < *s) {
            self.first_failure = Some((shot, msg));
        }
    }

    fn merge(mut self, other: Counters) -> Counters {
        self.total += other.total;
        self.preserved += other.preserved;
        self.discarded += other.discarded;
        self.overflow += other.overflow;
        self.failed += other.failed;
        for (a, b) in self.logical_errors.iter_mut().zip(other.logical_errors) {
            *a += b;
        }
        self.logical_error_shots += other.logical_error_shots;
        self.max_entries = self.max_entries.max(other.max_entries);
        if let Some((s, m)) = other.first_failure {
            self.note_failure(s, m);
        }
        self.overflowed.extend(other.overflowed);
        self
    }
}

/// Aggregate results of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub total_shots: u64,
    pub preserved_shots: u64,
    pub discarded_shots: u64,
    /// Shots aborted by a corrupt state; reported separately from overflow.
    pub failed_shots: u64,
    pub overflow_count: u64,
    pub discard_rate: f64,
    /// Preserved shots with each observable's parity equal to 1.
    pub logical_errors: Vec<u64>,
    /// Preserved shots with any observable parity equal to 1.
    pub logical_error_shots: u64,
    pub logical_error_rate: f64,
    pub bayes_lo: f64,
    pub bayes_hi: f64,
    /// Largest coefficient count reached by any shot.
    pub max_entries: u64,
    pub first_failure: Option<String>,
    pub wall_time_s: f64,
    pub throughput: f64,
}

impl RunStats {
    fn from_counters(c: Counters, wall_time_s: f64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (bayes_lo, bayes_hi) = if c.preserved == 0 {
            (0.0, 1.0)
        } else {
            bayes_interval(c.logical_error_shots, c.preserved, DEFAULT_BAYES_FACTOR).expect("valid counts")
        };
        RunStats {
            total_shots: c.total,
            preserved_shots: c.preserved,
            discarded_shots: c.discarded,
            failed_shots: c.failed,
            overflow_count: c.overflow,
            discard_rate: ratio(c.discarded, c.total),
            logical_errors: c.logical_errors,
            logical_error_shots: c.logical_error_shots,
            logical_error_rate: ratio(c.logical_error_shots, c.preserved),
            bayes_lo,
            bayes_hi,
            max_entries: c.max_entries,
            first_failure: c.first_failure.map(|f| f.1),
            wall_time_s,
            throughput: if wall_time_s > 0.0 {
                c.total as f64 / wall_time_s
            } else {
                0.0
            },
        }
    }

    /// The result with timing fields zeroed, for determinism comparisons.
    pub fn counters_only(&self) -> RunStats {
        RunStats {
            wall_time_s: 0.0,
            throughput: 0.0,
            ..self.clone()
        }
    }
}

/// Takes contexts from a shared pool and returns them on drop.
struct Pooled<'a> {
    ctx: Option<ShotContext>,
    pool: &'a Mutex<Vec<ShotContext>>,
}

impl Drop for Pooled<'_> {
    fn drop(&mut self) {
        if let Some(ctx) = self.ctx.take() {
            self.pool.lock().expect("pool poisoned").push(ctx);
        }
    }
}

fn checkout<'a>(pool: &'a Mutex<Vec<ShotContext>>, prog: &Compiled, capacity: usize) -> Pooled<'a> {
    let ctx = pool.lock().expect("pool poisoned").pop();
    let ctx = ctx.unwrap_or_else(|| ShotContext::new(prog, capacity).expect("qubit count checked"));
    Pooled { ctx: Some(ctx), pool }
}

fn run_shots(
    prog: &Compiled,
    shots: impl ParallelIterator<Item = u64>,
    pool: &Mutex<Vec<ShotContext>>,
    cfg: &SamplerConfig,
    capacity: usize,
) -> Counters {
    shots
        .map_init(
            || checkout(pool, prog, capacity),
            |ctx, shot| {
                let ctx = ctx.ctx.as_mut().expect("context present");
                let status = run_shot(prog, ctx, cfg.master_seed, shot, cfg.postselect);
                let mut c = Counters::new(prog.num_observables);
                c.add(shot, &status, &ctx.record);
                c
            },
        )
        .reduce(|| Counters::new(prog.num_observables), Counters::merge)
}

/// Runs `cfg.shots` shots of `prog`.
pub fn run_batch(prog: &CircuitProgram, cfg: &SamplerConfig) -> Result<RunStats, SimError> {
    cfg.validate()?;
    let compiled = Compiled::new(prog)?;
    GenStabState::with_capacity(compiled.num_qubits, 1)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| SimError::InvalidArgument(e.to_string()))?;
    let start = Instant::now();
    let counters = pool.install(|| run_waves(&compiled, cfg));
    Ok(RunStats::from_counters(counters, start.elapsed().as_secs_f64()))
}

fn run_waves(prog: &Compiled, cfg: &SamplerConfig) -> Counters {
    let contexts = Mutex::new(Vec::new());
    let mut total = Counters::new(prog.num_observables);
    let mut start = 0u64;
    while start < cfg.shots {
        let end = cfg.shots.min(start + cfg.batch_size as u64);
        let wave = run_shots(prog, (start..end).into_par_iter(), &contexts, cfg, cfg.entry_capacity);
        total = total.merge(wave);
        start = end;
    }
    if !cfg.rerun_on_overflow || total.overflowed.is_empty() {
        return total;
    }
    let mut pending = std::mem::take(&mut total.overflowed);
    pending.sort_unstable();
    let mut capacity = cfg.entry_capacity;
    for _ in 0..MAX_DOUBLINGS {
        if pending.is_empty() {
            break;
        }
        capacity *= 2;
        let bigger = Mutex::new(Vec::new());
        let rerun = run_shots(prog, pending.clone().into_par_iter(), &bigger, cfg, capacity);
        // The rerun replaces the overflow tallies of these shots.
        total.total -= pending.len() as u64;
        total.overflow -= pending.len() as u64;
        pending = rerun.overflowed.clone();
        pending.sort_unstable();
        total = total.merge(Counters {
            overflowed: Vec::new(),
            ..rerun
        });
    }
    total.overflowed = pending;
    total
}

fn log_likelihood(k: u64, n: u64, p: f64) -> f64 {
    let (k, m) = (k as f64, (n - k) as f64);
    let a = if k == 0.0 { 0.0 } else { k * p.ln() };
    let b = if m == 0.0 { 0.0 } else { m * (-p).ln_1p() };
    a + b
}

/// Bisects for the boundary of `{p : L(p) ≥ level}` between `inside` and
/// `outside`.
fn bisect(k: u64, n: u64, level: f64, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (inside + outside);
        if log_likelihood(k, n, mid) >= level {
            inside = mid;
        } else {
            outside = mid;
        }
        if (inside - outside).abs() <= 1e-12 * inside.abs().max(outside.abs()) {
            break;
        }
    }
    inside
}

/// Error rates whose binomial likelihood is within `factor` of the maximum:
/// `{p : Binom(k; N, p) ≥ Binom(k; N, k/N) / factor}`.
pub fn bayes_interval(k: u64, n: u64, factor: f64) -> Result<(f64, f64), SimError> {
    if n == 0 || k > n {
        return Err(SimError::InvalidArgument(format!(
            "need 0 <= k <= N and N >= 1 (k={k}, N={n})"
        )));
    }
    if factor < 1.0 {
        return Err(SimError::InvalidArgument("factor must be at least 1".into()));
    }
    let mle = k as f64 / n as f64;
    let level = log_likelihood(k, n, mle) - factor.ln();
    let lo = if k == 0 { 0.0 } else { bisect(k, n, level, mle, 0.0) };
    let hi = if k == n { 1.0 } else { bisect(k, n, level, mle, 1.0) };
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    BatchSize(Vec<usize>),
    Noise(Vec<f64>),
}

impl Sweep {
    pub fn parameter(&self) -> &'static str {
        match self {
            Sweep::BatchSize(_) => "batch_size",
            Sweep::Noise(_) => "noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub value: f64,
    pub shots_per_s: f64,
    pub discard_rate: f64,
}

/// Measures throughput across a parameter sweep. A noise sweep applies the
/// uniform noise model to the (noiseless) program at each strength.
pub fn throughput_bench(prog: &CircuitProgram, cfg: &SamplerConfig, sweep: &Sweep) -> Result<Vec<BenchRow>, SimError> {
    if cfg.shots == 0 {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    match sweep {
        Sweep::BatchSize(sizes) => {
            for &b in sizes {
                let stats = run_batch(
                    prog,
                    &SamplerConfig {
                        batch_size: b,
                        ..cfg.clone()
                    },
                )?;
                rows.push(BenchRow {
                    value: b as f64,
                    shots_per_s: stats.throughput,
                    discard_rate: stats.discard_rate,
                });
            }
        }
        Sweep::Noise(ps) => {
            for &p in ps {
                let noisy = apply_noise_model(prog, p).map_err(|e| SimError::InvalidArgument(e.to_string()))?;
                let stats = run_batch(&noisy, cfg)?;
                rows.push(BenchRow {
                    value: p,
                    shots_per_s: stats.throughput,
                    discard_rate: stats.discard_rate,
                });
            }
        }
    }
    Ok(rows)
}

/// CSV with header `<parameter>,shots_per_s,discard_rate`.
pub fn bench_csv(parameter: &str, rows: &[BenchRow]) -> String {
    let mut out = format!("{parameter},shots_per_s,discard_rate\n");
    for r in rows {
        out.push_str(&format!("{},{:.3},{:.6}\n", r.value, r.shots_per_s, r.discard_rate));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit;
    use std::collections::HashSet;

    #[test]
    fn derive_seed_golden() {
        assert_eq!(derive_seed(0, 0), 0x5cbc_0351_7cf2_29e1);
        assert_eq!(derive_seed(1, 0), 0xf277_fa77_2544_8841);
        assert_eq!(derive_seed(0, 1), 0x5fc3_4515_07e8_1e03);
        assert_eq!(derive_seed(12345, 678), 0x35b5_63fd_e583_c81c);
    }

    #[test]
    fn shot_rng_stream_golden() {
        let mut r = ShotRng::for_shot(0, 0);
        assert_eq!(r.next_u64(), 0x3397_0d72_babb_2c1a);
        assert_eq!(r.next_u64(), 0xd3ad_bf84_37be_d009);
        assert_eq!(
            r.uniform(),
            (0x183d_3d92_da96_31ac_u64 >> 11) as f64 / (1u64 << 53) as f64
        );
    }

    #[test]
    fn derive_seed_has_no_small_range_collisions() {
        let mut seen = HashSet::new();
        for i in 0..1_000_000u64 {
            assert!(seen.insert(derive_seed(42, i)));
        }
    }

    #[test]
    fn derive_seed_avalanche() {
        let trials = 10_000u64;
        let mut flipped = 0u64;
        for t in 0..trials {
            let master = t.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let bit = t % 64;
            flipped += (derive_seed(master, t) ^ derive_seed(master ^ (1 << bit), t)).count_ones() as u64;
        }
        let mean = flipped as f64 / trials as f64;
        assert!((mean - 32.0).abs() < 0.5, "mean flips {mean}");
    }

    #[test]
    fn uniforms_lie_in_unit_interval() {
        let mut r = ShotRng::new(5);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    fn cfg(shots: u64) -> SamplerConfig {
        SamplerConfig {
            shots,
            batch_size: 64,
            master_seed: 9,
            threads: 2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_shots_give_zero_stats() {
        let prog = parse_circuit("H 0\nM 0").unwrap();
        let s = run_batch(&prog, &cfg(0)).unwrap();
        assert_eq!(
            (s.total_shots, s.preserved_shots, s.discarded_shots, s.overflow_count),
            (0, 0, 0, 0)
        );
        assert_eq!(s.discard_rate, 0.0);
    }

    #[test]
    fn bell_pairs_are_preserved() {
        let prog = parse_circuit("H 0\nCX 0 1\nM 0 1\nDETECTOR rec[-1] rec[-2]").unwrap();
        let s = run_batch(&prog, &cfg(500)).unwrap();
        assert_eq!(s.preserved_shots, 500);
        assert_eq!(s.discard_rate, 0.0);
    }

    #[test]
    fn certain_flip_discards_every_shot() {
        let prog = parse_circuit("X_ERROR(1) 0\nM 0\nDETECTOR rec[-1]").unwrap();
        let s = run_batch(&prog, &cfg(100)).unwrap();
        assert_eq!(s.discarded_shots, 100);
        assert_eq!(s.discard_rate, 1.0);
    }

    #[test]
    fn logical_errors_count_observables_on_preserved_shots() {
        let prog = parse_circuit("H 0\nM 0\nOBSERVABLE_INCLUDE(0) rec[-1]").unwrap();
        let s = run_batch(&prog, &cfg(4000)).unwrap();
        assert_eq!(s.logical_errors.len(), 1);
        assert!((s.logical_error_rate - 0.5).abs() < 0.05, "{}", s.logical_error_rate);
        assert!(s.bayes_lo < s.logical_error_rate && s.logical_error_rate < s.bayes_hi);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let text = "H 0 1 2\nT 0 1\nCX 0 1 1 2\nDEPOLARIZE1(0.1) 0 1 2\nT_DAG 2\nM 0\nDETECTOR rec[-1]\nMPP X1*X2\nOBSERVABLE_INCLUDE(0) rec[-1]";
        let prog = parse_circuit(text).unwrap();
        let base = SamplerConfig {
            threads: 1,
            ..cfg(3000)
        };
        let a = run_batch(&prog, &base).unwrap().counters_only();
        let b = run_batch(
            &prog,
            &SamplerConfig {
                threads: 4,
                batch_size: 7,
                ..base.clone()
            },
        )
        .unwrap()
        .counters_only();
        assert_eq!(a, b);
        assert!(a.discarded_shots > 0 && a.preserved_shots > 0);
    }

    #[test]
    fn overflow_is_rerun_with_more_capacity() {
        let prog = parse_circuit("H 0 1 2 3\nT 0 1 2 3\nM 0").unwrap();
        let tight = SamplerConfig {
            entry_capacity: 2,
            rerun_on_overflow: false,
            ..cfg(20)
        };
        let s = run_batch(&prog, &tight).unwrap();
        assert_eq!(s.overflow_count, 20);
        assert_eq!(
            s.preserved_shots + s.discarded_shots + s.overflow_count + s.failed_shots,
            s.total_shots
        );
        let rerun = run_batch(
            &prog,
            &SamplerConfig {
                rerun_on_overflow: true,
                ..tight.clone()
            },
        )
        .unwrap();
        assert_eq!(
            (rerun.overflow_count, rerun.preserved_shots, rerun.total_shots),
            (0, 20, 20)
        );
        assert_eq!(rerun.max_entries, 16);
        let still = run_batch(
            &parse_circuit("H 0 1 2 3 4 5\nT 0 1 2 3 4 5").unwrap(),
            &SamplerConfig {
                rerun_on_overflow: true,
                ..tight
            },
        )
        .unwrap();
        assert_eq!(still.overflow_count, 20);
    }

    #[test]
    fn bad_configs_rejected() {
        let prog = parse_circuit("M 0").unwrap();
        assert!(run_batch(
            &prog,
            &SamplerConfig {
                batch_size: 0,
                ..cfg(1)
            }
        )
        .is_err());
        assert!(run_batch(
            &prog,
            &SamplerConfig {
                entry_capacity: 1,
                ..cfg(1)
            }
        )
        .is_err());
    }

    #[test]
    fn bayes_interval_closed_forms() {
        let n = 1_000_000u64;
        let (lo, hi) = bayes_interval(0, n, 1000.0).unwrap();
        let want = 1.0 - 1000f64.powf(-1.0 / n as f64);
        assert_eq!(lo, 0.0);
        assert!(((hi - want) / want).abs() < 1e-6, "{hi} vs {want}");
        assert!((hi - 6.9077e-6).abs() < 1e-9);
        let (lo, hi) = bayes_interval(50, 50, 1000.0).unwrap();
        assert_eq!(hi, 1.0);
        assert!((lo - 1000f64.powf(-1.0 / 50.0)).abs() < 1e-9);
        assert!(bayes_interval(0, 0, 1000.0).is_err());
        assert!(bayes_interval(3, 2, 1000.0).is_err());
    }

    #[test]
    fn bayes_interval_endpoints_sit_on_the_likelihood_level() {
        for (k, n) in [(1u64, 10u64), (22, 640_000_000), (500, 1000), (7, 7_000_000)] {
            let (lo, hi) = bayes_interval(k, n, 1000.0).unwrap();
            let mle = k as f64 / n as f64;
            let level = log_likelihood(k, n, mle) - 1000f64.ln();
            assert!(lo < mle && mle < hi);
            for e in [lo, hi] {
                assert!((log_likelihood(k, n, e) - level).abs() < 1e-6, "k={k} n={n}");
            }
        }
    }

    #[test]
    fn bench_with_no_shots_has_only_header() {
        let prog = parse_circuit("H 0\nM 0").unwrap();
        let rows = throughput_bench(&prog, &cfg(0), &Sweep::BatchSize(vec![1, 2])).unwrap();
        assert_eq!(bench_csv("batch_size", &rows), "batch_size,shots_per_s,discard_rate\n");
    }
}
