//! The fuzzing engine: syzkaller-style generate/mutate loop with the
//! modified feedback rule — crashes are ignored (logged, never stored) and
//! a program is admitted to the corpus only if it covers at least one new
//! basic block inside the target subsystem, optionally beyond a fixed
//! baseline set (the complement-a-test-suite mode).
//!
//! With one worker the whole run is a deterministic function of the seed;
//! admissions are serialized through one corpus authority at any worker
//! count, so the admission invariants hold regardless.

mod corpus;
mod generate;
mod mutate;

pub use corpus::{persist, program_id, Corpus, CorpusEntry};
pub use generate::generate;
pub use mutate::{Mutator, DEFAULT_WEIGHTS};

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coverage::{
    coverage_stats, difference, intersection, union, BlockSet, CoverageStats, SubsystemSet,
};
use crate::target::{Outcome, Target};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("all syscalls disabled")]
    AllSyscallsDisabled,
    #[error("no eligible syscalls: every enabled syscall consumes a resource no enabled syscall produces")]
    NoEligibleSyscalls,
    #[error("invalid fuzz configuration: {0}")]
    InvalidConfig(String),
    #[error("fuzz log integrity: {0}")]
    LogIntegrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fuzzing run parameters.
#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub seed: u64,
    pub iterations: u64,
    pub workers: usize,
    pub disabled_syscalls: BTreeSet<String>,
    pub subsystem: SubsystemSet,
    pub max_program_len: usize,
    /// Operator weights: insert, remove, mutate-arg, splice.
    pub mutation_weights: [u32; 4],
    /// Probability of mutating a corpus member instead of generating fresh.
    pub mutate_ratio: f64,
    /// Blocks excluded from "new" accounting (e.g. an external suite's
    /// coverage); None disables the complement mode.
    pub baseline: Option<BlockSet>,
}

impl FuzzConfig {
    pub fn new(seed: u64, iterations: u64, subsystem: SubsystemSet) -> Self {
        FuzzConfig {
            seed,
            iterations,
            workers: 1,
            disabled_syscalls: BTreeSet::new(),
            subsystem,
            max_program_len: 12,
            mutation_weights: DEFAULT_WEIGHTS,
            mutate_ratio: 0.7,
            baseline: None,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.workers == 0 {
            return Err(EngineError::InvalidConfig("workers must be >= 1".into()));
        }
        if self.mutation_weights.iter().all(|w| *w == 0) {
            return Err(EngineError::InvalidConfig("mutation weights are all zero".into()));
        }
        if !(0.0..=1.0).contains(&self.mutate_ratio) {
            return Err(EngineError::InvalidConfig("mutate ratio outside [0, 1]".into()));
        }
        if self.max_program_len == 0 {
            return Err(EngineError::InvalidConfig("max program length must be >= 1".into()));
        }
        if self.subsystem.blocks.is_empty() {
            return Err(EngineError::InvalidConfig(format!(
                "subsystem {:?} contains no blocks",
                self.subsystem.name
            )));
        }
        if generate::enabled_syscalls(&self.disabled_syscalls).is_empty() {
            return Err(EngineError::AllSyscallsDisabled);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventOutcome {
    Admitted,
    RejectedNoNew,
    RejectedCrash,
}

impl EventOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventOutcome::Admitted => "admitted",
            EventOutcome::RejectedNoNew => "rejected_no_new",
            EventOutcome::RejectedCrash => "rejected_crash",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "admitted" => Some(EventOutcome::Admitted),
            "rejected_no_new" => Some(EventOutcome::RejectedNoNew),
            "rejected_crash" => Some(EventOutcome::RejectedCrash),
            _ => None,
        }
    }
}

impl fmt::Display for EventOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One loop iteration: the decision and the cumulative coverage counters
/// after it. The three counters are the three coverage curves (whole
/// kernel, subsystem, subsystem beyond the baseline), counted over the
/// stored corpus plus the baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzEvent {
    pub iteration: u64,
    pub program_id: String,
    pub outcome: EventOutcome,
    pub kernel_blocks: u64,
    pub subsys_blocks: u64,
    pub subsys_minus_baseline: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FuzzLog {
    pub events: Vec<FuzzEvent>,
}

impl FuzzLog {
    /// CSV form: `iteration,outcome,kernel,subsys,subsys_minus_baseline`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,outcome,kernel,subsys,subsys_minus_baseline\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.iteration, e.outcome, e.kernel_blocks, e.subsys_blocks, e.subsys_minus_baseline
            ));
        }
        out
    }

    /// Parse the CSV form; program ids are not part of the file format.
    pub fn parse_csv(input: &str) -> Result<FuzzLog, EngineError> {
        let mut events = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| EngineError::LogIntegrity(format!("line {}: {what}", idx + 1));
            if fields.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            events.push(FuzzEvent {
                iteration: fields[0].parse().map_err(|_| bad("bad iteration"))?,
                program_id: String::new(),
                outcome: EventOutcome::parse(fields[1]).ok_or_else(|| bad("bad outcome"))?,
                kernel_blocks: fields[2].parse().map_err(|_| bad("bad kernel count"))?,
                subsys_blocks: fields[3].parse().map_err(|_| bad("bad subsys count"))?,
                subsys_minus_baseline: fields[4].parse().map_err(|_| bad("bad baseline count"))?,
            });
        }
        Ok(FuzzLog { events })
    }

    pub fn crash_count(&self) -> usize {
        self.events.iter().filter(|e| e.outcome == EventOutcome::RejectedCrash).count()
    }

    pub fn admitted_count(&self) -> usize {
        self.events.iter().filter(|e| e.outcome == EventOutcome::Admitted).count()
    }
}

/// The admission rule: the candidate's new contribution is its trace
/// restricted to the subsystem, minus everything the corpus already covers
/// and minus the baseline. Admit iff that signature is non-empty.
pub fn admit(
    candidate_trace: &BlockSet,
    subsystem: &SubsystemSet,
    corpus_covered: &BlockSet,
    baseline: Option<&BlockSet>,
) -> Option<BlockSet> {
    let in_subsys = intersection(candidate_trace, &subsystem.blocks);
    let mut sig = difference(&in_subsys, corpus_covered);
    if let Some(base) = baseline {
        sig = difference(&sig, base);
    }
    if sig.is_empty() {
        None
    } else {
        Some(sig)
    }
}

struct Shared {
    corpus: Corpus,
    /// Union of all signatures (subsystem blocks beyond the baseline).
    covered_subsys: BlockSet,
    /// Union of admitted traces plus the baseline.
    covered_kernel: BlockSet,
    seen: BTreeSet<String>,
    log: Vec<FuzzEvent>,
    sequence: u64,
}

/// Run the feedback loop. Returns the corpus and the per-iteration log;
/// callers persist them with [`persist`].
pub fn fuzz(config: &FuzzConfig) -> Result<(Corpus, FuzzLog), EngineError> {
    config.validate()?;
    // surface generation dead-ends (only consumers enabled) before looping
    generate(
        &mut ChaCha8Rng::seed_from_u64(config.seed),
        &config.disabled_syscalls,
        config.max_program_len,
    )?;

    let baseline_subsys = config
        .baseline
        .as_ref()
        .map_or(0, |b| intersection(b, &config.subsystem.blocks).len() as u64);
    let shared = Mutex::new(Shared {
        corpus: Vec::new(),
        covered_subsys: BlockSet::new(),
        covered_kernel: config.baseline.clone().unwrap_or_default(),
        seen: BTreeSet::new(),
        log: Vec::new(),
        sequence: 0,
    });
    let next = AtomicU64::new(0);

    std::thread::scope(|scope| {
        for widx in 0..config.workers {
            let shared = &shared;
            let next = &next;
            scope.spawn(move || {
                worker_loop(config, widx as u64, shared, next, baseline_subsys);
            });
        }
    });

    let state = shared.into_inner().expect("no poisoned workers");
    Ok((state.corpus, FuzzLog { events: state.log }))
}

fn worker_loop(
    config: &FuzzConfig,
    widx: u64,
    shared: &Mutex<Shared>,
    next: &AtomicU64,
    baseline_subsys: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ widx.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut target = Target::new();
    let mutator = Mutator::new(
        config.disabled_syscalls.clone(),
        config.max_program_len,
        config.mutation_weights,
    );

    loop {
        if next.fetch_add(1, Ordering::SeqCst) >= config.iterations {
            break;
        }

        let corpus_len = shared.lock().unwrap().corpus.len();
        let program = if corpus_len > 0 && rng.random_bool(config.mutate_ratio) {
            let base_idx = rng.random_range(0..corpus_len);
            let donor_idx = rng.random_range(0..corpus_len);
            let (base, donor) = {
                let s = shared.lock().unwrap();
                (Arc::clone(&s.corpus[base_idx]), Arc::clone(&s.corpus[donor_idx]))
            };
            mutator.mutate(&base.program, &mut rng, Some(&donor.program))
        } else {
            generate(&mut rng, &config.disabled_syscalls, config.max_program_len)
                .expect("validated by fuzz() before looping")
        };
        let id = program_id(&program);

        // duplicates are rejected before execution
        {
            let mut s = shared.lock().unwrap();
            if s.seen.contains(&id) {
                log_event(&mut s, id, EventOutcome::RejectedNoNew, baseline_subsys);
                continue;
            }
            s.seen.insert(id.clone());
        }

        let result = target
            .execute(&program, true)
            .expect("generated and mutated programs always validate");

        let mut s = shared.lock().unwrap();
        match result.outcome {
            Outcome::Crash { .. } => {
                // ignore the crash: log it and move on, never store or
                // minimize the crashing program
                log_event(&mut s, id, EventOutcome::RejectedCrash, baseline_subsys);
            }
            Outcome::Ok => {
                match admit(
                    &result.trace.blocks,
                    &config.subsystem,
                    &s.covered_subsys,
                    config.baseline.as_ref(),
                ) {
                    None => log_event(&mut s, id, EventOutcome::RejectedNoNew, baseline_subsys),
                    Some(signature) => {
                        s.covered_subsys = union(&s.covered_subsys, &signature);
                        s.covered_kernel = union(&s.covered_kernel, &result.trace.blocks);
                        let admitted_at = s.sequence;
                        s.corpus.push(Arc::new(CorpusEntry {
                            id: id.clone(),
                            program,
                            signature,
                            full_trace: result.trace,
                            runtime_cost: result.runtime_cost,
                            admitted_at,
                        }));
                        log_event(&mut s, id, EventOutcome::Admitted, baseline_subsys);
                    }
                }
            }
        }
    }
}

fn log_event(s: &mut Shared, program_id: String, outcome: EventOutcome, baseline_subsys: u64) {
    let iteration = s.sequence;
    s.sequence += 1;
    s.log.push(FuzzEvent {
        iteration,
        program_id,
        outcome,
        kernel_blocks: s.covered_kernel.len() as u64,
        subsys_blocks: s.covered_subsys.len() as u64 + baseline_subsys,
        subsys_minus_baseline: s.covered_subsys.len() as u64,
    });
}

/// Replay result for one corpus entry.
#[derive(Debug, Clone)]
pub struct ReplayEntry {
    pub id: String,
    /// Subsystem coverage of the re-measured trace.
    pub stats: CoverageStats,
    /// Re-measured trace differs from the stored trace.
    pub diverged: bool,
    /// Entry failed to execute at all.
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub entries: Vec<ReplayEntry>,
    /// Union of all re-measured traces.
    pub union_trace: BlockSet,
    /// Union coverage of the subsystem.
    pub aggregate: CoverageStats,
    /// The three log counters recomputed from raw traces.
    pub recomputed_kernel: u64,
    pub recomputed_subsys: u64,
    pub recomputed_minus_baseline: u64,
    pub divergence_count: usize,
}

/// Re-execute every corpus entry, flagging divergence from the stored
/// traces, and recompute the coverage counters from scratch.
pub fn replay(
    corpus: &Corpus,
    subsystem: &SubsystemSet,
    baseline: Option<&BlockSet>,
) -> Result<ReplayReport, EngineError> {
    let mut target = Target::new();
    let mut entries = Vec::with_capacity(corpus.len());
    let mut union_trace = BlockSet::new();
    for entry in corpus {
        let (stats, diverged, failed, trace) = match target.execute(&entry.program, true) {
            Err(_) => (
                coverage_stats(&BlockSet::new(), subsystem)
                    .map_err(|e| EngineError::InvalidConfig(e.to_string()))?,
                true,
                true,
                BlockSet::new(),
            ),
            Ok(result) => {
                let crashed = result.outcome.is_crash();
                let diverged = crashed || result.trace != entry.full_trace;
                let stats = coverage_stats(&result.trace.blocks, subsystem)
                    .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
                (stats, diverged, crashed, result.trace.blocks)
            }
        };
        union_trace = union(&union_trace, &trace);
        entries.push(ReplayEntry { id: entry.id.clone(), stats, diverged, failed });
    }
    let aggregate = coverage_stats(&union_trace, subsystem)
        .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
    let empty = BlockSet::new();
    let base = baseline.unwrap_or(&empty);
    let with_base = union(&union_trace, base);
    let recomputed_kernel = with_base.len() as u64;
    let recomputed_subsys = intersection(&with_base, &subsystem.blocks).len() as u64;
    let recomputed_minus_baseline =
        difference(&intersection(&union_trace, &subsystem.blocks), base).len() as u64;
    let divergence_count = entries.iter().filter(|e| e.diverged).count();
    Ok(ReplayReport {
        entries,
        union_trace,
        aggregate,
        recomputed_kernel,
        recomputed_subsys,
        recomputed_minus_baseline,
        divergence_count,
    })
}
