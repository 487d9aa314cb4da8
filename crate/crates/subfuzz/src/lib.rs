//! subfuzz: a subsystem-targeted, coverage-guided syscall fuzzer and
//! coverage-analytics toolkit for a deterministic instrumented mini-kernel.
//!
//! The crate has three layers:
//!
//! * [`target`] — the mini-kernel: a miniature VFS plus non-VFS stub
//!   subsystems, every basic block instrumented with a probe from a static
//!   manifest, executing syscall-style programs deterministically.
//! * [`coverage`] — kcov-style trace files, addr2line-style block maps,
//!   subsystem classification by path regex, and coverage arithmetic.
//! * [`engine`] / [`minimize`] / [`report`] — the fuzzing loop (admit a
//!   program only if it adds new coverage inside the target subsystem,
//!   ignore crashes), greedy corpus/suite minimization, and the coverage
//!   analyses (per-suite table, Venn region counts, coverage-over-time).

pub mod cli;
pub mod coverage;
pub mod engine;
pub mod minimize;
pub mod program;
pub mod report;
pub mod target;
