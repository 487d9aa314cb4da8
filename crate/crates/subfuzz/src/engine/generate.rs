//! Random program generation over the syscall table.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

use crate::program::{Arg, Invocation, Program};
use crate::target::syscalls::{ArgSpec, SyscallSpec, PATH_POOL, SYSCALLS};

use super::EngineError;

/// A result binding available to later calls.
#[derive(Debug, Clone)]
pub(crate) struct Binding {
    pub var: u32,
    pub kind: &'static str,
}

pub(crate) fn enabled_syscalls(disabled: &BTreeSet<String>) -> Vec<&'static SyscallSpec> {
    SYSCALLS.iter().filter(|s| !disabled.contains(s.name)).collect()
}

/// Syscalls whose resource arguments can all be satisfied by `bindings`.
pub(crate) fn eligible<'a>(
    enabled: &[&'a SyscallSpec],
    bindings: &[Binding],
) -> Vec<&'a SyscallSpec> {
    enabled
        .iter()
        .filter(|s| {
            s.args.iter().all(|a| match a.resource_kind() {
                Some(kind) => bindings.iter().any(|b| b.kind == kind),
                None => true,
            })
        })
        .copied()
        .collect()
}

pub(crate) fn gen_arg(rng: &mut ChaCha8Rng, spec: &ArgSpec, bindings: &[Binding]) -> Arg {
    match spec {
        ArgSpec::Const(v) => Arg::Int(*v),
        ArgSpec::IntRange { lo, hi } | ArgSpec::BufferLen { lo, hi } => {
            Arg::Int(rng.random_range(*lo..=*hi))
        }
        ArgSpec::FlagSet { bits } => {
            let mut v = 0;
            for bit in *bits {
                if rng.random_bool(0.5) {
                    v |= bit.value;
                }
            }
            Arg::Int(v)
        }
        ArgSpec::PathPool => Arg::Path(PATH_POOL[rng.random_range(0..PATH_POOL.len())].to_string()),
        ArgSpec::Resource { kind } => {
            let candidates: Vec<u32> =
                bindings.iter().filter(|b| b.kind == *kind).map(|b| b.var).collect();
            Arg::Ref(candidates[rng.random_range(0..candidates.len())])
        }
    }
}

/// Build one call of `spec`, appending a fresh binding when it produces a
/// resource. `next_var` must not collide with any binding in the program.
pub(crate) fn gen_call(
    rng: &mut ChaCha8Rng,
    spec: &'static SyscallSpec,
    bindings: &mut Vec<Binding>,
    next_var: &mut u32,
) -> Invocation {
    let args = spec.args.iter().map(|a| gen_arg(rng, a, bindings)).collect();
    let result = spec.returns_resource.map(|kind| {
        let var = *next_var;
        *next_var += 1;
        bindings.push(Binding { var, kind });
        var
    });
    Invocation { syscall: spec.name.to_string(), args, result }
}

/// Generate a random program of 1..=`max_len` calls using only enabled
/// syscalls; resource consumers are skipped while no producer binding is
/// live. Deterministic in the RNG state.
pub fn generate(
    rng: &mut ChaCha8Rng,
    disabled: &BTreeSet<String>,
    max_len: usize,
) -> Result<Program, EngineError> {
    let enabled = enabled_syscalls(disabled);
    if enabled.is_empty() {
        return Err(EngineError::AllSyscallsDisabled);
    }
    let len = rng.random_range(1..=max_len.max(1));
    let mut bindings = Vec::new();
    let mut next_var = 0u32;
    let mut calls = Vec::with_capacity(len);
    for _ in 0..len {
        let candidates = eligible(&enabled, &bindings);
        if candidates.is_empty() {
            return Err(EngineError::NoEligibleSyscalls);
        }
        let spec = candidates[rng.random_range(0..candidates.len())];
        calls.push(gen_call(rng, spec, &mut bindings, &mut next_var));
    }
    Ok(Program { calls })
}
