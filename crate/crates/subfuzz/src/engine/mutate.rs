//! Mutation operators: insert call, remove call, mutate one argument,
//! splice with a corpus donor. Every operator repairs resource references
//! so the result always validates: a dangling reference is rewired to the
//! nearest earlier producer of the same kind, or the call is dropped.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

use crate::program::{Arg, Invocation, Program};
use crate::target::syscalls::{self, ArgSpec};

use super::generate::{eligible, enabled_syscalls, gen_arg, gen_call, Binding};

/// Default operator weights: insert 3, remove 1, mutate-arg 4, splice 2.
pub const DEFAULT_WEIGHTS: [u32; 4] = [3, 1, 4, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Insert,
    Remove,
    MutateArg,
    Splice,
}

const OPS: [Op; 4] = [Op::Insert, Op::Remove, Op::MutateArg, Op::Splice];

pub struct Mutator {
    pub disabled: BTreeSet<String>,
    pub max_len: usize,
    pub weights: [u32; 4],
}

impl Mutator {
    pub fn new(disabled: BTreeSet<String>, max_len: usize, weights: [u32; 4]) -> Self {
        Mutator { disabled, max_len, weights }
    }

    /// Mutate `program`, drawing a donor suffix from `donor` for splices.
    /// Returns a distinct valid program unless no operator is applicable,
    /// in which case the input is returned unchanged.
    pub fn mutate(&self, program: &Program, rng: &mut ChaCha8Rng, donor: Option<&Program>) -> Program {
        for _ in 0..8 {
            let Some(op) = self.pick_op(program, rng, donor) else { break };
            let candidate = match op {
                Op::Insert => self.insert(program, rng),
                Op::Remove => self.remove(program, rng),
                Op::MutateArg => self.mutate_arg(program, rng),
                Op::Splice => donor.and_then(|d| self.splice(program, d, rng)),
            };
            if let Some(p) = candidate {
                if p != *program && !p.is_empty() && p.validate().is_ok() {
                    return p;
                }
            }
        }
        program.clone()
    }

    fn pick_op(&self, program: &Program, rng: &mut ChaCha8Rng, donor: Option<&Program>) -> Option<Op> {
        let applicable: Vec<(Op, u32)> = OPS
            .iter()
            .zip(self.weights)
            .filter(|(op, w)| {
                *w > 0
                    && match op {
                        Op::Insert => program.len() < self.max_len,
                        Op::Remove => program.len() >= 2,
                        Op::MutateArg => !program.is_empty(),
                        Op::Splice => donor.is_some_and(|d| !d.is_empty()),
                    }
            })
            .map(|(op, w)| (*op, w))
            .collect();
        let total: u32 = applicable.iter().map(|(_, w)| w).sum();
        if total == 0 {
            return None;
        }
        let mut roll = rng.random_range(0..total);
        for (op, w) in applicable {
            if roll < w {
                return Some(op);
            }
            roll -= w;
        }
        unreachable!()
    }

    fn bindings_before(program: &Program, pos: usize) -> Vec<Binding> {
        program.calls[..pos]
            .iter()
            .filter_map(|c| {
                c.result.map(|var| Binding {
                    var,
                    kind: syscalls::lookup(&c.syscall).expect("valid program").1.returns_resource.expect("binding implies producer"),
                })
            })
            .collect()
    }

    fn max_var(program: &Program) -> u32 {
        program.calls.iter().filter_map(|c| c.result).max().map_or(0, |v| v + 1)
    }

    fn insert(&self, program: &Program, rng: &mut ChaCha8Rng) -> Option<Program> {
        let enabled = enabled_syscalls(&self.disabled);
        let pos = rng.random_range(0..=program.len());
        let mut bindings = Self::bindings_before(program, pos);
        let candidates = eligible(&enabled, &bindings);
        if candidates.is_empty() {
            return None;
        }
        let spec = candidates[rng.random_range(0..candidates.len())];
        let mut next_var = Self::max_var(program);
        let call = gen_call(rng, spec, &mut bindings, &mut next_var);
        let mut calls = program.calls.clone();
        calls.insert(pos, call);
        Some(Program { calls })
    }

    fn remove(&self, program: &Program, rng: &mut ChaCha8Rng) -> Option<Program> {
        let pos = rng.random_range(0..program.len());
        let mut calls = program.calls.clone();
        calls.remove(pos);
        Some(repair(calls, &self.disabled))
    }

    fn mutate_arg(&self, program: &Program, rng: &mut ChaCha8Rng) -> Option<Program> {
        let pos = rng.random_range(0..program.len());
        let call = &program.calls[pos];
        if call.args.is_empty() {
            return None;
        }
        let spec = syscalls::lookup(&call.syscall).expect("valid program").1;
        let ai = rng.random_range(0..call.args.len());
        let bindings = Self::bindings_before(program, pos);
        let new_arg = match &spec.args[ai] {
            ArgSpec::Resource { kind } => {
                // rewire to another live binding of the same kind
                let candidates: Vec<u32> =
                    bindings.iter().filter(|b| b.kind == *kind).map(|b| b.var).collect();
                if candidates.is_empty() {
                    return None;
                }
                Arg::Ref(candidates[rng.random_range(0..candidates.len())])
            }
            other => gen_arg(rng, other, &bindings),
        };
        let mut calls = program.calls.clone();
        calls[pos].args[ai] = new_arg;
        Some(Program { calls })
    }

    fn splice(&self, program: &Program, donor: &Program, rng: &mut ChaCha8Rng) -> Option<Program> {
        let keep = rng.random_range(0..=program.len().min(self.max_len));
        let from = rng.random_range(0..donor.len());
        let mut calls: Vec<Invocation> = program.calls[..keep].to_vec();
        // renumber donor bindings above everything in sight
        let shift = Self::max_var(program) + Self::max_var(donor);
        for call in &donor.calls[from..] {
            if calls.len() >= self.max_len {
                break;
            }
            let mut call = call.clone();
            for arg in &mut call.args {
                if let Arg::Ref(v) = arg {
                    *v += shift;
                }
            }
            if let Some(v) = &mut call.result {
                *v += shift;
            }
            calls.push(call);
        }
        Some(repair(calls, &self.disabled))
    }
}

/// Drop disabled calls, then rewire every dangling resource reference to
/// the nearest earlier producer of the matching kind; calls that cannot be
/// repaired are dropped (which may cascade).
fn repair(calls: Vec<Invocation>, disabled: &BTreeSet<String>) -> Program {
    let mut out: Vec<Invocation> = Vec::with_capacity(calls.len());
    let mut live: Vec<Binding> = Vec::new();
    'calls: for mut call in calls {
        let Some((_, spec)) = syscalls::lookup(&call.syscall) else { continue };
        if disabled.contains(spec.name) {
            continue;
        }
        for (arg, aspec) in call.args.iter_mut().zip(spec.args.iter()) {
            if let (Arg::Ref(var), Some(kind)) = (&arg.clone(), aspec.resource_kind()) {
                let defined = live.iter().any(|b| b.var == *var && b.kind == kind);
                if !defined {
                    // nearest earlier producer of this kind
                    match live.iter().rev().find(|b| b.kind == kind) {
                        Some(b) => *arg = Arg::Ref(b.var),
                        None => continue 'calls,
                    }
                }
            }
        }
        if let Some(var) = call.result {
            match spec.returns_resource {
                Some(kind) if !live.iter().any(|b| b.var == var) => {
                    live.push(Binding { var, kind });
                }
                Some(_) => {
                    // duplicate binding number after a splice: renumber
                    let fresh = live.iter().map(|b| b.var).max().unwrap_or(0) + 1;
                    call.result = Some(fresh);
                    live.push(Binding { var: fresh, kind: spec.returns_resource.unwrap() });
                }
                None => call.result = None,
            }
        }
        out.push(call);
    }
    Program { calls: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::generate::generate;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn mutator() -> Mutator {
        Mutator::new(BTreeSet::new(), 12, DEFAULT_WEIGHTS)
    }

    #[test]
    fn removing_a_producer_repairs_or_drops_consumers() {
        let p = Program::parse(
            "r0 = open(\"./file0\", 0x2, 0x0)\nr1 = open(\"./file1\", 0x42, 0x1ff)\nread(r0, 0x20)\n",
        )
        .unwrap();
        // drop the call binding r0: read must rewire to r1
        let repaired = repair(
            vec![p.calls[1].clone(), p.calls[2].clone()],
            &BTreeSet::new(),
        );
        repaired.validate().unwrap();
        assert_eq!(repaired.calls[1].args[0], Arg::Ref(1));

        // no other producer: the read is dropped
        let repaired = repair(vec![p.calls[2].clone()], &BTreeSet::new());
        repaired.validate().unwrap();
        assert!(repaired.is_empty());
    }

    #[test]
    fn flag_set_mutation_stays_within_defined_bits() {
        let m = mutator();
        let p = Program::parse("r0 = open(\"./file0\", 0x42, 0x1ff)\n").unwrap();
        let all_bits: u64 = syscalls::OPEN_FLAGS.iter().map(|b| b.value).sum();
        let mut r = rng(7);
        for _ in 0..200 {
            let q = m.mutate(&p, &mut r, None);
            q.validate().unwrap();
            for call in &q.calls {
                if call.syscall == "open" {
                    if let Arg::Int(flags) = call.args[1] {
                        assert_eq!(flags & !all_bits, 0, "stray flag bits in {flags:#x}");
                    }
                }
            }
        }
    }

    #[test]
    fn mutations_of_generated_programs_always_validate() {
        let m = mutator();
        let mut r = rng(99);
        let donor = generate(&mut r, &BTreeSet::new(), 12).unwrap();
        let mut p = generate(&mut r, &BTreeSet::new(), 12).unwrap();
        for i in 0..2000 {
            let q = m.mutate(&p, &mut r, Some(&donor));
            q.validate().unwrap_or_else(|e| panic!("step {i}: {e}\n{q}"));
            assert!(q.len() <= 12);
            p = q;
            if p.is_empty() {
                p = generate(&mut r, &BTreeSet::new(), 12).unwrap();
            }
        }
    }

    #[test]
    fn mutation_differs_unless_nothing_applies() {
        let m = mutator();
        let mut r = rng(3);
        let p = generate(&mut r, &BTreeSet::new(), 12).unwrap();
        let mut changed = 0;
        for _ in 0..100 {
            if m.mutate(&p, &mut r, None) != p {
                changed += 1;
            }
        }
        assert!(changed >= 95, "only {changed}/100 mutations changed the program");
    }

    #[test]
    fn splice_respects_disabled_and_length() {
        let disabled: BTreeSet<String> = ["sched_hint", "net_ping", "timer_sleep", "rand_fill"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let m = Mutator::new(disabled.clone(), 6, [0, 0, 0, 1]);
        let mut r = rng(11);
        let donor = Program::parse(
            "sched_hint(0x1, 0x1)\nr0 = open(\"./file0\", 0x0, 0x0)\nread(r0, 0x10)\nnet_ping(0x1, 0x8, 0x1)\n",
        )
        .unwrap();
        for _ in 0..100 {
            let base = generate(&mut r, &disabled, 6).unwrap();
            let q = m.mutate(&base, &mut r, Some(&donor));
            q.validate().unwrap();
            assert!(q.len() <= 6);
            for call in &q.calls {
                assert!(!disabled.contains(&call.syscall), "disabled syscall in {q}");
            }
        }
    }
}
