//! Syscall program representation and its text format.
//!
//! One call per line, optionally binding a produced resource:
//!
//! ```text
//! r0 = open("./file0", 0x42, 0x1ff)
//! read(r0, 0x20)
//! ```
//!
//! Arguments are decimal or `0x` hex integers, double-quoted path strings,
//! or `rN` resource references. Comments start with `#`. Serialization is
//! canonical (integers as lowercase hex), so `parse(serialize(p)) == p`.

use std::fmt;

use crate::target::syscalls::{self, ArgSpec, SyscallSpec};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arg {
    Int(u64),
    Path(String),
    /// Reference to the binding `rN` of an earlier call.
    Ref(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Invocation {
    pub syscall: String,
    pub args: Vec<Arg>,
    /// Result binding number, present iff the line reads `rN = ...`.
    pub result: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Program {
    pub calls: Vec<Invocation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramErrorKind {
    #[error("unknown syscall {0:?}")]
    UnknownSyscall(String),
    #[error("undefined resource variable r{0}")]
    UndefinedResource(u32),
    #[error("resource variable r{var} has kind {found:?}, expected {expected:?}")]
    ResourceKindMismatch { var: u32, expected: String, found: String },
    #[error("{0} takes {1} arguments, got {2}")]
    ArgCount(String, usize, usize),
    #[error("argument {0} has the wrong kind")]
    ArgKindMismatch(usize),
    #[error("result binding on {0:?}, which returns no resource")]
    BindingOnNonProducer(String),
    #[error("duplicate result binding r{0}")]
    DuplicateBinding(u32),
    #[error("malformed line: {0}")]
    Syntax(String),
}

/// A program error with its source location: the 1-based line number when
/// the program came from text, or the 1-based call index otherwise.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ProgramError {
    pub line: usize,
    pub kind: ProgramErrorKind,
}

impl Program {
    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    /// Canonical text form: one call per line, integers as lowercase hex.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for call in &self.calls {
            if let Some(n) = call.result {
                out.push_str(&format!("r{n} = "));
            }
            out.push_str(&call.syscall);
            out.push('(');
            for (i, arg) in call.args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                match arg {
                    Arg::Int(v) => out.push_str(&format!("{v:#x}")),
                    Arg::Path(p) => out.push_str(&format!("\"{p}\"")),
                    Arg::Ref(n) => out.push_str(&format!("r{n}")),
                }
            }
            out.push_str(")\n");
        }
        out
    }

    /// Parse and validate a program against the syscall table.
    pub fn parse(input: &str) -> Result<Program, ProgramError> {
        let mut calls = Vec::new();
        let mut lines = Vec::new();
        for (idx, raw) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw);
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let call = parse_call(line).map_err(|kind| ProgramError { line: line_no, kind })?;
            calls.push(call);
            lines.push(line_no);
        }
        let program = Program { calls };
        program
            .validate()
            .map_err(|e| ProgramError { line: lines[e.line - 1], kind: e.kind })?;
        Ok(program)
    }

    /// Check the program against the syscall table: known syscalls, arity,
    /// argument kinds, and the resource discipline (every `rN` names a
    /// binding of the matching kind made by an earlier call).
    ///
    /// Error locations are 1-based call indices.
    pub fn validate(&self) -> Result<(), ProgramError> {
        let mut bindings: Vec<(u32, &'static str)> = Vec::new();
        for (i, call) in self.calls.iter().enumerate() {
            let line = i + 1;
            let err = |kind| ProgramError { line, kind };
            let (_, spec) = syscalls::lookup(&call.syscall)
                .ok_or_else(|| err(ProgramErrorKind::UnknownSyscall(call.syscall.clone())))?;
            if call.args.len() != spec.args.len() {
                return Err(err(ProgramErrorKind::ArgCount(
                    call.syscall.clone(),
                    spec.args.len(),
                    call.args.len(),
                )));
            }
            for (ai, (arg, aspec)) in call.args.iter().zip(spec.args.iter()).enumerate() {
                match (arg, aspec) {
                    (Arg::Ref(var), ArgSpec::Resource { kind }) => {
                        let found = bindings.iter().find(|(v, _)| v == var);
                        match found {
                            None => return Err(err(ProgramErrorKind::UndefinedResource(*var))),
                            Some((_, k)) if k != kind => {
                                return Err(err(ProgramErrorKind::ResourceKindMismatch {
                                    var: *var,
                                    expected: kind.to_string(),
                                    found: k.to_string(),
                                }))
                            }
                            Some(_) => {}
                        }
                    }
                    (Arg::Int(_), ArgSpec::Resource { .. }) | (Arg::Path(_), ArgSpec::Resource { .. }) => {
                        return Err(err(ProgramErrorKind::ArgKindMismatch(ai)))
                    }
                    (Arg::Path(p), ArgSpec::PathPool) => {
                        if p.contains('"') || p.contains('\n') {
                            return Err(err(ProgramErrorKind::ArgKindMismatch(ai)));
                        }
                    }
                    (Arg::Int(_), ArgSpec::PathPool) | (Arg::Ref(_), ArgSpec::PathPool) => {
                        return Err(err(ProgramErrorKind::ArgKindMismatch(ai)))
                    }
                    (Arg::Int(_), _) => {}
                    (Arg::Path(_), _) | (Arg::Ref(_), _) => {
                        return Err(err(ProgramErrorKind::ArgKindMismatch(ai)))
                    }
                }
            }
            if let Some(var) = call.result {
                let kind = spec
                    .returns_resource
                    .ok_or_else(|| err(ProgramErrorKind::BindingOnNonProducer(call.syscall.clone())))?;
                if bindings.iter().any(|(v, _)| *v == var) {
                    return Err(err(ProgramErrorKind::DuplicateBinding(var)));
                }
                bindings.push((var, kind));
            }
        }
        Ok(())
    }

    /// The spec of each call, valid only for validated programs.
    pub fn specs(&self) -> Vec<&'static SyscallSpec> {
        self.calls
            .iter()
            .map(|c| syscalls::lookup(&c.syscall).expect("validated program").1)
            .collect()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

/// `rN` strictly: an `r` followed by one or more digits.
fn parse_var(tok: &str) -> Option<u32> {
    let digits = tok.strip_prefix('r')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn parse_call(line: &str) -> Result<Invocation, ProgramErrorKind> {
    let syntax = |msg: &str| ProgramErrorKind::Syntax(msg.to_string());

    // Optional `rN =` prefix. A leading identifier like `rand_fill` is not
    // a binding because the characters after `r` must all be digits.
    let (result, rest) = match line.split_once('=') {
        Some((lhs, rhs)) if parse_var(lhs.trim()).is_some() => {
            (Some(parse_var(lhs.trim()).unwrap()), rhs.trim())
        }
        _ => (None, line),
    };

    let open_paren = rest.find('(').ok_or_else(|| syntax("expected `(`"))?;
    let name = rest[..open_paren].trim();
    if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
        return Err(syntax("expected syscall name"));
    }
    let rest = &rest[open_paren + 1..];
    let close_paren = find_close_paren(rest).ok_or_else(|| syntax("expected `)`"))?;
    if !rest[close_paren + 1..].trim().is_empty() {
        return Err(syntax("trailing input after `)`"));
    }
    let args_text = &rest[..close_paren];

    let mut args = Vec::new();
    if !args_text.trim().is_empty() {
        for tok in split_args(args_text) {
            let tok = tok.trim();
            args.push(parse_arg(tok)?);
        }
    }
    Ok(Invocation { syscall: name.to_string(), args, result })
}

fn find_close_paren(s: &str) -> Option<usize> {
    let mut in_quote = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            ')' if !in_quote => return Some(i),
            _ => {}
        }
    }
    None
}

fn split_args(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_quote = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            ',' if !in_quote => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_arg(tok: &str) -> Result<Arg, ProgramErrorKind> {
    let malformed = || ProgramErrorKind::Syntax(format!("malformed argument {tok:?}"));
    if tok.is_empty() {
        return Err(malformed());
    }
    if tok.starts_with('"') {
        let inner = tok
            .strip_prefix('"')
            .and_then(|t| t.strip_suffix('"'))
            .ok_or_else(malformed)?;
        if inner.contains('"') {
            return Err(malformed());
        }
        return Ok(Arg::Path(inner.to_string()));
    }
    if let Some(var) = parse_var(tok) {
        return Ok(Arg::Ref(var));
    }
    if let Some(hex) = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        return u64::from_str_radix(hex, 16).map(Arg::Int).map_err(|_| malformed());
    }
    if let Some(dec) = tok.strip_prefix('-') {
        let v: u64 = dec.parse().map_err(|_| malformed())?;
        return Ok(Arg::Int(v.wrapping_neg()));
    }
    tok.parse::<u64>().map(Arg::Int).map_err(|_| malformed())
}
