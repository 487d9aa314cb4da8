//! Coverage trace and block-map handling: kcov-style trace files,
//! addr2line-style block maps, subsystem classification by path regex,
//! and the set algebra / percentage arithmetic used by every report.
//!
//! All operations here are pure functions over immutable inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use regex::Regex;

/// A set of basic-block addresses. Kept ordered so every serialization is
/// canonical.
pub type BlockSet = BTreeSet<u64>;

/// Default classification pattern for the VFS subsystem: generic filesystem
/// code, the mm file-I/O paths (readahead, page-writeback), and the
/// corresponding headers.
pub const DEFAULT_SUBSYSTEM_PATTERN: &str = r"/fs/|/mm/|fs\.h|mm\.h";

/// Default subsystem name used when none is given on the command line.
pub const DEFAULT_SUBSYSTEM_NAME: &str = "vfs";

#[derive(Debug, thiserror::Error)]
pub enum CoverageError {
    #[error("line {line}: invalid block address {token:?}")]
    BadAddress { line: usize, token: String },
    #[error("line {line}: missing source path")]
    MissingPath { line: usize },
    #[error("line {line}: duplicate block address {addr:#x}")]
    DuplicateAddress { line: usize, addr: u64 },
    #[error("invalid subsystem pattern: {0}")]
    BadPattern(#[from] regex::Error),
    #[error("subsystem {0:?} contains no blocks, percentage undefined")]
    EmptySubsystem(String),
}

/// The set of basic-block addresses observed during one execution.
///
/// Traces are sets, not sequences: the analysis is purely set-based, so
/// ordering and hit multiplicity are discarded at parse time.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoverageTrace {
    pub blocks: BlockSet,
}

impl CoverageTrace {
    pub fn new(blocks: BlockSet) -> Self {
        CoverageTrace { blocks }
    }

    /// Parse the trace file format: one `0x`-prefixed lowercase-hex address
    /// per line, blank lines permitted, duplicates collapsed.
    pub fn parse(input: &str) -> Result<Self, CoverageError> {
        let mut blocks = BlockSet::new();
        for (idx, raw) in input.lines().enumerate() {
            let token = raw.trim();
            if token.is_empty() {
                continue;
            }
            blocks.insert(parse_block_addr(token, idx + 1)?);
        }
        Ok(CoverageTrace { blocks })
    }

    /// Serialize to the trace file format: ascending addresses, LF endings.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.blocks.len() * 12);
        for addr in &self.blocks {
            out.push_str(&format!("{addr:#x}\n"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, addr: u64) -> bool {
        self.blocks.contains(&addr)
    }
}

impl FromIterator<u64> for CoverageTrace {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        CoverageTrace {
            blocks: iter.into_iter().collect(),
        }
    }
}

fn parse_block_addr(token: &str, line: usize) -> Result<u64, CoverageError> {
    let bad = || CoverageError::BadAddress {
        line,
        token: token.to_string(),
    };
    let digits = token.strip_prefix("0x").ok_or_else(bad)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(bad());
    }
    u64::from_str_radix(digits, 16).map_err(|_| bad())
}

/// Mapping from a block address to the source files it was compiled from.
/// Inlining yields more than one path for a single address.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlockMap {
    entries: BTreeMap<u64, Vec<String>>,
}

impl BlockMap {
    pub fn new() -> Self {
        BlockMap::default()
    }

    /// Insert one entry; duplicate addresses are an error (line 0 when the
    /// entry does not come from a file).
    pub fn insert(&mut self, addr: u64, paths: Vec<String>) -> Result<(), CoverageError> {
        if paths.is_empty() || paths.iter().any(|p| p.is_empty()) {
            return Err(CoverageError::MissingPath { line: 0 });
        }
        if self.entries.contains_key(&addr) {
            return Err(CoverageError::DuplicateAddress { line: 0, addr });
        }
        self.entries.insert(addr, paths);
        Ok(())
    }

    /// Parse the block map file format: `0x<hex>\t<path>[,<path>...]` per
    /// line, one line per probe.
    pub fn parse(input: &str) -> Result<Self, CoverageError> {
        let mut map = BlockMap::new();
        for (idx, raw) in input.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let (addr_tok, path_field) = raw
                .split_once('\t')
                .ok_or(CoverageError::MissingPath { line })?;
            let addr = parse_block_addr(addr_tok.trim(), line)?;
            let paths: Vec<String> = path_field
                .split(',')
                .map(|p| p.trim().to_string())
                .collect();
            if paths.iter().any(|p| p.is_empty()) {
                return Err(CoverageError::MissingPath { line });
            }
            if map.entries.contains_key(&addr) {
                return Err(CoverageError::DuplicateAddress { line, addr });
            }
            map.entries.insert(addr, paths);
        }
        Ok(map)
    }

    /// Serialize: one line per probe, ascending addresses, LF endings.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (addr, paths) in &self.entries {
            out.push_str(&format!("{addr:#x}\t{}\n", paths.join(",")));
        }
        out
    }

    pub fn total_blocks(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn addresses(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.keys().copied()
    }

    pub fn paths(&self, addr: u64) -> Option<&[String]> {
        self.entries.get(&addr).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[String])> {
        self.entries.iter().map(|(a, p)| (*a, p.as_slice()))
    }
}

/// The subset of block addresses classified as belonging to a subsystem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemSet {
    pub name: String,
    pub pattern: String,
    pub blocks: BlockSet,
}

impl SubsystemSet {
    pub fn total(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn contains(&self, addr: u64) -> bool {
        self.blocks.contains(&addr)
    }
}

/// Classify the map's blocks into a subsystem: a block is a member iff any
/// of its source paths matches the pattern (unanchored search).
///
/// Paths are normalized to carry a leading `/` before matching so that the
/// separator-delimited alternatives (`/fs/`) also match repo-relative paths
/// like `fs/minivfs/inode.c`.
pub fn classify(map: &BlockMap, name: &str, pattern: &str) -> Result<SubsystemSet, CoverageError> {
    let re = Regex::new(pattern)?;
    let mut blocks = BlockSet::new();
    for (addr, paths) in map.iter() {
        if paths.iter().any(|p| re.is_match(&normalize_path(p))) {
            blocks.insert(addr);
        }
    }
    Ok(SubsystemSet {
        name: name.to_string(),
        pattern: pattern.to_string(),
        blocks,
    })
}

fn normalize_path(path: &str) -> String {
    if path.starts_with('/') {
        path.to_string()
    } else {
        format!("/{path}")
    }
}

/// Covered/total counts with the percentage pre-rounded for display.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageStats {
    pub covered: u64,
    pub total: u64,
    /// Percentage in tenths of a percent, rounded half-up (347 == 34.7%).
    pub pct_tenths: u64,
}

impl CoverageStats {
    pub fn pct(&self) -> f64 {
        self.pct_tenths as f64 / 10.0
    }

    /// The percentage as printed: one decimal, half-up.
    pub fn pct_string(&self) -> String {
        format_tenths(self.pct_tenths)
    }
}

impl fmt::Display for CoverageStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} ({}%)", self.covered, self.total, self.pct_string())
    }
}

/// Render tenths-of-a-percent as `D.D`.
pub fn format_tenths(tenths: u64) -> String {
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// 100 * covered / total in tenths of a percent, rounded half-up, computed
/// in integer arithmetic so printed percentages are exact.
pub fn percent_tenths(covered: u64, total: u64) -> u64 {
    assert!(total > 0, "percentage undefined for total == 0");
    let num = 2u128 * 1000 * covered as u128 + total as u128;
    (num / (2 * total as u128)) as u64
}

/// Coverage of `covered` relative to a subsystem; addresses outside the
/// subsystem are ignored.
pub fn coverage_stats(covered: &BlockSet, subsystem: &SubsystemSet) -> Result<CoverageStats, CoverageError> {
    let total = subsystem.total();
    if total == 0 {
        return Err(CoverageError::EmptySubsystem(subsystem.name.clone()));
    }
    let covered_in = intersection(covered, &subsystem.blocks).len() as u64;
    Ok(CoverageStats {
        covered: covered_in,
        total,
        pct_tenths: percent_tenths(covered_in, total),
    })
}

pub fn union(a: &BlockSet, b: &BlockSet) -> BlockSet {
    a.union(b).copied().collect()
}

pub fn intersection(a: &BlockSet, b: &BlockSet) -> BlockSet {
    a.intersection(b).copied().collect()
}

pub fn difference(a: &BlockSet, b: &BlockSet) -> BlockSet {
    a.difference(b).copied().collect()
}

/// Union over many sets, handy for suite aggregation.
pub fn union_all<'a, I: IntoIterator<Item = &'a BlockSet>>(sets: I) -> BlockSet {
    let mut out = BlockSet::new();
    for s in sets {
        out.extend(s.iter().copied());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[u64]) -> BlockSet {
        items.iter().copied().collect()
    }

    fn subsystem(items: &[u64]) -> SubsystemSet {
        SubsystemSet {
            name: "vfs".into(),
            pattern: DEFAULT_SUBSYSTEM_PATTERN.into(),
            blocks: set(items),
        }
    }

    #[test]
    fn trace_parse_collapses_duplicates() {
        let t = CoverageTrace::parse("0x1a\n0x2b\n0x1a\n").unwrap();
        assert_eq!(t.blocks, set(&[0x1a, 0x2b]));
    }

    #[test]
    fn trace_parse_empty_input() {
        let t = CoverageTrace::parse("").unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn trace_parse_rejects_bad_token_with_line() {
        let err = CoverageTrace::parse("0x1a\nzz\n").unwrap_err();
        match err {
            CoverageError::BadAddress { line, token } => {
                assert_eq!(line, 2);
                assert_eq!(token, "zz");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn trace_parse_rejects_uppercase_and_bare_decimal() {
        assert!(CoverageTrace::parse("0x1A\n").is_err());
        assert!(CoverageTrace::parse("17\n").is_err());
        assert!(CoverageTrace::parse("0x\n").is_err());
    }

    #[test]
    fn block_map_single_and_multi_path() {
        let m = BlockMap::parse("0x10\tfs/minivfs/file.c\n").unwrap();
        assert_eq!(m.total_blocks(), 1);
        assert_eq!(m.paths(0x10).unwrap().len(), 1);

        let m = BlockMap::parse("0x11\tfs/minivfs/namei.c,include/linux/fs.h\n").unwrap();
        assert_eq!(m.total_blocks(), 1);
        assert_eq!(
            m.paths(0x11).unwrap(),
            ["fs/minivfs/namei.c".to_string(), "include/linux/fs.h".to_string()]
        );
    }

    #[test]
    fn block_map_rejects_duplicate_address() {
        let err = BlockMap::parse("0x10\ta.c\n0x10\tb.c\n").unwrap_err();
        match err {
            CoverageError::DuplicateAddress { line, addr } => {
                assert_eq!(line, 2);
                assert_eq!(addr, 0x10);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn block_map_rejects_missing_path() {
        assert!(BlockMap::parse("0x10\n").is_err());
        assert!(BlockMap::parse("0x10\t\n").is_err());
        assert!(BlockMap::parse("0x10\ta.c,,b.c\n").is_err());
    }

    #[test]
    fn classify_default_pattern_examples() {
        let mut map = BlockMap::new();
        map.insert(1, vec!["fs/minivfs/inode.c".into()]).unwrap();
        map.insert(2, vec!["mm/readahead.c".into()]).unwrap();
        map.insert(3, vec!["kernel/sched/core.c".into()]).unwrap();
        map.insert(4, vec!["include/linux/fs.h".into()]).unwrap();
        let s = classify(&map, "vfs", DEFAULT_SUBSYSTEM_PATTERN).unwrap();
        assert_eq!(s.blocks, set(&[1, 2, 4]));
    }

    #[test]
    fn classify_inlined_multi_path_entry_counts_once() {
        let mut map = BlockMap::new();
        map.insert(7, vec!["kernel/sched/core.c".into(), "include/linux/fs.h".into()])
            .unwrap();
        let s = classify(&map, "vfs", DEFAULT_SUBSYSTEM_PATTERN).unwrap();
        assert_eq!(s.blocks, set(&[7]));
    }

    #[test]
    fn classify_rejects_bad_pattern() {
        let map = BlockMap::new();
        assert!(classify(&map, "vfs", "(").is_err());
    }

    #[test]
    fn stats_reproduce_table_percentages() {
        let subsys = SubsystemSet {
            name: "vfs".into(),
            pattern: String::new(),
            blocks: (1..=75531).collect(),
        };
        let covered: BlockSet = (1..=26229).collect();
        let st = coverage_stats(&covered, &subsys).unwrap();
        assert_eq!(st.covered, 26229);
        assert_eq!(st.pct_string(), "34.7");

        let covered: BlockSet = (1..=24217).collect();
        let st = coverage_stats(&covered, &subsys).unwrap();
        assert_eq!(st.pct_string(), "32.1");
    }

    #[test]
    fn stats_full_coverage_is_100() {
        let s = subsystem(&[1, 2, 3]);
        let st = coverage_stats(&s.blocks.clone(), &s).unwrap();
        assert_eq!(st.pct_string(), "100.0");
    }

    #[test]
    fn stats_outside_addresses_ignored() {
        let s = subsystem(&[1, 2, 3, 4]);
        let st = coverage_stats(&set(&[1, 99, 100]), &s).unwrap();
        assert_eq!(st.covered, 1);
    }

    #[test]
    fn stats_empty_subsystem_is_error() {
        let s = subsystem(&[]);
        assert!(coverage_stats(&set(&[1]), &s).is_err());
    }

    #[test]
    fn percent_rounds_half_up() {
        // 1/16 = 6.25% -> 6.3; 1/8 = 12.5% -> 12.5; 1/3 = 33.333 -> 33.3
        assert_eq!(percent_tenths(1, 16), 63);
        assert_eq!(percent_tenths(1, 8), 125);
        assert_eq!(percent_tenths(1, 3), 333);
        // exact .X5 boundary: 15/200 = 7.5% -> 75 tenths; 1/2000 = 0.05% -> 0.1
        assert_eq!(percent_tenths(1, 2000), 1);
    }

    #[test]
    fn set_ops_examples() {
        let a = set(&[1, 2]);
        let b = set(&[2, 3]);
        assert_eq!(union(&a, &b), set(&[1, 2, 3]));
        assert_eq!(intersection(&a, &b), set(&[2]));
        assert_eq!(difference(&a, &b), set(&[1]));

        let empty = BlockSet::new();
        assert_eq!(union(&empty, &b), b);
        assert_eq!(intersection(&empty, &b), empty);
    }

    proptest! {
        #[test]
        fn trace_round_trip(blocks in proptest::collection::btree_set(any::<u64>(), 0..200)) {
            let t = CoverageTrace::new(blocks);
            let parsed = CoverageTrace::parse(&t.to_text()).unwrap();
            prop_assert_eq!(parsed, t);
        }

        #[test]
        fn set_ops_match_membership_scan(
            a in proptest::collection::btree_set(0u64..10_000, 0..300),
            b in proptest::collection::btree_set(0u64..10_000, 0..300),
        ) {
            // element-by-element oracle over the candidate universe
            let mut u = BlockSet::new();
            let mut i = BlockSet::new();
            let mut d = BlockSet::new();
            for x in 0u64..10_000 {
                let ina = a.contains(&x);
                let inb = b.contains(&x);
                if ina || inb { u.insert(x); }
                if ina && inb { i.insert(x); }
                if ina && !inb { d.insert(x); }
            }
            prop_assert_eq!(union(&a, &b), u);
            prop_assert_eq!(intersection(&a, &b), i);
            prop_assert_eq!(difference(&a, &b), d);
        }

        #[test]
        fn classification_is_path_local(
            matching in proptest::collection::btree_set(0u64..500, 1..40),
            extra in proptest::collection::btree_set(500u64..1000, 1..40),
        ) {
            let mut map = BlockMap::new();
            for &a in &matching {
                map.insert(a, vec![format!("fs/minivfs/gen{a}.c")]).unwrap();
            }
            let before = classify(&map, "vfs", DEFAULT_SUBSYSTEM_PATTERN).unwrap();
            for &a in &extra {
                map.insert(a, vec![format!("kernel/gen{a}.c")]).unwrap();
            }
            let after = classify(&map, "vfs", DEFAULT_SUBSYSTEM_PATTERN).unwrap();
            prop_assert_eq!(before.blocks, after.blocks);
        }

        #[test]
        fn classify_match_all_and_match_none(
            addrs in proptest::collection::btree_set(any::<u64>(), 0..50),
        ) {
            let mut map = BlockMap::new();
            for &a in &addrs {
                map.insert(a, vec![format!("lib/file{}.c", a % 7)]).unwrap();
            }
            let all = classify(&map, "all", ".").unwrap();
            prop_assert_eq!(all.blocks.len(), addrs.len());
            let none = classify(&map, "none", "zzz-never-matches").unwrap();
            prop_assert!(none.blocks.is_empty());
        }

        #[test]
        fn coverage_stats_monotone(
            small in proptest::collection::btree_set(0u64..200, 0..100),
            more in proptest::collection::btree_set(0u64..200, 0..100),
        ) {
            let s = SubsystemSet {
                name: "vfs".into(),
                pattern: String::new(),
                blocks: (0..200).collect(),
            };
            let big = union(&small, &more);
            let st_small = coverage_stats(&small, &s).unwrap();
            let st_big = coverage_stats(&big, &s).unwrap();
            prop_assert!(st_small.covered <= st_big.covered);
            prop_assert!(st_small.pct_tenths <= st_big.pct_tenths);
        }
    }
}
