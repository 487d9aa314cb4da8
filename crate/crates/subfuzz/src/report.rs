//! Coverage analyses over traces and fuzz logs: the per-suite coverage
//! table, three-set Venn region counts, the coverage-over-time series, and
//! combined-coverage arithmetic for a baseline suite plus generated
//! programs. Output is CSV; plotting is left to external tooling.

use crate::coverage::{
    difference, format_tenths, intersection, percent_tenths, union, union_all, BlockSet,
    CoverageStats, CoverageTrace, SubsystemSet,
};
use crate::engine::{EventOutcome, FuzzLog};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no suites given")]
    NoSuites,
    #[error("subsystem {0:?} contains no blocks")]
    EmptySubsystem(String),
    #[error("base coverage is empty, relative gain undefined")]
    EmptyBase,
    #[error("fuzz log integrity: cumulative counts decrease at iteration {0}")]
    DecreasingCounts(u64),
}

/// One row of the per-suite coverage table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteRow {
    pub suite: String,
    pub tests: u64,
    pub stats: CoverageStats,
}

/// Per-suite coverage of a subsystem plus a union-based total row. Suites
/// overlap, so the total is the union of their covered sets, not the
/// column sum.
pub fn suite_table(
    suites: &[(String, u64, Vec<CoverageTrace>)],
    subsystem: &SubsystemSet,
) -> Result<(Vec<SuiteRow>, SuiteRow), ReportError> {
    if suites.is_empty() {
        return Err(ReportError::NoSuites);
    }
    let total = subsystem.total();
    if total == 0 {
        return Err(ReportError::EmptySubsystem(subsystem.name.clone()));
    }
    let mut rows = Vec::with_capacity(suites.len());
    let mut all = BlockSet::new();
    let mut tests_total = 0;
    for (name, tests, traces) in suites {
        let suite_union = union_all(traces.iter().map(|t| &t.blocks));
        let covered_set = intersection(&suite_union, &subsystem.blocks);
        all = union(&all, &covered_set);
        tests_total += tests;
        let covered = covered_set.len() as u64;
        rows.push(SuiteRow {
            suite: name.clone(),
            tests: *tests,
            stats: CoverageStats { covered, total, pct_tenths: percent_tenths(covered, total) },
        });
    }
    let covered = all.len() as u64;
    let total_row = SuiteRow {
        suite: "TOTAL".into(),
        tests: tests_total,
        stats: CoverageStats { covered, total, pct_tenths: percent_tenths(covered, total) },
    };
    Ok((rows, total_row))
}

/// `table.csv`: `suite,tests,covered,pct`, final row TOTAL.
pub fn table_csv(rows: &[SuiteRow], total: &SuiteRow) -> String {
    let mut out = String::from("suite,tests,covered,pct\n");
    for row in rows.iter().chain(std::iter::once(total)) {
        out.push_str(&format!(
            "{},{},{},{}%\n",
            row.suite,
            row.tests,
            row.stats.covered,
            row.stats.pct_string()
        ));
    }
    out
}

/// Region cardinalities for universe `U` and two covered sets `A`, `B`.
/// The in-universe regions partition `U`; the out-of-universe counts are
/// the plain set sizes `|A\U|`, `|B\U|`, `|A∩B\U|` (so `a_outside` and
/// `b_outside` overlap on `both_outside`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VennCounts {
    pub both: u64,
    pub in_a_only: u64,
    pub in_b_only: u64,
    pub uncovered: u64,
    pub a_outside: u64,
    pub b_outside: u64,
    pub both_outside: u64,
}

pub fn venn(universe: &SubsystemSet, a: &BlockSet, b: &BlockSet) -> VennCounts {
    let u = &universe.blocks;
    let a_in = intersection(a, u);
    let b_in = intersection(b, u);
    let both = intersection(&a_in, &b_in).len() as u64;
    let in_a_only = difference(&a_in, &b_in).len() as u64;
    let in_b_only = difference(&b_in, &a_in).len() as u64;
    let uncovered = (u.len() - union(&a_in, &b_in).len()) as u64;
    let a_out = difference(a, u);
    let b_out = difference(b, u);
    VennCounts {
        both,
        in_a_only,
        in_b_only,
        uncovered,
        a_outside: a_out.len() as u64,
        b_outside: b_out.len() as u64,
        both_outside: intersection(&a_out, &b_out).len() as u64,
    }
}

/// `venn.csv`: `region,count` with fixed region labels.
pub fn venn_csv(counts: &VennCounts) -> String {
    format!(
        "region,count\nboth,{}\nin_a_only,{}\nin_b_only,{}\nuncovered,{}\na_outside,{}\nb_outside,{}\nboth_outside,{}\n",
        counts.both,
        counts.in_a_only,
        counts.in_b_only,
        counts.uncovered,
        counts.a_outside,
        counts.b_outside,
        counts.both_outside
    )
}

/// One point of the coverage-over-time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriesPoint {
    pub iteration: u64,
    pub kernel_blocks: u64,
    pub subsys_blocks: u64,
    pub subsys_minus_baseline: u64,
}

/// The three cumulative curves as stored in the log, emitted at every
/// admitted event and at the final iteration. Fails if any cumulative
/// count decreases.
pub fn time_series(log: &FuzzLog) -> Result<Vec<SeriesPoint>, ReportError> {
    let mut prev = (0u64, 0u64, 0u64);
    let mut points = Vec::new();
    let last_idx = log.events.len().checked_sub(1);
    for (idx, e) in log.events.iter().enumerate() {
        let cur = (e.kernel_blocks, e.subsys_blocks, e.subsys_minus_baseline);
        if cur.0 < prev.0 || cur.1 < prev.1 || cur.2 < prev.2 {
            return Err(ReportError::DecreasingCounts(e.iteration));
        }
        prev = cur;
        if e.outcome == EventOutcome::Admitted || Some(idx) == last_idx {
            points.push(SeriesPoint {
                iteration: e.iteration,
                kernel_blocks: e.kernel_blocks,
                subsys_blocks: e.subsys_blocks,
                subsys_minus_baseline: e.subsys_minus_baseline,
            });
        }
    }
    if points.is_empty() {
        // a log with no events still yields a single all-zero point
        points.push(SeriesPoint {
            iteration: 0,
            kernel_blocks: 0,
            subsys_blocks: 0,
            subsys_minus_baseline: 0,
        });
    }
    Ok(points)
}

/// `series.csv`: `iteration,kernel,subsys,subsys_minus_baseline`.
pub fn series_csv(points: &[SeriesPoint]) -> String {
    let mut out = String::from("iteration,kernel,subsys,subsys_minus_baseline\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.iteration, p.kernel_blocks, p.subsys_blocks, p.subsys_minus_baseline
        ));
    }
    out
}

/// Combined-coverage arithmetic. All percentages are computed unrounded
/// and rounded only for display; the relative gain in particular is taken
/// on unrounded values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineStats {
    pub base_covered: u64,
    pub combined_covered_unrounded: f64,
    pub total: u64,
    pub base_pct: f64,
    pub combined_pct: f64,
    pub gain_pp: f64,
    pub relative_gain_pct: f64,
}

impl CombineStats {
    pub fn base_pct_string(&self) -> String {
        format_rounded(self.base_pct)
    }

    pub fn combined_pct_string(&self) -> String {
        format_rounded(self.combined_pct)
    }

    pub fn gain_pp_string(&self) -> String {
        format_rounded(self.gain_pp)
    }

    pub fn relative_gain_string(&self) -> String {
        format_rounded(self.relative_gain_pct)
    }
}

/// Round half-up to one decimal, as a display string.
fn format_rounded(v: f64) -> String {
    let tenths = (v * 10.0 + 0.5).floor() as i64;
    format_tenths(tenths.max(0) as u64)
}

fn combine_from_fractions(
    base_covered: u64,
    combined_covered: f64,
    total: u64,
) -> Result<CombineStats, ReportError> {
    if total == 0 {
        return Err(ReportError::EmptySubsystem(String::new()));
    }
    if base_covered == 0 {
        return Err(ReportError::EmptyBase);
    }
    let base_pct = 100.0 * base_covered as f64 / total as f64;
    let combined_pct = 100.0 * combined_covered / total as f64;
    let gain_pp = combined_pct - base_pct;
    let relative_gain_pct = 100.0 * (combined_pct - base_pct) / base_pct;
    Ok(CombineStats {
        base_covered,
        combined_covered_unrounded: combined_covered,
        total,
        base_pct,
        combined_pct,
        gain_pp,
        relative_gain_pct,
    })
}

/// Combine from raw block sets: base coverage plus an added set, both
/// restricted to the subsystem.
pub fn combine_stats_from_sets(
    base: &BlockSet,
    added: &BlockSet,
    subsystem: &SubsystemSet,
) -> Result<CombineStats, ReportError> {
    let base_in = intersection(base, &subsystem.blocks).len() as u64;
    let combined_in = intersection(&union(base, added), &subsystem.blocks).len() as u64;
    combine_from_fractions(base_in, combined_in as f64, subsystem.total())
}

/// Combine from printed integer inputs: a base covered count and the
/// combined coverage as a fraction of the subsystem (the form available
/// when reproducing a printed coverage table).
pub fn combine_stats_from_counts(
    base_covered: u64,
    combined_fraction: f64,
    total: u64,
) -> Result<CombineStats, ReportError> {
    combine_from_fractions(base_covered, combined_fraction * total as f64, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::FuzzEvent;
    use proptest::prelude::*;

    fn subsystem(n: u64) -> SubsystemSet {
        SubsystemSet { name: "vfs".into(), pattern: String::new(), blocks: (1..=n).collect() }
    }

    fn trace(range: std::ops::RangeInclusive<u64>) -> CoverageTrace {
        range.collect()
    }

    #[test]
    fn total_row_unions_across_suites() {
        let s = subsystem(100);
        let suites = vec![
            ("a".to_string(), 2, vec![trace(1..=30)]),
            ("b".to_string(), 3, vec![trace(20..=40), trace(35..=50)]),
        ];
        let (rows, total) = suite_table(&suites, &s).unwrap();
        assert_eq!(rows[0].stats.covered, 30);
        assert_eq!(rows[1].stats.covered, 31);
        assert_eq!(total.tests, 5);
        assert_eq!(total.stats.covered, 50);
        assert!(total.stats.covered <= rows.iter().map(|r| r.stats.covered).sum());
    }

    #[test]
    fn empty_suite_is_zero_pct_and_identical_suites_collapse() {
        let s = subsystem(10);
        let suites = vec![("empty".to_string(), 1, vec![CoverageTrace::default()])];
        let (rows, total) = suite_table(&suites, &s).unwrap();
        assert_eq!(rows[0].stats.covered, 0);
        assert_eq!(rows[0].stats.pct_string(), "0.0");

        let twin = vec![
            ("x".to_string(), 1, vec![trace(1..=5)]),
            ("y".to_string(), 1, vec![trace(1..=5)]),
        ];
        let (rows, total2) = suite_table(&twin, &s).unwrap();
        assert_eq!(total2.stats.covered, rows[0].stats.covered);
        drop(total);
    }

    #[test]
    fn empty_suite_list_is_an_error() {
        assert!(suite_table(&[], &subsystem(5)).is_err());
    }

    #[test]
    fn venn_identical_sets_have_empty_exclusive_regions() {
        let u = subsystem(50);
        let a: BlockSet = (1..=20).collect();
        let counts = venn(&u, &a, &a);
        assert_eq!(counts.in_a_only, 0);
        assert_eq!(counts.in_b_only, 0);
        assert_eq!(counts.both, 20);
        assert_eq!(counts.uncovered, 30);
    }

    #[test]
    fn venn_regions_reconstruct_inputs() {
        let u = subsystem(10);
        let a: BlockSet = [1, 2, 3, 11, 12].into_iter().collect();
        let b: BlockSet = [3, 4, 12, 13].into_iter().collect();
        let c = venn(&u, &a, &b);
        assert_eq!(c.both + c.in_a_only + c.a_outside, a.len() as u64);
        assert_eq!(c.both + c.in_b_only + c.b_outside, b.len() as u64);
        assert_eq!(c.both + c.in_a_only + c.in_b_only + c.uncovered, u.total());
        assert_eq!(c.both_outside, 1);
    }

    #[test]
    fn series_emits_admitted_and_final_points() {
        let ev = |it, outcome, k, s, m| FuzzEvent {
            iteration: it,
            program_id: String::new(),
            outcome,
            kernel_blocks: k,
            subsys_blocks: s,
            subsys_minus_baseline: m,
        };
        let log = FuzzLog {
            events: vec![
                ev(0, EventOutcome::Admitted, 10, 5, 5),
                ev(1, EventOutcome::RejectedNoNew, 10, 5, 5),
                ev(2, EventOutcome::Admitted, 20, 9, 9),
                ev(3, EventOutcome::RejectedCrash, 20, 9, 9),
            ],
        };
        let points = time_series(&log).unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[0].iteration, 0);
        assert_eq!(points[1].iteration, 2);
        assert_eq!(points[2].iteration, 3);
    }

    #[test]
    fn series_of_empty_log_is_single_zero_point() {
        let points = time_series(&FuzzLog::default()).unwrap();
        assert_eq!(points, vec![SeriesPoint { iteration: 0, kernel_blocks: 0, subsys_blocks: 0, subsys_minus_baseline: 0 }]);
    }

    #[test]
    fn series_rejects_decreasing_counts() {
        let ev = |it, k| FuzzEvent {
            iteration: it,
            program_id: String::new(),
            outcome: EventOutcome::Admitted,
            kernel_blocks: k,
            subsys_blocks: 1,
            subsys_minus_baseline: 1,
        };
        let log = FuzzLog { events: vec![ev(0, 10), ev(1, 9)] };
        assert!(matches!(time_series(&log), Err(ReportError::DecreasingCounts(1))));
    }

    /// Reconstruct the reference combination from concrete sets: a
    /// baseline covering 26,229 of 75,531 subsystem blocks plus an added
    /// set contributing 6,873 more lands on 43.8% combined, and every venn
    /// region follows.
    #[test]
    fn venn_and_combine_reconstruct_reference_sets() {
        let u = subsystem(75_531);
        let b: BlockSet = (1..=26_229).collect();
        // added set: 6,873 fresh in-universe blocks plus some overlap
        let mut a: BlockSet = (26_230..=33_102).collect();
        a.extend(1..=2_000);
        let counts = venn(&u, &a, &b);
        assert_eq!(counts.in_a_only, 6_873);
        assert_eq!(counts.both, 2_000);
        assert_eq!(counts.in_b_only, 24_229);
        assert_eq!(counts.both + counts.in_a_only + counts.in_b_only, 33_102);
        // within +/-33 blocks of the 0.438-fraction midpoint (33,083)
        assert!((33_102u64).abs_diff(33_083) <= 33);

        let stats = combine_stats_from_sets(&b, &a, &u).unwrap();
        assert_eq!(stats.base_pct_string(), "34.7");
        assert_eq!(stats.combined_pct_string(), "43.8");
        assert_eq!(stats.gain_pp_string(), "9.1");
        assert!((25.9..=26.3).contains(&stats.relative_gain_pct));
    }

    #[test]
    fn combine_zero_added_set_is_zero_gain() {
        let s = subsystem(100);
        let base: BlockSet = (1..=40).collect();
        let stats = combine_stats_from_sets(&base, &BlockSet::new(), &s).unwrap();
        assert_eq!(stats.gain_pp_string(), "0.0");
        assert_eq!(stats.relative_gain_string(), "0.0");
        assert_eq!(stats.base_pct_string(), stats.combined_pct_string());
    }

    #[test]
    fn combine_empty_base_is_an_error() {
        let s = subsystem(100);
        assert!(matches!(
            combine_stats_from_sets(&BlockSet::new(), &(1..=5).collect(), &s),
            Err(ReportError::EmptyBase)
        ));
    }

    #[test]
    fn csv_shapes() {
        let s = subsystem(10);
        let suites = vec![("a".to_string(), 1, vec![trace(1..=5)])];
        let (rows, total) = suite_table(&suites, &s).unwrap();
        let csv = table_csv(&rows, &total);
        assert!(csv.starts_with("suite,tests,covered,pct\n"));
        assert!(csv.ends_with("TOTAL,1,5,50.0%\n"));

        let counts = venn(&s, &(1..=5).collect(), &(3..=7).collect());
        let csv = venn_csv(&counts);
        assert_eq!(csv.lines().count(), 8);
        assert!(csv.contains("both,3\n"));
    }

    proptest! {
        /// Venn regions match per-element enumeration.
        #[test]
        fn venn_matches_enumeration(
            ua in proptest::collection::btree_set(0u64..200, 0..80),
            a in proptest::collection::btree_set(0u64..200, 0..80),
            b in proptest::collection::btree_set(0u64..200, 0..80),
        ) {
            let universe = SubsystemSet { name: "u".into(), pattern: String::new(), blocks: ua.clone() };
            let c = venn(&universe, &a, &b);
            let mut expect = VennCounts { both: 0, in_a_only: 0, in_b_only: 0, uncovered: 0, a_outside: 0, b_outside: 0, both_outside: 0 };
            for x in 0u64..200 {
                let (inu, ina, inb) = (ua.contains(&x), a.contains(&x), b.contains(&x));
                match (inu, ina, inb) {
                    (true, true, true) => expect.both += 1,
                    (true, true, false) => expect.in_a_only += 1,
                    (true, false, true) => expect.in_b_only += 1,
                    (true, false, false) => expect.uncovered += 1,
                    (false, ..) => {
                        if ina { expect.a_outside += 1 }
                        if inb { expect.b_outside += 1 }
                        if ina && inb { expect.both_outside += 1 }
                    }
                }
            }
            prop_assert_eq!(c, expect);
        }

        /// Every emitted percentage is recomputable from its integer counts.
        #[test]
        fn table_percentages_recompute(
            covered in proptest::collection::btree_set(1u64..500, 1..100),
        ) {
            let s = subsystem(500);
            let suites = vec![("s".to_string(), 1, vec![CoverageTrace::new(covered)])];
            let (rows, total) = suite_table(&suites, &s).unwrap();
            for row in rows.iter().chain(std::iter::once(&total)) {
                prop_assert_eq!(
                    row.stats.pct_tenths,
                    percent_tenths(row.stats.covered, row.stats.total)
                );
            }
        }
    }
}
