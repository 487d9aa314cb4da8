//! Command-line interface: one binary wiring all modules for batch use.
//!
//! Exit codes: 0 success, 1 usage or parse errors (flags, patterns,
//! program text), 2 data or integrity errors (trace, map, CSV and log
//! contents, I/O).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::coverage::{
    classify, coverage_stats, union_all, BlockMap, BlockSet, CoverageStats, CoverageTrace,
    SubsystemSet, DEFAULT_SUBSYSTEM_NAME, DEFAULT_SUBSYSTEM_PATTERN,
};
use crate::engine::{self, FuzzConfig, FuzzLog};
use crate::minimize::{minimize, parse_manifest, redundancy_report, selection_csv, MinimizeItem};
use crate::program::Program;
use crate::report;
use crate::target::Target;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn data(e: impl ToString) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "subfuzz", version, about = "Subsystem-targeted coverage-guided syscall fuzzer and coverage analytics")]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the coverage-guided fuzzing loop against the built-in target.
    Fuzz(FuzzArgs),
    /// Execute one program file and report the outcome.
    Run(RunArgs),
    /// Classify a block map into a subsystem and print the block count.
    Classify(ClassifyArgs),
    /// Coverage statistics for traces against a classified subsystem.
    Coverage(CoverageArgs),
    /// Greedy suite minimization over a manifest of traced items.
    Minimize(MinimizeArgs),
    /// Coverage analyses: suite table, venn regions, time series, combination.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct FuzzArgs {
    #[arg(long, env = "SUBFUZZ_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    iterations: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Subsystem classification pattern over the target's block map.
    #[arg(long, env = "SUBFUZZ_REGEX", default_value = DEFAULT_SUBSYSTEM_PATTERN)]
    subsystem_regex: String,
    /// File listing syscall names to disable, one per line.
    #[arg(long)]
    disable: Option<PathBuf>,
    /// Baseline trace file(s) excluded from "new coverage" accounting.
    #[arg(long, num_args = 1..)]
    baseline: Vec<PathBuf>,
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    max_program_len: usize,
}

#[derive(Args, Debug)]
struct RunArgs {
    program: PathBuf,
    /// Write the observed trace to this file.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Disable fault injection (injected bugs will not crash).
    #[arg(long)]
    no_faults: bool,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Block map file; defaults to the built-in target's map.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, env = "SUBFUZZ_REGEX", default_value = DEFAULT_SUBSYSTEM_PATTERN)]
    regex: String,
    #[arg(long, default_value = DEFAULT_SUBSYSTEM_NAME)]
    name: String,
    /// Also write the block map that was classified to this file.
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    /// Trace file(s); their union is measured.
    #[arg(long, num_args = 1.., required = true)]
    trace: Vec<PathBuf>,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, env = "SUBFUZZ_REGEX", default_value = DEFAULT_SUBSYSTEM_PATTERN)]
    regex: String,
    #[arg(long, default_value = DEFAULT_SUBSYSTEM_NAME)]
    name: String,
}

#[derive(Args, Debug)]
struct MinimizeArgs {
    /// Manifest CSV: id,cost,trace_file (paths relative to the manifest).
    #[arg(long)]
    items: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Restrict item blocks to a subsystem classified from this map.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    regex: Option<String>,
    /// Write the selection CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the per-item unique-block report instead of minimizing.
    #[arg(long)]
    redundancy: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(subcommand)]
    what: ReportCmd,
}

#[derive(Subcommand, Debug)]
enum ReportCmd {
    /// Per-suite coverage table with a union-based TOTAL row.
    Table {
        /// Suites CSV: suite,tests,trace_file (paths relative to the CSV).
        #[arg(long)]
        suites: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, env = "SUBFUZZ_REGEX", default_value = DEFAULT_SUBSYSTEM_PATTERN)]
        regex: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Region counts for subsystem universe U and covered sets A and B.
    Venn {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, env = "SUBFUZZ_REGEX", default_value = DEFAULT_SUBSYSTEM_PATTERN)]
        regex: String,
        /// Trace file(s) forming set A (e.g. generated programs).
        #[arg(long, num_args = 1.., required = true)]
        a: Vec<PathBuf>,
        /// Trace file(s) forming set B (e.g. an external suite).
        #[arg(long, num_args = 1.., required = true)]
        b: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coverage-over-time series from a fuzz log.
    Series {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combined-coverage arithmetic for a baseline plus an added set.
    Combine {
        /// Covered block count of the baseline alone.
        #[arg(long)]
        base_covered: Option<u64>,
        /// Subsystem block total (counts mode).
        #[arg(long)]
        total: Option<u64>,
        /// Combined coverage as a fraction of the subsystem (counts mode).
        #[arg(long)]
        combined_fraction: Option<f64>,
        /// Baseline trace file(s) (sets mode).
        #[arg(long, num_args = 1..)]
        base_trace: Vec<PathBuf>,
        /// Added trace file(s) (sets mode).
        #[arg(long, num_args = 1..)]
        added_trace: Vec<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, env = "SUBFUZZ_REGEX", default_value = DEFAULT_SUBSYSTEM_PATTERN)]
        regex: String,
    },
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Fuzz(args) => cmd_fuzz(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::Classify(args) => cmd_classify(args),
        Cmd::Coverage(args) => cmd_coverage(args),
        Cmd::Minimize(args) => cmd_minimize(args),
        Cmd::Report(args) => cmd_report(args.what),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_map(path: Option<&Path>) -> Result<BlockMap, CliError> {
    match path {
        None => Ok(Target::emit_block_map()),
        Some(p) => BlockMap::parse(&read_file(p)?).map_err(|e| data(format!("{}: {e}", p.display()))),
    }
}

fn load_trace(path: &Path) -> Result<CoverageTrace, CliError> {
    CoverageTrace::parse(&read_file(path)?).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_trace_union(paths: &[PathBuf]) -> Result<BlockSet, CliError> {
    let mut sets = Vec::with_capacity(paths.len());
    for p in paths {
        sets.push(load_trace(p)?.blocks);
    }
    Ok(union_all(sets.iter()))
}

fn classify_map(map: &BlockMap, name: &str, pattern: &str) -> Result<SubsystemSet, CliError> {
    classify(map, name, pattern).map_err(usage)
}

fn stats_line(stats: &CoverageStats) -> String {
    format!("subsystem coverage: {stats}")
}

fn cmd_fuzz(args: FuzzArgs) -> Result<(), CliError> {
    let map = Target::emit_block_map();
    let subsystem = classify_map(&map, DEFAULT_SUBSYSTEM_NAME, &args.subsystem_regex)?;

    let disabled: BTreeSet<String> = match &args.disable {
        None => BTreeSet::new(),
        Some(path) => {
            let mut names = BTreeSet::new();
            for (idx, line) in read_file(path)?.lines().enumerate() {
                let tok = line.split('#').next().unwrap_or("").trim();
                if tok.is_empty() {
                    continue;
                }
                if crate::target::syscalls::lookup(tok).is_none() {
                    return Err(usage(format!(
                        "{}: line {}: unknown syscall {tok:?}",
                        path.display(),
                        idx + 1
                    )));
                }
                names.insert(tok.to_string());
            }
            names
        }
    };

    let baseline = if args.baseline.is_empty() {
        None
    } else {
        Some(load_trace_union(&args.baseline)?)
    };

    let mut config = FuzzConfig::new(args.seed, args.iterations, subsystem);
    config.workers = args.workers;
    config.disabled_syscalls = disabled;
    config.baseline = baseline;
    config.max_program_len = args.max_program_len;
    config.validate().map_err(usage)?;

    let (corpus, log) = engine::fuzz(&config).map_err(usage)?;
    engine::persist(&args.out, &corpus, &log).map_err(data)?;

    let covered = log.events.last().map_or(0, |e| e.subsys_blocks);
    let total = config.subsystem.total();
    let stats = CoverageStats {
        covered,
        total,
        pct_tenths: crate::coverage::percent_tenths(covered, total),
    };
    println!("admitted {} of {} programs, {} crashes ignored", corpus.len(), args.iterations, log.crash_count());
    println!("{}", stats_line(&stats));
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let text = read_file(&args.program)?;
    let program = Program::parse(&text).map_err(usage)?;
    let mut target = Target::new();
    let result = target.execute(&program, !args.no_faults).map_err(usage)?;
    match &result.outcome {
        crate::target::Outcome::Ok => println!("outcome: ok"),
        crate::target::Outcome::Crash { reason } => println!("outcome: crash ({reason})"),
    }
    println!(
        "blocks: {} cost: {} calls: {}",
        result.trace.len(),
        result.runtime_cost,
        result.per_call_status.len()
    );
    if let Some(out) = &args.trace_out {
        write_file(out, &result.trace.to_text())?;
    }
    Ok(())
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), CliError> {
    let map = load_map(args.map.as_deref())?;
    let subsystem = classify_map(&map, &args.name, &args.regex)?;
    if let Some(out) = &args.emit {
        write_file(out, &map.to_text())?;
    }
    println!("{}: {} of {} blocks", subsystem.name, subsystem.total(), map.total_blocks());
    Ok(())
}

fn cmd_coverage(args: CoverageArgs) -> Result<(), CliError> {
    let map = load_map(args.map.as_deref())?;
    let subsystem = classify_map(&map, &args.name, &args.regex)?;
    let covered = load_trace_union(&args.trace)?;
    let stats = coverage_stats(&covered, &subsystem).map_err(data)?;
    println!("{}", stats_line(&stats));
    Ok(())
}

fn cmd_minimize(args: MinimizeArgs) -> Result<(), CliError> {
    let manifest_text = read_file(&args.items)?;
    let rows = parse_manifest(&manifest_text).map_err(data)?;
    let base_dir = args.items.parent().unwrap_or(Path::new("."));

    let restrict = match (&args.map, &args.regex) {
        (None, None) => None,
        (map, Some(regex)) => {
            let map = load_map(map.as_deref())?;
            Some(classify_map(&map, DEFAULT_SUBSYSTEM_NAME, regex)?.blocks)
        }
        (Some(_), None) => {
            return Err(usage("--map requires --regex to classify against"));
        }
    };

    let mut items = Vec::with_capacity(rows.len());
    for (id, cost, trace_file) in rows {
        let path = base_dir.join(trace_file);
        let mut blocks = load_trace(&path)?.blocks;
        if let Some(universe) = &restrict {
            blocks = crate::coverage::intersection(&blocks, universe);
        }
        items.push(MinimizeItem::new(id, blocks, cost));
    }

    if args.redundancy {
        let mut out = String::from("id,unique_blocks\n");
        for (id, unique) in redundancy_report(&items) {
            out.push_str(&format!("{id},{unique}\n"));
        }
        emit(args.out.as_deref(), &out)?;
        return Ok(());
    }

    let selection = minimize(&items, args.epsilon).map_err(usage)?;
    let csv = selection_csv(&selection, &items);
    emit(args.out.as_deref(), &csv)?;
    eprintln!(
        "kept {} of {} items, covered {} blocks, lost {}, total cost {}",
        selection.kept.len(),
        items.len(),
        selection.covered.len(),
        selection.lost.len(),
        selection.total_cost
    );
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn cmd_report(cmd: ReportCmd) -> Result<(), CliError> {
    match cmd {
        ReportCmd::Table { suites, map, regex, out } => {
            let map = load_map(map.as_deref())?;
            let subsystem = classify_map(&map, DEFAULT_SUBSYSTEM_NAME, &regex)?;
            let suite_rows = parse_suites_csv(&suites)?;
            let (rows, total) = report::suite_table(&suite_rows, &subsystem).map_err(data)?;
            emit(out.as_deref(), &report::table_csv(&rows, &total))
        }
        ReportCmd::Venn { map, regex, a, b, out } => {
            let map = load_map(map.as_deref())?;
            let universe = classify_map(&map, DEFAULT_SUBSYSTEM_NAME, &regex)?;
            let a = load_trace_union(&a)?;
            let b = load_trace_union(&b)?;
            let counts = report::venn(&universe, &a, &b);
            emit(out.as_deref(), &report::venn_csv(&counts))
        }
        ReportCmd::Series { log, out } => {
            let log = FuzzLog::parse_csv(&read_file(&log)?).map_err(data)?;
            let points = report::time_series(&log).map_err(data)?;
            emit(out.as_deref(), &report::series_csv(&points))
        }
        ReportCmd::Combine {
            base_covered,
            total,
            combined_fraction,
            base_trace,
            added_trace,
            map,
            regex,
        } => {
            let stats = match combined_fraction {
                Some(fraction) => {
                    let base = base_covered
                        .ok_or_else(|| usage("--combined-fraction requires --base-covered"))?;
                    let total =
                        total.ok_or_else(|| usage("--combined-fraction requires --total"))?;
                    report::combine_stats_from_counts(base, fraction, total).map_err(data)?
                }
                None => {
                    if base_trace.is_empty() || added_trace.is_empty() {
                        return Err(usage(
                            "give either --base-covered/--total/--combined-fraction or --base-trace/--added-trace",
                        ));
                    }
                    let map = load_map(map.as_deref())?;
                    let subsystem = classify_map(&map, DEFAULT_SUBSYSTEM_NAME, &regex)?;
                    let base = load_trace_union(&base_trace)?;
                    let added = load_trace_union(&added_trace)?;
                    report::combine_stats_from_sets(&base, &added, &subsystem).map_err(data)?
                }
            };
            println!("base: {}/{} ({}%)", stats.base_covered, stats.total, stats.base_pct_string());
            println!("combined: {}%", stats.combined_pct_string());
            println!("gain: {} pp", stats.gain_pp_string());
            println!("relative gain: {}%", stats.relative_gain_string());
            Ok(())
        }
    }
}

/// `suite,tests,trace_file`; repeated suite names aggregate their traces,
/// the test count is taken from the first row of each suite.
fn parse_suites_csv(path: &Path) -> Result<Vec<(String, u64, Vec<CoverageTrace>)>, CliError> {
    let text = read_file(path)?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let mut suites: Vec<(String, u64, Vec<CoverageTrace>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line == "suite,tests,trace_file") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(data(format!(
                "{}: line {}: expected suite,tests,trace_file",
                path.display(),
                idx + 1
            )));
        }
        let name = fields[0].trim();
        let tests: u64 = fields[1].trim().parse().map_err(|_| {
            data(format!("{}: line {}: bad test count {:?}", path.display(), idx + 1, fields[1]))
        })?;
        let trace = load_trace(&base_dir.join(fields[2].trim()))?;
        match suites.iter_mut().find(|(n, _, _)| n == name) {
            Some((_, _, traces)) => traces.push(trace),
            None => suites.push((name.to_string(), tests, vec![trace])),
        }
    }
    Ok(suites)
}
