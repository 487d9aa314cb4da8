//! Suite minimization: shrink a set of items (corpus entries, external
//! suite traces) for total runtime cost with bounded coverage loss, via
//! weighted greedy set cover — repeatedly keep the item with the best
//! new-blocks-per-cost ratio until the coverage goal is met.

use std::collections::BTreeMap;

use crate::coverage::{difference, union, union_all, BlockSet};

#[derive(Debug, thiserror::Error)]
pub enum MinimizeError {
    #[error("line {line}: {msg}")]
    BadManifest { line: usize, msg: String },
    #[error("item {0:?} has non-positive cost")]
    BadCost(String),
    #[error("epsilon must lie in [0, 1), got {0}")]
    BadEpsilon(f64),
}

/// One minimization candidate: a block set and its runtime cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeItem {
    pub id: String,
    pub blocks: BlockSet,
    pub cost: f64,
}

impl MinimizeItem {
    pub fn new(id: impl Into<String>, blocks: BlockSet, cost: f64) -> Self {
        MinimizeItem { id: id.into(), blocks, cost }
    }
}

/// Greedy pick order plus the resulting coverage accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Kept item ids in pick order.
    pub kept: Vec<String>,
    /// Blocks covered by the kept items.
    pub covered: BlockSet,
    /// Blocks covered by the input but lost by the selection.
    pub lost: BlockSet,
    pub total_cost: f64,
    /// New blocks contributed by each kept item at its pick time.
    pub new_blocks: Vec<u64>,
}

/// Weighted greedy set cover with a permitted loss fraction `epsilon`.
///
/// Ties on the ratio break toward the larger new-block count, then the
/// lexicographically smaller id, so the output is deterministic. Items
/// contributing nothing new are never kept; the loop stops once covered
/// reaches `(1 - epsilon) * |union|`.
pub fn minimize(items: &[MinimizeItem], epsilon: f64) -> Result<Selection, MinimizeError> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(MinimizeError::BadEpsilon(epsilon));
    }
    for item in items {
        if item.cost.is_nan() || item.cost <= 0.0 {
            return Err(MinimizeError::BadCost(item.id.clone()));
        }
    }
    let universe = union_all(items.iter().map(|i| &i.blocks));
    let goal = ((1.0 - epsilon) * universe.len() as f64).ceil() as u64;

    let mut covered = BlockSet::new();
    let mut kept = Vec::new();
    let mut new_blocks = Vec::new();
    let mut total_cost = 0.0;
    let mut remaining: Vec<&MinimizeItem> = items.iter().collect();

    while (covered.len() as u64) < goal {
        let mut best: Option<(usize, u64)> = None;
        for (idx, item) in remaining.iter().enumerate() {
            let gain = item.blocks.iter().filter(|b| !covered.contains(b)).count() as u64;
            if gain == 0 {
                continue;
            }
            best = match best {
                None => Some((idx, gain)),
                Some((bidx, bgain)) => {
                    let b = remaining[bidx];
                    // compare gain/cost by cross-multiplication
                    let lhs = gain as f64 * b.cost;
                    let rhs = bgain as f64 * item.cost;
                    let better = lhs > rhs
                        || (lhs == rhs
                            && (gain > bgain || (gain == bgain && item.id < b.id)));
                    if better {
                        Some((idx, gain))
                    } else {
                        Some((bidx, bgain))
                    }
                }
            };
        }
        let Some((idx, gain)) = best else { break };
        let item = remaining.remove(idx);
        covered = union(&covered, &item.blocks);
        total_cost += item.cost;
        kept.push(item.id.clone());
        new_blocks.push(gain);
    }

    let lost = difference(&universe, &covered);
    Ok(Selection { kept, covered, lost, total_cost, new_blocks })
}

/// For every item, the number of blocks no other item covers. Items with
/// zero unique blocks are candidates for removal.
pub fn redundancy_report(items: &[MinimizeItem]) -> Vec<(String, u64)> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for item in items {
        for b in &item.blocks {
            *counts.entry(*b).or_default() += 1;
        }
    }
    items
        .iter()
        .map(|item| {
            let unique = item.blocks.iter().filter(|b| counts[b] == 1).count() as u64;
            (item.id.clone(), unique)
        })
        .collect()
}

/// Parse the manifest CSV `id,cost,trace_file`; trace files are loaded by
/// the caller, this returns the raw rows.
pub fn parse_manifest(input: &str) -> Result<Vec<(String, f64, String)>, MinimizeError> {
    let mut rows = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line == "id,cost,trace_file") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(MinimizeError::BadManifest {
                line: line_no,
                msg: "expected id,cost,trace_file".into(),
            });
        }
        let cost: f64 = fields[1].trim().parse().map_err(|_| MinimizeError::BadManifest {
            line: line_no,
            msg: format!("bad cost {:?}", fields[1]),
        })?;
        rows.push((fields[0].trim().to_string(), cost, fields[2].trim().to_string()));
    }
    Ok(rows)
}

/// Selection CSV: `rank,id,new_blocks,cost`.
pub fn selection_csv(selection: &Selection, items: &[MinimizeItem]) -> String {
    let cost_of = |id: &str| items.iter().find(|i| i.id == id).map_or(0.0, |i| i.cost);
    let mut out = String::from("rank,id,new_blocks,cost\n");
    for (rank, (id, new)) in selection.kept.iter().zip(&selection.new_blocks).enumerate() {
        out.push_str(&format!("{},{},{},{}\n", rank + 1, id, new, format_cost(cost_of(id))));
    }
    out
}

fn format_cost(cost: f64) -> String {
    if cost.fract() == 0.0 && cost.abs() < 1e15 {
        format!("{}", cost as i64)
    } else {
        format!("{cost}")
    }
}
