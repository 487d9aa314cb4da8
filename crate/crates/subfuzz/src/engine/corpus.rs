//! Corpus entries and the on-disk corpus layout: one `<hash>.prog` file per
//! entry plus `manifest.json` and `fuzzlog.csv`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coverage::{BlockSet, CoverageTrace};
use crate::program::Program;

use super::{EngineError, FuzzLog};

/// A stored program with its admission metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    /// Content hash of the canonical serialization.
    pub id: String,
    pub program: Program,
    /// Subsystem blocks this entry newly contributed at admission.
    pub signature: BlockSet,
    pub full_trace: CoverageTrace,
    pub runtime_cost: u64,
    pub admitted_at: u64,
}

pub type Corpus = Vec<Arc<CorpusEntry>>;

/// Stable content hash of a program's canonical text.
pub fn program_id(program: &Program) -> String {
    let digest = Sha256::digest(program.to_text().as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    signature_size: u64,
    runtime_cost: u64,
    admitted_at: u64,
}

/// Write the corpus directory: `<hash>.prog` files, `manifest.json` in
/// admission order, and `fuzzlog.csv`. Deterministic byte-for-byte for a
/// deterministic corpus and log.
pub fn persist(dir: &Path, corpus: &Corpus, log: &FuzzLog) -> Result<(), EngineError> {
    fs::create_dir_all(dir)?;
    for entry in corpus {
        fs::write(dir.join(format!("{}.prog", entry.id)), entry.program.to_text())?;
    }
    let manifest: Vec<ManifestEntry> = corpus
        .iter()
        .map(|e| ManifestEntry {
            id: e.id.clone(),
            signature_size: e.signature.len() as u64,
            runtime_cost: e.runtime_cost,
            admitted_at: e.admitted_at,
        })
        .collect();
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)?;
    fs::write(dir.join("fuzzlog.csv"), log.to_csv())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_is_stable_and_content_sensitive() {
        let a = Program::parse("stat(\"./file0\")\n").unwrap();
        let b = Program::parse("stat(\"./file0\")\n").unwrap();
        let c = Program::parse("stat(\"./file1\")\n").unwrap();
        assert_eq!(program_id(&a), program_id(&b));
        assert_ne!(program_id(&a), program_id(&c));
        assert_eq!(program_id(&a).len(), 64);
    }
}
