//! Oracle results stored beside a dataset, keyed by the dataset's content
//! hash and the instance index.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve, upper_bound, Limits, OracleResult};
use crate::error::{Error, Result};
use crate::graph::BipartiteInstance;

/// Environment variable overriding where cache files live.
pub const CACHE_ENV: &str = "MATCHLAB_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Solved(OracleResult),
    /// The exact solver declined; `upper_bound` stands in for OPT.
    Refused { reason: String, upper_bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub index: usize,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl CacheEntry {
    /// Reference value for ratios and whether it is only an upper bound.
    pub fn reference(&self) -> (f64, bool) {
        match &self.outcome {
            Outcome::Solved(r) => (r.opt, false),
            Outcome::Refused { upper_bound, .. } => (*upper_bound, true),
        }
    }

    pub fn solved(&self) -> Option<&OracleResult> {
        match &self.outcome {
            Outcome::Solved(r) => Some(r),
            Outcome::Refused { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCache {
    pub dataset_hash: String,
    pub entries: Vec<CacheEntry>,
}

impl OracleCache {
    pub fn refused_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.outcome, Outcome::Refused { .. }))
            .count()
    }
}

/// Solves one instance, turning a refusal into a bounded entry.
pub fn solve_entry(index: usize, instance: &BipartiteInstance, limits: &Limits) -> Result<CacheEntry> {
    let outcome = match solve(instance, limits) {
        Ok(r) => Outcome::Solved(r),
        Err(Error::OracleRefused(reason)) => Outcome::Refused {
            reason,
            upper_bound: upper_bound(instance),
        },
        Err(e) => return Err(e),
    };
    Ok(CacheEntry { index, outcome })
}

/// Solves every instance in parallel; results come back in index order.
pub fn solve_all(instances: &[BipartiteInstance], limits: &Limits) -> Result<Vec<CacheEntry>> {
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| solve_entry(i, inst, limits))
        .collect()
}

/// Directory for cache files: `$MATCHLAB_CACHE` if set, else the dataset's
/// directory.
pub fn cache_dir(dataset_path: &Path) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => dataset_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    }
}

pub fn cache_file(dir: &Path, dataset_hash: &str) -> PathBuf {
    dir.join(format!("{dataset_hash}.oracle.json"))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheReport {
    /// Entries taken from an existing file.
    pub reused: usize,
    /// Entries computed now.
    pub solved: usize,
    /// Where an unreadable cache file was moved.
    pub quarantined: Option<PathBuf>,
}

fn quarantine(path: &Path) -> Result<PathBuf> {
    let mut n = 0;
    loop {
        let suffix = if n == 0 {
            ".corrupt".to_string()
        } else {
            format!(".corrupt.{n}")
        };
        let mut target = path.as_os_str().to_owned();
        target.push(suffix);
        let target = PathBuf::from(target);
        if !target.exists() {
            std::fs::rename(path, &target).map_err(|e| Error::io(path, e))?;
            return Ok(target);
        }
        n += 1;
    }
}

/// Reads the cache at `path` if it matches `instances`, solves whatever is
/// missing, and writes the completed cache back. A file that cannot be parsed
/// or belongs to a different dataset is moved aside, never overwritten.
pub fn load_or_solve(
    instances: &[BipartiteInstance],
    dataset_hash: &str,
    path: &Path,
    limits: &Limits,
) -> Result<(OracleCache, CacheReport)> {
    let mut report = CacheReport::default();
    let mut entries: Vec<Option<CacheEntry>> = vec![None; instances.len()];
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match serde_json::from_str::<OracleCache>(&text) {
            Ok(c) if c.dataset_hash == dataset_hash && c.entries.iter().all(|e| e.index < instances.len()) => {
                for e in c.entries {
                    let i = e.index;
                    entries[i] = Some(e);
                    report.reused += 1;
                }
            }
            _ => report.quarantined = Some(quarantine(path)?),
        }
    }
    let missing: Vec<usize> = (0..instances.len()).filter(|&i| entries[i].is_none()).collect();
    let solved: Vec<CacheEntry> = missing
        .par_iter()
        .map(|&i| solve_entry(i, &instances[i], limits))
        .collect::<Result<_>>()?;
    report.solved = solved.len();
    for e in solved {
        let i = e.index;
        entries[i] = Some(e);
    }
    let cache = OracleCache {
        dataset_hash: dataset_hash.to_string(),
        entries: entries.into_iter().map(|e| e.expect("all filled")).collect(),
    };
    if report.solved > 0 || report.quarantined.is_some() || !path.exists() {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(&cache).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok((cache, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Arrival, InstanceMeta, ProblemPayload};

    fn data() -> Vec<BipartiteInstance> {
        vec![BipartiteInstance::new(
            2,
            vec![Arrival::new(vec![(0, 0.5), (1, 0.25)])],
            ProblemPayload::Eobm,
            InstanceMeta::default(),
        )
        .unwrap()]
    }

    #[test]
    fn reuse_and_quarantine() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.oracle.json");
        let (c, r) = load_or_solve(&data(), "h", &path, &Limits::default()).unwrap();
        assert_eq!(r.solved, 1);
        assert_eq!(c.entries[0].reference(), (0.5, false));
        let (c2, r2) = load_or_solve(&data(), "h", &path, &Limits::default()).unwrap();
        assert_eq!((r2.reused, r2.solved), (1, 0));
        assert_eq!(c, c2);

        std::fs::write(&path, "{not json").unwrap();
        let (c3, r3) = load_or_solve(&data(), "h", &path, &Limits::default()).unwrap();
        let moved = r3.quarantined.unwrap();
        assert_eq!(std::fs::read_to_string(moved).unwrap(), "{not json");
        assert_eq!(c3, c);
    }
}
