//! Optimality ratios, agreement curves, size-transfer matrices and
//! permutation stress tests.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{self, GenSpec};
use crate::graph::{dataset_hash, BipartiteInstance, Decision};
use crate::offline::cache::{solve_all, CacheEntry};
use crate::offline::Limits;
use crate::policies::PolicyModel;
use crate::rng::{self, stream};

/// Slack above 1 tolerated before a ratio counts as a violation.
pub const RATIO_TOL: f64 = 1e-9;

/// Reference value for one instance: OPT, or an upper bound when the exact
/// solver refused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub value: f64,
    pub bound_only: bool,
}

impl From<&CacheEntry> for Reference {
    fn from(e: &CacheEntry) -> Self {
        let (value, bound_only) = e.reference();
        Reference { value, bound_only }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_idx: usize,
    pub objective: f64,
    pub opt: f64,
    pub ratio: f64,
    /// `opt` is only an upper bound.
    pub bound_only: bool,
    /// Ratio outside `(0, 1 + 1e-9]`.
    pub violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Mean, population standard deviation and linearly interpolated quartiles.
pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    Summary {
        count: values.len(),
        mean,
        std: var.sqrt(),
        min: sorted[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: sorted[sorted.len() - 1],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub dataset_hash: String,
    pub seed: u64,
    pub decode_mode: String,
    pub results: Vec<InstanceResult>,
    pub summary: Summary,
    pub violations: usize,
    pub bound_only: usize,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    dataset_hash: &'a str,
    instance_idx: usize,
    policy: &'a str,
    objective: f64,
    opt: f64,
    ratio: f64,
    decode_mode: &'a str,
    seed: u64,
}

impl EvalReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.ratio).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for r in &self.results {
            w.serialize(CsvRow {
                dataset_hash: &self.dataset_hash,
                instance_idx: r.instance_idx,
                policy: &self.policy,
                objective: r.objective,
                opt: r.opt,
                ratio: r.ratio,
                decode_mode: &self.decode_mode,
                seed: self.seed,
            })
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Everything except the per-instance rows, as JSON.
    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let value = serde_json::json!({
            "policy": self.policy,
            "dataset_hash": self.dataset_hash,
            "seed": self.seed,
            "decode_mode": self.decode_mode,
            "summary": self.summary,
            "violations": self.violations,
            "bound_only": self.bound_only,
        });
        let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Rolls the policy out on every instance (greedy decoding for neural
/// policies, per-instance RNG streams for randomized baselines).
pub fn run_all(policy: &PolicyModel, dataset: &[BipartiteInstance], seed: u64) -> Result<Vec<crate::graph::Solution>> {
    dataset
        .par_iter()
        .enumerate()
        .map(|(i, inst)| policy.run(inst, &mut rng::derive(seed, &[stream::EVAL, i as u64])))
        .collect()
}

pub fn evaluate(
    policy: &PolicyModel,
    dataset: &[BipartiteInstance],
    references: &[Reference],
    seed: u64,
) -> Result<EvalReport> {
    if references.len() != dataset.len() {
        return Err(Error::Dimension {
            expected: dataset.len(),
            got: references.len(),
        });
    }
    let solutions = run_all(policy, dataset, seed)?;
    let results: Vec<InstanceResult> = solutions
        .iter()
        .zip(references)
        .enumerate()
        .map(|(i, (sol, r))| {
            let ratio = sol.objective_value / r.value;
            InstanceResult {
                instance_idx: i,
                objective: sol.objective_value,
                opt: r.value,
                ratio,
                bound_only: r.bound_only,
                violation: !(ratio > 0.0 && ratio <= 1.0 + RATIO_TOL),
            }
        })
        .collect();
    let ratios: Vec<f64> = results.iter().map(|r| r.ratio).collect();
    Ok(EvalReport {
        policy: policy.name(),
        dataset_hash: dataset_hash(dataset)?,
        seed,
        decode_mode: policy.decode_mode().to_string(),
        summary: summarize(&ratios),
        violations: results.iter().filter(|r| r.violation).count(),
        bound_only: results.iter().filter(|r| r.bound_only).count(),
        results,
    })
}

/// Solves (or bounds) every instance inline.
pub fn references(dataset: &[BipartiteInstance], limits: &Limits) -> Result<Vec<Reference>> {
    Ok(solve_all(dataset, limits)?.iter().map(Reference::from).collect())
}

/// Fraction of instances on which two decision sequences agree, per timestep.
/// Skip agreeing with skip counts as agreement.
pub fn agreement_curve(a: &[Vec<Decision>], b: &[Vec<Decision>]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let Some(first) = a.first() else {
        return Ok(Vec::new());
    };
    let horizon = first.len();
    if a.iter().chain(b).any(|d| d.len() != horizon) {
        return Err(Error::MixedDataset("horizon"));
    }
    let n = a.len() as f64;
    Ok((0..horizon)
        .map(|t| a.iter().zip(b).filter(|(x, y)| x[t] == y[t]).count() as f64 / n)
        .collect())
}

/// Agreement between a policy and a reference policy, each following its own
/// trajectory.
pub fn agreement(
    policy: &PolicyModel,
    reference: &PolicyModel,
    dataset: &[BipartiteInstance],
    seed: u64,
) -> Result<Vec<f64>> {
    let a: Vec<Vec<Decision>> = run_all(policy, dataset, seed)?.into_iter().map(|s| s.decisions).collect();
    let b: Vec<Vec<Decision>> = run_all(reference, dataset, seed)?.into_iter().map(|s| s.decisions).collect();
    agreement_curve(&a, &b)
}

pub fn write_agreement_csv(curve: &[f64], path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["timestep", "fraction"]).map_err(csv_err)?;
    for (t, f) in curve.iter().enumerate() {
        w.write_record([t.to_string(), f.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub u_count: usize,
    pub v_count: usize,
    /// `None` when the policy cannot act on this size.
    pub mean_ratio: Option<f64>,
}

/// Evaluates one policy on freshly generated test sets of several sizes.
/// `family` maps `(|U|, |V|, seed)` to a generator spec.
pub fn transfer_eval<F>(
    policy: &PolicyModel,
    sizes: &[(usize, usize)],
    family: F,
    seed: u64,
    limits: &Limits,
) -> Result<Vec<TransferCell>>
where
    F: Fn(usize, usize, u64) -> GenSpec,
{
    let mut cells = Vec::with_capacity(sizes.len());
    for (k, &(u, v)) in sizes.iter().enumerate() {
        let spec = family(u, v, rng::derive_seed(seed, &[stream::DATASET, k as u64]));
        let data = generators::generate(&spec)?;
        let compatible = data.first().is_some_and(|i| policy.check_compatible(i).is_ok());
        let mean_ratio = if compatible {
            let refs = references(&data, limits)?;
            Some(evaluate(policy, &data, &refs, seed)?.summary.mean)
        } else {
            None
        };
        cells.push(TransferCell {
            u_count: u,
            v_count: v,
            mean_ratio,
        });
    }
    Ok(cells)
}

/// Evaluation on a dataset and on a copy whose fixed nodes are relabelled by
/// an independent random permutation per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub original: EvalReport,
    pub permuted: EvalReport,
    pub permutations: Vec<Vec<usize>>,
}

impl PermutationReport {
    /// Largest difference between the sorted ratio lists.
    pub fn max_multiset_gap(&self) -> f64 {
        let mut a = self.original.ratios();
        let mut b = self.permuted.ratios();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

pub fn permute_dataset(dataset: &[BipartiteInstance], seed: u64) -> Result<(Vec<BipartiteInstance>, Vec<Vec<usize>>)> {
    let mut out = Vec::with_capacity(dataset.len());
    let mut perms = Vec::with_capacity(dataset.len());
    for (i, inst) in dataset.iter().enumerate() {
        let mut perm: Vec<usize> = (0..inst.u_count()).collect();
        perm.shuffle(&mut rng::derive(seed, &[stream::PERMUTE, i as u64]));
        out.push(inst.permute_fixed_nodes(&perm)?);
        perms.push(perm);
    }
    Ok((out, perms))
}

pub fn permutation_stress(
    policy: &PolicyModel,
    dataset: &[BipartiteInstance],
    references: &[Reference],
    seed: u64,
) -> Result<PermutationReport> {
    let (permuted, permutations) = permute_dataset(dataset, seed)?;
    Ok(PermutationReport {
        original: evaluate(policy, dataset, references, seed)?,
        permuted: evaluate(policy, &permuted, references, seed)?,
        permutations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_ratio() {
        assert!((18.0f64 / 22.0 - 0.818).abs() < 1e-3);
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q1, 1.75);
        assert_eq!(s.q3, 3.25);
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn agreement_with_self_is_one() {
        let d = vec![vec![Decision::Match(0), Decision::Skip]; 3];
        assert_eq!(agreement_curve(&d, &d).unwrap(), vec![1.0, 1.0]);
        let short = vec![vec![Decision::Skip]; 3];
        assert!(agreement_curve(&d, &short).is_err());
    }
}
