//! Instance data model and the line-delimited dataset format.
//!
//! A dataset file holds one JSON object per line:
//!
//! ```text
//! {"u_count":2,"arrivals":[{"edges":[[0,0.5]]}],"payload":{"kind":"eobm"},"meta":{...}}
//! ```
//!
//! Weights are written with the shortest decimal representation that parses
//! back to the identical `f64`, so write/read is bit-exact.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One online node: its weighted edges to fixed nodes, sorted by fixed-node index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub edges: Vec<(usize, f64)>,
    /// Underlying user for OSBM, where one user may arrive several times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<usize>,
}

impl Arrival {
    pub fn new(edges: Vec<(usize, f64)>) -> Self {
        Arrival { edges, user: None }
    }

    pub fn with_user(edges: Vec<(usize, f64)>, user: usize) -> Self {
        Arrival {
            edges,
            user: Some(user),
        }
    }

    pub fn weight(&self, u: usize) -> Option<f64> {
        self.edges
            .binary_search_by_key(&u, |&(v, _)| v)
            .ok()
            .map(|i| self.edges[i].1)
    }

    pub fn neighbours(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().map(|&(u, _)| u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsbmPayload {
    pub genre_count: usize,
    /// Genre set of every fixed node (movie), sorted ascending.
    pub genres_per_u: Vec<Vec<usize>>,
    /// Per-user genre weights, indexed by user id.
    pub user_weights: Vec<Vec<f64>>,
}

impl OsbmPayload {
    /// Weighted coverage of `genres` for `user`.
    pub fn coverage<'a>(&self, user: usize, genres: impl IntoIterator<Item = &'a usize>) -> f64 {
        let mut seen = vec![false; self.genre_count];
        let weights = &self.user_weights[user];
        let mut total = 0.0;
        for &z in genres {
            if !seen[z] {
                seen[z] = true;
                total += weights[z];
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdwordsPayload {
    pub budgets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemPayload {
    Eobm,
    Osbm(OsbmPayload),
    Adwords(AdwordsPayload),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Eobm,
    Osbm,
    Adwords,
}

impl ProblemPayload {
    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemPayload::Eobm => ProblemKind::Eobm,
            ProblemPayload::Osbm(_) => ProblemKind::Osbm,
            ProblemPayload::Adwords(_) => ProblemKind::Adwords,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Eobm => "eobm",
            ProblemKind::Osbm => "osbm",
            ProblemKind::Adwords => "adwords",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub generator: String,
    pub seed: u64,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

/// A single problem instance. The arrival order is part of the instance and
/// cannot be changed after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteInstance {
    u_count: usize,
    arrivals: Vec<Arrival>,
    payload: ProblemPayload,
    #[serde(default)]
    meta: InstanceMeta,
}

impl BipartiteInstance {
    /// Builds an instance, rejecting it if any invariant is violated.
    pub fn new(
        u_count: usize,
        arrivals: Vec<Arrival>,
        payload: ProblemPayload,
        meta: InstanceMeta,
    ) -> Result<Self> {
        let instance = Self::new_unchecked(u_count, arrivals, payload, meta);
        let violations = validate(&instance);
        if violations.is_empty() {
            Ok(instance)
        } else {
            Err(Error::Validation {
                line: 0,
                violations,
            })
        }
    }

    /// Builds an instance without validation. Mostly useful for exercising
    /// [`validate`] itself.
    pub fn new_unchecked(
        u_count: usize,
        arrivals: Vec<Arrival>,
        payload: ProblemPayload,
        meta: InstanceMeta,
    ) -> Self {
        BipartiteInstance {
            u_count,
            arrivals,
            payload,
            meta,
        }
    }

    pub fn u_count(&self) -> usize {
        self.u_count
    }

    pub fn horizon(&self) -> usize {
        self.arrivals.len()
    }

    pub fn arrivals(&self) -> &[Arrival] {
        &self.arrivals
    }

    pub fn arrival(&self, t: usize) -> &Arrival {
        &self.arrivals[t]
    }

    pub fn payload(&self) -> &ProblemPayload {
        &self.payload
    }

    pub fn kind(&self) -> ProblemKind {
        self.payload.kind()
    }

    pub fn meta(&self) -> &InstanceMeta {
        &self.meta
    }

    pub fn edge_count(&self) -> usize {
        self.arrivals.iter().map(|a| a.edges.len()).sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.arrivals
            .iter()
            .flat_map(|a| a.edges.iter().map(|&(_, w)| w))
            .fold(0.0, f64::max)
    }

    pub fn min_weight(&self) -> f64 {
        self.arrivals
            .iter()
            .flat_map(|a| a.edges.iter().map(|&(_, w)| w))
            .fold(f64::INFINITY, f64::min)
    }

    /// Relabels fixed nodes: old node `u` becomes `perm[u]`. Payload entries
    /// move with their node; the arrival order is untouched.
    pub fn permute_fixed_nodes(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.u_count {
            return Err(Error::Dimension {
                expected: self.u_count,
                got: perm.len(),
            });
        }
        let mut seen = vec![false; self.u_count];
        for &p in perm {
            if p >= self.u_count || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Parameter("not a permutation".into()));
            }
        }
        let arrivals = self
            .arrivals
            .iter()
            .map(|a| {
                let mut edges: Vec<(usize, f64)> =
                    a.edges.iter().map(|&(u, w)| (perm[u], w)).collect();
                edges.sort_by_key(|&(u, _)| u);
                Arrival {
                    edges,
                    user: a.user,
                }
            })
            .collect();
        let payload = match &self.payload {
            ProblemPayload::Eobm => ProblemPayload::Eobm,
            ProblemPayload::Osbm(p) => {
                let mut genres_per_u = vec![Vec::new(); self.u_count];
                for (u, g) in p.genres_per_u.iter().enumerate() {
                    genres_per_u[perm[u]] = g.clone();
                }
                ProblemPayload::Osbm(OsbmPayload {
                    genre_count: p.genre_count,
                    genres_per_u,
                    user_weights: p.user_weights.clone(),
                })
            }
            ProblemPayload::Adwords(p) => {
                let mut budgets = vec![0.0; self.u_count];
                for (u, &b) in p.budgets.iter().enumerate() {
                    budgets[perm[u]] = b;
                }
                ProblemPayload::Adwords(AdwordsPayload { budgets })
            }
        };
        Ok(BipartiteInstance {
            u_count: self.u_count,
            arrivals,
            payload,
            meta: self.meta.clone(),
        })
    }
}

/// A per-timestep decision: match the arrival to a fixed node, or leave it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<usize>", into = "Option<usize>")]
pub enum Decision {
    Match(usize),
    Skip,
}

impl Decision {
    /// Action-slot index, with `u_count` standing for skip.
    pub fn slot(self, u_count: usize) -> usize {
        match self {
            Decision::Match(u) => u,
            Decision::Skip => u_count,
        }
    }

    pub fn from_slot(slot: usize, u_count: usize) -> Self {
        if slot >= u_count {
            Decision::Skip
        } else {
            Decision::Match(slot)
        }
    }

    pub fn matched(self) -> Option<usize> {
        match self {
            Decision::Match(u) => Some(u),
            Decision::Skip => None,
        }
    }
}

impl From<Option<usize>> for Decision {
    fn from(value: Option<usize>) -> Self {
        value.map_or(Decision::Skip, Decision::Match)
    }
}

impl From<Decision> for Option<usize> {
    fn from(value: Decision) -> Self {
        value.matched()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub decisions: Vec<Decision>,
    pub objective_value: f64,
}

/// One broken invariant and where it was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Reports every violated invariant; an empty list means the instance is valid.
pub fn validate(instance: &BipartiteInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: String, message: String| out.push(Violation { location, message });
    let n = instance.u_count;
    if n == 0 {
        push("u_count".into(), "must be positive".into());
    }
    let osbm = match &instance.payload {
        ProblemPayload::Osbm(p) => Some(p),
        _ => None,
    };

    for (t, arrival) in instance.arrivals.iter().enumerate() {
        if arrival.edges.is_empty() {
            push(format!("arrivals[{t}].edges"), "arrival has no edges".into());
        }
        let mut prev: Option<usize> = None;
        for (i, &(u, w)) in arrival.edges.iter().enumerate() {
            if u >= n {
                push(
                    format!("arrivals[{t}].edges[{i}].u"),
                    format!("fixed node {u} out of range (u_count {n})"),
                );
            }
            if !(w.is_finite() && w > 0.0) {
                push(
                    format!("arrivals[{t}].edges[{i}].w"),
                    format!("weight {w} is not a positive finite number"),
                );
            }
            match prev {
                Some(p) if p == u => push(
                    format!("arrivals[{t}].edges[{i}].u"),
                    format!("duplicate edge to fixed node {u}"),
                ),
                Some(p) if p > u => push(
                    format!("arrivals[{t}].edges[{i}].u"),
                    "edges not sorted by fixed node".into(),
                ),
                _ => {}
            }
            prev = Some(u);
        }
        if let Some(p) = osbm {
            match arrival.user {
                None => push(format!("arrivals[{t}].user"), "OSBM arrival needs a user".into()),
                Some(l) if l >= p.user_weights.len() => push(
                    format!("arrivals[{t}].user"),
                    format!("unknown user id {l}"),
                ),
                _ => {}
            }
        }
    }

    match &instance.payload {
        ProblemPayload::Eobm => {}
        ProblemPayload::Osbm(p) => {
            if p.genres_per_u.len() != n {
                push(
                    "payload.genres_per_u".into(),
                    format!("expected {n} genre sets, found {}", p.genres_per_u.len()),
                );
            }
            for (u, genres) in p.genres_per_u.iter().enumerate() {
                if genres.is_empty() {
                    push(format!("payload.genres_per_u[{u}]"), "empty genre set".into());
                }
                if genres.windows(2).any(|w| w[0] >= w[1]) {
                    push(
                        format!("payload.genres_per_u[{u}]"),
                        "genres must be strictly increasing".into(),
                    );
                }
                if let Some(&z) = genres.iter().find(|&&z| z >= p.genre_count) {
                    push(
                        format!("payload.genres_per_u[{u}]"),
                        format!("genre {z} out of range (genre_count {})", p.genre_count),
                    );
                }
            }
            for (l, weights) in p.user_weights.iter().enumerate() {
                if weights.len() != p.genre_count {
                    push(
                        format!("payload.user_weights[{l}]"),
                        format!("expected {} weights, found {}", p.genre_count, weights.len()),
                    );
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    push(
                        format!("payload.user_weights[{l}]"),
                        "weights must be non-negative and finite".into(),
                    );
                }
            }
        }
        ProblemPayload::Adwords(p) => {
            if p.budgets.len() != n {
                push(
                    "payload.budgets".into(),
                    format!("expected {n} budgets, found {}", p.budgets.len()),
                );
            }
            for (u, &b) in p.budgets.iter().enumerate() {
                if !(b.is_finite() && b > 0.0) {
                    push(
                        format!("payload.budgets[{u}]"),
                        format!("budget {b} is not positive"),
                    );
                }
            }
        }
    }
    out
}

/// Serializes a dataset to its line-delimited text form.
pub fn encode_dataset(instances: &[BipartiteInstance]) -> Result<Vec<u8>> {
    if let Some(first) = instances.first() {
        for inst in &instances[1..] {
            if inst.kind() != first.kind() {
                return Err(Error::MixedDataset("payload kind"));
            }
            if inst.u_count != first.u_count {
                return Err(Error::MixedDataset("u_count"));
            }
            if inst.horizon() != first.horizon() {
                return Err(Error::MixedDataset("horizon"));
            }
        }
    }
    let mut buf = Vec::new();
    for inst in instances {
        serde_json::to_writer(&mut buf, inst).map_err(|e| Error::Serde(e.to_string()))?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn decode_dataset(text: &str) -> Result<Vec<BipartiteInstance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let inst: BipartiteInstance = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let violations = validate(&inst);
        if !violations.is_empty() {
            return Err(Error::Validation {
                line: line_no,
                violations,
            });
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn write_dataset(instances: &[BipartiteInstance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(instances)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<BipartiteInstance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&text)
}

/// Hex SHA-256 of raw bytes; used to key oracle caches and manifests.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical encoding of a dataset.
pub fn dataset_hash(instances: &[BipartiteInstance]) -> Result<String> {
    Ok(content_hash(&encode_dataset(instances)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eobm(u_count: usize, arrivals: Vec<Arrival>) -> BipartiteInstance {
        BipartiteInstance::new_unchecked(
            u_count,
            arrivals,
            ProblemPayload::Eobm,
            InstanceMeta::default(),
        )
    }

    #[test]
    fn single_instance_round_trips() {
        let inst = eobm(2, vec![Arrival::new(vec![(0, 0.5)])]);
        let bytes = encode_dataset(std::slice::from_ref(&inst)).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"u_count\":2"));
        assert!(text.contains("[[0,0.5]]"));
        assert_eq!(decode_dataset(&text).unwrap(), vec![inst]);
    }

    #[test]
    fn empty_dataset_is_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        write_dataset(&[], &path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 0);
        assert!(read_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_edge_is_rejected_with_location() {
        let line = r#"{"u_count":3,"arrivals":[{"edges":[[5,0.3]]}],"payload":{"kind":"eobm"}}"#;
        match decode_dataset(line) {
            Err(Error::Validation { line, violations }) => {
                assert_eq!(line, 1);
                assert_eq!(violations.len(), 1);
                assert_eq!(violations[0].location, "arrivals[0].edges[0].u");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_weight_and_empty_arrival_are_rejected() {
        let bad_w = r#"{"u_count":1,"arrivals":[{"edges":[[0,0.0]]}],"payload":{"kind":"eobm"}}"#;
        assert!(matches!(decode_dataset(bad_w), Err(Error::Validation { .. })));
        let empty = r#"{"u_count":1,"arrivals":[{"edges":[]}],"payload":{"kind":"eobm"}}"#;
        assert!(matches!(decode_dataset(empty), Err(Error::Validation { .. })));
    }

    #[test]
    fn minimal_osbm_file_parses() {
        let line = r#"{"u_count":1,"arrivals":[{"edges":[[0,1.0]],"user":0}],"payload":{"kind":"osbm","genre_count":1,"genres_per_u":[[0]],"user_weights":[[2.5]]}}"#;
        let ds = decode_dataset(line).unwrap();
        match ds[0].payload() {
            ProblemPayload::Osbm(p) => assert_eq!(p.genres_per_u[0], vec![0]),
            other => panic!("unexpected payload {other:?}"),
        }
    }

    #[test]
    fn validate_reports_duplicates_and_unknown_users() {
        assert!(validate(&eobm(3, vec![Arrival::new(vec![(0, 0.3), (2, 0.9)])])).is_empty());

        let dup = eobm(3, vec![Arrival::new(vec![(1, 0.3), (1, 0.9)])]);
        assert_eq!(validate(&dup).len(), 1);

        let osbm = BipartiteInstance::new_unchecked(
            1,
            vec![Arrival::with_user(vec![(0, 1.0)], 4)],
            ProblemPayload::Osbm(OsbmPayload {
                genre_count: 1,
                genres_per_u: vec![vec![0]],
                user_weights: vec![vec![1.0]],
            }),
            InstanceMeta::default(),
        );
        let v = validate(&osbm);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, "arrivals[0].user");
    }

    #[test]
    fn mixed_kinds_are_rejected() {
        let a = eobm(1, vec![Arrival::new(vec![(0, 1.0)])]);
        let b = BipartiteInstance::new_unchecked(
            1,
            vec![Arrival::new(vec![(0, 1.0)])],
            ProblemPayload::Adwords(AdwordsPayload { budgets: vec![1.0] }),
            InstanceMeta::default(),
        );
        assert!(matches!(
            encode_dataset(&[a, b]),
            Err(Error::MixedDataset("payload kind"))
        ));
    }

    #[test]
    fn decision_serializes_as_optional_index() {
        let json = serde_json::to_string(&[Decision::Match(3), Decision::Skip]).unwrap();
        assert_eq!(json, "[3,null]");
        let back: Vec<Decision> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Decision::Match(3), Decision::Skip]);
    }

    #[test]
    fn permutation_moves_payload_with_nodes() {
        let inst = BipartiteInstance::new(
            2,
            vec![Arrival::new(vec![(0, 0.1), (1, 0.2)])],
            ProblemPayload::Adwords(AdwordsPayload {
                budgets: vec![1.0, 2.0],
            }),
            InstanceMeta::default(),
        )
        .unwrap();
        let p = inst.permute_fixed_nodes(&[1, 0]).unwrap();
        assert_eq!(p.arrival(0).edges, vec![(0, 0.2), (1, 0.1)]);
        assert_eq!(
            p.payload(),
            &ProblemPayload::Adwords(AdwordsPayload {
                budgets: vec![2.0, 1.0]
            })
        );
        assert!(inst.permute_fixed_nodes(&[0, 0]).is_err());
    }
}
