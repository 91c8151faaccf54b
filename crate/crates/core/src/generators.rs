//! Instance generators: Erdős–Rényi and preferential-attachment bigraphs,
//! base-graph sampling under uniform i.i.d. arrivals, and Adwords instances
//! built from an adjacency template.
//!
//! Every instance is generated from its own stream derived from
//! `(spec.seed, index)`, so datasets are reproducible and can be generated in
//! parallel.

use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    AdwordsPayload, Arrival, BipartiteInstance, InstanceMeta, OsbmPayload, ProblemPayload,
};
use crate::rng::{self, stream, Rng};

/// Attempts allowed when re-drawing an arrival that came out with no edges.
pub const MAX_REDRAWS: usize = 1_000_000;

/// Floor applied to preferential-attachment weights, which are drawn from a
/// normal distribution and may come out non-positive.
pub const MIN_BA_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenKind {
    /// Each candidate edge present independently with probability `p`.
    Er { p: f64 },
    /// Preferential attachment with mean online degree `p`.
    Ba { p: f64 },
    /// Uniform sampling from a user-supplied base graph.
    BaseGraph {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        genres: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ratings: Option<PathBuf>,
        /// Re-sample the fixed nodes for every instance.
        #[serde(default)]
        var: bool,
    },
    /// Adwords instances over a fixed adjacency template read from CSV.
    AdwordsTemplate {
        path: PathBuf,
        #[serde(default = "default_bid_low")]
        bid_low: f64,
        #[serde(default = "default_bid_high")]
        bid_high: f64,
    },
    /// Adwords instances over a random template (edge probability `p`) shared by
    /// the whole dataset.
    AdwordsRandom {
        p: f64,
        #[serde(default = "default_bid_low")]
        bid_low: f64,
        #[serde(default = "default_bid_high")]
        bid_high: f64,
    },
}

fn default_bid_low() -> f64 {
    0.1
}

fn default_bid_high() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    #[serde(flatten)]
    pub kind: GenKind,
    pub u_count: usize,
    pub v_count: usize,
    pub seed: u64,
    pub count: usize,
}

impl GenSpec {
    pub fn er(u_count: usize, v_count: usize, p: f64, seed: u64, count: usize) -> Self {
        GenSpec {
            kind: GenKind::Er { p },
            u_count,
            v_count,
            seed,
            count,
        }
    }

    pub fn ba(u_count: usize, v_count: usize, p: f64, seed: u64, count: usize) -> Self {
        GenSpec {
            kind: GenKind::Ba { p },
            u_count,
            v_count,
            seed,
            count,
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.u_count == 0 || self.v_count == 0 {
            return bad("u_count and v_count must be positive".into());
        }
        if self.count == 0 {
            return bad("count must be at least 1".into());
        }
        match &self.kind {
            GenKind::Er { p } | GenKind::AdwordsRandom { p, .. } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return bad(format!("edge probability p = {p} must lie in (0, 1]"));
                }
            }
            GenKind::Ba { p } => {
                if !(*p > 0.0 && *p < self.u_count as f64) {
                    return bad(format!(
                        "average degree p = {p} must lie in (0, u_count = {})",
                        self.u_count
                    ));
                }
            }
            GenKind::BaseGraph { .. } => {}
            GenKind::AdwordsTemplate { .. } => {}
        }
        if let GenKind::AdwordsTemplate {
            bid_low, bid_high, ..
        }
        | GenKind::AdwordsRandom {
            bid_low, bid_high, ..
        } = &self.kind
        {
            if !(*bid_low > 0.0 && bid_low < bid_high) {
                return bad(format!("bid range [{bid_low}, {bid_high}) is empty"));
            }
        }
        Ok(())
    }

    fn meta(&self, index: usize) -> InstanceMeta {
        let mut params = match serde_json::to_value(&self.kind) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => serde_json::Map::new(),
        };
        let generator = params
            .remove("kind")
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        params.insert("index".into(), index.into());
        InstanceMeta {
            generator,
            seed: self.seed,
            params,
        }
    }
}

/// A bipartite graph from which instances are sampled. Left nodes become fixed
/// nodes, right nodes become arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseGraph {
    pub left_count: usize,
    pub right_count: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub genre_count: usize,
    /// Genre set per left node (OSBM only).
    pub genres: Option<Vec<Vec<usize>>>,
    /// Genre ratings per right node (OSBM only).
    pub ratings: Option<Vec<Vec<f64>>>,
    by_right: Vec<Vec<(usize, f64)>>,
}

impl BaseGraph {
    pub fn new(left_count: usize, right_count: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut by_right = vec![Vec::new(); right_count];
        for &(l, r, w) in &edges {
            if l >= left_count || r >= right_count {
                return Err(Error::Parameter(format!(
                    "base edge ({l}, {r}) outside {left_count}x{right_count}"
                )));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Parameter(format!("base edge ({l}, {r}) has weight {w}")));
            }
            by_right[r].push((l, w));
        }
        for adj in &mut by_right {
            adj.sort_by_key(|&(l, _)| l);
            if adj.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::Parameter("duplicate base edge".into()));
            }
        }
        Ok(BaseGraph {
            left_count,
            right_count,
            edges,
            genre_count: 0,
            genres: None,
            ratings: None,
            by_right,
        })
    }

    /// Attaches OSBM annotations: genres per left node and ratings per right node.
    pub fn with_osbm(mut self, genre_count: usize, genres: Vec<Vec<usize>>, ratings: Vec<Vec<f64>>) -> Result<Self> {
        if genres.len() != self.left_count || ratings.len() != self.right_count {
            return Err(Error::Parameter("OSBM annotations do not match base graph size".into()));
        }
        if genres.iter().flatten().any(|&z| z >= genre_count)
            || ratings.iter().any(|r| r.len() != genre_count)
        {
            return Err(Error::Parameter("genre index out of range".into()));
        }
        self.genre_count = genre_count;
        self.genres = Some(genres);
        self.ratings = Some(ratings);
        Ok(self)
    }

    pub fn right_adjacency(&self, r: usize) -> &[(usize, f64)] {
        &self.by_right[r]
    }

    /// Loads `u,v,w` rows, optionally with `u,genre` and `user,genre,rating`
    /// sidecars. Node counts are one past the largest index seen; a
    /// non-numeric first row is treated as a header.
    pub fn from_csv(path: &Path, genres: Option<&Path>, ratings: Option<&Path>) -> Result<Self> {
        let rows = read_rows(path, 3)?;
        let mut edges = Vec::with_capacity(rows.len());
        let (mut left, mut right) = (0, 0);
        for row in rows {
            let l = as_index(path, &row[0])?;
            let r = as_index(path, &row[1])?;
            left = left.max(l + 1);
            right = right.max(r + 1);
            edges.push((l, r, row[2]));
        }
        let base = BaseGraph::new(left, right, edges)?;
        match (genres, ratings) {
            (None, None) => Ok(base),
            (Some(gp), Some(rp)) => {
                let genre_rows = read_rows(gp, 2)?;
                let rating_rows = read_rows(rp, 3)?;
                let mut genre_count = 0;
                for row in genre_rows.iter().chain(rating_rows.iter()) {
                    genre_count = genre_count.max(as_index(gp, &row[1])? + 1);
                }
                let mut genre_sets = vec![Vec::new(); base.left_count];
                for row in &genre_rows {
                    let u = as_index(gp, &row[0])?;
                    if u >= base.left_count {
                        return Err(Error::Csv {
                            path: gp.to_path_buf(),
                            message: format!("node {u} not in base graph"),
                        });
                    }
                    genre_sets[u].push(as_index(gp, &row[1])?);
                }
                for set in &mut genre_sets {
                    set.sort_unstable();
                    set.dedup();
                }
                let mut table = vec![vec![0.0; genre_count]; base.right_count];
                for row in &rating_rows {
                    let user = as_index(rp, &row[0])?;
                    if user >= base.right_count {
                        return Err(Error::Csv {
                            path: rp.to_path_buf(),
                            message: format!("user {user} not in base graph"),
                        });
                    }
                    table[user][as_index(rp, &row[1])?] = row[2];
                }
                base.with_osbm(genre_count, genre_sets, table)
            }
            _ => Err(Error::Parameter(
                "OSBM base graphs need both genre and rating sidecars".into(),
            )),
        }
    }
}

fn as_index(path: &Path, v: &f64) -> Result<usize> {
    if *v >= 0.0 && v.fract() == 0.0 {
        Ok(*v as usize)
    } else {
        Err(Error::Csv {
            path: path.to_path_buf(),
            message: format!("{v} is not a node index"),
        })
    }
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        if record.len() != width {
            return Err(csv_err(format!("row {} has {} fields, expected {width}", i + 1, record.len())));
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(csv_err(format!("row {}: {e}", i + 1))),
        }
    }
    Ok(rows)
}

/// The attachment distribution `(1 + deg(u)) / (|U| + sum deg)`.
pub fn attachment_distribution(degrees: &[usize]) -> Vec<f64> {
    let total = degrees.len() + degrees.iter().sum::<usize>();
    degrees
        .iter()
        .map(|&d| (1 + d) as f64 / total as f64)
        .collect()
}

/// Draws one E-OBM instance from the Erdős–Rényi family with weights U(0, 1].
pub fn gen_er(spec: &GenSpec, index: usize, rng: &mut Rng) -> Result<BipartiteInstance> {
    let GenKind::Er { p } = spec.kind else {
        return Err(Error::Parameter("gen_er needs an er spec".into()));
    };
    let mut arrivals = Vec::with_capacity(spec.v_count);
    for _ in 0..spec.v_count {
        let mut attempts = 0;
        let edges = loop {
            let mut edges = Vec::new();
            for u in 0..spec.u_count {
                if rng.random::<f64>() < p {
                    edges.push((u, 1.0 - rng.random::<f64>()));
                }
            }
            if !edges.is_empty() {
                break edges;
            }
            attempts += 1;
            if attempts >= MAX_REDRAWS {
                return Err(redraw_error(spec));
            }
        };
        arrivals.push(Arrival::new(edges));
    }
    BipartiteInstance::new(spec.u_count, arrivals, ProblemPayload::Eobm, spec.meta(index))
}

/// Draws one E-OBM instance by preferential attachment. Degrees start at zero
/// and grow with every arrival; weights are `N(deg(u), p/5)` with `deg(u)` the
/// degree before the current arrival.
pub fn gen_ba(spec: &GenSpec, index: usize, rng: &mut Rng) -> Result<BipartiteInstance> {
    let GenKind::Ba { p } = spec.kind else {
        return Err(Error::Parameter("gen_ba needs a ba spec".into()));
    };
    let n = spec.u_count;
    let binomial = Binomial::new(n as u64, p / n as f64)
        .map_err(|e| Error::Parameter(format!("binomial: {e}")))?;
    let mut degrees = vec![0usize; n];
    let mut arrivals = Vec::with_capacity(spec.v_count);
    for _ in 0..spec.v_count {
        let mut attempts = 0;
        let n_v = loop {
            let k = binomial.sample(rng) as usize;
            if k > 0 {
                break k;
            }
            attempts += 1;
            if attempts >= MAX_REDRAWS {
                return Err(redraw_error(spec));
            }
        };
        let total = (n + degrees.iter().sum::<usize>()) as f64;
        let mut chosen: Vec<usize> = Vec::with_capacity(n_v);
        while chosen.len() < n_v {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (u, &d) in degrees.iter().enumerate() {
                target -= (1 + d) as f64;
                if target < 0.0 {
                    pick = u;
                    break;
                }
            }
            if !chosen.contains(&pick) {
                chosen.push(pick);
            }
        }
        let mut edges = Vec::with_capacity(n_v);
        for &u in &chosen {
            let normal = Normal::new(degrees[u] as f64, p / 5.0)
                .map_err(|e| Error::Parameter(format!("normal: {e}")))?;
            edges.push((u, normal.sample(rng).max(MIN_BA_WEIGHT)));
        }
        for &u in &chosen {
            degrees[u] += 1;
        }
        edges.sort_by_key(|&(u, _)| u);
        arrivals.push(Arrival::new(edges));
    }
    BipartiteInstance::new(spec.u_count, arrivals, ProblemPayload::Eobm, spec.meta(index))
}

fn redraw_error(spec: &GenSpec) -> Error {
    Error::Generation {
        seed: spec.seed,
        message: format!("no edges after {MAX_REDRAWS} re-draws"),
    }
}

/// Samples `spec.count` instances from a base graph. With `var = false` the
/// fixed nodes are drawn once (from the dataset stream) and shared; otherwise
/// each instance draws its own. Arrivals are right nodes drawn uniformly with
/// replacement, re-drawn until they touch a selected fixed node.
pub fn gen_from_base(spec: &GenSpec, base: &BaseGraph) -> Result<Vec<BipartiteInstance>> {
    let GenKind::BaseGraph { var, .. } = spec.kind else {
        return Err(Error::Parameter("gen_from_base needs a base_graph spec".into()));
    };
    if spec.u_count > base.left_count {
        return Err(Error::Parameter(format!(
            "cannot pick {} fixed nodes from a base graph with {}",
            spec.u_count, base.left_count
        )));
    }
    let shared = (!var).then(|| {
        let mut r = rng::derive(spec.seed, &[stream::DATASET]);
        pick_fixed(base.left_count, spec.u_count, &mut r)
    });
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::derive(spec.seed, &[stream::INSTANCE, i as u64]);
            let fixed = match &shared {
                Some(f) => f.clone(),
                None => pick_fixed(base.left_count, spec.u_count, &mut r),
            };
            sample_from_base(spec, base, &fixed, i, &mut r)
        })
        .collect()
}

fn pick_fixed(left_count: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut picked = index::sample(rng, left_count, k).into_vec();
    picked.sort_unstable();
    picked
}

fn sample_from_base(
    spec: &GenSpec,
    base: &BaseGraph,
    fixed: &[usize],
    index: usize,
    rng: &mut Rng,
) -> Result<BipartiteInstance> {
    let mut local = vec![usize::MAX; base.left_count];
    for (i, &l) in fixed.iter().enumerate() {
        local[l] = i;
    }
    let osbm = base.genres.is_some();
    let mut user_ids: Vec<usize> = Vec::new();
    let mut arrivals = Vec::with_capacity(spec.v_count);
    for _ in 0..spec.v_count {
        let mut attempts = 0;
        let (r, edges) = loop {
            let r = rng.random_range(0..base.right_count);
            let edges: Vec<(usize, f64)> = base
                .right_adjacency(r)
                .iter()
                .filter(|&&(l, _)| local[l] != usize::MAX)
                .map(|&(l, w)| (local[l], w))
                .collect();
            if !edges.is_empty() {
                break (r, edges);
            }
            attempts += 1;
            if attempts >= MAX_REDRAWS {
                return Err(Error::Generation {
                    seed: spec.seed,
                    message: "no base right node neighbours the selected fixed nodes".into(),
                });
            }
        };
        let mut edges = edges;
        edges.sort_by_key(|&(u, _)| u);
        let user = if osbm {
            let id = match user_ids.iter().position(|&x| x == r) {
                Some(id) => id,
                None => {
                    user_ids.push(r);
                    user_ids.len() - 1
                }
            };
            Some(id)
        } else {
            None
        };
        arrivals.push(Arrival { edges, user });
    }
    let payload = match (&base.genres, &base.ratings) {
        (Some(genres), Some(ratings)) => ProblemPayload::Osbm(OsbmPayload {
            genre_count: base.genre_count,
            genres_per_u: fixed.iter().map(|&l| genres[l].clone()).collect(),
            user_weights: user_ids.iter().map(|&r| ratings[r].clone()).collect(),
        }),
        _ => ProblemPayload::Eobm,
    };
    let mut meta = spec.meta(index);
    meta.params.insert("fixed_nodes".into(), fixed.into());
    BipartiteInstance::new(spec.u_count, arrivals, payload, meta)
}

/// Draws one Adwords instance over `template`: a single bid from
/// `[bid_low, bid_high)` on every edge, budgets `bid * |V| / |U|`, and the
/// fixed nodes relabelled by a uniformly random permutation. Arrival order
/// follows the template's right nodes.
pub fn gen_adwords(spec: &GenSpec, template: &BaseGraph, index: usize, rng: &mut Rng) -> Result<BipartiteInstance> {
    let (bid_low, bid_high) = match spec.kind {
        GenKind::AdwordsTemplate {
            bid_low, bid_high, ..
        }
        | GenKind::AdwordsRandom {
            bid_low, bid_high, ..
        } => (bid_low, bid_high),
        _ => return Err(Error::Parameter("gen_adwords needs an adwords spec".into())),
    };
    if template.left_count != spec.u_count {
        return Err(Error::Parameter(format!(
            "template has {} fixed nodes, spec asks for {}",
            template.left_count, spec.u_count
        )));
    }
    let bid = rng.random_range(bid_low..bid_high);
    let mut perm: Vec<usize> = (0..spec.u_count).collect();
    perm.shuffle(rng);
    let arrivals = (0..template.right_count)
        .map(|r| {
            let mut edges: Vec<(usize, f64)> = template
                .right_adjacency(r)
                .iter()
                .map(|&(l, _)| (perm[l], bid))
                .collect();
            edges.sort_by_key(|&(u, _)| u);
            Arrival::new(edges)
        })
        .collect::<Vec<_>>();
    let budget = bid * arrivals.len() as f64 / spec.u_count as f64;
    let mut meta = spec.meta(index);
    meta.params.insert("bid".into(), bid.into());
    meta.params.insert("permutation".into(), perm.clone().into());
    BipartiteInstance::new(
        spec.u_count,
        arrivals,
        ProblemPayload::Adwords(AdwordsPayload {
            budgets: vec![budget; spec.u_count],
        }),
        meta,
    )
}

/// Random adjacency template: every right node keeps each left node with
/// probability `p`, re-drawn until it has at least one neighbour.
pub fn random_template(u_count: usize, v_count: usize, p: f64, rng: &mut Rng) -> Result<BaseGraph> {
    let mut edges = Vec::new();
    for r in 0..v_count {
        let mut attempts = 0;
        loop {
            let row: Vec<usize> = (0..u_count).filter(|_| rng.random::<f64>() < p).collect();
            if !row.is_empty() {
                edges.extend(row.into_iter().map(|l| (l, r, 1.0)));
                break;
            }
            attempts += 1;
            if attempts >= MAX_REDRAWS {
                return Err(Error::Parameter("template edge probability too small".into()));
            }
        }
    }
    BaseGraph::new(u_count, v_count, edges)
}

/// Generates a full dataset according to `spec`, loading any files it names.
pub fn generate(spec: &GenSpec) -> Result<Vec<BipartiteInstance>> {
    spec.check()?;
    match &spec.kind {
        GenKind::Er { .. } => per_instance(spec, gen_er),
        GenKind::Ba { .. } => per_instance(spec, gen_ba),
        GenKind::BaseGraph {
            path,
            genres,
            ratings,
            ..
        } => {
            let base = BaseGraph::from_csv(path, genres.as_deref(), ratings.as_deref())?;
            gen_from_base(spec, &base)
        }
        GenKind::AdwordsTemplate { path, .. } => {
            let template = BaseGraph::from_csv(path, None, None)?;
            adwords_dataset(spec, &template)
        }
        GenKind::AdwordsRandom { p, .. } => {
            let mut r = rng::derive(spec.seed, &[stream::DATASET]);
            let template = random_template(spec.u_count, spec.v_count, *p, &mut r)?;
            adwords_dataset(spec, &template)
        }
    }
}

pub fn adwords_dataset(spec: &GenSpec, template: &BaseGraph) -> Result<Vec<BipartiteInstance>> {
    if template.right_count != spec.v_count {
        return Err(Error::Parameter(format!(
            "template has {} arrivals, spec asks for {}",
            template.right_count, spec.v_count
        )));
    }
    per_instance(spec, |s, i, r| gen_adwords(s, template, i, r))
}

fn per_instance<F>(spec: &GenSpec, f: F) -> Result<Vec<BipartiteInstance>>
where
    F: Fn(&GenSpec, usize, &mut Rng) -> Result<BipartiteInstance> + Sync,
{
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::derive(spec.seed, &[stream::INSTANCE, i as u64]);
            f(spec, i, &mut r)
        })
        .collect()
}
