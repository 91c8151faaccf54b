//! Hand-crafted state features and per-architecture input assembly.
//!
//! Historical statistics are kept as running sums so each step costs
//! `O(edges of the arrival)`. All weight-valued entries fed to a network are
//! divided by the largest edge value seen so far in the episode (including the
//! current arrival); variances are divided by its square.

use serde::{Deserialize, Serialize};

use crate::env::Episode;
use crate::error::{Error, Result};
use crate::graph::{Arrival, ProblemKind};

/// Number of solution-level features.
pub const SOLUTION_FEATURES: usize = 7;

/// Running statistics for one episode. Slot `u_count` belongs to the skip
/// node and never accumulates weight statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureState {
    pub u_count: usize,
    pub horizon: usize,
    /// Arrivals processed so far.
    pub t: usize,
    /// Edges seen per slot in processed arrivals.
    pub degree: Vec<usize>,
    pub sum_w: Vec<f64>,
    pub sumsq_w: Vec<f64>,
    pub matched_count: usize,
    pub skip_count: usize,
    pub sol_sum: f64,
    pub sol_sumsq: f64,
    pub sol_max: f64,
    pub sol_min: f64,
    /// Largest edge value in processed arrivals.
    pub max_seen: f64,
}

impl FeatureState {
    pub fn new(u_count: usize, horizon: usize) -> Self {
        FeatureState {
            u_count,
            horizon,
            t: 0,
            degree: vec![0; u_count + 1],
            sum_w: vec![0.0; u_count + 1],
            sumsq_w: vec![0.0; u_count + 1],
            matched_count: 0,
            skip_count: 0,
            sol_sum: 0.0,
            sol_sumsq: 0.0,
            sol_max: 0.0,
            sol_min: 0.0,
            max_seen: 0.0,
        }
    }

    /// Folds in one processed arrival: the edge values it offered and the
    /// reward earned, `None` for a skip.
    pub fn observe(&mut self, values: &[(usize, f64)], matched_reward: Option<f64>) {
        for &(u, w) in values {
            self.degree[u] += 1;
            self.sum_w[u] += w;
            self.sumsq_w[u] += w * w;
            self.max_seen = self.max_seen.max(w);
        }
        match matched_reward {
            Some(r) => {
                if self.matched_count == 0 {
                    self.sol_max = r;
                    self.sol_min = r;
                } else {
                    self.sol_max = self.sol_max.max(r);
                    self.sol_min = self.sol_min.min(r);
                }
                self.matched_count += 1;
                self.sol_sum += r;
                self.sol_sumsq += r * r;
            }
            None => self.skip_count += 1,
        }
        self.t += 1;
    }
}

/// Per-slot graph statistics: mean and population variance of past edge
/// values, and average degree including the current arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFeatures {
    pub mean_w: Vec<f64>,
    pub var_w: Vec<f64>,
    pub avg_degree: Vec<f64>,
}

pub fn graph_features(state: &FeatureState, current: Option<&Arrival>) -> GraphFeatures {
    let n = state.u_count;
    let mut mean_w = vec![0.0; n + 1];
    let mut var_w = vec![0.0; n + 1];
    let mut counts: Vec<usize> = state.degree.clone();
    counts[n] = 0;
    for u in 0..n {
        let d = state.degree[u];
        if d > 0 {
            let mu = state.sum_w[u] / d as f64;
            mean_w[u] = mu;
            var_w[u] = (state.sumsq_w[u] / d as f64 - mu * mu).max(0.0);
        }
    }
    let mut steps = state.t;
    if let Some(a) = current {
        for u in a.neighbours() {
            counts[u] += 1;
        }
        steps += 1;
    }
    let avg_degree = counts
        .iter()
        .map(|&c| if steps == 0 { 0.0 } else { c as f64 / steps as f64 })
        .collect();
    GraphFeatures {
        mean_w,
        var_w,
        avg_degree,
    }
}

/// `(fraction of fixed nodes incident to the arrival, 1-based step / |V|)`.
pub fn node_features(state: &FeatureState, arrival: &Arrival) -> (f64, f64) {
    (
        arrival.edges.len() as f64 / state.u_count as f64,
        (state.t + 1) as f64 / state.horizon as f64,
    )
}

/// `[max, min, mean, variance, matched/|U|, skips/t, sum/|U|]` over the values
/// of matches made so far; all zero for an empty solution.
pub fn solution_features(state: &FeatureState) -> [f64; SOLUTION_FEATURES] {
    let n = state.u_count as f64;
    let skip_ratio = if state.t == 0 {
        0.0
    } else {
        state.skip_count as f64 / state.t as f64
    };
    if state.matched_count == 0 {
        return [0.0, 0.0, 0.0, 0.0, 0.0, skip_ratio, 0.0];
    }
    let k = state.matched_count as f64;
    let mean = state.sol_sum / k;
    let var = (state.sol_sumsq / k - mean * mean).max(0.0);
    [
        state.sol_max,
        state.sol_min,
        mean,
        var,
        k / n,
        skip_ratio,
        state.sol_sum / n,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Ff,
    FfHist,
    InvFf,
    InvFfHist,
}

impl InputKind {
    pub fn is_invariant(self) -> bool {
        matches!(self, InputKind::InvFf | InputKind::InvFfHist)
    }

    pub fn has_history(self) -> bool {
        matches!(self, InputKind::FfHist | InputKind::InvFfHist)
    }

    /// Width of one input row: the whole state for `ff` kinds, one slot for
    /// invariant kinds.
    pub fn row_len(self, u_count: usize, problem: ProblemKind) -> usize {
        let slots = u_count + 1;
        let adwords = problem == ProblemKind::Adwords;
        match self {
            InputKind::Ff => 2 * slots + if adwords { slots } else { 0 },
            InputKind::FfHist => {
                2 * slots + SOLUTION_FEATURES + 3 * slots + 1 + if adwords { 2 * slots } else { 0 }
            }
            InputKind::InvFf => 3 + usize::from(adwords),
            InputKind::InvFfHist => 16 + if adwords { 2 } else { 0 },
        }
    }

    /// Output width of the network for this input kind.
    pub fn output_len(self, u_count: usize) -> usize {
        if self.is_invariant() {
            1
        } else {
            u_count + 1
        }
    }
}

impl std::str::FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "ff" => Ok(InputKind::Ff),
            "ff_hist" => Ok(InputKind::FfHist),
            "inv_ff" => Ok(InputKind::InvFf),
            "inv_ff_hist" => Ok(InputKind::InvFfHist),
            other => Err(Error::Parameter(format!("unknown input kind {other:?}"))),
        }
    }
}

/// Everything the input builders need at one decision point, already
/// normalized.
#[derive(Debug, Clone)]
pub struct StepFeatures {
    pub u_count: usize,
    /// Divisor applied to weight-valued entries.
    pub scale: f64,
    /// Edge value per slot, zero for non-neighbours and the skip slot.
    pub w: Vec<f64>,
    /// Availability per slot; the skip slot is always available.
    pub m: Vec<f64>,
    pub w_mean: f64,
    pub pct_incident: f64,
    pub step_frac: f64,
    pub graph: GraphFeatures,
    pub solution: [f64; SOLUTION_FEATURES],
    /// Remaining and original budgets (Adwords), zero on the skip slot.
    pub budgets: Option<(Vec<f64>, Vec<f64>)>,
}

impl StepFeatures {
    pub fn new(episode: &Episode<'_>) -> Result<Self> {
        let arrival = episode.current_arrival().ok_or(Error::Terminal)?;
        let state = &episode.state().features;
        let n = episode.u_count();
        let values = episode.edge_values();
        let current_max = values.iter().map(|&(_, v)| v).fold(0.0, f64::max);
        let max_w = state.max_seen.max(current_max);
        let scale = if max_w > 0.0 { max_w } else { 1.0 };
        let inv = 1.0 / scale;
        let inv2 = inv * inv;

        let mut w = vec![0.0; n + 1];
        for &(u, v) in &values {
            w[u] = v * inv;
        }
        let w_mean = if values.is_empty() {
            0.0
        } else {
            values.iter().map(|&(_, v)| v).sum::<f64>() / values.len() as f64 * inv
        };
        let mut m: Vec<f64> = (0..n)
            .map(|u| if episode.is_available(u) { 1.0 } else { 0.0 })
            .collect();
        m.push(1.0);

        let mut graph = graph_features(state, Some(arrival));
        graph.mean_w.iter_mut().for_each(|x| *x *= inv);
        graph.var_w.iter_mut().for_each(|x| *x *= inv2);

        let mut solution = solution_features(state);
        for i in [0, 1, 2, 6] {
            solution[i] *= inv;
        }
        solution[3] *= inv2;

        let (pct_incident, step_frac) = node_features(state, arrival);
        let budgets = episode.remaining_budgets().map(|rem| {
            let original = match episode.instance().payload() {
                crate::graph::ProblemPayload::Adwords(p) => &p.budgets,
                _ => unreachable!(),
            };
            let mut r: Vec<f64> = rem.iter().map(|x| x * inv).collect();
            let mut b: Vec<f64> = original.iter().map(|x| x * inv).collect();
            r.push(0.0);
            b.push(0.0);
            (r, b)
        });

        Ok(StepFeatures {
            u_count: n,
            scale,
            w,
            m,
            w_mean,
            pct_incident,
            step_frac,
            graph,
            solution,
            budgets,
        })
    }

    /// Writes the single input row of a non-invariant kind.
    pub fn write_full(&self, kind: InputKind, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.m);
        if kind == InputKind::FfHist {
            out.extend_from_slice(&self.solution);
            out.extend_from_slice(&self.graph.mean_w);
            out.extend_from_slice(&self.graph.var_w);
            out.extend_from_slice(&self.graph.avg_degree);
            out.push(self.step_frac);
        }
        if let Some((r, b)) = &self.budgets {
            out.extend_from_slice(r);
            if kind == InputKind::FfHist {
                out.extend_from_slice(b);
            }
        }
    }

    /// Writes the input row for one slot of an invariant kind.
    pub fn write_slot(&self, kind: InputKind, slot: usize, out: &mut Vec<f64>) {
        let skip = if slot == self.u_count { 1.0 } else { 0.0 };
        match kind {
            InputKind::InvFf => {
                out.extend_from_slice(&[self.w[slot], skip, self.w_mean]);
                if let Some((r, _)) = &self.budgets {
                    out.push(r[slot]);
                }
            }
            InputKind::InvFfHist => {
                out.extend_from_slice(&[
                    self.w[slot],
                    self.m[slot],
                    skip,
                    self.w_mean,
                    self.pct_incident,
                    self.step_frac,
                    self.graph.mean_w[slot],
                    self.graph.var_w[slot],
                    self.graph.avg_degree[slot],
                ]);
                out.extend_from_slice(&self.solution);
                if let Some((r, b)) = &self.budgets {
                    out.push(r[slot]);
                    out.push(b[slot]);
                }
            }
            InputKind::Ff | InputKind::FfHist => unreachable!("not an invariant kind"),
        }
    }
}

/// Row-major batch of network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl InputTensor {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Builds the network input for the current decision: one row for `ff` kinds,
/// one row per slot (skip slot last) for invariant kinds.
pub fn assemble_input(kind: InputKind, episode: &Episode<'_>) -> Result<InputTensor> {
    let features = StepFeatures::new(episode)?;
    let n = episode.u_count();
    let cols = kind.row_len(n, episode.instance().kind());
    let mut data = Vec::new();
    let rows = if kind.is_invariant() {
        for slot in 0..=n {
            features.write_slot(kind, slot, &mut data);
        }
        n + 1
    } else {
        features.write_full(kind, &mut data);
        1
    };
    debug_assert_eq!(data.len(), rows * cols);
    Ok(InputTensor { data, rows, cols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AdwordsPayload, BipartiteInstance, Decision, InstanceMeta, ProblemPayload};

    fn eobm(u_count: usize, arrivals: Vec<Vec<(usize, f64)>>) -> BipartiteInstance {
        BipartiteInstance::new(
            u_count,
            arrivals.into_iter().map(Arrival::new).collect(),
            ProblemPayload::Eobm,
            InstanceMeta::default(),
        )
        .unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn per_node_mean_and_variance() {
        let mut s = FeatureState::new(2, 4);
        s.observe(&[(0, 0.2)], None);
        s.observe(&[(0, 0.4)], None);
        let g = graph_features(&s, None);
        assert!(close(g.mean_w[0], 0.3));
        assert!(close(g.var_w[0], 0.01));
        assert_eq!(g.mean_w[1], 0.0);
        assert_eq!(g.mean_w[2], 0.0);
    }

    #[test]
    fn average_degree_counts_current_arrival() {
        let mut s = FeatureState::new(2, 10);
        s.observe(&[(0, 0.5)], None);
        s.observe(&[(1, 0.5)], None);
        s.observe(&[(1, 0.5)], None);
        let current = Arrival::new(vec![(0, 0.1)]);
        let g = graph_features(&s, Some(&current));
        assert!(close(g.avg_degree[0], 0.5));
        assert!(close(g.avg_degree[1], 0.5));
        assert_eq!(g.avg_degree[2], 0.0);
        assert_eq!(graph_features(&FeatureState::new(2, 1), None).avg_degree, vec![0.0; 3]);
    }

    #[test]
    fn incoming_node_features() {
        let s = FeatureState::new(10, 30);
        let a = Arrival::new(vec![(0, 1.0), (4, 1.0), (9, 1.0)]);
        let (pct, step) = node_features(&s, &a);
        assert!(close(pct, 0.3));
        assert!(close(step, 1.0 / 30.0));
        let mut last = FeatureState::new(10, 30);
        last.t = 29;
        assert_eq!(node_features(&last, &a).1, 1.0);
    }

    #[test]
    fn solution_statistics() {
        let mut s = FeatureState::new(10, 30);
        assert_eq!(solution_features(&s), [0.0; 7]);
        s.observe(&[(0, 0.5)], Some(0.5));
        s.observe(&[(1, 0.7)], Some(0.7));
        s.observe(&[(2, 0.1)], None);
        s.observe(&[(3, 0.1)], Some(0.1));
        let f = solution_features(&s);
        assert!(close(f[0], 0.7));
        assert!(close(f[1], 0.1));
        assert!(close(f[5], 0.25));

        let mut two = FeatureState::new(10, 30);
        two.observe(&[], Some(0.5));
        two.observe(&[], Some(0.7));
        let f = solution_features(&two);
        assert!(close(f[0], 0.7) && close(f[1], 0.5) && close(f[2], 0.6) && close(f[3], 0.01));
        assert!(close(f[6], 0.12));
        assert!(close(f[4], 0.2));
    }

    #[test]
    fn inv_ff_skip_slot() {
        let inst = eobm(3, vec![vec![(0, 0.3), (2, 0.9)]]);
        let ep = Episode::reset(&inst);
        let x = assemble_input(InputKind::InvFf, &ep).unwrap();
        assert_eq!((x.rows, x.cols), (4, 3));
        // raw skip row (0, 1, 0.6) divided by the running max 0.9
        let skip = x.row(3);
        assert_eq!(skip[0], 0.0);
        assert_eq!(skip[1], 1.0);
        assert!(close(skip[2], 0.6 / 0.9));
        assert!(close(x.row(0)[0], 0.3 / 0.9));
    }

    #[test]
    fn ff_input_layout() {
        let inst = eobm(2, vec![vec![(1, 0.4)], vec![(1, 0.5)]]);
        let mut ep = Episode::reset(&inst);
        ep.step(Decision::Skip).unwrap();
        let x = assemble_input(InputKind::Ff, &ep).unwrap();
        assert_eq!(x.rows, 1);
        // w = (0, 0.5, 0) / 0.5, m = (1, 1, 1)
        assert_eq!(x.data, vec![0.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn row_lengths() {
        assert_eq!(InputKind::InvFfHist.row_len(10, ProblemKind::Eobm), 16);
        assert_eq!(InputKind::InvFfHist.row_len(10, ProblemKind::Adwords), 18);
        assert_eq!(InputKind::InvFf.row_len(10, ProblemKind::Osbm), 3);
        assert_eq!(InputKind::Ff.row_len(10, ProblemKind::Eobm), 22);
        assert_eq!(InputKind::FfHist.row_len(10, ProblemKind::Eobm), 22 + 7 + 33 + 1);

        let inst = BipartiteInstance::new(
            2,
            vec![Arrival::new(vec![(0, 0.2), (1, 0.2)])],
            ProblemPayload::Adwords(AdwordsPayload {
                budgets: vec![0.4, 0.4],
            }),
            InstanceMeta::default(),
        )
        .unwrap();
        let ep = Episode::reset(&inst);
        for kind in [InputKind::Ff, InputKind::FfHist, InputKind::InvFf, InputKind::InvFfHist] {
            let x = assemble_input(kind, &ep).unwrap();
            assert_eq!(x.cols, kind.row_len(2, ProblemKind::Adwords), "{kind:?}");
            assert_eq!(x.data.len(), x.rows * x.cols);
        }
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!("gnn_hist".parse::<InputKind>().is_err());
        assert_eq!("inv-ff-hist".parse::<InputKind>().unwrap(), InputKind::InvFfHist);
    }
}
