//! Hindsight-optimal solvers and supervised targets.
//!
//! * E-OBM: maximum-weight assignment ([`assignment`]).
//! * OSBM: exact branch-and-bound for small instances ([`osbm`]).
//! * Adwords with a single bid value: b-matching by max flow ([`flow`]).
//!
//! Every returned assignment is replayed through the environment and the
//! replayed objective is what gets reported, so oracle values and episode
//! rewards are always computed by the same arithmetic.

pub mod assignment;
pub mod cache;
pub mod flow;
pub mod osbm;

use serde::{Deserialize, Serialize};

use crate::env::{replay, Episode};
use crate::error::{Error, Result};
use crate::graph::{BipartiteInstance, Decision, ProblemPayload};
use crate::policies::greedy_act;

/// Size limits for the OSBM search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_u: usize,
    pub max_v: usize,
    pub max_genres: usize,
    pub node_budget: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_u: 12,
            max_v: 40,
            max_genres: 20,
            node_budget: 10_000_000,
        }
    }
}

/// Search statistics for branch-and-bound results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proof {
    pub nodes: u64,
    pub root_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub opt: f64,
    pub assignment: Vec<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof: Option<Proof>,
}

fn finish(instance: &BipartiteInstance, assignment: Vec<Decision>, proof: Option<Proof>) -> Result<OracleResult> {
    let opt = replay(instance, &assignment)?.objective_value;
    Ok(OracleResult {
        opt,
        assignment,
        proof,
    })
}

pub fn solve_eobm(instance: &BipartiteInstance) -> Result<OracleResult> {
    if !matches!(instance.payload(), ProblemPayload::Eobm) {
        return Err(Error::Incompatible(format!(
            "assignment oracle needs eobm instances, got {}",
            instance.kind()
        )));
    }
    let n = instance.u_count();
    let weights: Vec<Vec<Option<f64>>> = instance
        .arrivals()
        .iter()
        .map(|a| (0..n).map(|u| a.weight(u)).collect())
        .collect();
    let assignment = assignment::max_weight_matching(&weights, n)
        .into_iter()
        .map(|m| m.map_or(Decision::Skip, Decision::Match))
        .collect();
    finish(instance, assignment, None)
}

pub fn solve_osbm(instance: &BipartiteInstance, limits: &Limits) -> Result<OracleResult> {
    let ProblemPayload::Osbm(p) = instance.payload() else {
        return Err(Error::Incompatible(format!(
            "coverage oracle needs osbm instances, got {}",
            instance.kind()
        )));
    };
    if instance.u_count() > limits.max_u
        || instance.horizon() > limits.max_v
        || p.genre_count > limits.max_genres
    {
        return Err(Error::OracleRefused(format!(
            "instance {}×{} with {} genres exceeds limits {}×{} with {} genres",
            instance.u_count(),
            instance.horizon(),
            p.genre_count,
            limits.max_u,
            limits.max_v,
            limits.max_genres
        )));
    }
    let mut ep = Episode::reset(instance);
    while !ep.is_terminal() {
        let d = greedy_act(&ep);
        ep.step(d)?;
    }
    let greedy = ep.into_solution();
    let out = osbm::branch_and_bound(
        instance,
        p,
        (&greedy.decisions, greedy.objective_value),
        limits.node_budget,
    );
    if !out.complete {
        return Err(Error::OracleRefused(format!(
            "search exceeded {} nodes",
            limits.node_budget
        )));
    }
    finish(
        instance,
        out.assignment,
        Some(Proof {
            nodes: out.nodes,
            root_bound: out.root_bound,
        }),
    )
}

/// Common bid of an Adwords instance and each node's capacity in bids.
fn uniform_bid_capacities(instance: &BipartiteInstance, budgets: &[f64]) -> Result<(f64, Vec<i64>)> {
    let bid = instance.max_weight();
    let uniform = instance
        .arrivals()
        .iter()
        .flat_map(|a| &a.edges)
        .all(|&(_, w)| (w - bid).abs() <= 1e-12 * bid);
    if !uniform {
        return Err(Error::OracleRefused(
            "bids differ across edges; only the single-bid case is solved exactly".into(),
        ));
    }
    let mut caps = Vec::with_capacity(budgets.len());
    for (u, &b) in budgets.iter().enumerate() {
        let ratio = b / bid;
        let rounded = ratio.round();
        if (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::OracleRefused(format!(
                "budget of node {u} is not a whole number of bids ({ratio})"
            )));
        }
        caps.push(rounded as i64);
    }
    Ok((bid, caps))
}

pub fn solve_adwords_uniform(instance: &BipartiteInstance) -> Result<OracleResult> {
    let ProblemPayload::Adwords(p) = instance.payload() else {
        return Err(Error::Incompatible(format!(
            "flow oracle needs adwords instances, got {}",
            instance.kind()
        )));
    };
    let (_, caps) = uniform_bid_capacities(instance, &p.budgets)?;
    let n = instance.u_count();
    let t_count = instance.horizon();
    // source, arrivals, fixed nodes, sink
    let source = 0;
    let sink = 1 + t_count + n;
    let mut net = flow::FlowNetwork::new(sink + 1);
    let mut arcs = Vec::new();
    for (t, a) in instance.arrivals().iter().enumerate() {
        net.add_edge(source, 1 + t, 1);
        for u in a.neighbours() {
            arcs.push((t, u, net.add_edge(1 + t, 1 + t_count + u, 1)));
        }
    }
    for (u, &c) in caps.iter().enumerate() {
        net.add_edge(1 + t_count + u, sink, c);
    }
    net.max_flow(source, sink);
    let mut assignment = vec![Decision::Skip; t_count];
    for (t, u, id) in arcs {
        if net.flow(id) > 0 {
            assignment[t] = Decision::Match(u);
        }
    }
    finish(instance, assignment, None)
}

/// Dispatches on the payload kind.
pub fn solve(instance: &BipartiteInstance, limits: &Limits) -> Result<OracleResult> {
    match instance.payload() {
        ProblemPayload::Eobm => solve_eobm(instance),
        ProblemPayload::Osbm(_) => solve_osbm(instance, limits),
        ProblemPayload::Adwords(_) => solve_adwords_uniform(instance),
    }
}

/// A value no feasible solution can exceed, for instances the exact solvers
/// refuse.
pub fn upper_bound(instance: &BipartiteInstance) -> f64 {
    match instance.payload() {
        ProblemPayload::Eobm => instance
            .arrivals()
            .iter()
            .map(|a| a.edges.iter().map(|e| e.1).fold(0.0, f64::max))
            .sum(),
        ProblemPayload::Osbm(p) => osbm::root_bound(instance, p),
        ProblemPayload::Adwords(p) => {
            let n = instance.u_count();
            let mut offered = vec![0.0; n];
            let mut per_arrival = 0.0;
            for a in instance.arrivals() {
                let mut best = 0.0f64;
                for &(u, w) in &a.edges {
                    offered[u] += w;
                    best = best.max(w.min(p.budgets[u]));
                }
                per_arrival += best;
            }
            let per_node: f64 = offered.iter().zip(&p.budgets).map(|(o, b)| o.min(*b)).sum();
            per_node.min(per_arrival)
        }
    }
}

/// Oracle decision per timestep as an action slot (skip = `u_count`).
pub fn hindsight_targets(result: &OracleResult, u_count: usize) -> Vec<usize> {
    result.assignment.iter().map(|d| d.slot(u_count)).collect()
}
