//! Exact OSBM optimum by depth-first branch-and-bound over arrivals.
//!
//! Each movie is used at most once, each arrival takes at most one movie, and a
//! user's reward is the weighted coverage of the genres of all movies matched
//! to any of their arrivals.

use crate::graph::{BipartiteInstance, Decision, OsbmPayload};

/// Slack for float comparisons between bounds and incumbents.
const TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub assignment: Vec<Decision>,
    pub value: f64,
    pub nodes: u64,
    pub root_bound: f64,
    /// `false` when the node budget ran out before the search finished.
    pub complete: bool,
}

struct Search<'a> {
    p: &'a OsbmPayload,
    users: Vec<usize>,
    nbrs: Vec<Vec<usize>>,
    covered: Vec<Vec<bool>>,
    available: Vec<bool>,
    current: Vec<Option<usize>>,
    value: f64,
    best_value: f64,
    best: Vec<Option<usize>>,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl Search<'_> {
    fn gain(&self, u: usize, l: usize) -> f64 {
        let w = &self.p.user_weights[l];
        self.p.genres_per_u[u]
            .iter()
            .filter(|&&z| !self.covered[l][z])
            .map(|&z| w[z])
            .sum()
    }

    /// Admissible bound on what arrivals `t..` can still add: the smaller of
    /// "each free movie earns at most its best current marginal gain" and
    /// "each remaining arrival earns at most its best current marginal gain".
    fn bound(&self, t: usize) -> f64 {
        let n = self.available.len();
        let mut per_movie = vec![0.0f64; n];
        let mut per_arrival = 0.0;
        for s in t..self.nbrs.len() {
            let l = self.users[s];
            let mut best = 0.0f64;
            for &u in &self.nbrs[s] {
                if self.available[u] {
                    let g = self.gain(u, l);
                    best = best.max(g);
                    per_movie[u] = per_movie[u].max(g);
                }
            }
            per_arrival += best;
        }
        per_arrival.min(per_movie.iter().sum())
    }

    fn dfs(&mut self, t: usize) {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        if t == self.nbrs.len() {
            if self.value > self.best_value + TOL {
                self.best_value = self.value;
                self.best.clone_from(&self.current);
            }
            return;
        }
        if self.value + self.bound(t) <= self.best_value + TOL {
            return;
        }
        let l = self.users[t];
        let mut options: Vec<(usize, f64)> = self.nbrs[t]
            .iter()
            .filter(|&&u| self.available[u])
            .map(|&u| (u, self.gain(u, l)))
            .filter(|&(_, g)| g > 0.0)
            .collect();
        options.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (u, g) in options {
            let newly: Vec<usize> = self.p.genres_per_u[u]
                .iter()
                .copied()
                .filter(|&z| !self.covered[l][z])
                .collect();
            for &z in &newly {
                self.covered[l][z] = true;
            }
            self.available[u] = false;
            self.current[t] = Some(u);
            let before = self.value;
            self.value += g;
            self.dfs(t + 1);
            self.value = before;
            self.current[t] = None;
            self.available[u] = true;
            for &z in &newly {
                self.covered[l][z] = false;
            }
            if self.exhausted {
                return;
            }
        }
        self.dfs(t + 1);
    }
}

/// Runs the search seeded with `incumbent` (a feasible assignment and its
/// value).
pub fn branch_and_bound(
    instance: &BipartiteInstance,
    p: &OsbmPayload,
    incumbent: (&[Decision], f64),
    node_budget: u64,
) -> SearchOutcome {
    let users: Vec<usize> = instance
        .arrivals()
        .iter()
        .map(|a| a.user.expect("validated OSBM arrival has a user"))
        .collect();
    let nbrs: Vec<Vec<usize>> = instance.arrivals().iter().map(|a| a.neighbours().collect()).collect();
    let mut search = Search {
        p,
        users,
        nbrs,
        covered: vec![vec![false; p.genre_count]; p.user_weights.len()],
        available: vec![true; instance.u_count()],
        current: vec![None; instance.horizon()],
        value: 0.0,
        best_value: incumbent.1,
        best: incumbent.0.iter().map(|d| d.matched()).collect(),
        nodes: 0,
        budget: node_budget,
        exhausted: false,
    };
    let root_bound = search.bound(0);
    search.dfs(0);
    SearchOutcome {
        assignment: search
            .best
            .iter()
            .map(|m| m.map_or(Decision::Skip, Decision::Match))
            .collect(),
        value: search.best_value,
        nodes: search.nodes,
        root_bound,
        complete: !search.exhausted,
    }
}

/// Root bound alone, used as the reported upper bound when the search is
/// refused.
pub fn root_bound(instance: &BipartiteInstance, p: &OsbmPayload) -> f64 {
    let skips = vec![Decision::Skip; instance.horizon()];
    branch_and_bound(instance, p, (&skips, f64::INFINITY), 1).root_bound
}
