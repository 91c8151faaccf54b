//! The matching MDP: one arrival per timestep, deterministic transitions,
//! masks over `|U| + 1` action slots (the last slot is skip).

use crate::error::{Error, Result};
use crate::features::FeatureState;
use crate::graph::{Arrival, BipartiteInstance, Decision, ProblemPayload, Solution};
use crate::rng::Rng;

/// Remaining budget below this fraction of the original counts as exhausted.
const BUDGET_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemState {
    Eobm,
    /// Covered genres per user.
    Osbm { covered: Vec<Vec<bool>> },
    /// Remaining budget per fixed node.
    Adwords { remaining: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub t: usize,
    pub available: Vec<bool>,
    /// `(timestep, fixed node)` for every match made so far.
    pub matched_pairs: Vec<(usize, usize)>,
    pub decisions: Vec<Decision>,
    pub cumulative_reward: f64,
    pub problem: ProblemState,
    pub features: FeatureState,
}

/// Outcome of one decision as reported by a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub decision: Decision,
    pub log_prob: f64,
    pub entropy: f64,
}

impl Choice {
    pub fn deterministic(decision: Decision) -> Self {
        Choice {
            decision,
            log_prob: 0.0,
            entropy: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub slot: usize,
    pub reward: f64,
    pub log_prob: f64,
    pub entropy: f64,
}

/// A live episode over one instance.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    instance: &'a BipartiteInstance,
    state: EpisodeState,
}

impl<'a> Episode<'a> {
    pub fn reset(instance: &'a BipartiteInstance) -> Self {
        let n = instance.u_count();
        let problem = match instance.payload() {
            ProblemPayload::Eobm => ProblemState::Eobm,
            ProblemPayload::Osbm(p) => ProblemState::Osbm {
                covered: vec![vec![false; p.genre_count]; p.user_weights.len()],
            },
            ProblemPayload::Adwords(p) => ProblemState::Adwords {
                remaining: p.budgets.clone(),
            },
        };
        Episode {
            instance,
            state: EpisodeState {
                t: 0,
                available: vec![true; n],
                matched_pairs: Vec::new(),
                decisions: Vec::with_capacity(instance.horizon()),
                cumulative_reward: 0.0,
                problem,
                features: FeatureState::new(n, instance.horizon()),
            },
        }
    }

    pub fn instance(&self) -> &'a BipartiteInstance {
        self.instance
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn u_count(&self) -> usize {
        self.instance.u_count()
    }

    pub fn t(&self) -> usize {
        self.state.t
    }

    pub fn is_terminal(&self) -> bool {
        self.state.t >= self.instance.horizon()
    }

    pub fn current_arrival(&self) -> Option<&'a Arrival> {
        self.instance.arrivals().get(self.state.t)
    }

    /// Remaining budgets, for Adwords instances.
    pub fn remaining_budgets(&self) -> Option<&[f64]> {
        match &self.state.problem {
            ProblemState::Adwords { remaining } => Some(remaining),
            _ => None,
        }
    }

    /// Reward that matching the current arrival to `u` would earn right now,
    /// ignoring availability. Zero when there is no such edge.
    pub fn edge_value(&self, u: usize) -> f64 {
        let Some(arrival) = self.current_arrival() else {
            return 0.0;
        };
        match arrival.weight(u) {
            Some(w) => self.value_of(arrival, u, w),
            None => 0.0,
        }
    }

    fn value_of(&self, arrival: &Arrival, u: usize, w: f64) -> f64 {
        match (&self.state.problem, self.instance.payload()) {
            (ProblemState::Eobm, _) => w,
            (ProblemState::Osbm { covered }, ProblemPayload::Osbm(p)) => {
                let l = arrival.user.expect("validated OSBM arrival has a user");
                let weights = &p.user_weights[l];
                p.genres_per_u[u]
                    .iter()
                    .filter(|&&z| !covered[l][z])
                    .map(|&z| weights[z])
                    .sum()
            }
            (ProblemState::Adwords { remaining }, _) => w.min(remaining[u]),
            _ => unreachable!("problem state always matches payload"),
        }
    }

    /// `(u, value)` for every edge of the current arrival, in edge order.
    pub fn edge_values(&self) -> Vec<(usize, f64)> {
        match self.current_arrival() {
            Some(a) => a
                .edges
                .iter()
                .map(|&(u, w)| (u, self.value_of(a, u, w)))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn is_available(&self, u: usize) -> bool {
        self.state.available[u]
    }

    /// Legal iff the current arrival has an edge to `u` and `u` is available.
    pub fn is_legal(&self, u: usize) -> bool {
        u < self.u_count()
            && self.state.available[u]
            && self
                .current_arrival()
                .is_some_and(|a| a.weight(u).is_some())
    }

    /// Mask over `|U| + 1` slots; the skip slot is always legal.
    pub fn legal_mask(&self) -> Vec<bool> {
        let n = self.u_count();
        let mut mask = vec![false; n + 1];
        mask[n] = true;
        if let Some(a) = self.current_arrival() {
            for u in a.neighbours() {
                mask[u] = self.state.available[u];
            }
        }
        mask
    }

    /// Applies a decision and returns its reward.
    pub fn step(&mut self, decision: Decision) -> Result<f64> {
        let Some(arrival) = self.current_arrival() else {
            return Err(Error::Terminal);
        };
        let t = self.state.t;
        let values = self.edge_values();
        let reward = match decision {
            Decision::Skip => 0.0,
            Decision::Match(u) => {
                if !self.is_legal(u) {
                    return Err(Error::IllegalAction { t, action: u });
                }
                let w = arrival.weight(u).expect("legal implies edge");
                self.apply_match(arrival, u, w)
            }
        };
        if let Decision::Match(u) = decision {
            self.state.matched_pairs.push((t, u));
        }
        self.state
            .features
            .observe(&values, decision.matched().map(|_| reward));
        self.state.decisions.push(decision);
        self.state.cumulative_reward += reward;
        self.state.t += 1;
        Ok(reward)
    }

    fn apply_match(&mut self, arrival: &Arrival, u: usize, w: f64) -> f64 {
        let reward = self.value_of(arrival, u, w);
        match (&mut self.state.problem, self.instance.payload()) {
            (ProblemState::Eobm, _) => {
                self.state.available[u] = false;
                reward
            }
            (ProblemState::Osbm { covered }, ProblemPayload::Osbm(p)) => {
                let l = arrival.user.expect("validated OSBM arrival has a user");
                for &z in &p.genres_per_u[u] {
                    covered[l][z] = true;
                }
                self.state.available[u] = false;
                reward
            }
            (ProblemState::Adwords { remaining }, ProblemPayload::Adwords(p)) => {
                let left = remaining[u];
                if left - w <= BUDGET_EPS * p.budgets[u] {
                    remaining[u] = 0.0;
                    self.state.available[u] = false;
                    left
                } else {
                    remaining[u] = left - w;
                    w
                }
            }
            _ => unreachable!("problem state always matches payload"),
        }
    }

    pub fn into_solution(self) -> Solution {
        Solution {
            decisions: self.state.decisions,
            objective_value: self.state.cumulative_reward,
        }
    }
}

/// Runs one full episode, asking `decide` for every arrival.
pub fn rollout<F>(
    instance: &BipartiteInstance,
    rng: &mut Rng,
    mut decide: F,
) -> Result<(Solution, Vec<TrajectoryStep>)>
where
    F: FnMut(&Episode<'_>, &mut Rng) -> Result<Choice>,
{
    let mut episode = Episode::reset(instance);
    let mut trajectory = Vec::with_capacity(instance.horizon());
    while !episode.is_terminal() {
        let t = episode.t();
        let choice = decide(&episode, rng)?;
        let reward = episode.step(choice.decision)?;
        trajectory.push(TrajectoryStep {
            t,
            slot: choice.decision.slot(instance.u_count()),
            reward,
            log_prob: choice.log_prob,
            entropy: choice.entropy,
        });
    }
    Ok((episode.into_solution(), trajectory))
}

/// Replays a fixed decision sequence; fails on the first illegal decision.
pub fn replay(instance: &BipartiteInstance, decisions: &[Decision]) -> Result<Solution> {
    if decisions.len() != instance.horizon() {
        return Err(Error::Dimension {
            expected: instance.horizon(),
            got: decisions.len(),
        });
    }
    let mut episode = Episode::reset(instance);
    for &d in decisions {
        episode.step(d)?;
    }
    Ok(episode.into_solution())
}

/// Objective of a complete decision sequence recomputed from scratch, without
/// going through the incremental environment.
pub fn objective_from_scratch(instance: &BipartiteInstance, decisions: &[Decision]) -> f64 {
    match instance.payload() {
        ProblemPayload::Eobm => decisions
            .iter()
            .zip(instance.arrivals())
            .filter_map(|(d, a)| d.matched().and_then(|u| a.weight(u)))
            .sum(),
        ProblemPayload::Osbm(p) => {
            let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); p.user_weights.len()];
            for (d, a) in decisions.iter().zip(instance.arrivals()) {
                if let (Some(u), Some(l)) = (d.matched(), a.user) {
                    per_user[l].extend(p.genres_per_u[u].iter().copied());
                }
            }
            per_user
                .iter()
                .enumerate()
                .map(|(l, genres)| p.coverage(l, genres))
                .sum()
        }
        ProblemPayload::Adwords(p) => {
            let mut spent = vec![0.0; instance.u_count()];
            for (d, a) in decisions.iter().zip(instance.arrivals()) {
                if let Some(u) = d.matched() {
                    spent[u] += a.weight(u).unwrap_or(0.0);
                }
            }
            spent
                .iter()
                .zip(&p.budgets)
                .map(|(s, b)| s.min(*b))
                .sum()
        }
    }
}
