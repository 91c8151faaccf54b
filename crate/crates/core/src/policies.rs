//! Classical baselines and neural policies behind one interface.
//!
//! A [`PolicyModel`] is immutable; [`PolicyModel::start`] produces an
//! [`Actor`] that holds whatever per-episode state a policy needs (the random
//! threshold of greedy-rt, the hindsight plan of the oracle).

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{rollout, Choice, Episode};
use crate::error::{Error, Result};
use crate::features::{InputKind, StepFeatures};
use crate::graph::{BipartiteInstance, Decision, ProblemKind, ProblemPayload, Solution};
use crate::nn::{self, Mlp, Params, Tape};
use crate::offline::{self, Limits};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Sample,
    #[default]
    Greedy,
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::Sample => "sample",
            DecodeMode::Greedy => "greedy",
        })
    }
}

/// How greedy-rt rescales edge values before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleRule {
    /// Divide by the smallest weight, so every scaled weight is ≥ 1.
    DivideByMin,
    /// Multiply by the largest weight.
    MultiplyByMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyModel {
    Greedy,
    GreedyRt {
        rule: ScaleRule,
        /// Multiplier applied to edge values.
        factor: f64,
        /// Largest scaled weight.
        w_max: f64,
    },
    GreedyT {
        threshold: f64,
        /// Edge values are divided by this before comparing to the threshold.
        scale: f64,
    },
    Msvv,
    /// Uniform over legal slots, skip included.
    Random,
    /// Replays the hindsight optimum of each instance.
    Oracle,
    Neural(NeuralPolicy),
}

impl PolicyModel {
    pub fn name(&self) -> String {
        match self {
            PolicyModel::Greedy => "greedy".into(),
            PolicyModel::GreedyRt { .. } => "greedy-rt".into(),
            PolicyModel::GreedyT { .. } => "greedy-t".into(),
            PolicyModel::Msvv => "msvv".into(),
            PolicyModel::Random => "random".into(),
            PolicyModel::Oracle => "oracle".into(),
            PolicyModel::Neural(n) => n.label.clone(),
        }
    }

    pub fn decode_mode(&self) -> DecodeMode {
        match self {
            PolicyModel::Neural(n) => n.mode,
            _ => DecodeMode::Greedy,
        }
    }

    /// Fits greedy-rt's scaling to a dataset.
    pub fn greedy_rt(dataset: &[BipartiteInstance], rule: ScaleRule) -> Result<Self> {
        let max = dataset
            .iter()
            .map(|i| i.max_weight())
            .fold(0.0, f64::max);
        let min = dataset
            .iter()
            .map(|i| i.min_weight())
            .fold(f64::INFINITY, f64::min);
        let factor = match rule {
            ScaleRule::DivideByMin => 1.0 / min,
            ScaleRule::MultiplyByMax => max,
        };
        let w_max = max * factor;
        if !(w_max > 0.0 && w_max.is_finite()) {
            return Err(Error::Parameter(format!(
                "greedy-rt needs a positive maximum weight, got {w_max}"
            )));
        }
        Ok(PolicyModel::GreedyRt { rule, factor, w_max })
    }

    /// Checks that the policy can act on instances like `instance`.
    pub fn check_compatible(&self, instance: &BipartiteInstance) -> Result<()> {
        match self {
            PolicyModel::Msvv if instance.kind() != ProblemKind::Adwords => Err(
                Error::Incompatible(format!("msvv needs adwords instances, got {}", instance.kind())),
            ),
            PolicyModel::Neural(n) => n.check_compatible(instance.u_count(), instance.kind()),
            _ => Ok(()),
        }
    }

    pub fn start(&self, instance: &BipartiteInstance, rng: &mut Rng) -> Result<Actor<'_>> {
        self.check_compatible(instance)?;
        let plan = match self {
            PolicyModel::GreedyRt { w_max, .. } => {
                if *w_max <= 0.0 {
                    return Err(Error::Parameter("greedy-rt needs w_max > 0".into()));
                }
                let k_count = ((w_max + 1.0).ln().ceil() as u64).max(1);
                let k = rng.random_range(0..k_count);
                ActorState::Threshold((k as f64).exp())
            }
            PolicyModel::Oracle => {
                ActorState::Plan(offline::solve(instance, &Limits::default())?.assignment)
            }
            _ => ActorState::None,
        };
        Ok(Actor {
            model: self,
            state: plan,
        })
    }

    /// Runs one episode.
    pub fn run(&self, instance: &BipartiteInstance, rng: &mut Rng) -> Result<Solution> {
        let mut actor = self.start(instance, rng)?;
        Ok(rollout(instance, rng, |ep, rng| actor.act(ep, rng))?.0)
    }
}

#[derive(Debug, Clone)]
enum ActorState {
    None,
    Threshold(f64),
    Plan(Vec<Decision>),
}

/// A policy bound to one episode.
#[derive(Debug, Clone)]
pub struct Actor<'p> {
    model: &'p PolicyModel,
    state: ActorState,
}

impl Actor<'_> {
    pub fn act(&mut self, ep: &Episode<'_>, rng: &mut Rng) -> Result<Choice> {
        let decision = match (self.model, &self.state) {
            (PolicyModel::Greedy, _) => greedy_act(ep),
            (PolicyModel::GreedyRt { factor, .. }, ActorState::Threshold(tau)) => {
                greedy_rt_act(ep, *factor, *tau, rng)
            }
            (PolicyModel::GreedyT { threshold, scale }, _) => greedy_t_act(ep, *threshold, *scale),
            (PolicyModel::Msvv, _) => msvv_act(ep)?,
            (PolicyModel::Random, _) => random_act(ep, rng),
            (PolicyModel::Oracle, ActorState::Plan(plan)) => plan[ep.t()],
            (PolicyModel::Neural(n), _) => return n.act(ep, rng),
            _ => unreachable!("actor state matches its model"),
        };
        Ok(Choice::deterministic(decision))
    }
}

/// Picks the legal slot maximizing `score`, lowest index on ties; skip if none.
fn argmax_legal(ep: &Episode<'_>, mut score: impl FnMut(usize, f64) -> Option<f64>) -> Decision {
    let mut best: Option<(usize, f64)> = None;
    for (u, v) in ep.edge_values() {
        if !ep.is_available(u) {
            continue;
        }
        let Some(s) = score(u, v) else { continue };
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((u, s));
        }
    }
    best.map_or(Decision::Skip, |(u, _)| Decision::Match(u))
}

/// Highest current edge value among legal nodes.
pub fn greedy_act(ep: &Episode<'_>) -> Decision {
    argmax_legal(ep, |_, v| Some(v))
}

/// Uniform choice among legal nodes whose scaled value reaches `tau`.
pub fn greedy_rt_act(ep: &Episode<'_>, factor: f64, tau: f64, rng: &mut Rng) -> Decision {
    let candidates: Vec<usize> = ep
        .edge_values()
        .into_iter()
        .filter(|&(u, v)| ep.is_available(u) && v * factor >= tau)
        .map(|(u, _)| u)
        .collect();
    if candidates.is_empty() {
        Decision::Skip
    } else {
        Decision::Match(candidates[rng.random_range(0..candidates.len())])
    }
}

/// Greedy restricted to nodes whose value divided by `scale` is at least
/// `threshold`.
pub fn greedy_t_act(ep: &Episode<'_>, threshold: f64, scale: f64) -> Decision {
    argmax_legal(ep, |_, v| (v / scale >= threshold).then_some(v))
}

/// MSVV trade-off function.
pub fn psi(spent_fraction: f64) -> f64 {
    1.0 - (spent_fraction - 1.0).exp()
}

pub fn msvv_act(ep: &Episode<'_>) -> Result<Decision> {
    let (Some(remaining), ProblemPayload::Adwords(p)) =
        (ep.remaining_budgets(), ep.instance().payload())
    else {
        return Err(Error::Incompatible("msvv needs adwords instances".into()));
    };
    let arrival = ep.current_arrival().ok_or(Error::Terminal)?;
    Ok(argmax_legal(ep, |u, _| {
        let bid = arrival.weight(u)?;
        let spent = (p.budgets[u] - remaining[u]) / p.budgets[u];
        Some(bid * psi(spent))
    }))
}

pub fn random_act(ep: &Episode<'_>, rng: &mut Rng) -> Decision {
    let mask = ep.legal_mask();
    let legal: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    Decision::from_slot(legal[rng.random_range(0..legal.len())], ep.u_count())
}

/// Largest edge value over the initial states of a dataset.
pub fn initial_value_scale(dataset: &[BipartiteInstance]) -> f64 {
    dataset
        .iter()
        .flat_map(|inst| {
            let mut ep = Episode::reset(inst);
            let mut vals = Vec::new();
            // Initial values: edge weights, marginal gains against empty
            // coverage, bids capped by full budgets.
            while let Some(_a) = ep.current_arrival() {
                vals.extend(ep.edge_values().into_iter().map(|(_, v)| v));
                if ep.step(Decision::Skip).is_err() {
                    break;
                }
            }
            vals
        })
        .fold(0.0, f64::max)
}

/// Grid `{0.01, …, 1.00}` searched for the best mean reward on `dataset`;
/// ties go to the smallest threshold.
pub fn tune_threshold(dataset: &[BipartiteInstance]) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::Parameter("threshold tuning needs a non-empty dataset".into()));
    }
    let scale = initial_value_scale(dataset);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let means: Vec<f64> = (1..=100)
        .into_par_iter()
        .map(|k| {
            let threshold = k as f64 / 100.0;
            let total: f64 = dataset
                .iter()
                .map(|inst| {
                    let mut ep = Episode::reset(inst);
                    while !ep.is_terminal() {
                        let d = greedy_t_act(&ep, threshold, scale);
                        ep.step(d).expect("greedy-t only proposes legal actions");
                    }
                    ep.state().cumulative_reward
                })
                .sum();
            total / dataset.len() as f64
        })
        .collect();
    let mut best = 0;
    for (i, &m) in means.iter().enumerate() {
        if m > means[best] {
            best = i;
        }
    }
    Ok(((best + 1) as f64 / 100.0, scale))
}

/// A neural policy: network, input assembly kind, and size binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NeuralRecord", try_from = "NeuralRecord")]
pub struct NeuralPolicy {
    pub input: InputKind,
    pub problem: ProblemKind,
    /// `|U|` the network was built for; `None` for invariant kinds.
    pub u_count: Option<usize>,
    pub mlp: Mlp,
    pub mode: DecodeMode,
    pub label: String,
}

#[derive(Serialize, Deserialize)]
struct NeuralRecord {
    input: InputKind,
    problem: ProblemKind,
    u_count: Option<usize>,
    dims: Vec<usize>,
    params: Vec<f64>,
    mode: DecodeMode,
    label: String,
}

impl From<NeuralPolicy> for NeuralRecord {
    fn from(p: NeuralPolicy) -> Self {
        NeuralRecord {
            input: p.input,
            problem: p.problem,
            u_count: p.u_count,
            dims: p.mlp.params().dims(),
            params: p.mlp.params().flat(),
            mode: p.mode,
            label: p.label,
        }
    }
}

impl TryFrom<NeuralRecord> for NeuralPolicy {
    type Error = Error;

    fn try_from(r: NeuralRecord) -> Result<Self> {
        let params = Params::from_flat(&r.dims, &r.params)?;
        if let Some(block) = params.first_non_finite() {
            return Err(Error::NonFinite(format!("checkpoint {block}")));
        }
        let policy = NeuralPolicy {
            input: r.input,
            problem: r.problem,
            u_count: r.u_count,
            mlp: Mlp::new(params),
            mode: r.mode,
            label: r.label,
        };
        policy.check_dims()?;
        Ok(policy)
    }
}

/// Network output for one state, with what is needed to backpropagate into
/// the logits.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub mask: Vec<bool>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    tape: Option<Tape>,
    /// Slot of each input row (invariant kinds).
    slots: Vec<usize>,
}

/// Hidden sizes used for each input kind.
pub fn hidden_layers(kind: InputKind) -> &'static [usize] {
    if kind.is_invariant() {
        &[100, 100]
    } else {
        &[100, 100, 100]
    }
}

impl NeuralPolicy {
    /// Fresh network with the standard architecture for `input`.
    pub fn new(
        input: InputKind,
        problem: ProblemKind,
        u_count: usize,
        seed: u64,
        label: Option<String>,
    ) -> Result<Self> {
        Self::with_hidden(input, problem, u_count, hidden_layers(input), seed, label)
    }

    pub fn with_hidden(
        input: InputKind,
        problem: ProblemKind,
        u_count: usize,
        hidden: &[usize],
        seed: u64,
        label: Option<String>,
    ) -> Result<Self> {
        let mut dims = vec![input.row_len(u_count, problem)];
        dims.extend_from_slice(hidden);
        dims.push(input.output_len(u_count));
        Ok(NeuralPolicy {
            input,
            problem,
            u_count: (!input.is_invariant()).then_some(u_count),
            mlp: Mlp::init(&dims, seed)?,
            mode: DecodeMode::Sample,
            label: label.unwrap_or_else(|| default_label(input)),
        })
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.u_count.unwrap_or(1);
        let expect_in = self.input.row_len(n, self.problem);
        let expect_out = self.input.output_len(n);
        if self.input.is_invariant() != self.u_count.is_none() {
            return Err(Error::Incompatible(
                "size binding must be present exactly for non-invariant kinds".into(),
            ));
        }
        if self.mlp.in_dim() != expect_in || self.mlp.out_dim() != expect_out {
            return Err(Error::Dimension {
                expected: expect_in,
                got: self.mlp.in_dim(),
            });
        }
        Ok(())
    }

    pub fn check_compatible(&self, u_count: usize, kind: ProblemKind) -> Result<()> {
        if kind != self.problem {
            return Err(Error::Incompatible(format!(
                "{} was built for {} instances, got {kind}",
                self.label, self.problem
            )));
        }
        if let Some(n) = self.u_count {
            if n != u_count {
                return Err(Error::Incompatible(format!(
                    "{} was built for |U| = {n}, got |U| = {u_count}",
                    self.label
                )));
            }
        }
        Ok(())
    }

    /// Scores the current state. Returns `None` when skip is the only legal
    /// action, in which case no network call is needed.
    pub fn evaluate(&self, ep: &Episode<'_>, record: bool) -> Result<Option<Evaluation>> {
        let mask = ep.legal_mask();
        if mask.iter().filter(|&&m| m).count() == 1 {
            return Ok(None);
        }
        let features = StepFeatures::new(ep)?;
        let n = ep.u_count();
        let mut input = Vec::new();
        let mut slots = Vec::new();
        if self.input.is_invariant() {
            for slot in (0..=n).filter(|&s| mask[s]) {
                features.write_slot(self.input, slot, &mut input);
                slots.push(slot);
            }
        } else {
            features.write_full(self.input, &mut input);
        }
        let rows = if self.input.is_invariant() { slots.len() } else { 1 };
        let (out, tape) = if record {
            let (out, tape) = self.mlp.forward(&input, rows)?;
            (out, Some(tape))
        } else {
            (self.mlp.predict(&input, rows)?, None)
        };
        let logits = if self.input.is_invariant() {
            let mut l = vec![0.0; n + 1];
            for (&s, &z) in slots.iter().zip(&out) {
                l[s] = z;
            }
            l
        } else {
            out
        };
        let log_probs = nn::masked_log_softmax(&logits, &mask)?;
        let probs = log_probs
            .iter()
            .map(|&lp| if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() })
            .collect();
        Ok(Some(Evaluation {
            mask,
            logits,
            probs,
            log_probs,
            tape,
            slots,
        }))
    }

    /// Chooses an action according to the decode mode.
    pub fn act(&self, ep: &Episode<'_>, rng: &mut Rng) -> Result<Choice> {
        let Some(eval) = self.evaluate(ep, false)? else {
            return Ok(Choice::deterministic(Decision::Skip));
        };
        let slot = match self.mode {
            DecodeMode::Greedy => argmax_slot(&eval.logits, &eval.mask),
            DecodeMode::Sample => sample_slot(&eval.probs, rng),
        };
        Ok(Choice {
            decision: Decision::from_slot(slot, ep.u_count()),
            log_prob: eval.log_probs[slot],
            entropy: nn::entropy(&eval.probs, &eval.log_probs),
        })
    }

    /// Accumulates into `grads` the parameter gradient of a scalar whose
    /// gradient with respect to the logits is `logit_grad`.
    pub fn backprop(&self, eval: &Evaluation, logit_grad: &[f64], grads: &mut Params) -> Result<()> {
        let tape = eval
            .tape
            .as_ref()
            .ok_or_else(|| Error::Parameter("evaluation was not recorded".into()))?;
        if self.input.is_invariant() {
            let g: Vec<f64> = eval.slots.iter().map(|&s| logit_grad[s]).collect();
            self.mlp.backward(tape, &g, grads)
        } else {
            self.mlp.backward(tape, logit_grad, grads)
        }
    }
}

fn default_label(input: InputKind) -> String {
    match input {
        InputKind::Ff => "ff",
        InputKind::FfHist => "ff-hist",
        InputKind::InvFf => "inv-ff",
        InputKind::InvFfHist => "inv-ff-hist",
    }
    .to_string()
}

/// Highest logit among legal slots, lowest index on ties.
pub fn argmax_slot(logits: &[f64], mask: &[bool]) -> usize {
    let mut best = None;
    for (i, (&z, &m)) in logits.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|(_, b)| z > b) {
            best = Some((i, z));
        }
    }
    best.expect("skip is always legal").0
}

/// Inverse-CDF sample; zero-probability slots are never returned.
pub fn sample_slot(probs: &[f64], rng: &mut Rng) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if x < acc {
            return i;
        }
    }
    last
}
