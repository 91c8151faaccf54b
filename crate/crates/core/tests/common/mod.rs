//! Instance builders and brute-force reference solvers shared by the
//! integration tests. Nothing here calls into the library's solvers.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use matchlab::graph::{AdwordsPayload, OsbmPayload};
use matchlab::rng::Rng;
use matchlab::{Arrival, BipartiteInstance, Decision, InstanceMeta, ProblemPayload};
use rand::Rng as _;

pub fn eobm(u_count: usize, rows: Vec<Vec<(usize, f64)>>) -> BipartiteInstance {
    let arrivals = rows.into_iter().map(Arrival::new).collect();
    BipartiteInstance::new(u_count, arrivals, ProblemPayload::Eobm, InstanceMeta::default()).unwrap()
}

/// Random adjacency row over `u_count` nodes with at least one edge.
fn random_row(rng: &mut Rng, u_count: usize, p: f64) -> Vec<usize> {
    loop {
        let row: Vec<usize> = (0..u_count).filter(|_| rng.random::<f64>() < p).collect();
        if !row.is_empty() {
            return row;
        }
    }
}

pub fn random_eobm(rng: &mut Rng, u_count: usize, v_count: usize, p: f64) -> BipartiteInstance {
    let rows = (0..v_count)
        .map(|_| {
            random_row(rng, u_count, p)
                .into_iter()
                .map(|u| (u, rng.random_range(0.01..1.0)))
                .collect()
        })
        .collect();
    eobm(u_count, rows)
}

pub fn random_osbm(rng: &mut Rng, u_count: usize, v_count: usize, genre_count: usize) -> BipartiteInstance {
    let genres_per_u = (0..u_count)
        .map(|_| random_row(rng, genre_count, 0.4))
        .collect();
    let users = rng.random_range(1..=v_count);
    let user_weights = (0..users)
        .map(|_| (0..genre_count).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let arrivals = (0..v_count)
        .map(|_| {
            let edges = random_row(rng, u_count, 0.6)
                .into_iter()
                .map(|u| (u, 1.0))
                .collect();
            Arrival::with_user(edges, rng.random_range(0..users))
        })
        .collect();
    BipartiteInstance::new(
        u_count,
        arrivals,
        ProblemPayload::Osbm(OsbmPayload {
            genre_count,
            genres_per_u,
            user_weights,
        }),
        InstanceMeta::default(),
    )
    .unwrap()
}

/// Uniform bid `bid` everywhere, budgets `capacity[u] · bid`.
pub fn uniform_adwords(rng: &mut Rng, u_count: usize, v_count: usize, p: f64) -> BipartiteInstance {
    let bid = rng.random_range(0.1..0.4);
    let arrivals = (0..v_count)
        .map(|_| Arrival::new(random_row(rng, u_count, p).into_iter().map(|u| (u, bid)).collect()))
        .collect();
    let budgets = (0..u_count)
        .map(|_| bid * rng.random_range(1..=3) as f64)
        .collect();
    BipartiteInstance::new(
        u_count,
        arrivals,
        ProblemPayload::Adwords(AdwordsPayload { budgets }),
        InstanceMeta::default(),
    )
    .unwrap()
}

/// Adwords instance with a different random bid on every edge.
pub fn mixed_adwords(rng: &mut Rng, u: usize, v: usize) -> BipartiteInstance {
    let arrivals = (0..v)
        .map(|_| {
            let mut edges = Vec::new();
            for k in 0..u {
                if rng.random::<f64>() < 0.5 {
                    edges.push((k, rng.random_range(0.05..0.5)));
                }
            }
            if edges.is_empty() {
                edges.push((rng.random_range(0..u), 0.3));
            }
            Arrival::new(edges)
        })
        .collect();
    let budgets = (0..u).map(|_| rng.random_range(0.2..1.5)).collect();
    BipartiteInstance::new(u, arrivals, ProblemPayload::Adwords(AdwordsPayload { budgets }), InstanceMeta::default())
        .unwrap()
}

/// All permutations of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Maximum-weight matching by trying every permutation of the padded square
/// matrix: arrival `t` goes to column `perm[t]`, absent edges are worth 0.
pub fn brute_eobm(instance: &BipartiteInstance) -> f64 {
    let n = instance.u_count().max(instance.horizon());
    permutations(n)
        .iter()
        .map(|perm| {
            instance
                .arrivals()
                .iter()
                .enumerate()
                .filter_map(|(t, a)| a.weight(perm[t]))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

fn osbm_value(p: &OsbmPayload, instance: &BipartiteInstance, decisions: &[Option<usize>]) -> f64 {
    let mut covered: HashMap<usize, HashSet<usize>> = HashMap::new();
    for (a, d) in instance.arrivals().iter().zip(decisions) {
        if let Some(u) = d {
            covered
                .entry(a.user.unwrap())
                .or_default()
                .extend(p.genres_per_u[*u].iter().copied());
        }
    }
    covered
        .iter()
        .map(|(&l, zs)| zs.iter().map(|&z| p.user_weights[l][z]).sum::<f64>())
        .sum()
}

/// Enumerates every feasible assignment (each movie at most once).
pub fn brute_osbm(instance: &BipartiteInstance) -> f64 {
    let ProblemPayload::Osbm(p) = instance.payload() else {
        panic!("not an OSBM instance")
    };
    fn rec(
        t: usize,
        inst: &BipartiteInstance,
        p: &OsbmPayload,
        used: &mut Vec<bool>,
        dec: &mut Vec<Option<usize>>,
        best: &mut f64,
    ) {
        if t == inst.horizon() {
            *best = best.max(osbm_value(p, inst, dec));
            return;
        }
        dec.push(None);
        rec(t + 1, inst, p, used, dec, best);
        dec.pop();
        for u in inst.arrival(t).neighbours() {
            if !used[u] {
                used[u] = true;
                dec.push(Some(u));
                rec(t + 1, inst, p, used, dec, best);
                dec.pop();
                used[u] = false;
            }
        }
    }
    let mut best = 0.0;
    rec(0, instance, p, &mut vec![false; instance.u_count()], &mut Vec::new(), &mut best);
    best
}

/// Exhaustive search over assignments for a uniform-bid instance, memoized
/// on (timestep, units sold per node). Spend per node is `min(k·bid, B_u)`.
pub fn brute_adwords(instance: &BipartiteInstance) -> f64 {
    let ProblemPayload::Adwords(p) = instance.payload() else {
        panic!("not an Adwords instance")
    };
    let bid = instance.arrival(0).edges[0].1;
    let caps: Vec<usize> = p.budgets.iter().map(|b| (b / bid).round() as usize).collect();
    fn rec(t: usize, inst: &BipartiteInstance, caps: &[usize], sold: &mut Vec<usize>, memo: &mut HashMap<(usize, Vec<usize>), usize>) -> usize {
        if t == inst.horizon() {
            return 0;
        }
        if let Some(&v) = memo.get(&(t, sold.clone())) {
            return v;
        }
        let mut best = rec(t + 1, inst, caps, sold, memo);
        for u in inst.arrival(t).neighbours() {
            if sold[u] < caps[u] {
                sold[u] += 1;
                best = best.max(1 + rec(t + 1, inst, caps, sold, memo));
                sold[u] -= 1;
            }
        }
        memo.insert((t, sold.clone()), best);
        best
    }
    let units = rec(0, instance, &caps, &mut vec![0; caps.len()], &mut HashMap::new());
    units as f64 * bid
}

/// Online OSBM objective of a full decision list, recomputed from sets.
pub fn osbm_objective(instance: &BipartiteInstance, decisions: &[Decision]) -> f64 {
    let ProblemPayload::Osbm(p) = instance.payload() else {
        panic!("not an OSBM instance")
    };
    let d: Vec<Option<usize>> = decisions.iter().map(|d| d.matched()).collect();
    osbm_value(p, instance, &d)
}

pub fn slots(decisions: &[Decision], u_count: usize) -> Vec<usize> {
    decisions.iter().map(|d| d.slot(u_count)).collect()
}

/// Central-difference step for gradient checks.
pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator, so gradients that are
/// exactly zero on both sides compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Largest relative error between `analytic` and central differences of `f`
/// taken over every network parameter of `policy`.
pub fn fd_max_error(
    policy: &matchlab::policies::NeuralPolicy,
    analytic: &matchlab::nn::Params,
    f: impl Fn(&matchlab::policies::NeuralPolicy) -> f64,
) -> f64 {
    let base = policy.mlp.params().flat();
    let dims = policy.mlp.params().dims();
    let grads = analytic.flat();
    let mut worst: f64 = 0.0;
    let mut probe = policy.clone();
    for k in 0..base.len() {
        let mut shifted = base.clone();
        shifted[k] = base[k] + FD_STEP;
        *probe.mlp.params_mut() = matchlab::nn::Params::from_flat(&dims, &shifted).unwrap();
        let up = f(&probe);
        shifted[k] = base[k] - FD_STEP;
        *probe.mlp.params_mut() = matchlab::nn::Params::from_flat(&dims, &shifted).unwrap();
        let down = f(&probe);
        worst = worst.max(relative_error(grads[k], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// Replaces every parameter with a uniform draw from (-0.5, 0.5). Fresh
/// networks have zero biases, which puts ReLU kinks exactly at zero for
/// all-zero inputs; random biases keep finite differences off the kinks.
pub fn randomize(policy: &mut matchlab::policies::NeuralPolicy, rng: &mut Rng) {
    for p in policy.mlp.params_mut().iter_mut() {
        *p = rng.random_range(-0.5..0.5);
    }
}

/// Smallest |pre-activation| of any hidden unit over every input row the
/// policy can see while replaying `slots` on `instance`. Central differences
/// are only meaningful when no ReLU sits within a step of its kink.
pub fn kink_margin(policy: &matchlab::policies::NeuralPolicy, instance: &BipartiteInstance, slots: &[usize]) -> f64 {
    let layers = &policy.mlp.params().layers;
    let mut margin = f64::INFINITY;
    let mut ep = matchlab::env::Episode::reset(instance);
    for &slot in slots {
        let x = matchlab::features::assemble_input(policy.input, &ep).unwrap();
        for row in x.data.chunks(x.cols) {
            let mut a = row.to_vec();
            for layer in &layers[..layers.len() - 1] {
                let z: Vec<f64> = (0..layer.out_dim)
                    .map(|o| {
                        let w = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                        layer.bias[o] + w.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>()
                    })
                    .collect();
                margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
                a = z.into_iter().map(|v| v.max(0.0)).collect();
            }
        }
        ep.step(Decision::from_slot(slot, instance.u_count())).unwrap();
    }
    margin
}

/// Draws closer than this to a ReLU kink are redrawn.
pub const KINK_MARGIN: f64 = 1e-4;

pub fn gradient_batch(rng: &mut Rng, kind: matchlab::ProblemKind, count: usize) -> Vec<BipartiteInstance> {
    (0..count)
        .map(|_| match kind {
            matchlab::ProblemKind::Eobm => random_eobm(rng, 3, 6, 0.6),
            matchlab::ProblemKind::Osbm => random_osbm(rng, 3, 6, 3),
            matchlab::ProblemKind::Adwords => mixed_adwords(rng, 3, 6),
        })
        .collect()
}

/// Worst relative error between the REINFORCE surrogate gradient and central
/// differences on one random draw: a randomized network with hidden widths
/// [6, 5], three sampled trajectories, a random baseline and entropy rate
/// 0.05. `None` when the draw lands within [`KINK_MARGIN`] of a kink.
pub fn reinforce_fd_error(input: matchlab::features::InputKind, problem: matchlab::ProblemKind, seed: u64) -> Option<f64> {
    use matchlab::training::{sample_episode, surrogate_grad, surrogate_value};
    let mut r = matchlab::rng::seeded(seed);
    let mut policy = matchlab::policies::NeuralPolicy::with_hidden(input, problem, 3, &[6, 5], seed, None).unwrap();
    randomize(&mut policy, &mut r);
    let batch = gradient_batch(&mut r, problem, 3);
    let refs: Vec<&BipartiteInstance> = batch.iter().collect();
    let mut slots = Vec::new();
    let mut costs = Vec::new();
    for inst in &batch {
        let ep = sample_episode(&policy, inst, &mut r, false).unwrap();
        slots.push(ep.slots);
        costs.push(-ep.reward);
    }
    let margin = batch
        .iter()
        .zip(&slots)
        .map(|(inst, s)| kink_margin(&policy, inst, s))
        .fold(f64::INFINITY, f64::min);
    if margin < KINK_MARGIN {
        return None;
    }
    let baseline = r.random_range(-2.0..0.0);
    let gamma = 0.05;
    let g = surrogate_grad(&policy, &refs, &slots, &costs, baseline, gamma).unwrap();
    Some(fd_max_error(&policy, &g, |p| {
        surrogate_value(p, &refs, &slots, &costs, baseline, gamma).unwrap()
    }))
}

/// Same as [`reinforce_fd_error`] for the weighted cross-entropy against the
/// hindsight-optimal decisions of one E-OBM instance.
pub fn cloning_fd_error(input: matchlab::features::InputKind, seed: u64) -> Option<f64> {
    use matchlab::training::cloning_loss;
    let mut r = matchlab::rng::seeded(seed);
    let mut policy =
        matchlab::policies::NeuralPolicy::with_hidden(input, matchlab::ProblemKind::Eobm, 3, &[6, 5], seed, None).unwrap();
    randomize(&mut policy, &mut r);
    let inst = random_eobm(&mut r, 3, 6, 0.6);
    let targets = matchlab::offline::hindsight_targets(&matchlab::offline::solve_eobm(&inst).unwrap(), 3);
    if kink_margin(&policy, &inst, &targets) < KINK_MARGIN {
        return None;
    }
    let mut g = policy.mlp.params().zeros_like();
    cloning_loss(&policy, &inst, 0, &targets, 1.0, Some(&mut g)).unwrap();
    Some(fd_max_error(&policy, &g, |p| cloning_loss(p, &inst, 0, &targets, 1.0, None).unwrap()))
}

/// Runs `draw` on seeds `first, first + 1, …` until `count` draws clear the
/// kink margin. Returns the worst error and how many seeds were skipped.
pub fn fd_draws(first: u64, count: usize, draw: impl Fn(u64) -> Option<f64>) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let (mut done, mut skipped) = (0, 0);
    let mut seed = first;
    while done < count {
        match draw(seed) {
            Some(err) => {
                worst = worst.max(err);
                done += 1;
            }
            None => skipped += 1,
        }
        seed += 1;
    }
    (worst, skipped)
}
