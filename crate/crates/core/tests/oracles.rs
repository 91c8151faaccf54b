mod common;

use common::*;
use matchlab::env::{replay, Episode};
use matchlab::offline::{self, hindsight_targets, Limits};
use matchlab::policies::PolicyModel;
use matchlab::rng;
use matchlab::{Decision, Error};

const TOL: f64 = 1e-9;

#[test]
fn eobm_small_examples() {
    let one = eobm(1, vec![vec![(0, 3.0)]]);
    assert_eq!(offline::solve_eobm(&one).unwrap().opt, 3.0);
    let anti = eobm(2, vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 2.0), (1, 1.0)]]);
    let r = offline::solve_eobm(&anti).unwrap();
    assert_eq!(r.opt, 4.0);
    assert_eq!(r.assignment, vec![Decision::Match(1), Decision::Match(0)]);
}

#[test]
fn eobm_matches_permutation_brute_force() {
    for seed in 0..200u64 {
        let mut r = rng::seeded(seed);
        let u = 1 + (seed % 6) as usize;
        let v = 1 + ((seed / 6) % 6) as usize;
        let inst = random_eobm(&mut r, u, v, 0.7);
        let res = offline::solve_eobm(&inst).unwrap();
        let brute = brute_eobm(&inst);
        assert!((res.opt - brute).abs() < TOL, "seed {seed}: {} vs {brute}", res.opt);
        assert!((replay(&inst, &res.assignment).unwrap().objective_value - res.opt).abs() < TOL);
    }
}

#[test]
fn osbm_small_examples() {
    use matchlab::graph::OsbmPayload;
    use matchlab::{Arrival, BipartiteInstance, InstanceMeta, ProblemPayload};
    let single = BipartiteInstance::new(
        1,
        vec![Arrival::with_user(vec![(0, 1.0)], 0)],
        ProblemPayload::Osbm(OsbmPayload {
            genre_count: 1,
            genres_per_u: vec![vec![0]],
            user_weights: vec![vec![2.0]],
        }),
        InstanceMeta::default(),
    )
    .unwrap();
    let r = offline::solve_osbm(&single, &Limits::default()).unwrap();
    assert_eq!((r.opt, r.assignment.clone()), (2.0, vec![Decision::Match(0)]));

    let twice = BipartiteInstance::new(
        2,
        vec![
            Arrival::with_user(vec![(0, 1.0), (1, 1.0)], 0),
            Arrival::with_user(vec![(0, 1.0), (1, 1.0)], 0),
        ],
        ProblemPayload::Osbm(OsbmPayload {
            genre_count: 1,
            genres_per_u: vec![vec![0], vec![0]],
            user_weights: vec![vec![3.0]],
        }),
        InstanceMeta::default(),
    )
    .unwrap();
    assert_eq!(offline::solve_osbm(&twice, &Limits::default()).unwrap().opt, 3.0);
}

#[test]
fn osbm_matches_exhaustive_enumeration() {
    for seed in 0..100u64 {
        let mut r = rng::seeded(1000 + seed);
        let u = 1 + (seed % 4) as usize;
        let v = 1 + (seed % 6) as usize;
        let g = 1 + (seed % 4) as usize;
        let inst = random_osbm(&mut r, u, v, g);
        let res = offline::solve_osbm(&inst, &Limits::default()).unwrap();
        let brute = brute_osbm(&inst);
        assert!((res.opt - brute).abs() < TOL, "seed {seed}: {} vs {brute}", res.opt);
        assert!(res.proof.as_ref().unwrap().root_bound >= res.opt - TOL);
        assert!((replay(&inst, &res.assignment).unwrap().objective_value - res.opt).abs() < TOL);
    }
}

#[test]
fn osbm_refuses_beyond_limits() {
    let mut r = rng::seeded(5);
    let inst = random_osbm(&mut r, 4, 6, 3);
    let tight = Limits {
        max_u: 3,
        ..Limits::default()
    };
    assert!(matches!(offline::solve_osbm(&inst, &tight), Err(Error::OracleRefused(_))));
}

#[test]
fn adwords_examples() {
    use matchlab::graph::AdwordsPayload;
    use matchlab::{Arrival, BipartiteInstance, InstanceMeta, ProblemPayload};
    let ident = BipartiteInstance::new(
        2,
        vec![Arrival::new(vec![(0, 0.2)]), Arrival::new(vec![(1, 0.2)])],
        ProblemPayload::Adwords(AdwordsPayload {
            budgets: vec![0.2, 0.2],
        }),
        InstanceMeta::default(),
    )
    .unwrap();
    assert!((offline::solve_adwords_uniform(&ident).unwrap().opt - 0.4).abs() < TOL);

    let b = 0.25;
    let star = BipartiteInstance::new(
        1,
        (0..5).map(|_| Arrival::new(vec![(0, b)])).collect(),
        ProblemPayload::Adwords(AdwordsPayload {
            budgets: vec![3.0 * b],
        }),
        InstanceMeta::default(),
    )
    .unwrap();
    assert!((offline::solve_adwords_uniform(&star).unwrap().opt - 3.0 * b).abs() < TOL);
}

#[test]
fn adwords_matches_exhaustive_search() {
    for seed in 0..100u64 {
        let mut r = rng::seeded(2000 + seed);
        let u = 1 + (seed % 6) as usize;
        let v = 1 + (seed % 12) as usize;
        let inst = uniform_adwords(&mut r, u, v, 0.5);
        let res = offline::solve_adwords_uniform(&inst).unwrap();
        let brute = brute_adwords(&inst);
        assert!((res.opt - brute).abs() < TOL, "seed {seed}: {} vs {brute}", res.opt);
        assert!((replay(&inst, &res.assignment).unwrap().objective_value - res.opt).abs() < TOL);
    }
}

#[test]
fn adwords_refuses_mixed_bids() {
    use matchlab::graph::AdwordsPayload;
    use matchlab::{Arrival, BipartiteInstance, InstanceMeta, ProblemPayload};
    let inst = BipartiteInstance::new(
        1,
        vec![Arrival::new(vec![(0, 0.2)]), Arrival::new(vec![(0, 0.3)])],
        ProblemPayload::Adwords(AdwordsPayload { budgets: vec![0.6] }),
        InstanceMeta::default(),
    )
    .unwrap();
    assert!(matches!(offline::solve_adwords_uniform(&inst), Err(Error::OracleRefused(_))));
}

#[test]
fn targets_replay_to_opt() {
    for seed in 0..50u64 {
        let mut r = rng::seeded(3000 + seed);
        let inst = random_eobm(&mut r, 4, 9, 0.5);
        let res = offline::solve_eobm(&inst).unwrap();
        let targets = hindsight_targets(&res, inst.u_count());
        let mut ep = Episode::reset(&inst);
        for &t in &targets {
            ep.step(Decision::from_slot(t, inst.u_count())).unwrap();
        }
        assert!((ep.into_solution().objective_value - res.opt).abs() < TOL);
        for (t, d) in res.assignment.iter().enumerate() {
            assert_eq!(targets[t], d.slot(inst.u_count()));
        }
    }
}

#[test]
fn oracle_dominates_baselines() {
    for seed in 0..50u64 {
        let mut r = rng::seeded(4000 + seed);
        let inst = random_eobm(&mut r, 5, 12, 0.5);
        let opt = offline::solve_eobm(&inst).unwrap().opt;
        for policy in [PolicyModel::Greedy, PolicyModel::Random] {
            let got = policy.run(&inst, &mut rng::seeded(seed)).unwrap().objective_value;
            assert!(got <= opt + TOL);
        }
        assert!(offline::upper_bound(&inst) >= opt - TOL);
    }
}
