use std::collections::HashSet;

use matchlab::generators::{self, attachment_distribution, BaseGraph, GenKind, GenSpec};
use matchlab::graph::{encode_dataset, validate};
use matchlab::{BipartiteInstance, ProblemPayload};

/// Mean and variance of Binomial(n, p) conditioned on at least one success,
/// summed directly from the probability mass function.
fn conditional_binomial(n: u64, p: f64) -> (f64, f64) {
    let mut pmf = vec![0.0; n as usize + 1];
    let mut choose = 1.0;
    for k in 0..=n {
        pmf[k as usize] = choose * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        choose = choose * (n - k) as f64 / (k + 1) as f64;
    }
    let mass: f64 = pmf[1..].iter().sum();
    let mean = (1..=n).map(|k| k as f64 * pmf[k as usize]).sum::<f64>() / mass;
    let second = (1..=n).map(|k| (k * k) as f64 * pmf[k as usize]).sum::<f64>() / mass;
    (mean, second - mean * mean)
}

fn degrees(data: &[BipartiteInstance]) -> Vec<f64> {
    data.iter()
        .flat_map(|i| i.arrivals().iter().map(|a| a.edges.len() as f64))
        .collect()
}

fn within_three_sigma(samples: &[f64], mean: f64, var: f64) {
    let n = samples.len() as f64;
    let got = samples.iter().sum::<f64>() / n;
    let sigma = (var / n).sqrt();
    assert!((got - mean).abs() <= 3.0 * sigma, "mean {got}, expected {mean} ± {}", 3.0 * sigma);
}

#[test]
fn er_full_density() {
    let data = generators::generate(&GenSpec::er(3, 5, 1.0, 1, 4)).unwrap();
    assert!(data.iter().flat_map(|i| i.arrivals()).all(|a| a.edges.len() == 3));
}

#[test]
fn er_degree_matches_conditional_binomial() {
    // 334 instances of 30 arrivals: ~10⁴ arrivals, 10⁵ candidate pairs.
    let data = generators::generate(&GenSpec::er(10, 30, 0.5, 11, 334)).unwrap();
    let degs = degrees(&data);
    assert!(degs.len() >= 10_000);
    let (mean, var) = conditional_binomial(10, 0.5);
    within_three_sigma(&degs, mean, var);

    let sparse = generators::generate(&GenSpec::er(10, 30, 0.1, 12, 334)).unwrap();
    let (mean, var) = conditional_binomial(10, 0.1);
    within_three_sigma(&degrees(&sparse), mean, var);
}

#[test]
fn ba_degree_matches_conditional_binomial() {
    let data = generators::generate(&GenSpec::ba(10, 50, 5.0, 13, 200)).unwrap();
    let (mean, var) = conditional_binomial(10, 0.5);
    within_three_sigma(&degrees(&data), mean, var);
}

#[test]
fn attachment_examples() {
    assert_eq!(attachment_distribution(&[0, 0, 0]), vec![1.0 / 3.0; 3]);
    assert_eq!(attachment_distribution(&[0, 1, 3]), vec![1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]);
}

#[test]
fn ba_heavy_nodes_carry_heavy_weights() {
    let data = generators::generate(&GenSpec::ba(10, 60, 3.0, 14, 50)).unwrap();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for inst in &data {
        let mut deg = [0.0; 10];
        let mut sum = [0.0; 10];
        for a in inst.arrivals() {
            for &(u, w) in &a.edges {
                deg[u] += 1.0;
                sum[u] += w;
            }
        }
        for u in 0..10 {
            if deg[u] > 0.0 {
                xs.push(deg[u]);
                ys.push(sum[u] / deg[u]);
            }
        }
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    assert!(cov > 0.0);
}

#[test]
fn every_generator_output_validates() {
    let specs = [
        GenSpec::er(5, 12, 0.3, 0, 1),
        GenSpec::ba(5, 12, 2.0, 0, 1),
        GenSpec {
            kind: GenKind::AdwordsRandom {
                p: 0.3,
                bid_low: 0.1,
                bid_high: 0.4,
            },
            u_count: 5,
            v_count: 12,
            seed: 0,
            count: 1,
        },
    ];
    for base in specs {
        // One instance per seed; the dataset stream differs for every seed.
        for seed in 0..1000u64 {
            let spec = GenSpec { seed, ..base.clone() };
            for inst in generators::generate(&spec).unwrap() {
                assert!(validate(&inst).is_empty(), "{:?} seed {seed}", spec.kind);
            }
        }
    }
    let base = BaseGraph::new(6, 4, vec![(0, 0, 1.0), (1, 1, 2.0), (2, 2, 0.5), (3, 3, 1.5), (4, 0, 1.0), (5, 1, 1.0)]).unwrap();
    for seed in 0..1000u64 {
        let spec = base_spec(3, 5, seed, 1, true);
        for inst in generators::gen_from_base(&spec, &base).unwrap() {
            assert!(validate(&inst).is_empty());
        }
    }
}

#[test]
fn same_spec_same_bytes() {
    let spec = GenSpec::ba(8, 20, 3.0, 99, 30);
    let a = encode_dataset(&generators::generate(&spec).unwrap()).unwrap();
    let b = encode_dataset(&generators::generate(&spec).unwrap()).unwrap();
    assert_eq!(a, b);
    let other = encode_dataset(&generators::generate(&GenSpec { seed: 100, ..spec }).unwrap()).unwrap();
    assert_ne!(a, other);
}

fn base_spec(u: usize, v: usize, seed: u64, count: usize, var: bool) -> GenSpec {
    GenSpec {
        kind: GenKind::BaseGraph {
            path: "unused.csv".into(),
            genres: None,
            ratings: None,
            var,
        },
        u_count: u,
        v_count: v,
        seed,
        count,
    }
}

#[test]
fn complete_base_graph_copies_right_nodes() {
    let base = BaseGraph::new(2, 2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 1, 3.0), (1, 1, 4.0)]).unwrap();
    let data = generators::gen_from_base(&base_spec(2, 3, 5, 10, false), &base).unwrap();
    for a in data.iter().flat_map(|i| i.arrivals()) {
        assert!(a.edges == vec![(0, 1.0), (1, 2.0)] || a.edges == vec![(0, 3.0), (1, 4.0)]);
    }
}

#[test]
fn isolated_right_node_never_arrives() {
    // Right node 0 has no edges; node 1's only weight is 7.
    let base = BaseGraph::new(2, 2, vec![(0, 1, 7.0), (1, 1, 7.0)]).unwrap();
    let data = generators::gen_from_base(&base_spec(2, 20, 6, 20, false), &base).unwrap();
    assert!(data
        .iter()
        .flat_map(|i| i.arrivals())
        .all(|a| a.edges == vec![(0, 7.0), (1, 7.0)]));
}

#[test]
fn fixed_selection_shared_or_resampled() {
    let edges: Vec<(usize, usize, f64)> = (0..20).flat_map(|l| (0..5).map(move |r| (l, r, 1.0))).collect();
    let base = BaseGraph::new(20, 5, edges).unwrap();
    let picks = |var: bool, seed: u64| -> Vec<serde_json::Value> {
        generators::gen_from_base(&base_spec(4, 3, seed, 2, var), &base)
            .unwrap()
            .iter()
            .map(|i| i.meta().params["fixed_nodes"].clone())
            .collect()
    };
    let mut differ = 0;
    for seed in 0..100 {
        let fixed = picks(false, seed);
        assert_eq!(fixed[0], fixed[1]);
        let var = picks(true, seed);
        differ += usize::from(var[0] != var[1]);
    }
    // C(20, 4) = 4845 subsets, so a collision is rare.
    assert!(differ >= 95, "only {differ} of 100 pairs differ");
}

#[test]
fn adwords_budget_rule_and_permutations() {
    let spec = GenSpec {
        kind: GenKind::AdwordsRandom {
            p: 0.5,
            bid_low: 0.1,
            bid_high: 0.4,
        },
        u_count: 10,
        v_count: 60,
        seed: 21,
        count: 100,
    };
    let data = generators::generate(&spec).unwrap();
    let mut perms = HashSet::new();
    for inst in &data {
        let bid = inst.meta().params["bid"].as_f64().unwrap();
        assert!((0.1..0.4).contains(&bid));
        let ProblemPayload::Adwords(p) = inst.payload() else { panic!() };
        assert!(p.budgets.iter().all(|&b| (b - bid * 6.0).abs() < 1e-12));
        assert!(inst.arrivals().iter().flat_map(|a| &a.edges).all(|&(_, w)| w == bid));
        perms.insert(inst.meta().params["permutation"].to_string());
    }
    assert_eq!(perms.len(), 100);

    let template = BaseGraph::new(10, 60, (0..60).map(|r| (r % 10, r, 1.0)).collect()).unwrap();
    let fixed = GenSpec {
        kind: GenKind::AdwordsTemplate {
            path: "unused.csv".into(),
            bid_low: 0.2,
            bid_high: 0.2 + 1e-12,
        },
        ..spec
    };
    let inst = &generators::adwords_dataset(&fixed, &template).unwrap()[0];
    let ProblemPayload::Adwords(p) = inst.payload() else { panic!() };
    assert!(p.budgets.iter().all(|&b| (b - 1.2).abs() < 1e-9));
}

#[test]
fn bad_parameters_are_rejected() {
    assert!(generators::generate(&GenSpec::er(10, 30, 1.5, 0, 1)).is_err());
    assert!(generators::generate(&GenSpec::ba(10, 30, 10.0, 0, 1)).is_err());
    let base = BaseGraph::new(2, 1, vec![(0, 0, 1.0)]).unwrap();
    assert!(generators::gen_from_base(&base_spec(3, 1, 0, 1, false), &base).is_err());
}
