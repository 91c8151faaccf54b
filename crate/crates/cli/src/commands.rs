use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use matchlab::eval::{self, Reference};
use matchlab::generators::{self, GenKind, GenSpec};
use matchlab::offline::cache::{self, OracleCache};
use matchlab::offline::{self, Limits};
use matchlab::policies::{tune_threshold, NeuralPolicy, PolicyModel, ScaleRule};
use matchlab::training::{self, Checkpoint, Method, TrainData, TrainOutputs, Trainer};
use matchlab::{graph, BipartiteInstance};
use serde::Serialize;

use crate::config::{
    require_path, usage, AgreementSection, Baseline, DatasetSection, GenerateSection, PolicySection,
    TrainSection, TransferSection, TuneSection,
};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
    pub limits: Limits,
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

/// Written beside every command's outputs. Holds no timestamps, so reruns
/// with the same configuration reproduce it byte for byte.
#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a C,
    limits: &'a Limits,
    inputs: BTreeMap<String, InputRecord>,
    outputs: Vec<&'a str>,
}

#[derive(Default)]
struct Inputs(BTreeMap<String, InputRecord>);

impl Inputs {
    fn add(&mut self, name: &str, path: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.0.insert(
            name.to_string(),
            InputRecord {
                path: path.display().to_string(),
                sha256: graph::content_hash(&bytes),
            },
        );
        Ok(())
    }
}

fn write_manifest<C: Serialize>(
    ctx: &Context,
    command: &str,
    config: &C,
    inputs: Inputs,
    outputs: &[&str],
) -> anyhow::Result<()> {
    let manifest = Manifest {
        command,
        version: VERSION,
        seed: ctx.seed,
        config,
        limits: &ctx.limits,
        inputs: inputs.0,
        outputs: outputs.to_vec(),
    };
    let path = ctx.out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn load_dataset(field: &str, path: &Path, inputs: &mut Inputs) -> anyhow::Result<(Vec<BipartiteInstance>, String)> {
    require_path(field, path)?;
    inputs.add(field, path)?;
    let data = graph::read_dataset(path)?;
    if data.is_empty() {
        return Err(usage(format!("{field}: {} holds no instances", path.display())));
    }
    let hash = graph::dataset_hash(&data)?;
    Ok((data, hash))
}

fn oracle_cache(dataset_path: &Path, data: &[BipartiteInstance], hash: &str, limits: &Limits) -> anyhow::Result<OracleCache> {
    let file = cache::cache_file(&cache::cache_dir(dataset_path), hash);
    let (cache, report) = cache::load_or_solve(data, hash, &file, limits)?;
    if let Some(moved) = &report.quarantined {
        eprintln!("warning: unreadable oracle cache moved to {}", moved.display());
    }
    let refused = cache.refused_count();
    if refused > 0 {
        eprintln!("warning: oracle refused {refused} instance(s); their ratios use an upper bound");
    }
    Ok(cache)
}

fn reference_values(cache: &OracleCache) -> Vec<Reference> {
    cache.entries.iter().map(Reference::from).collect()
}

const BUILTINS: [&str; 4] = ["greedy", "random", "msvv", "oracle"];

fn load_policy(field: &str, spec: &str, inputs: &mut Inputs) -> anyhow::Result<PolicyModel> {
    match spec {
        "greedy" => Ok(PolicyModel::Greedy),
        "random" => Ok(PolicyModel::Random),
        "msvv" => Ok(PolicyModel::Msvv),
        "oracle" => Ok(PolicyModel::Oracle),
        "" => Err(usage(format!("{field} is required"))),
        path => {
            let path = Path::new(path);
            if !path.exists() {
                return Err(usage(format!(
                    "{field}: {spec:?} is neither a built-in ({}) nor an existing file",
                    BUILTINS.join(", ")
                )));
            }
            inputs.add(field, path)?;
            Ok(Checkpoint::load(path)?.policy)
        }
    }
}

fn gen_spec(kind: &GenKind, u_count: usize, v_count: usize, seed: u64, count: usize) -> GenSpec {
    GenSpec {
        kind: kind.clone(),
        u_count,
        v_count,
        seed,
        count,
    }
}

fn base_graph_inputs(kind: &GenKind, inputs: &mut Inputs) -> anyhow::Result<()> {
    match kind {
        GenKind::BaseGraph { path, genres, ratings, .. } => {
            require_path("base graph", path)?;
            inputs.add("base_graph", path)?;
            if let Some(g) = genres {
                require_path("genres", g)?;
                inputs.add("genres", g)?;
            }
            if let Some(r) = ratings {
                require_path("ratings", r)?;
                inputs.add("ratings", r)?;
            }
        }
        GenKind::AdwordsTemplate { path, .. } => {
            require_path("template", path)?;
            inputs.add("template", path)?;
        }
        GenKind::Er { .. } | GenKind::Ba { .. } | GenKind::AdwordsRandom { .. } => {}
    }
    Ok(())
}

pub fn generate(ctx: &Context, s: &GenerateSection) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    base_graph_inputs(&s.kind, &mut inputs)?;
    let spec = gen_spec(&s.kind, s.u_count, s.v_count, ctx.seed, s.count);
    let data = generators::generate(&spec)?;
    let path = ctx.out.join("dataset.jsonl");
    graph::write_dataset(&data, &path)?;
    write_manifest(ctx, "generate", s, inputs, &["dataset.jsonl"])?;
    println!("wrote {} instances to {}", data.len(), path.display());
    println!("dataset hash {}", graph::dataset_hash(&data)?);
    Ok(())
}

#[derive(Serialize)]
struct SolveSummary {
    dataset_hash: String,
    cache: String,
    instances: usize,
    solved: usize,
    refused: usize,
}

pub fn solve(ctx: &Context, s: &DatasetSection) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let (data, hash) = load_dataset("dataset", &s.dataset, &mut inputs)?;
    let cache = oracle_cache(&s.dataset, &data, &hash, &ctx.limits)?;
    let refused = cache.refused_count();
    let summary = SolveSummary {
        cache: cache::cache_file(&cache::cache_dir(&s.dataset), &hash).display().to_string(),
        dataset_hash: hash,
        instances: data.len(),
        solved: data.len() - refused,
        refused,
    };
    std::fs::write(ctx.out.join("solve_summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    write_manifest(ctx, "solve", s, inputs, &["solve_summary.json"])?;
    println!("{} solved, {} refused; cache {}", summary.solved, refused, summary.cache);
    Ok(())
}

pub fn train(ctx: &Context, s: &TrainSection) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let (data, hash) = load_dataset("dataset", &s.dataset, &mut inputs)?;
    let cfg = s.train_config(ctx.seed);
    cfg.check(data.len())?;
    let first = &data[0];
    let u_count = first.u_count();
    let problem = first.kind();

    let targets = match s.method {
        Method::Reinforce => None,
        Method::Supervised => {
            let cache = oracle_cache(&s.dataset, &data, &hash, &ctx.limits)?;
            let targets = cache
                .entries
                .iter()
                .map(|e| {
                    e.solved()
                        .map(|r| offline::hindsight_targets(r, u_count))
                        .ok_or_else(|| usage(format!("instance {} has no exact optimum to imitate", e.index)))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            Some(targets)
        }
    };

    let (val, val_opts) = match &s.val_dataset {
        Some(path) => {
            let (val, val_hash) = load_dataset("val_dataset", path, &mut inputs)?;
            let cache = oracle_cache(path, &val, &val_hash, &ctx.limits)?;
            let opts = cache.entries.iter().map(|e| e.reference().0).collect();
            (val, opts)
        }
        None => (Vec::new(), Vec::new()),
    };

    let outputs = TrainOutputs::in_dir(&ctx.out);
    let mut trainer = if s.resume {
        if !outputs.last.exists() {
            return Err(usage(format!("--resume: {} does not exist", outputs.last.display())));
        }
        let mut t = Trainer::from_checkpoint(Checkpoint::load(&outputs.last)?)?;
        t.state.config.epochs = cfg.epochs;
        t
    } else {
        // A fresh run owns the directory's training files.
        for path in [&outputs.best, &outputs.last, &outputs.train_log, &outputs.val_log] {
            if path.exists() {
                std::fs::remove_file(path)?;
            }
        }
        let policy = match &s.hidden {
            Some(hidden) => NeuralPolicy::with_hidden(s.model, problem, u_count, hidden, ctx.seed, None)?,
            None => NeuralPolicy::new(s.model, problem, u_count, ctx.seed, None)?,
        };
        Trainer::new(policy, cfg, s.method)
    };

    let td = TrainData {
        train: &data,
        targets: targets.as_deref(),
        val: &val,
        val_opts: &val_opts,
    };
    let best = training::train(&mut trainer, &td, &outputs)?;
    write_manifest(
        ctx,
        "train",
        s,
        inputs,
        &["best.ckpt.json", "last.ckpt.json", "train_log.csv", "val_log.csv"],
    )?;
    match best {
        Some(r) => println!("trained {} epochs; best validation ratio {r}", trainer.state.epoch),
        None => println!("trained {} epochs", trainer.state.epoch),
    }
    Ok(())
}

pub fn evaluate(ctx: &Context, s: &PolicySection) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let policy = load_policy("policy", &s.policy, &mut inputs)?;
    let (data, hash) = load_dataset("dataset", &s.dataset, &mut inputs)?;
    let refs = reference_values(&oracle_cache(&s.dataset, &data, &hash, &ctx.limits)?);
    let report = eval::evaluate(&policy, &data, &refs, ctx.seed)?;
    report.write_csv(&ctx.out.join("report.csv"))?;
    report.write_summary(&ctx.out.join("summary.json"))?;
    write_manifest(ctx, "evaluate", s, inputs, &["report.csv", "summary.json"])?;
    println!(
        "{}: mean ratio {} over {} instances ({} violations)",
        report.policy, report.summary.mean, report.summary.count, report.violations
    );
    Ok(())
}

pub fn agreement(ctx: &Context, s: &AgreementSection) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let policy = load_policy("policy", &s.policy, &mut inputs)?;
    let reference = load_policy("reference", &s.reference, &mut inputs)?;
    let (data, _) = load_dataset("dataset", &s.dataset, &mut inputs)?;
    let curve = eval::agreement(&policy, &reference, &data, ctx.seed)?;
    eval::write_agreement_csv(&curve, &ctx.out.join("agreement.csv"))?;
    write_manifest(ctx, "agreement", s, inputs, &["agreement.csv"])?;
    let mean = curve.iter().sum::<f64>() / curve.len().max(1) as f64;
    println!("mean agreement {mean} over {} timesteps", curve.len());
    Ok(())
}

pub fn transfer(ctx: &Context, s: &TransferSection) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let policy = load_policy("policy", &s.policy, &mut inputs)?;
    base_graph_inputs(&s.family.kind, &mut inputs)?;
    if s.sizes.is_empty() {
        return Err(usage("transfer.sizes is empty"));
    }
    let family = |u, v, seed| gen_spec(&s.family.kind, u, v, seed, s.family.count);
    let cells = eval::transfer_eval(&policy, &s.sizes, family, ctx.seed, &ctx.limits)?;
    let mut text = String::from("u_count,v_count,mean_ratio\n");
    for c in &cells {
        let ratio = c.mean_ratio.map(|r| r.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{ratio}\n", c.u_count, c.v_count));
    }
    std::fs::write(ctx.out.join("transfer.csv"), &text)?;
    write_manifest(ctx, "transfer", s, inputs, &["transfer.csv"])?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct PermutationSummary<'a> {
    max_multiset_gap: f64,
    original: &'a eval::Summary,
    permuted: &'a eval::Summary,
    permutations: &'a [Vec<usize>],
}

pub fn permute(ctx: &Context, s: &PolicySection) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let policy = load_policy("policy", &s.policy, &mut inputs)?;
    let (data, hash) = load_dataset("dataset", &s.dataset, &mut inputs)?;
    let refs = reference_values(&oracle_cache(&s.dataset, &data, &hash, &ctx.limits)?);
    let report = eval::permutation_stress(&policy, &data, &refs, ctx.seed)?;
    report.original.write_csv(&ctx.out.join("original.csv"))?;
    report.permuted.write_csv(&ctx.out.join("permuted.csv"))?;
    let summary = PermutationSummary {
        max_multiset_gap: report.max_multiset_gap(),
        original: &report.original.summary,
        permuted: &report.permuted.summary,
        permutations: &report.permutations,
    };
    std::fs::write(
        ctx.out.join("permutation_summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    write_manifest(
        ctx,
        "permute",
        s,
        inputs,
        &["original.csv", "permuted.csv", "permutation_summary.json"],
    )?;
    println!("max multiset gap {}", summary.max_multiset_gap);
    Ok(())
}

pub fn tune_baseline(ctx: &Context, s: &TuneSection) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let (data, _) = load_dataset("dataset", &s.dataset, &mut inputs)?;
    let policy = match s.baseline {
        Baseline::GreedyT => {
            let (threshold, scale) = tune_threshold(&data)?;
            println!("w_T = {threshold}");
            println!("value scale = {scale}");
            PolicyModel::GreedyT { threshold, scale }
        }
        Baseline::GreedyRtMin | Baseline::GreedyRtMax => {
            let rule = if s.baseline == Baseline::GreedyRtMin {
                ScaleRule::DivideByMin
            } else {
                ScaleRule::MultiplyByMax
            };
            let policy = PolicyModel::greedy_rt(&data, rule)?;
            if let PolicyModel::GreedyRt { factor, w_max, .. } = &policy {
                println!("factor = {factor}");
                println!("w_max = {w_max}");
            }
            policy
        }
    };
    Checkpoint::new(policy, None).save(&ctx.out.join("policy.json"))?;
    write_manifest(ctx, "tune-baseline", s, inputs, &["policy.json"])?;
    Ok(())
}
