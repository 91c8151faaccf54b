//! Policy-gradient training with a moving-average baseline and an entropy
//! bonus, behaviour cloning of hindsight-optimal decisions, checkpoints and
//! training logs.
//!
//! Per-instance gradients are summed inside fixed-size chunks and the chunk
//! sums are added in chunk order, so a run is bit-identical for any number of
//! worker threads.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Episode;
use crate::error::{Error, Result};
use crate::graph::{BipartiteInstance, Decision};
use crate::nn::{self, Adam, Params};
use crate::policies::{sample_slot, DecodeMode, Evaluation, NeuralPolicy, PolicyModel};
use crate::rng::{self, stream, Rng};

/// Instances per gradient-reduction chunk.
const CHUNK: usize = 8;

pub const CHECKPOINT_FORMAT: &str = "matchlab-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Reinforce,
    Supervised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning-rate multiplier applied after every epoch.
    pub lr_decay: f64,
    /// Moving-average decay of the baseline.
    pub ema_beta: f64,
    pub entropy_rate: f64,
    pub seed: u64,
    /// Validate every this many epochs (0 disables validation).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 200,
            lr: 1e-3,
            lr_decay: 0.98,
            ema_beta: 0.8,
            entropy_rate: 1e-3,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn check(&self, dataset_len: usize) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.ema_beta) {
            return Err(Error::Parameter(format!("ema_beta must lie in [0, 1], got {}", self.ema_beta)));
        }
        if self.batch_size == 0 || self.batch_size > dataset_len {
            return Err(Error::Parameter(format!(
                "batch size {} must be between 1 and the dataset size {dataset_len}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaselineState {
    pub b: f64,
    pub initialized: bool,
}

impl BaselineState {
    /// Folds in a batch-mean cost: the first call sets the baseline, later
    /// calls move it by `b ← β·b + (1 − β)·mean`.
    pub fn update(&mut self, mean_cost: f64, beta: f64) {
        if self.initialized {
            self.b = beta * self.b + (1.0 - beta) * mean_cost;
        } else {
            self.b = mean_cost;
            self.initialized = true;
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub epoch: usize,
    pub batch: usize,
    pub mean_reward: f64,
    /// Mean cost (negative reward) for policy gradient, mean cross-entropy
    /// for behaviour cloning.
    pub mean_cost: f64,
    pub baseline: f64,
    pub lr: f64,
    /// Mean per-step entropy of the sampled decisions.
    pub entropy: f64,
}

/// A neural decision recorded with its tape, and the slot that was taken.
pub struct Step {
    pub eval: Evaluation,
    pub slot: usize,
}

/// Sampled episode: slots taken, total reward, summed entropy and, when
/// recorded, the tapes of every decision that involved the network.
pub struct SampledEpisode {
    pub slots: Vec<usize>,
    pub reward: f64,
    pub entropy: f64,
    pub decisions: usize,
    pub steps: Vec<Step>,
}

pub fn sample_episode(
    policy: &NeuralPolicy,
    instance: &BipartiteInstance,
    rng: &mut Rng,
    record: bool,
) -> Result<SampledEpisode> {
    let n = instance.u_count();
    let mut ep = Episode::reset(instance);
    let mut out = SampledEpisode {
        slots: Vec::with_capacity(instance.horizon()),
        reward: 0.0,
        entropy: 0.0,
        decisions: 0,
        steps: Vec::new(),
    };
    while !ep.is_terminal() {
        let slot = match policy.evaluate(&ep, record)? {
            None => n,
            Some(eval) => {
                let slot = sample_slot(&eval.probs, rng);
                out.entropy += nn::entropy(&eval.probs, &eval.log_probs);
                out.decisions += 1;
                if record {
                    out.steps.push(Step { eval, slot });
                }
                slot
            }
        };
        out.reward += ep.step(Decision::from_slot(slot, n))?;
        out.slots.push(slot);
    }
    Ok(out)
}

/// Re-runs a fixed slot sequence, recording every network decision.
pub fn replay_steps(policy: &NeuralPolicy, instance: &BipartiteInstance, slots: &[usize]) -> Result<Vec<Step>> {
    let n = instance.u_count();
    let mut ep = Episode::reset(instance);
    let mut steps = Vec::new();
    for &slot in slots {
        if let Some(eval) = policy.evaluate(&ep, true)? {
            steps.push(Step { eval, slot });
        }
        ep.step(Decision::from_slot(slot, n))?;
    }
    Ok(steps)
}

/// Accumulates the gradient of `a · Σ log p(slot) + b · Σ H` over `steps`.
pub fn accumulate(policy: &NeuralPolicy, steps: &[Step], a: f64, b: f64, grads: &mut Params) -> Result<()> {
    for s in steps {
        let g = nn::policy_logit_grad(&s.eval.probs, &s.eval.log_probs, s.slot, a, b);
        policy.backprop(&s.eval, &g, grads)?;
    }
    Ok(())
}

/// Value of the batch surrogate `(1/N) Σ_i [(L_i − b) Σ_t log p − γ Σ_t H]`
/// for fixed slot sequences, recomputed without tapes.
pub fn surrogate_value(
    policy: &NeuralPolicy,
    instances: &[&BipartiteInstance],
    slots: &[Vec<usize>],
    costs: &[f64],
    baseline: f64,
    entropy_rate: f64,
) -> Result<f64> {
    let n = instances.len() as f64;
    let mut total = 0.0;
    for ((inst, sl), &cost) in instances.iter().zip(slots).zip(costs) {
        let mut ep = Episode::reset(inst);
        let (mut logp, mut ent) = (0.0, 0.0);
        for &slot in sl {
            if let Some(e) = policy.evaluate(&ep, false)? {
                logp += e.log_probs[slot];
                ent += nn::entropy(&e.probs, &e.log_probs);
            }
            ep.step(Decision::from_slot(slot, inst.u_count()))?;
        }
        total += (cost - baseline) * logp - entropy_rate * ent;
    }
    Ok(total / n)
}

/// Gradient of [`surrogate_value`].
pub fn surrogate_grad(
    policy: &NeuralPolicy,
    instances: &[&BipartiteInstance],
    slots: &[Vec<usize>],
    costs: &[f64],
    baseline: f64,
    entropy_rate: f64,
) -> Result<Params> {
    let n = instances.len() as f64;
    let mut grads = policy.mlp.params().zeros_like();
    for ((inst, sl), &cost) in instances.iter().zip(slots).zip(costs) {
        let steps = replay_steps(policy, inst, sl)?;
        accumulate(policy, &steps, (cost - baseline) / n, -entropy_rate / n, &mut grads)?;
    }
    Ok(grads)
}

/// Sums per-item gradients in fixed chunks, chunk sums in order.
fn reduce_chunks<T, V, F>(items: &[T], zero: &Params, f: F) -> Result<(Params, Vec<V>)>
where
    T: Sync,
    V: Send,
    F: Fn(&T, &mut Params) -> Result<V> + Sync,
{
    let parts: Vec<(Params, Vec<V>)> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = zero.clone();
            let mut vals = Vec::with_capacity(chunk.len());
            for item in chunk {
                vals.push(f(item, &mut g)?);
            }
            Ok((g, vals))
        })
        .collect::<Result<_>>()?;
    let mut total = zero.clone();
    let mut values = Vec::with_capacity(items.len());
    for (g, v) in parts {
        total.add_assign(&g);
        values.extend(v);
    }
    Ok((total, values))
}

/// Supervised targets: the slot to imitate at every timestep.
pub type Targets = [Vec<usize>];

/// Weight of the skip class in the cloning loss.
pub fn skip_class_weight(u_count: usize, horizon: usize) -> f64 {
    u_count as f64 / horizon as f64
}

/// Weighted cross-entropy of one instance under teacher forcing, returning the
/// summed loss and accumulating `scale ×` its gradient.
pub fn cloning_loss(
    policy: &NeuralPolicy,
    instance: &BipartiteInstance,
    index: usize,
    targets: &[usize],
    scale: f64,
    grads: Option<&mut Params>,
) -> Result<f64> {
    let n = instance.u_count();
    if targets.len() != instance.horizon() {
        return Err(Error::Data(format!(
            "instance {index}: {} targets for {} arrivals",
            targets.len(),
            instance.horizon()
        )));
    }
    let skip_w = skip_class_weight(n, instance.horizon());
    let mut ep = Episode::reset(instance);
    let mut loss = 0.0;
    let mut grads = grads;
    for (t, &target) in targets.iter().enumerate() {
        let mask = ep.legal_mask();
        if target > n || !mask[target] {
            return Err(Error::Data(format!(
                "instance {index}, timestep {t}: target {target} is not a legal action"
            )));
        }
        if let Some(eval) = policy.evaluate(&ep, grads.is_some())? {
            let c = if target == n { skip_w } else { 1.0 };
            loss -= c * eval.log_probs[target];
            if let Some(g) = grads.as_deref_mut() {
                let dz = nn::cross_entropy_logit_grad(&eval.probs, target, c * scale);
                policy.backprop(&eval, &dz, g)?;
            }
        }
        ep.step(Decision::from_slot(target, n))?;
    }
    Ok(loss)
}

/// Optimizer, baseline and progress of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub method: Method,
    pub config: TrainConfig,
    /// Epochs completed.
    pub epoch: usize,
    pub adam: Adam,
    pub baseline: BaselineState,
    pub best_val: Option<f64>,
    /// How every random stream is derived from `config.seed`.
    pub seed_lineage: String,
}

pub fn seed_lineage(seed: u64) -> String {
    format!(
        "root={seed}; init=derive(root,[INIT]); epoch order=derive(root,[EPOCH,epoch]); \
         episode=derive(root,[EPOCH,epoch,batch,index])"
    )
}

/// Self-describing checkpoint; baselines use it with `training = None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub policy: PolicyModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingState>,
}

impl Checkpoint {
    pub fn new(policy: PolicyModel, training: Option<TrainingState>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            policy,
            training,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Parse {
                line: e.line(),
                message: format!("{}: {e}", path.display()),
            })?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse {
                line: 1,
                message: format!("unknown checkpoint format {:?}", ckpt.format),
            });
        }
        Ok(ckpt)
    }
}

pub struct Trainer {
    pub policy: NeuralPolicy,
    pub state: TrainingState,
}

impl Trainer {
    pub fn new(mut policy: NeuralPolicy, config: TrainConfig, method: Method) -> Self {
        policy.mode = DecodeMode::Sample;
        let adam = Adam::new(policy.mlp.params().len(), config.lr);
        Trainer {
            policy,
            state: TrainingState {
                method,
                seed_lineage: seed_lineage(config.seed),
                config,
                epoch: 0,
                adam,
                baseline: BaselineState::default(),
                best_val: None,
            },
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let PolicyModel::Neural(mut policy) = ckpt.policy else {
            return Err(Error::Incompatible("only neural checkpoints can be trained".into()));
        };
        let state = ckpt
            .training
            .ok_or_else(|| Error::Incompatible("checkpoint carries no training state".into()))?;
        policy.mode = DecodeMode::Sample;
        Ok(Trainer { policy, state })
    }

    /// The policy as it should be evaluated: greedy decoding.
    pub fn eval_policy(&self) -> PolicyModel {
        let mut p = self.policy.clone();
        p.mode = DecodeMode::Greedy;
        PolicyModel::Neural(p)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.eval_policy(), Some(self.state.clone()))
    }

    fn lr_for_epoch(&self, epoch: usize) -> f64 {
        self.state.config.lr * self.state.config.lr_decay.powi(epoch as i32)
    }

    /// One policy-gradient update on `batch`.
    pub fn reinforce_batch(
        &mut self,
        batch: &[&BipartiteInstance],
        epoch: usize,
        batch_index: usize,
    ) -> Result<BatchStats> {
        let cfg = &self.state.config;
        let (seed, gamma, beta) = (cfg.seed, cfg.entropy_rate, cfg.ema_beta);
        let n = batch.len() as f64;
        let policy = &self.policy;
        let items: Vec<(usize, &BipartiteInstance)> = batch.iter().copied().enumerate().collect();
        let episode_rng = |i: usize| {
            rng::derive(seed, &[stream::EPOCH, epoch as u64, batch_index as u64, i as u64])
        };
        let zero = policy.mlp.params().zeros_like();

        let initialized = self.state.baseline.initialized;
        let (grads, summaries) = if initialized {
            let b = self.state.baseline.b;
            reduce_chunks(&items, &zero, |&(i, inst), g| {
                let ep = sample_episode(policy, inst, &mut episode_rng(i), true)?;
                accumulate(policy, &ep.steps, (-ep.reward - b) / n, -gamma / n, g)?;
                Ok((ep.reward, ep.entropy, ep.decisions))
            })?
        } else {
            // The baseline starts at this batch's mean cost, which is only
            // known after every episode has been sampled.
            let sampled: Vec<SampledEpisode> = items
                .par_iter()
                .map(|&(i, inst)| sample_episode(policy, inst, &mut episode_rng(i), false))
                .collect::<Result<_>>()?;
            let mean_cost = -sampled.iter().map(|e| e.reward).sum::<f64>() / n;
            self.state.baseline.update(mean_cost, beta);
            let b = self.state.baseline.b;
            let pairs: Vec<(&BipartiteInstance, &SampledEpisode)> =
                batch.iter().copied().zip(&sampled).collect();
            reduce_chunks(&pairs, &zero, |&(inst, ep), g| {
                let steps = replay_steps(policy, inst, &ep.slots)?;
                accumulate(policy, &steps, (-ep.reward - b) / n, -gamma / n, g)?;
                Ok((ep.reward, ep.entropy, ep.decisions))
            })?
        };
        let baseline_used = self.state.baseline.b;

        let mean_reward = summaries.iter().map(|s| s.0).sum::<f64>() / n;
        let decisions: usize = summaries.iter().map(|s| s.2).sum();
        let entropy = if decisions == 0 {
            0.0
        } else {
            summaries.iter().map(|s| s.1).sum::<f64>() / decisions as f64
        };
        if !mean_reward.is_finite() {
            return Err(Error::NonFinite(format!(
                "mean reward at epoch {epoch}, batch {batch_index}"
            )));
        }
        self.state.adam.step(&mut self.policy.mlp, &grads)?;
        if initialized {
            self.state.baseline.update(-mean_reward, beta);
        }
        Ok(BatchStats {
            epoch,
            batch: batch_index,
            mean_reward,
            mean_cost: -mean_reward,
            baseline: baseline_used,
            lr: self.state.adam.lr,
            entropy,
        })
    }

    /// One behaviour-cloning update on `batch` (instances with their dataset
    /// indices and targets).
    pub fn supervised_batch(
        &mut self,
        batch: &[(usize, &BipartiteInstance, &[usize])],
        epoch: usize,
        batch_index: usize,
    ) -> Result<BatchStats> {
        let policy = &self.policy;
        let steps: usize = batch.iter().map(|b| b.1.horizon()).sum();
        let scale = 1.0 / steps as f64;
        let zero = policy.mlp.params().zeros_like();
        let (grads, losses) = reduce_chunks(batch, &zero, |&(idx, inst, targets), g| {
            cloning_loss(policy, inst, idx, targets, scale, Some(g))
        })?;
        let mean_loss = losses.iter().sum::<f64>() * scale;
        if !mean_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "cloning loss at epoch {epoch}, batch {batch_index}"
            )));
        }
        self.state.adam.step(&mut self.policy.mlp, &grads)?;
        Ok(BatchStats {
            epoch,
            batch: batch_index,
            mean_reward: 0.0,
            mean_cost: mean_loss,
            baseline: 0.0,
            lr: self.state.adam.lr,
            entropy: 0.0,
        })
    }

    /// Runs the next epoch over `train` and returns one stats row per batch.
    pub fn run_epoch(&mut self, train: &[BipartiteInstance], targets: Option<&Targets>) -> Result<Vec<BatchStats>> {
        let cfg = self.state.config.clone();
        cfg.check(train.len())?;
        let epoch = self.state.epoch;
        self.state.adam.lr = self.lr_for_epoch(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::derive(cfg.seed, &[stream::EPOCH, epoch as u64]));
        let mut stats = Vec::new();
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let s = match self.state.method {
                Method::Reinforce => {
                    let batch: Vec<&BipartiteInstance> = chunk.iter().map(|&i| &train[i]).collect();
                    self.reinforce_batch(&batch, epoch, bi)?
                }
                Method::Supervised => {
                    let targets = targets.ok_or_else(|| {
                        Error::Data("behaviour cloning needs hindsight targets".into())
                    })?;
                    let batch: Vec<(usize, &BipartiteInstance, &[usize])> = chunk
                        .iter()
                        .map(|&i| (i, &train[i], targets[i].as_slice()))
                        .collect();
                    self.supervised_batch(&batch, epoch, bi)?
                }
            };
            stats.push(s);
        }
        self.state.epoch += 1;
        Ok(stats)
    }
}

/// Mean optimality ratio of greedy decoding over a validation set.
pub fn validation_ratio(policy: &PolicyModel, val: &[BipartiteInstance], opts: &[f64], seed: u64) -> Result<f64> {
    let ratios: Vec<f64> = val
        .par_iter()
        .zip(opts)
        .enumerate()
        .map(|(i, (inst, &opt))| {
            let mut rng = rng::derive(seed, &[stream::EVAL, i as u64]);
            Ok(policy.run(inst, &mut rng)?.objective_value / opt)
        })
        .collect::<Result<_>>()?;
    Ok(ratios.iter().sum::<f64>() / ratios.len().max(1) as f64)
}

/// Data for [`train`].
pub struct TrainData<'a> {
    pub train: &'a [BipartiteInstance],
    pub targets: Option<&'a Targets>,
    pub val: &'a [BipartiteInstance],
    pub val_opts: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub epoch: usize,
    pub mean_ratio: f64,
    pub best: bool,
}

/// Files written by [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub best: PathBuf,
    pub last: PathBuf,
    pub train_log: PathBuf,
    pub val_log: PathBuf,
}

impl TrainOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        TrainOutputs {
            best: dir.join("best.ckpt.json"),
            last: dir.join("last.ckpt.json"),
            train_log: dir.join("train_log.csv"),
            val_log: dir.join("val_log.csv"),
        }
    }
}

fn append_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains until `config.epochs` epochs are complete, validating, logging and
/// checkpointing along the way. A trainer restored from a checkpoint resumes
/// where it stopped and appends to the same logs.
pub fn train(trainer: &mut Trainer, data: &TrainData<'_>, out: &TrainOutputs) -> Result<Option<f64>> {
    let cfg = trainer.state.config.clone();
    if trainer.state.epoch == 0 && !out.best.exists() {
        trainer.checkpoint().save(&out.best)?;
    }
    while trainer.state.epoch < cfg.epochs {
        let stats = trainer.run_epoch(data.train, data.targets)?;
        append_rows(&out.train_log, &stats)?;
        let epoch = trainer.state.epoch;
        if cfg.eval_every > 0 && epoch.is_multiple_of(cfg.eval_every) && !data.val.is_empty() {
            let ratio = validation_ratio(&trainer.eval_policy(), data.val, data.val_opts, cfg.seed)?;
            let best = trainer.state.best_val.is_none_or(|b| ratio > b);
            if best {
                trainer.state.best_val = Some(ratio);
            }
            append_rows(
                &out.val_log,
                &[ValidationRow {
                    epoch,
                    mean_ratio: ratio,
                    best,
                }],
            )?;
            if best {
                trainer.checkpoint().save(&out.best)?;
            }
        }
        trainer.checkpoint().save(&out.last)?;
    }
    if cfg.epochs == 0 || trainer.state.best_val.is_none() {
        trainer.checkpoint().save(&out.best)?;
    }
    trainer.checkpoint().save(&out.last)?;
    Ok(trainer.state.best_val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_update_rule() {
        let mut b = BaselineState::default();
        b.update(10.0, 0.8);
        assert_eq!(b.b, 10.0);
        b.update(5.0, 0.8);
        assert!((b.b - 9.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_matches_closed_form() {
        let costs = [3.0, -1.0, 4.0, 1.5, -5.0, 9.0, 2.0];
        let beta: f64 = 0.7;
        let mut b = BaselineState::default();
        b.update(costs[0], beta);
        for &c in &costs[1..] {
            b.update(c, beta);
        }
        let k = costs.len() - 1;
        let mut closed = beta.powi(k as i32) * costs[0];
        for (j, &m) in costs[1..].iter().enumerate() {
            closed += (1.0 - beta) * beta.powi((k - 1 - j) as i32) * m;
        }
        assert!((b.b - closed).abs() < 1e-12);
    }

    #[test]
    fn skip_weight() {
        assert!((skip_class_weight(10, 30) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(skip_class_weight(5, 5), 1.0);
    }

    #[test]
    fn config_checks() {
        let cfg = TrainConfig::default();
        assert!(cfg.check(100).is_err());
        assert!(cfg.check(200).is_ok());
        assert!(TrainConfig { lr: 0.0, ..cfg.clone() }.check(500).is_err());
        assert!(TrainConfig { ema_beta: 1.5, ..cfg }.check(500).is_err());
    }
}
