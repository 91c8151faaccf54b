//! Run configuration: one TOML file with global keys and a table per command.
//! Command-line flags are merged over the command's table before it is
//! deserialized, so a flag always wins over the file.

use std::fmt;
use std::path::{Path, PathBuf};

use matchlab::features::InputKind;
use matchlab::generators::GenKind;
use matchlab::offline::Limits;
use matchlab::training::{Method, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Bad configuration or arguments; the process exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub limits: Limits,
    pub generate: Option<toml::Table>,
    pub solve: Option<toml::Table>,
    pub train: Option<toml::Table>,
    pub evaluate: Option<toml::Table>,
    pub agreement: Option<toml::Table>,
    pub transfer: Option<toml::Table>,
    pub permute: Option<toml::Table>,
    pub tune_baseline: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn section(&self, command: &str) -> Option<&toml::Table> {
        match command {
            "generate" => self.generate.as_ref(),
            "solve" => self.solve.as_ref(),
            "train" => self.train.as_ref(),
            "evaluate" => self.evaluate.as_ref(),
            "agreement" => self.agreement.as_ref(),
            "transfer" => self.transfer.as_ref(),
            "permute" => self.permute.as_ref(),
            "tune-baseline" => self.tune_baseline.as_ref(),
            _ => None,
        }
    }
}

/// Overlays the non-null fields of `flags` on the file's table for `command`
/// and deserializes the result.
pub fn resolve<T: DeserializeOwned>(file: &FileConfig, command: &str, flags: &impl Serialize) -> anyhow::Result<T> {
    let mut table = file.section(command).cloned().unwrap_or_default();
    let serde_json::Value::Object(map) = serde_json::to_value(flags)? else {
        unreachable!("flag structs serialize to maps")
    };
    for (key, value) in map {
        if value.is_null() {
            continue;
        }
        let value = toml::Value::try_from(&value)?;
        table.insert(key, value);
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| usage(format!("[{}] section: {e}", command.replace('-', "_"))))
}

pub fn require_path(field: &str, path: &Path) -> anyhow::Result<()> {
    if path.as_os_str().is_empty() {
        return Err(usage(format!("{field} is required")));
    }
    if !path.exists() {
        return Err(usage(format!("{field}: {} does not exist", path.display())));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSection {
    #[serde(flatten)]
    pub kind: GenKind,
    pub u_count: usize,
    pub v_count: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub dataset: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dataset: PathBuf,
    /// Held-out set for model selection; training runs without validation
    /// when absent.
    pub val_dataset: Option<PathBuf>,
    pub model: InputKind,
    pub method: Method,
    /// Hidden layer widths; the standard architecture for `model` if absent.
    pub hidden: Option<Vec<usize>>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub ema_beta: f64,
    pub entropy_rate: f64,
    pub eval_every: usize,
    /// Continue from `last.ckpt.json` in the output directory.
    pub resume: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainSection {
            dataset: PathBuf::new(),
            val_dataset: None,
            model: InputKind::InvFfHist,
            method: Method::Reinforce,
            hidden: None,
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            lr_decay: c.lr_decay,
            ema_beta: c.ema_beta,
            entropy_rate: c.entropy_rate,
            eval_every: c.eval_every,
            resume: false,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_decay: self.lr_decay,
            ema_beta: self.ema_beta,
            entropy_rate: self.entropy_rate,
            seed,
            eval_every: self.eval_every,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    /// Built-in name (`greedy`, `random`, `msvv`, `oracle`) or a policy file.
    pub policy: String,
    pub dataset: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreementSection {
    pub policy: String,
    pub reference: String,
    pub dataset: PathBuf,
}

impl Default for AgreementSection {
    fn default() -> Self {
        AgreementSection {
            policy: String::new(),
            reference: "oracle".into(),
            dataset: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySection {
    #[serde(flatten)]
    pub kind: GenKind,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    pub policy: String,
    /// `[|U|, |V|]` pairs.
    pub sizes: Vec<(usize, usize)>,
    pub family: FamilySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    GreedyT,
    /// greedy-rt with weights divided by the dataset minimum.
    GreedyRtMin,
    /// greedy-rt with weights multiplied by the dataset maximum.
    GreedyRtMax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub dataset: PathBuf,
    pub baseline: Baseline,
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection {
            dataset: PathBuf::new(),
            baseline: Baseline::GreedyT,
        }
    }
}
