//! Declarative experiment specification: YAML/JSON parsing with strict
//! unknown-key rejection, range validation that names the offending key,
//! centralized seed derivation, and result serialization.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::TrustParams;
use crate::data::{ColumnRef, CsvOptions};
use crate::error::{Error, Result};
use crate::evidential::TrainConfig;
use crate::orchestrator::{AggregatorChoice, ExperimentResult};
use crate::topology::{erdos_renyi, fully_connected, k_regular, ring, TopologyGraph};

/// Purpose tags for seed derivation. Every consumer of randomness receives a
/// seed derived from (master_seed, tag, index); no module touches a global
/// RNG.
pub mod seed_tags {
    pub const DATASET: &str = "dataset";
    pub const TOPOLOGY: &str = "topology";
    pub const PARTITION: &str = "partition";
    pub const NODE_SPLIT: &str = "node-split";
    pub const NODE_INIT: &str = "node-init";
    pub const NODE_SHUFFLE: &str = "node-shuffle";
    pub const VAL_SUBSET: &str = "val-subset";
    pub const ROUND: &str = "round";
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Avalanche-style mix of (master_seed, tag, index). Pure, and stable across
/// platforms and releases; distinct (tag, index) pairs yield distinct seeds.
pub fn derive_seed(master_seed: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325; // FNV-1a offset basis
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mixed = splitmix64(master_seed ^ h);
    splitmix64(mixed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Full declarative experiment specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(with = "serde_yaml::with::singleton_map")]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    pub topology: TopologyConfig,
    pub aggregator: AggregatorConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_master_seed() -> u64 {
    42
}

impl ExperimentConfig {
    /// Range-check every field and materialize defaults for mode-dependent
    /// options, so a validated config serializes with everything explicit.
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.partition.validate()?;
        self.topology.validate()?;
        self.aggregator.validate()?;
        self.training.validate()?;
        self.split.validate()?;
        Ok(())
    }

    /// Validate and fill mode-dependent defaults in place.
    pub fn finalize(mut self) -> Result<ExperimentConfig> {
        self.partition.fill_defaults();
        self.aggregator.fill_defaults();
        self.validate()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic(SyntheticConfig),
    Csv(CsvConfig),
}

impl DatasetConfig {
    fn validate(&self) -> Result<()> {
        match self {
            DatasetConfig::Synthetic(s) => s.validate(),
            DatasetConfig::Csv(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub separation: f64,
    pub noise_sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_classes: 6,
            dim: 16,
            samples_per_class: 200,
            separation: 6.0,
            noise_sigma: 1.0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let check = |key: &str, ok: bool, constraint: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Validation(format!("dataset.synthetic.{key}: {constraint}")))
            }
        };
        check("num_classes", self.num_classes >= 2, "must be >= 2")?;
        check("dim", self.dim >= 1, "must be >= 1")?;
        check("samples_per_class", self.samples_per_class >= 1, "must be >= 1")?;
        check("separation", self.separation > 0.0, "must be > 0")?;
        check("noise_sigma", self.noise_sigma >= 0.0, "must be >= 0")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvConfig {
    pub path: PathBuf,
    #[serde(default = "default_true")]
    pub has_header: bool,
    pub label_column: ColumnRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_column: Option<ColumnRef>,
}

fn default_true() -> bool {
    true
}

impl CsvConfig {
    pub fn options(&self) -> CsvOptions {
        CsvOptions {
            has_header: self.has_header,
            label_column: self.label_column.clone(),
            subject_column: self.subject_column.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Dirichlet,
    BySubject,
    Clustered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub mode: PartitionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_per_node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_clusters: Option<usize>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            mode: PartitionMode::Dirichlet,
            concentration: Some(0.5),
            min_per_node: Some(20),
            num_clusters: None,
        }
    }
}

impl PartitionConfig {
    fn fill_defaults(&mut self) {
        match self.mode {
            PartitionMode::Dirichlet => {
                self.concentration.get_or_insert(0.5);
                self.min_per_node.get_or_insert(20);
            }
            PartitionMode::Clustered => {
                self.num_clusters.get_or_insert(2);
            }
            PartitionMode::BySubject => {}
        }
    }

    fn validate(&self) -> Result<()> {
        match self.mode {
            PartitionMode::Dirichlet => {
                if let Some(c) = self.concentration {
                    if !(c > 0.0) {
                        return Err(Error::Validation(format!(
                            "partition.concentration: {c} must be > 0"
                        )));
                    }
                }
                if self.num_clusters.is_some() {
                    return Err(Error::Validation(
                        "partition.num_clusters: only valid for mode clustered".into(),
                    ));
                }
            }
            PartitionMode::BySubject => {
                for (key, set) in [
                    ("concentration", self.concentration.is_some()),
                    ("num_clusters", self.num_clusters.is_some()),
                ] {
                    if set {
                        return Err(Error::Validation(format!(
                            "partition.{key}: not valid for mode by_subject"
                        )));
                    }
                }
            }
            PartitionMode::Clustered => {
                if self.concentration.is_some() {
                    return Err(Error::Validation(
                        "partition.concentration: only valid for mode dirichlet".into(),
                    ));
                }
                if let Some(k) = self.num_clusters {
                    if k == 0 {
                        return Err(Error::Validation(
                            "partition.num_clusters: must be >= 1".into(),
                        ));
                    }
                }
            }
        }
        if let Some(m) = self.min_per_node {
            if m == 0 {
                return Err(Error::Validation("partition.min_per_node: must be >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Full,
    ErdosRenyi,
    KRegular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl TopologyConfig {
    fn validate(&self) -> Result<()> {
        match self.kind {
            TopologyKind::Ring => {
                if self.n < 3 {
                    return Err(Error::Validation(format!(
                        "topology.n: ring requires n >= 3, got {}",
                        self.n
                    )));
                }
            }
            TopologyKind::Full | TopologyKind::ErdosRenyi => {
                if self.n < 2 {
                    return Err(Error::Validation(format!(
                        "topology.n: requires n >= 2, got {}",
                        self.n
                    )));
                }
            }
            TopologyKind::KRegular => {
                let k = self.k.ok_or_else(|| {
                    Error::Validation("topology.k: required for kind k_regular".into())
                })?;
                if k < 2 || k >= self.n || (self.n * k) % 2 != 0 {
                    return Err(Error::Validation(format!(
                        "topology.k: need 2 <= k < n with n*k even, got k = {k}, n = {}",
                        self.n
                    )));
                }
            }
        }
        if self.kind == TopologyKind::ErdosRenyi {
            let p = self
                .p
                .ok_or_else(|| Error::Validation("topology.p: required for kind erdos_renyi".into()))?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Validation(format!(
                    "topology.p: {p} outside (0, 1]"
                )));
            }
        } else if self.p.is_some() {
            return Err(Error::Validation(
                "topology.p: only valid for kind erdos_renyi".into(),
            ));
        }
        if self.kind != TopologyKind::KRegular && self.k.is_some() {
            return Err(Error::Validation(
                "topology.k: only valid for kind k_regular".into(),
            ));
        }
        Ok(())
    }

    pub fn build(&self, seed: u64) -> Result<TopologyGraph> {
        match self.kind {
            TopologyKind::Ring => ring(self.n),
            TopologyKind::Full => fully_connected(self.n),
            TopologyKind::ErdosRenyi => erdos_renyi(self.n, self.p.unwrap_or(0.5), seed),
            TopologyKind::KRegular => k_regular(self.n, self.k.unwrap_or(2), seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    Fedavg,
    EvidentialTrust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_min_trust: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tighten_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tighten_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ema_momentum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ema_enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_eval_samples: Option<usize>,
}

impl AggregatorConfig {
    pub fn fedavg() -> Self {
        AggregatorConfig {
            kind: AggregatorKind::Fedavg,
            accuracy_weight: None,
            uncertainty_threshold: None,
            initial_min_trust: None,
            tighten_depth: None,
            tighten_rate: None,
            ema_momentum: None,
            ema_enabled: None,
            self_weight: None,
            max_eval_samples: None,
        }
    }

    fn fill_defaults(&mut self) {
        if self.kind == AggregatorKind::EvidentialTrust {
            let d = TrustParams::default();
            self.accuracy_weight.get_or_insert(d.accuracy_weight);
            self.uncertainty_threshold.get_or_insert(d.uncertainty_threshold);
            self.initial_min_trust.get_or_insert(d.initial_min_trust);
            self.tighten_depth.get_or_insert(d.tighten_depth);
            self.tighten_rate.get_or_insert(d.tighten_rate);
            self.ema_momentum.get_or_insert(d.ema_momentum);
            self.ema_enabled.get_or_insert(d.ema_enabled);
            self.self_weight.get_or_insert(d.self_weight);
            self.max_eval_samples.get_or_insert(d.max_eval_samples);
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kind == AggregatorKind::Fedavg {
            for (key, set) in [
                ("accuracy_weight", self.accuracy_weight.is_some()),
                ("uncertainty_threshold", self.uncertainty_threshold.is_some()),
                ("initial_min_trust", self.initial_min_trust.is_some()),
                ("tighten_depth", self.tighten_depth.is_some()),
                ("tighten_rate", self.tighten_rate.is_some()),
                ("ema_momentum", self.ema_momentum.is_some()),
                ("ema_enabled", self.ema_enabled.is_some()),
                ("self_weight", self.self_weight.is_some()),
                ("max_eval_samples", self.max_eval_samples.is_some()),
            ] {
                if set {
                    return Err(Error::Validation(format!(
                        "aggregator.{key}: only valid for kind evidential_trust"
                    )));
                }
            }
            return Ok(());
        }
        let check = |key: &str, value: Option<f64>, lo: f64, hi: f64, lo_open: bool, hi_open: bool| {
            if let Some(v) = value {
                let lo_ok = if lo_open { v > lo } else { v >= lo };
                let hi_ok = if hi_open { v < hi } else { v <= hi };
                if !(lo_ok && hi_ok) {
                    let lb = if lo_open { "(" } else { "[" };
                    let rb = if hi_open { ")" } else { "]" };
                    return Err(Error::Validation(format!(
                        "aggregator.{key}: {v} outside {lb}{lo}, {hi}{rb}"
                    )));
                }
            }
            Ok(())
        };
        check("accuracy_weight", self.accuracy_weight, 0.0, 1.0, false, false)?;
        check("uncertainty_threshold", self.uncertainty_threshold, 0.0, 1.0, true, true)?;
        check("initial_min_trust", self.initial_min_trust, 0.0, 1.0, true, false)?;
        check("tighten_depth", self.tighten_depth, 0.0, 1.0, false, true)?;
        check("self_weight", self.self_weight, 0.0, 1.0, false, false)?;
        check("ema_momentum", self.ema_momentum, 0.0, 1.0, true, true)?;
        if let Some(r) = self.tighten_rate {
            if !(r > 0.0) {
                return Err(Error::Validation(format!(
                    "aggregator.tighten_rate: {r} must be > 0"
                )));
            }
        }
        if let Some(m) = self.max_eval_samples {
            if m == 0 {
                return Err(Error::Validation(
                    "aggregator.max_eval_samples: must be >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_choice(&self) -> Result<AggregatorChoice> {
        match self.kind {
            AggregatorKind::Fedavg => Ok(AggregatorChoice::FedAvg),
            AggregatorKind::EvidentialTrust => {
                let d = TrustParams::default();
                Ok(AggregatorChoice::EvidentialTrust(TrustParams {
                    accuracy_weight: self.accuracy_weight.unwrap_or(d.accuracy_weight),
                    uncertainty_threshold: self
                        .uncertainty_threshold
                        .unwrap_or(d.uncertainty_threshold),
                    initial_min_trust: self.initial_min_trust.unwrap_or(d.initial_min_trust),
                    tighten_depth: self.tighten_depth.unwrap_or(d.tighten_depth),
                    tighten_rate: self.tighten_rate.unwrap_or(d.tighten_rate),
                    ema_momentum: self.ema_momentum.unwrap_or(d.ema_momentum),
                    ema_enabled: self.ema_enabled.unwrap_or(d.ema_enabled),
                    self_weight: self.self_weight.unwrap_or(d.self_weight),
                    max_eval_samples: self.max_eval_samples.unwrap_or(d.max_eval_samples),
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub lambda_max: f64,
    pub logit_clamp: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            rounds: 30,
            learning_rate: 0.01,
            batch_size: 32,
            local_epochs: 5,
            lambda_max: 1.0,
            logit_clamp: 10.0,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "training.learning_rate: {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("training.batch_size: must be >= 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Validation("training.local_epochs: must be >= 1".into()));
        }
        if !(self.lambda_max >= 0.0) {
            return Err(Error::Validation(format!(
                "training.lambda_max: {} must be >= 0",
                self.lambda_max
            )));
        }
        if !(self.logit_clamp > 0.0) {
            return Err(Error::Validation(format!(
                "training.logit_clamp: {} must be > 0",
                self.logit_clamp
            )));
        }
        Ok(())
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            local_epochs: self.local_epochs,
            lambda_max: self.lambda_max,
            logit_clamp: self.logit_clamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: vec![64, 32] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.train > 0.0 && self.val > 0.0 && self.test > 0.0) {
            return Err(Error::Validation(
                "split: all fractions must be > 0".into(),
            ));
        }
        if (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "split: fractions sum to {}, expected 1",
                self.train + self.val + self.test
            )));
        }
        Ok(())
    }

    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train, self.val, self.test)
    }
}

/// Parse an experiment config from YAML or JSON (auto-detected), validate it
/// and materialize all defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let trimmed = text.trim_start();
    let parsed: ExperimentConfig = if trimmed.starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("json: {e}")))?
    } else {
        serde_yaml::from_str(text).map_err(|e| Error::Parse(format!("yaml: {e}")))?
    };
    parsed.finalize()
}

/// Read and parse a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Write metrics.jsonl, summary.json and accuracy.csv into `out_dir`.
pub fn emit_results(result: &ExperimentResult, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    for round in &result.history {
        let line = serde_json::to_string(round)
            .map_err(|e| Error::Parse(format!("metrics serialization: {e}")))?;
        writeln!(metrics, "{line}").map_err(|e| Error::io(&metrics_path, e))?;
    }

    let summary_path = out_dir.join("summary.json");
    let summary = serde_json::json!({
        "config": result.config,
        "summary": result.summary,
    });
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Parse(format!("summary serialization: {e}")))?;
    fs::write(&summary_path, text + "\n").map_err(|e| Error::io(&summary_path, e))?;

    let csv_path = out_dir.join("accuracy.csv");
    let mut csv = String::from("round,mean_acc,std_acc\n");
    for round in &result.history {
        csv.push_str(&format!("{},{},{}\n", round.round, round.mean_acc, round.std_acc));
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    const MINIMAL: &str = r#"
dataset:
  synthetic: {}
topology: { kind: full, n: 4 }
aggregator: { kind: evidential_trust }
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.training.rounds, 30);
        assert_eq!(cfg.training.batch_size, 32);
        assert_eq!(cfg.aggregator.accuracy_weight, Some(0.5));
        assert_eq!(cfg.aggregator.self_weight, Some(0.5));
        assert_eq!(cfg.aggregator.initial_min_trust, Some(0.3));
        assert_eq!(cfg.aggregator.max_eval_samples, Some(100));
        assert_eq!(cfg.partition.mode, PartitionMode::Dirichlet);
        assert_eq!(cfg.partition.concentration, Some(0.5));
        assert_eq!(cfg.partition.min_per_node, Some(20));
        assert_eq!(cfg.split.fractions(), (0.70, 0.15, 0.15));
        assert_eq!(cfg.model.hidden, vec![64, 32]);
    }

    #[test]
    fn out_of_range_self_weight_names_key_and_range() {
        let text = MINIMAL.replace(
            "aggregator: { kind: evidential_trust }",
            "aggregator: { kind: evidential_trust, self_weight: 1.5 }",
        );
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("self_weight"), "{msg}");
        assert!(msg.contains("[0, 1]"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.to_string() + "\nbogus_key: 3\n";
        assert!(parse_config(&text).is_err());
        let text = MINIMAL.replace(
            "topology: { kind: full, n: 4 }",
            "topology: { kind: full, n: 4, extra: 1 }",
        );
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn paper_shaped_config_parses() {
        let text = r#"
dataset:
  synthetic: { num_classes: 6, dim: 32, samples_per_class: 400 }
partition: { mode: dirichlet, concentration: 0.5 }
topology: { kind: full, n: 30 }
aggregator:
  kind: evidential_trust
  self_weight: 0.5
  accuracy_weight: 0.5
  initial_min_trust: 0.3
training: { rounds: 30, local_epochs: 5, learning_rate: 0.01, batch_size: 32 }
master_seed: 1
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.topology.n, 30);
        assert_eq!(cfg.training.rounds, 30);
        assert_eq!(cfg.training.local_epochs, 5);
    }

    #[test]
    fn json_configs_are_autodetected() {
        let cfg = parse_config(MINIMAL).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let reparsed = parse_config(&json).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn yaml_round_trip_is_a_fixed_point() {
        let cfg = parse_config(MINIMAL).unwrap();
        let yaml = serde_yaml::to_string(&cfg).unwrap();
        let reparsed = parse_config(&yaml).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn mode_dependent_keys_are_policed() {
        let text = MINIMAL.to_string() + "\npartition: { mode: by_subject, concentration: 0.5 }\n";
        assert!(parse_config(&text).is_err());
        let text = MINIMAL.replace(
            "topology: { kind: full, n: 4 }",
            "topology: { kind: full, n: 4, p: 0.5 }",
        );
        assert!(parse_config(&text).is_err());
        let text = MINIMAL.replace(
            "aggregator: { kind: evidential_trust }",
            "aggregator: { kind: fedavg, self_weight: 0.5 }",
        );
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn derive_seed_is_pure_and_collision_free() {
        assert_eq!(derive_seed(3, "node-init", 5), derive_seed(3, "node-init", 5));

        let mut seen = HashSet::new();
        let mut master = 0x1234_5678u64;
        for _ in 0..1000 {
            master = splitmix64(master);
            let a = derive_seed(master, seed_tags::NODE_INIT, 0);
            let b = derive_seed(master, seed_tags::NODE_INIT, 1);
            assert_ne!(a, b);
            let c = derive_seed(master, seed_tags::PARTITION, 0);
            let d = derive_seed(master, seed_tags::TOPOLOGY, 0);
            assert_ne!(c, d);
            for v in [a, b, c, d] {
                assert!(seen.insert(v), "collision for master {master}");
            }
        }
    }

    #[test]
    fn distinct_indices_across_tags_stay_distinct() {
        let mut seen = HashSet::new();
        for tag in [
            seed_tags::DATASET,
            seed_tags::TOPOLOGY,
            seed_tags::PARTITION,
            seed_tags::NODE_SPLIT,
            seed_tags::NODE_INIT,
            seed_tags::NODE_SHUFFLE,
            seed_tags::VAL_SUBSET,
            seed_tags::ROUND,
        ] {
            for index in 0..200u64 {
                assert!(
                    seen.insert(derive_seed(99, tag, index)),
                    "collision at ({tag}, {index})"
                );
            }
        }
    }
}
