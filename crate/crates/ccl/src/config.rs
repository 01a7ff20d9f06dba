//! Training configuration: defaults, the flat `key = value` config format
//! with dotted keys, flag overrides, and run manifests. Precedence is
//! built-in defaults < config file < command-line flags.

use crate::data::SyntheticSpec;
use crate::schedule::{PolicyKind, SchedulePolicy};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Gd,
    Adam,
}

/// How CCL pairs are formed: by pseudo-cluster membership (the method) or
/// per-instance identity (the ablation that mirrors instance-wise baselines).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CclPairing {
    Cluster,
    Instance,
}

/// Target-domain objective: the full combination, or the contrastive term
/// alone (used by the pairing ablation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSupervision {
    Full,
    ContrastiveOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: SchedulePolicy,
    pub delta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub momentum: f64,
    pub margin: f64,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub queue_capacity: usize,
    pub p: usize,
    pub k: usize,
    pub epochs_per_cluster_round: u32,
    pub steps_per_epoch: u32,
    pub hidden_width: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub ccl_include_positive: bool,
    pub ccl_pairing: CclPairing,
    pub target_supervision: TargetSupervision,
    pub data: SyntheticSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: SchedulePolicy::default_three_step(),
            delta: 0.1,
            gamma: 0.7,
            tau: 0.07,
            momentum: 0.99,
            margin: 0.3,
            learning_rate: 0.025,
            optimizer: Optimizer::Gd,
            dbscan_eps: 0.6,
            dbscan_min_pts: 4,
            queue_capacity: 1024,
            p: 4,
            k: 4,
            epochs_per_cluster_round: 2,
            steps_per_epoch: 8,
            hidden_width: 64,
            feature_dim: 32,
            seed: 0,
            ccl_include_positive: true,
            ccl_pairing: CclPairing::Cluster,
            target_supervision: TargetSupervision::Full,
            data: SyntheticSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta < 0.0 {
            return Err(Error::Config("delta must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must be in [0, 1]".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1]".into()));
        }
        // 0 is allowed: a frozen-parameter run is a useful diagnostic.
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if self.queue_capacity == 0 {
            return Err(Error::Config("queue_capacity must be positive".into()));
        }
        if self.p < 2 || self.k < 2 {
            return Err(Error::Config("need p >= 2 and k >= 2".into()));
        }
        if self.epochs_per_cluster_round == 0 || self.steps_per_epoch == 0 {
            return Err(Error::Config("epoch cadence values must be positive".into()));
        }
        if self.hidden_width == 0 || self.feature_dim == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        SchedulePolicy::new(
            self.schedule.kind,
            self.schedule.e1,
            self.schedule.e2,
            self.schedule.e3,
        )?;
        self.data.validate()?;
        Ok(())
    }

    /// The two-stage baseline: hard schedule switch, no CCL, no Fourier term.
    pub fn as_baseline(&self) -> Self {
        let mut c = self.clone();
        c.schedule.kind = PolicyKind::TwoStage;
        c.delta = 0.0;
        c.gamma = 1.0;
        c
    }

    /// Apply one dotted-key override. Unknown keys are config errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("invalid value '{value}' for key '{key}': expected {what}"));
        macro_rules! parse {
            ($what:expr) => {
                value.parse().map_err(|_| bad($what))?
            };
        }
        match key {
            "schedule.kind" => {
                self.schedule.kind = match value {
                    "two_stage" => PolicyKind::TwoStage,
                    "k_step" => PolicyKind::KStep(match self.schedule.kind {
                        PolicyKind::KStep(k) => k,
                        _ => 3,
                    }),
                    "linear" => PolicyKind::Linear,
                    "static" => PolicyKind::Static {
                        lambda_s: 0.5,
                        lambda_t: 0.5,
                    },
                    _ => return Err(bad("one of two_stage|k_step|linear|static")),
                }
            }
            "schedule.k" => {
                let k: u32 = parse!("a positive integer");
                self.schedule.kind = PolicyKind::KStep(k);
            }
            "schedule.e1" => self.schedule.e1 = parse!("an epoch number"),
            "schedule.e2" => self.schedule.e2 = parse!("an epoch number"),
            "schedule.e3" => self.schedule.e3 = parse!("an epoch number"),
            "schedule.lambda_s" => {
                let ls: f64 = parse!("a weight");
                self.schedule.kind = match self.schedule.kind {
                    PolicyKind::Static { lambda_t, .. } => PolicyKind::Static {
                        lambda_s: ls,
                        lambda_t,
                    },
                    _ => PolicyKind::Static {
                        lambda_s: ls,
                        lambda_t: 1.0 - ls,
                    },
                };
            }
            "schedule.lambda_t" => {
                let lt: f64 = parse!("a weight");
                self.schedule.kind = match self.schedule.kind {
                    PolicyKind::Static { lambda_s, .. } => PolicyKind::Static {
                        lambda_s,
                        lambda_t: lt,
                    },
                    _ => PolicyKind::Static {
                        lambda_s: 1.0 - lt,
                        lambda_t: lt,
                    },
                };
            }
            "delta" => self.delta = parse!("a number"),
            "gamma" => self.gamma = parse!("a number"),
            "tau" => self.tau = parse!("a number"),
            "momentum" => self.momentum = parse!("a number"),
            "margin" => self.margin = parse!("a number"),
            "learning_rate" => self.learning_rate = parse!("a number"),
            "optimizer" => {
                self.optimizer = match value {
                    "gd" => Optimizer::Gd,
                    "adam" => Optimizer::Adam,
                    _ => return Err(bad("gd or adam")),
                }
            }
            "dbscan.eps" => self.dbscan_eps = parse!("a number"),
            "dbscan.min_pts" => self.dbscan_min_pts = parse!("an integer"),
            "queue_capacity" => self.queue_capacity = parse!("an integer"),
            "p" => self.p = parse!("an integer"),
            "k" => self.k = parse!("an integer"),
            "epochs_per_cluster_round" => self.epochs_per_cluster_round = parse!("an integer"),
            "steps_per_epoch" => self.steps_per_epoch = parse!("an integer"),
            "hidden_width" => self.hidden_width = parse!("an integer"),
            "feature_dim" => self.feature_dim = parse!("an integer"),
            "seed" => self.seed = parse!("an integer"),
            "ccl_include_positive" => self.ccl_include_positive = parse!("true or false"),
            "ccl_pairing" => {
                self.ccl_pairing = match value {
                    "cluster" => CclPairing::Cluster,
                    "instance" => CclPairing::Instance,
                    _ => return Err(bad("cluster or instance")),
                }
            }
            "target_supervision" => {
                self.target_supervision = match value {
                    "full" => TargetSupervision::Full,
                    "contrastive_only" => TargetSupervision::ContrastiveOnly,
                    _ => return Err(bad("full or contrastive_only")),
                }
            }
            "data.classes_per_domain" => self.data.classes_per_domain = parse!("an integer"),
            "data.samples_per_class" => self.data.samples_per_class = parse!("an integer"),
            "data.input_dim" => self.data.input_dim = parse!("an integer"),
            "data.sigma_between" => self.data.sigma_between = parse!("a number"),
            "data.sigma_within" => self.data.sigma_within = parse!("a number"),
            "data.rotation_deg" => self.data.rotation_deg = parse!("a number"),
            "data.translation_norm" => self.data.translation_norm = parse!("a number"),
            "data.scale_min" => self.data.scale_min = parse!("a number"),
            "data.scale_max" => self.data.scale_max = parse!("a number"),
            "data.cameras_per_domain" => self.data.cameras_per_domain = parse!("an integer"),
            "data.sigma_camera" => self.data.sigma_camera = parse!("a number"),
            "data.seed" => self.data.seed = parse!("an integer"),
            "data.shared_center_seed" => {
                self.data.shared_center_seed = if value == "none" {
                    None
                } else {
                    Some(parse!("an integer or 'none'"))
                }
            }
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order. This is both the
    /// config-file format and the manifest body; feeding it back through
    /// `load_file` reproduces the configuration exactly.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
        let kind = match self.schedule.kind {
            PolicyKind::TwoStage => "two_stage",
            PolicyKind::KStep(_) => "k_step",
            PolicyKind::Linear => "linear",
            PolicyKind::Static { .. } => "static",
        };
        push("schedule.kind", kind.into());
        if let PolicyKind::KStep(k) = self.schedule.kind {
            push("schedule.k", k.to_string());
        }
        if let PolicyKind::Static { lambda_s, lambda_t } = self.schedule.kind {
            push("schedule.lambda_s", lambda_s.to_string());
            push("schedule.lambda_t", lambda_t.to_string());
        }
        push("schedule.e1", self.schedule.e1.to_string());
        push("schedule.e2", self.schedule.e2.to_string());
        push("schedule.e3", self.schedule.e3.to_string());
        push("delta", self.delta.to_string());
        push("gamma", self.gamma.to_string());
        push("tau", self.tau.to_string());
        push("momentum", self.momentum.to_string());
        push("margin", self.margin.to_string());
        push("learning_rate", self.learning_rate.to_string());
        push(
            "optimizer",
            match self.optimizer {
                Optimizer::Gd => "gd".into(),
                Optimizer::Adam => "adam".into(),
            },
        );
        push("dbscan.eps", self.dbscan_eps.to_string());
        push("dbscan.min_pts", self.dbscan_min_pts.to_string());
        push("queue_capacity", self.queue_capacity.to_string());
        push("p", self.p.to_string());
        push("k", self.k.to_string());
        push(
            "epochs_per_cluster_round",
            self.epochs_per_cluster_round.to_string(),
        );
        push("steps_per_epoch", self.steps_per_epoch.to_string());
        push("hidden_width", self.hidden_width.to_string());
        push("feature_dim", self.feature_dim.to_string());
        push("seed", self.seed.to_string());
        push("ccl_include_positive", self.ccl_include_positive.to_string());
        push(
            "ccl_pairing",
            match self.ccl_pairing {
                CclPairing::Cluster => "cluster".into(),
                CclPairing::Instance => "instance".into(),
            },
        );
        push(
            "target_supervision",
            match self.target_supervision {
                TargetSupervision::Full => "full".into(),
                TargetSupervision::ContrastiveOnly => "contrastive_only".into(),
            },
        );
        push("data.classes_per_domain", self.data.classes_per_domain.to_string());
        push("data.samples_per_class", self.data.samples_per_class.to_string());
        push("data.input_dim", self.data.input_dim.to_string());
        push("data.sigma_between", self.data.sigma_between.to_string());
        push("data.sigma_within", self.data.sigma_within.to_string());
        push("data.rotation_deg", self.data.rotation_deg.to_string());
        push("data.translation_norm", self.data.translation_norm.to_string());
        push("data.scale_min", self.data.scale_min.to_string());
        push("data.scale_max", self.data.scale_max.to_string());
        push("data.cameras_per_domain", self.data.cameras_per_domain.to_string());
        push("data.sigma_camera", self.data.sigma_camera.to_string());
        push("data.seed", self.data.seed.to_string());
        push(
            "data.shared_center_seed",
            match self.data.shared_center_seed {
                Some(s) => s.to_string(),
                None => "none".into(),
            },
        );
        kv
    }

    /// Parse a flat `key = value` config file over the defaults in `self`.
    /// Lines starting with `#` are comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    msg: format!("expected 'key = value', got '{raw}'"),
                });
            };
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_file(path)?;
        c.validate()?;
        Ok(c)
    }
}

/// Resolved configuration plus run metadata, written alongside every run's
/// outputs. A manifest is itself a valid config file: rerunning with
/// `--config <manifest>` reproduces the run bit-for-bit (metadata lines are
/// comments).
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub command: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# ccl run manifest");
        let _ = writeln!(out, "# version: {TOOL_VERSION}");
        let _ = writeln!(out, "# command: {}", self.command);
        for i in &self.inputs {
            let _ = writeln!(out, "# input: {i}");
        }
        for o in &self.outputs {
            let _ = writeln!(out, "# output: {o}");
        }
        for (k, v) in self.config.to_kv() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.apply_kv("schedule.kind", "linear").unwrap();
        cfg.apply_kv("delta", "0.25").unwrap();
        cfg.apply_kv("data.classes_per_domain", "7").unwrap();
        let mut rebuilt = TrainConfig::default();
        for (k, v) in cfg.to_kv() {
            rebuilt.apply_kv(&k, &v).unwrap();
        }
        assert_eq!(cfg, rebuilt);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = TrainConfig::default();
        assert!(matches!(
            cfg.apply_kv("foo", "1"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bad_value_names_key() {
        let mut cfg = TrainConfig::default();
        match cfg.apply_kv("tau", "warm") {
            Err(Error::Config(msg)) => assert!(msg.contains("tau")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_reloads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.cfg");
        let mut cfg = TrainConfig::default();
        cfg.apply_kv("schedule.k", "4").unwrap();
        cfg.apply_kv("seed", "17").unwrap();
        let manifest = RunManifest {
            config: cfg.clone(),
            command: "train".into(),
            inputs: vec![],
            outputs: vec!["metrics.jsonl".into()],
        };
        manifest.write(&path).unwrap();
        let reloaded = TrainConfig::load_file(&path).unwrap();
        assert_eq!(cfg, reloaded);
    }

    #[test]
    fn static_schedule_via_lambda_keys() {
        let mut cfg = TrainConfig::default();
        cfg.apply_kv("schedule.lambda_s", "0.2").unwrap();
        cfg.apply_kv("schedule.lambda_t", "0.8").unwrap();
        assert_eq!(
            cfg.schedule.kind,
            PolicyKind::Static {
                lambda_s: 0.2,
                lambda_t: 0.8
            }
        );
    }

    #[test]
    fn baseline_derivation() {
        let b = TrainConfig::default().as_baseline();
        assert_eq!(b.schedule.kind, PolicyKind::TwoStage);
        assert_eq!(b.delta, 0.0);
        assert_eq!(b.gamma, 1.0);
    }
}
