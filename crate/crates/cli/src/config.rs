//! Run configuration: a TOML file plus command-line overrides.
//!
//! Precedence, highest first: command-line flags, the `--config` file,
//! built-in defaults. `ASYMSHAP_ENDPOINT` fills `--endpoint` when the flag is
//! absent.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use asymshap::eval::{EvalConfig, PerturbMode};
use asymshap::BaselineKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Overrides;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// A builtin world name, `lexicon`, or `remote`.
    pub source: String,
    /// Lexicon weights (`{"weights": {token: w}, "bias": b}`) for `lexicon`.
    pub path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub pad_token: String,
    pub max_batch: usize,
    pub max_in_flight: usize,
    pub timeout_secs: f64,
    pub retry_attempts: u32,
    pub retry_backoff_ms: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            source: "sentiment".into(),
            path: None,
            endpoint: None,
            pad_token: asymshap::worlds::PAD_NAME.into(),
            max_batch: 64,
            max_in_flight: 4,
            timeout_secs: 30.0,
            retry_attempts: 3,
            retry_backoff_ms: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    /// The tabular joint (builtin, `--joint` file, or fitted to the dataset).
    Joint,
    /// The endpoint's `/conditional`.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub kind: BaselineKind,
    /// Conditional provider; defaults to `remote` for remote models and
    /// `joint` otherwise.
    pub provider: Option<ProviderKind>,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            kind: BaselineKind::Random,
            provider: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub m: usize,
    pub seed: u64,
    pub reweighted: bool,
    /// Exhaustive enumeration instead of sampling (needs a joint).
    pub exact: bool,
    pub include_baseline_expectation: bool,
    pub workers: usize,
    pub batch_size: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            m: 1000,
            seed: 0,
            reweighted: false,
            exact: false,
            include_baseline_expectation: false,
            workers: 1,
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractSection {
    pub order_cap: usize,
}

impl Default for InteractSection {
    fn default() -> Self {
        Self { order_cap: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub dataset: Option<PathBuf>,
    /// Joint distribution CSV (`feature..., probability`).
    pub joint: Option<PathBuf>,
    pub baseline: BaselineSection,
    pub sampling: SamplingSection,
    pub eval: EvalConfig,
    pub interact: InteractSection,
    /// Label to explain; the predicted class of each instance when absent.
    pub target_label: Option<usize>,
    /// Only the first this-many instances.
    pub limit: Option<usize>,
    /// Methods for `evaluate` and `compare`, e.g. `random`,
    /// `conditional-reweighted`, `exact-random`.
    pub methods: Vec<String>,
    /// Seeds for `compare`.
    pub seeds: Vec<u64>,
    /// Attribution files for `evaluate`.
    pub attributions: Vec<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            dataset: None,
            joint: None,
            baseline: BaselineSection::default(),
            sampling: SamplingSection::default(),
            eval: EvalConfig::default(),
            interact: InteractSection::default(),
            target_label: None,
            limit: None,
            methods: Vec::new(),
            seeds: vec![0, 1, 2, 3, 4],
            attributions: Vec::new(),
            out: PathBuf::from("asymshap-out"),
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    /// Reads a TOML config, or the `config` entry of a run's
    /// `manifest.json` (any `.json` path) to replay that run.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut manifest: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
            let config = manifest
                .get_mut("config")
                .map(serde_json::Value::take)
                .with_context(|| format!("manifest {} has no config", path.display()))?;
            return serde_json::from_value(config).with_context(|| format!("invalid config in manifest {}", path.display()));
        }
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(model) = &o.model {
            self.model.source = model.clone();
        }
        if let Some(ep) = &o.endpoint {
            self.model.endpoint = Some(ep.clone());
            if o.model.is_none() && self.model.source == ModelSection::default().source {
                self.model.source = "remote".into();
            }
        }
        if o.dataset.is_some() {
            self.dataset = o.dataset.clone();
        }
        if o.joint.is_some() {
            self.joint = o.joint.clone();
        }
        set(&mut self.baseline.kind, o.baseline.map(BaselineKind::from));
        if o.provider.is_some() {
            self.baseline.provider = o.provider;
        }
        if o.reweight {
            self.sampling.reweighted = true;
        }
        if o.exact {
            self.sampling.exact = true;
        }
        set(&mut self.sampling.m, o.m);
        set(&mut self.sampling.seed, o.seed);
        set(&mut self.sampling.workers, o.workers);
        if let Some(k) = &o.k_grid {
            self.eval.k_grid = k.clone();
        }
        set(&mut self.eval.perturb_mode, o.mode.map(PerturbMode::from));
        set(&mut self.interact.order_cap, o.order_cap);
        if o.target.is_some() {
            self.target_label = o.target;
        }
        if o.limit.is_some() {
            self.limit = o.limit;
        }
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        if let Some(s) = &o.seeds {
            self.seeds = s.clone();
        }
        if !o.attributions.is_empty() {
            self.attributions = o.attributions.clone();
        }
        set(&mut self.out, o.out.clone());
    }

    /// Checks values and that referenced files exist. Messages name the
    /// offending field.
    pub fn validate(&self) -> Result<()> {
        if self.sampling.m == 0 {
            bail!("sampling.m: must be at least 1");
        }
        if self.sampling.workers == 0 {
            bail!("sampling.workers: must be at least 1");
        }
        if self.sampling.batch_size == 0 {
            bail!("sampling.batch_size: must be at least 1");
        }
        if self.interact.order_cap == 0 {
            bail!("interact.order_cap: must be at least 1");
        }
        if self.model.max_batch == 0 {
            bail!("model.max_batch: must be at least 1");
        }
        if self.model.max_in_flight == 0 {
            bail!("model.max_in_flight: must be at least 1");
        }
        if self.model.timeout_secs.is_nan() || self.model.timeout_secs <= 0.0 {
            bail!("model.timeout_secs: must be positive");
        }
        if self.model.retry_attempts == 0 {
            bail!("model.retry_attempts: must be at least 1");
        }
        self.eval.validate().context("eval.k_grid")?;
        for (field, path) in [
            ("dataset", self.dataset.as_ref()),
            ("joint", self.joint.as_ref()),
            ("model.path", self.model.path.as_ref()),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    bail!("{field}: {} does not exist", p.display());
                }
            }
        }
        for (i, p) in self.attributions.iter().enumerate() {
            if !p.exists() {
                bail!("attributions[{i}]: {} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the resolved configuration's TOML form.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml()?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
