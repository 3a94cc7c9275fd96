//! Turns a resolved configuration into a model, instances and donor sources.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use asymshap::model::LexiconModel;
use asymshap::worlds::World;
use asymshap::{ConditionalProvider, Dataset, DonorPool, DonorSource, Instance, Model, TabularJointModel, Token, Vocab};
use asymshap_bridge::{RemoteClient, RemoteConditionalProvider, RemoteEndpoint, RemoteModel, RetryPolicy};
use serde::Deserialize;

use crate::config::{ProviderKind, RunConfig};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    weights: BTreeMap<String, f64>,
    #[serde(default)]
    bias: f64,
}

pub struct Setup {
    pub vocab: Arc<Vocab>,
    pub model: Arc<dyn Model>,
    pub pad: Token,
    pub instances: Vec<Instance>,
    pub joint: Option<Arc<TabularJointModel>>,
    random_pool: Option<Arc<dyn DonorPool>>,
    conditional: Option<Arc<dyn ConditionalProvider>>,
}

pub fn endpoint(cfg: &RunConfig) -> Result<RemoteEndpoint> {
    let base = cfg
        .model
        .endpoint
        .clone()
        .ok_or_else(|| anyhow!("model.endpoint: required for a remote model (or set {})", asymshap_bridge::ENDPOINT_ENV))?;
    let mut ep = RemoteEndpoint::new(base);
    ep.timeout = Duration::from_secs_f64(cfg.model.timeout_secs);
    ep.max_batch = cfg.model.max_batch;
    ep.max_in_flight = cfg.model.max_in_flight;
    ep.retry = RetryPolicy {
        attempts: cfg.model.retry_attempts,
        backoff: Duration::from_millis(cfg.model.retry_backoff_ms),
    };
    ep.validate()?;
    Ok(ep)
}

fn load_dataset(cfg: &RunConfig, vocab: &Vocab, pad: Token) -> Result<Option<Dataset>> {
    cfg.dataset
        .as_deref()
        .map(|p| Dataset::load(p, vocab, pad).with_context(|| format!("dataset: loading {}", p.display())))
        .transpose()
}

fn load_lexicon(path: &Path, vocab: &Vocab) -> Result<LexiconModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("model.path: reading {}", path.display()))?;
    let file: LexiconFile =
        serde_json::from_str(&text).with_context(|| format!("model.path: invalid lexicon {}", path.display()))?;
    let weights: HashMap<Token, f64> = file.weights.iter().map(|(k, &w)| (vocab.intern(k), w)).collect();
    Ok(LexiconModel::new(weights, file.bias))
}

impl Setup {
    /// With `require_instances` false an empty instance list is accepted.
    pub fn build(cfg: &RunConfig, require_instances: bool) -> Result<Self> {
        let source = cfg.model.source.as_str();
        let mut remote_client = None;
        let (vocab, model, pad, world_joint, world_instances): (_, Arc<dyn Model>, _, _, _) = match source {
            "remote" => {
                let client = Arc::new(RemoteClient::new(endpoint(cfg)?)?);
                let vocab = Arc::new(Vocab::new());
                let model = RemoteModel::connect(client.clone(), vocab.clone())
                    .with_context(|| format!("connecting to {}", client.endpoint().base))?;
                let pad = model.pad();
                remote_client = Some(client);
                (vocab, Arc::new(model), pad, None, Vec::new())
            }
            "lexicon" => {
                let path = cfg.model.path.as_deref().ok_or_else(|| anyhow!("model.path: required for a lexicon model"))?;
                let vocab = Arc::new(Vocab::new());
                let pad = vocab.intern(&cfg.model.pad_token);
                let model = load_lexicon(path, &vocab)?;
                (vocab, Arc::new(model), pad, None, Vec::new())
            }
            name => {
                let world = World::by_name(name).map_err(|e| anyhow!("model.source: {e}"))?;
                let pad = world.pad();
                (world.vocab, world.model, pad, Some(world.joint), world.instances)
            }
        };

        let dataset = load_dataset(cfg, &vocab, pad)?;
        let mut instances = match &dataset {
            Some(d) => d.instances().to_vec(),
            None if !world_instances.is_empty() => world_instances,
            None if require_instances => bail!("dataset: required for model source {source:?}"),
            None => Vec::new(),
        };
        if let Some(limit) = cfg.limit {
            instances.truncate(limit);
        }
        if require_instances && instances.is_empty() {
            bail!("dataset: no instances");
        }

        let joint = match (&cfg.joint, world_joint, &dataset) {
            (Some(path), _, _) => Some(Arc::new(
                TabularJointModel::load(path, &vocab, pad).with_context(|| format!("joint: loading {}", path.display()))?,
            )),
            (None, Some(j), _) => Some(j),
            (None, None, Some(d)) => match TabularJointModel::fit(d) {
                Ok(j) => Some(Arc::new(j)),
                Err(e) => {
                    log::info!("no joint fitted to the dataset: {e}");
                    None
                }
            },
            (None, None, None) => None,
        };

        let random_pool: Option<Arc<dyn DonorPool>> = match (&joint, dataset) {
            (Some(j), _) => Some(j.clone()),
            (None, Some(d)) => Some(Arc::new(d)),
            (None, None) => None,
        };
        let provider = cfg.baseline.provider.unwrap_or(if remote_client.is_some() {
            ProviderKind::Remote
        } else {
            ProviderKind::Joint
        });
        let conditional: Option<Arc<dyn ConditionalProvider>> = match provider {
            ProviderKind::Joint => joint.clone().map(|j| j as Arc<dyn ConditionalProvider>),
            ProviderKind::Remote => {
                let client = match remote_client {
                    Some(c) => c,
                    None => Arc::new(RemoteClient::new(endpoint(cfg)?)?),
                };
                Some(Arc::new(RemoteConditionalProvider::new(client, vocab.clone(), pad)))
            }
        };

        Ok(Self {
            vocab,
            model,
            pad,
            instances,
            joint,
            random_pool,
            conditional,
        })
    }

    pub fn donors(&self, kind: asymshap::BaselineKind) -> Result<DonorSource> {
        match kind {
            asymshap::BaselineKind::Random => self
                .random_pool
                .clone()
                .map(DonorSource::Random)
                .ok_or_else(|| anyhow!("baseline.kind: random needs a dataset or joint")),
            asymshap::BaselineKind::Conditional => self
                .conditional
                .clone()
                .map(DonorSource::Conditional)
                .ok_or_else(|| anyhow!("baseline.provider: conditional needs a joint or a remote provider")),
        }
    }

    pub fn joint_for(&self, x: &Instance) -> Result<&Arc<TabularJointModel>> {
        let joint = self.joint.as_ref().ok_or_else(|| anyhow!("joint: exact computation needs a joint distribution"))?;
        if joint.len() != x.len() {
            bail!("joint: has {} features but the instance has {}", joint.len(), x.len());
        }
        Ok(joint)
    }

    pub fn names(&self, x: &Instance) -> Vec<String> {
        x.features().iter().map(|&t| self.vocab.display(t)).collect()
    }

    /// The configured label, or the class the model predicts for `x`.
    pub fn target(&self, cfg: &RunConfig, x: &Instance) -> Result<usize> {
        match cfg.target_label {
            Some(t) if t >= self.model.label_count() => {
                bail!("target_label: {t} out of range for {} labels", self.model.label_count())
            }
            Some(t) => Ok(t),
            None => Ok(self.model.predict_batch(std::slice::from_ref(x))?[0].argmax()),
        }
    }
}
