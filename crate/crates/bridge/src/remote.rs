use std::collections::BTreeMap;
use std::sync::Arc;

use asymshap::{ConditionalProvider, Instance, LabelDistribution, Model, PartialInstance, Token, Vocab};
use rand::RngCore;

use crate::client::RemoteClient;
use crate::error::{BridgeError, Result};

fn token_names(vocab: &Vocab, tokens: &[Token]) -> Result<Vec<String>> {
    tokens
        .iter()
        .map(|&t| {
            vocab
                .name(t)
                .map(|s| s.to_string())
                .ok_or_else(|| BridgeError::Config(format!("token {t} has no name in the vocabulary")))
        })
        .collect()
}

/// A classifier behind a `/predict` endpoint.
pub struct RemoteModel {
    client: Arc<RemoteClient>,
    vocab: Arc<Vocab>,
    label_count: usize,
    pad: Token,
}

impl RemoteModel {
    /// Queries `/meta` for the label count and pad token, interning the pad.
    pub fn connect(client: Arc<RemoteClient>, vocab: Arc<Vocab>) -> Result<Self> {
        let meta = client.meta()?;
        let pad = vocab.intern(&meta.pad_token);
        Ok(Self {
            client,
            vocab,
            label_count: meta.label_count,
            pad,
        })
    }

    /// The server's pad token, interned.
    pub fn pad(&self) -> Token {
        self.pad
    }

    pub fn client(&self) -> &Arc<RemoteClient> {
        &self.client
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn predict_remote(&self, batch: &[Instance]) -> Result<Vec<LabelDistribution>> {
        let instances = batch
            .iter()
            .map(|x| token_names(&self.vocab, x.features()))
            .collect::<Result<Vec<_>>>()?;
        self.client
            .predict(&instances, self.label_count)?
            .into_iter()
            .map(|row| LabelDistribution::new(row).map_err(BridgeError::from))
            .collect()
    }
}

impl Model for RemoteModel {
    fn label_count(&self) -> usize {
        self.label_count
    }

    fn predict_batch(&self, batch: &[Instance]) -> asymshap::Result<Vec<LabelDistribution>> {
        self.predict_remote(batch)
            .map_err(|e| asymshap::Error::Evaluation(e.to_string()))
    }
}

/// A conditional sampler behind a `/conditional` endpoint.
pub struct RemoteConditionalProvider {
    client: Arc<RemoteClient>,
    vocab: Arc<Vocab>,
    pad: Token,
}

impl RemoteConditionalProvider {
    pub fn new(client: Arc<RemoteClient>, vocab: Arc<Vocab>, pad: Token) -> Self {
        Self { client, vocab, pad }
    }

    /// `count` completions of `observed`, drawn server-side with `seed`.
    pub fn complete(&self, observed: &PartialInstance, count: usize, seed: u64) -> Result<Vec<Instance>> {
        let names: BTreeMap<usize, String> = observed
            .observed()
            .iter()
            .map(|(&i, &t)| Ok((i, token_names(&self.vocab, &[t])?.remove(0))))
            .collect::<Result<_>>()?;
        self.client
            .conditional(&names, observed.len(), count, seed)?
            .into_iter()
            .map(|c| {
                let tokens = c.iter().map(|s| self.vocab.intern(s)).collect();
                Instance::new(tokens, self.pad).map_err(BridgeError::from)
            })
            .collect()
    }
}

impl ConditionalProvider for RemoteConditionalProvider {
    /// One completion per call; the seed comes from the engine's stream, so
    /// a seeded run replays the same requests.
    fn sample_completion(&self, observed: &PartialInstance, rng: &mut dyn RngCore) -> asymshap::Result<Instance> {
        let seed = rng.next_u64();
        let mut out = self
            .complete(observed, 1, seed)
            .map_err(|e| asymshap::Error::Sampling(e.to_string()))?;
        Ok(out.remove(0))
    }
}
