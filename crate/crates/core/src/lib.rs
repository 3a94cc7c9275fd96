//! Model-agnostic Shapley attribution for discrete inputs.
//!
//! - [`engine`]: exact and sampled Shapley values with random or conditional
//!   baselines, plus uncertainty-based reweighting of replaced features.
//! - [`interaction`]: pointwise mutual information, symmetric and asymmetric
//!   interaction indices, and influence graphs over tabular worlds.
//! - [`eval`]: log-odds, sufficiency and comprehensiveness under padding or
//!   deletion, and ranking agreement (Spearman, top-k overlap).

pub mod distributions;
pub mod engine;
pub mod error;
pub mod eval;
pub mod interaction;
pub mod model;
pub mod types;
pub mod worlds;

pub use distributions::{ConditionalProvider, Dataset, DonorPool, TabularJointModel};
pub use engine::{DonorSource, ShapleyEstimate, ValueFunctionSpec};
pub use error::{Error, Result};
pub use model::{ConcurrencyClass, Model};
pub use types::{
    compose, normalized_entropy, AttributionMeta, AttributionVector, BaselineKind, Coalition,
    EntropyInput, Instance, LabelDistribution, PartialInstance, SamplingConfig, Token, Vocab,
};
