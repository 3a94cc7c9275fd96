//! Remote models and conditional providers over the JSON/HTTP wire protocol.
//!
//! Every endpoint takes a JSON body via POST:
//!
//! | path           | request                                                   | response                          |
//! |----------------|-----------------------------------------------------------|-----------------------------------|
//! | `/predict`     | `{"instances": [[token, ...], ...]}`                      | `{"probs": [[p, ...], ...]}`      |
//! | `/conditional` | `{"observed": {"index": token}, "n", "count", "seed"}`    | `{"completions": [[token, ...]]}` |
//! | `/meta`        | `{}`                                                      | `{"label_count", "pad_token"}`    |
//!
//! Tokens travel as strings. [`RemoteModel`] and [`RemoteConditionalProvider`]
//! intern them into a shared [`asymshap::Vocab`], so remote components plug
//! into the engine like local ones.

pub mod client;
pub mod conformance;
mod error;
pub mod protocol;
mod remote;
pub mod stub;

pub use client::{RemoteClient, RemoteEndpoint, RetryPolicy};
pub use error::{BridgeError, Result};
pub use remote::{RemoteConditionalProvider, RemoteModel};

/// Environment variable holding the default endpoint address.
pub const ENDPOINT_ENV: &str = "ASYMSHAP_ENDPOINT";
