use thiserror::Error;

#[derive(Debug, Error)]
pub enum BridgeError {
    /// The server could not be reached, or kept failing after all retries.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// The server answered with something that breaks the protocol.
    #[error("protocol error: {message} (payload: {excerpt})")]
    Protocol { message: String, excerpt: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] asymshap::Error),
}

pub type Result<T, E = BridgeError> = std::result::Result<T, E>;

const EXCERPT_LEN: usize = 200;

/// The first 200 characters of `payload`.
pub(crate) fn excerpt(payload: &str) -> String {
    match payload.char_indices().nth(EXCERPT_LEN) {
        Some((cut, _)) => format!("{}...", &payload[..cut]),
        None => payload.to_string(),
    }
}

pub(crate) fn protocol(message: impl Into<String>, payload: &str) -> BridgeError {
    BridgeError::Protocol {
        message: message.into(),
        excerpt: excerpt(payload),
    }
}
