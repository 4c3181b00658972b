//! HTTP+JSON wire messages.
//!
//! | endpoint            | request            | response            |
//! |---------------------|--------------------|---------------------|
//! | `GET /v1/meta`      |                    | [`BackendMeta`]     |
//! | `POST /v1/mask-fill`| [`MaskFillRequest`]| [`MaskFillResponse`]|
//! | `POST /v1/logprobs` | [`TokensRequest`]  | [`LogprobsResponse`]|
//! | `POST /v1/next-token`| [`NextTokenRequest`]| [`NextTokenResponse`]|
//! | `POST /v1/embed`    | [`TokensRequest`]  | [`EmbedResponse`]   |
//!
//! Failures come back as a non-2xx status with an [`ErrorResponse`] body;
//! over-length input uses 422 and fills in `max_len`.
//!
//! [`BackendMeta`]: super::BackendMeta

use serde::{Deserialize, Serialize};

use super::MaskCandidate;

pub const META: &str = "/v1/meta";
pub const MASK_FILL: &str = "/v1/mask-fill";
pub const LOGPROBS: &str = "/v1/logprobs";
pub const NEXT_TOKEN: &str = "/v1/next-token";
pub const EMBED: &str = "/v1/embed";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskFillRequest {
    pub tokens: Vec<String>,
    pub mask_index: usize,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFillResponse {
    pub candidates: Vec<MaskCandidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokensRequest {
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogprobsResponse {
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextTokenRequest {
    pub tokens: Vec<String>,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextTokenResponse {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
}
