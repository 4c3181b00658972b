use std::sync::OnceLock;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{self, *};
use super::{BackendMeta, LmBackend, MaskCandidate, MaskQuery, NextTokenDist};
use crate::error::{Error, Result};

/// Client for a backend service speaking the wire protocol. The underlying
/// agent pools connections and is safe to share across threads.
pub struct HttpBackend {
    base: String,
    agent: ureq::Agent,
    meta: OnceLock<BackendMeta>,
}

impl HttpBackend {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(Duration::from_secs(300))
            .build();
        Self { base: base_url.trim_end_matches('/').to_string(), agent, meta: OnceLock::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req, len: usize) -> Result<Resp> {
        let resp = self.agent.post(&format!("{}{path}", self.base)).send_json(body);
        Self::decode(resp, len)
    }

    fn decode<Resp: DeserializeOwned>(resp: Result<ureq::Response, ureq::Error>, len: usize) -> Result<Resp> {
        match resp {
            Ok(r) => r.into_json().map_err(|e| Error::Backend(format!("bad response body: {e}"))),
            Err(ureq::Error::Status(code, r)) => {
                let body: Option<ErrorResponse> = r.into_json().ok();
                match body {
                    Some(ErrorResponse { max_len: Some(max_len), .. }) if code == 422 => {
                        Err(Error::ContextOverflow { len, max_len })
                    }
                    Some(ErrorResponse { error, .. }) if code == 400 || code == 422 => Err(Error::Protocol(error)),
                    Some(ErrorResponse { error, .. }) => Err(Error::Backend(format!("HTTP {code}: {error}"))),
                    None => Err(Error::Backend(format!("HTTP {code}"))),
                }
            }
            Err(e) => Err(Error::Backend(e.to_string())),
        }
    }
}

impl LmBackend for HttpBackend {
    fn meta(&self) -> Result<BackendMeta> {
        if let Some(m) = self.meta.get() {
            return Ok(m.clone());
        }
        let resp = self.agent.get(&format!("{}{}", self.base, protocol::META)).call();
        let meta: BackendMeta = Self::decode(resp, 0)?;
        Ok(self.meta.get_or_init(|| meta).clone())
    }

    fn mask_fill(&self, query: &MaskQuery, top_k: usize) -> Result<Vec<MaskCandidate>> {
        let body = MaskFillRequest { tokens: query.tokens.clone(), mask_index: query.mask_index, top_k };
        let resp: MaskFillResponse = self.post(protocol::MASK_FILL, &body, query.tokens.len())?;
        Ok(resp.candidates)
    }

    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        let body = TokensRequest { tokens: tokens.to_vec() };
        let resp: LogprobsResponse = self.post(protocol::LOGPROBS, &body, tokens.len())?;
        Ok(resp.logprobs)
    }

    fn next_token(&self, tokens: &[String], top_k: usize) -> Result<NextTokenDist> {
        let body = NextTokenRequest { tokens: tokens.to_vec(), top_k };
        let resp: NextTokenResponse = self.post(protocol::NEXT_TOKEN, &body, tokens.len())?;
        if resp.tokens.len() != resp.logprobs.len() {
            return Err(Error::Protocol("next-token response lists differ in length".into()));
        }
        Ok(NextTokenDist { tokens: resp.tokens, logprobs: resp.logprobs })
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = TokensRequest { tokens: tokens.to_vec() };
        let resp: EmbedResponse = self.post(protocol::EMBED, &body, tokens.len())?;
        Ok(resp.vectors)
    }
}
