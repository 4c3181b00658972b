use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use super::protocol::{self, *};
use super::{LmBackend, MaskQuery};
use crate::error::{Error, Result};

/// A running protocol server. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server is stopped from another thread or the process exits.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves `backend` over the wire protocol on `addr` (port 0 picks a free port).
pub fn serve(backend: Arc<dyn LmBackend>, addr: &str, workers: usize) -> Result<ServerHandle> {
    let server = Server::http(addr).map_err(|e| Error::Backend(format!("cannot bind {addr}: {e}")))?;
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Backend("server is not bound to an IP address".into()))?;
    let server = Arc::new(server);
    let workers = (0..workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let backend = Arc::clone(&backend);
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    handle(backend.as_ref(), request);
                }
            })
        })
        .collect();
    Ok(ServerHandle { addr: bound, server, workers })
}

fn handle(backend: &dyn LmBackend, mut request: Request) {
    let mut body = Vec::new();
    let (status, payload) = match request.as_reader().read_to_end(&mut body) {
        Err(e) => error_reply(&Error::Io(e)),
        Ok(_) => route(backend, request.method(), request.url(), &body),
    };
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let response = Response::from_data(payload).with_status_code(status).with_header(header);
    let _ = request.respond(response);
}

fn route(backend: &dyn LmBackend, method: &Method, url: &str, body: &[u8]) -> (u16, Vec<u8>) {
    let path = url.split('?').next().unwrap_or(url);
    let result = match (method, path) {
        (Method::Get, protocol::META) => backend.meta().and_then(to_json),
        (Method::Post, protocol::MASK_FILL) => parse::<MaskFillRequest>(body).and_then(|req| {
            let query = MaskQuery { tokens: req.tokens, mask_index: req.mask_index };
            let candidates = backend.mask_fill(&query, req.top_k)?;
            to_json(MaskFillResponse { candidates })
        }),
        (Method::Post, protocol::LOGPROBS) => parse::<TokensRequest>(body)
            .and_then(|req| to_json(LogprobsResponse { logprobs: backend.token_logprobs(&req.tokens)? })),
        (Method::Post, protocol::NEXT_TOKEN) => parse::<NextTokenRequest>(body).and_then(|req| {
            let d = backend.next_token(&req.tokens, req.top_k)?;
            to_json(NextTokenResponse { tokens: d.tokens, logprobs: d.logprobs })
        }),
        (Method::Post, protocol::EMBED) => parse::<TokensRequest>(body)
            .and_then(|req| to_json(EmbedResponse { vectors: backend.embed(&req.tokens)? })),
        _ => {
            let body = ErrorResponse { error: format!("no route for {method} {path}"), max_len: None };
            return (404, serde_json::to_vec(&body).unwrap_or_default());
        }
    };
    match result {
        Ok(bytes) => (200, bytes),
        Err(e) => error_reply(&e),
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::Protocol(format!("bad request body: {e}")))
}

fn to_json<T: Serialize>(value: T) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(&value)?)
}

fn error_reply(err: &Error) -> (u16, Vec<u8>) {
    let (status, max_len) = match err {
        Error::ContextOverflow { max_len, .. } => (422, Some(*max_len)),
        Error::Protocol(_) => (400, None),
        Error::Unsupported(_) => (501, None),
        _ => (500, None),
    };
    let body = ErrorResponse { error: err.to_string(), max_len };
    (status, serde_json::to_vec(&body).unwrap_or_default())
}
