//! Recorded-fixture server: replays stored scoring responses for hermetic
//! tests.
//!
//! Responses live in a directory of request-hash-named JSON files. A
//! request whose hash has no file gets a 404, which the client reports as
//! `BackendUnavailable`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Filename stem for a recorded response: hash of the request identity.
pub fn fixture_key(model: &str, prompt: &str, continuation: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    hasher.update([0x1f]);
    hasher.update(prompt.as_bytes());
    hasher.update([0x1f]);
    hasher.update(continuation.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Deserialize)]
struct IncomingRequest {
    model: String,
    prompt: String,
    continuation: String,
    #[allow(dead_code)]
    echo_logprobs: Option<bool>,
}

pub struct FixtureServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    /// Bind an ephemeral localhost port and serve responses from `dir`.
    pub fn start(dir: impl Into<PathBuf>) -> Result<FixtureServer> {
        let dir = dir.into();
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(|e| {
            Error::BackendUnavailable {
                detail: format!("fixture server failed to bind: {e}"),
            }
        })?;
        let addr = match server.server_addr() {
            tiny_http::ListenAddr::IP(addr) => addr,
            other => {
                return Err(Error::BackendUnavailable {
                    detail: format!("unexpected listen address {other:?}"),
                })
            }
        };
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&shutdown);
        let handle = std::thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                match server.recv_timeout(Duration::from_millis(25)) {
                    Ok(Some(request)) => handle_request(request, &dir),
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
        });
        Ok(FixtureServer {
            addr,
            shutdown,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

fn handle_request(mut request: tiny_http::Request, dir: &Path) {
    let mut body = String::new();
    if std::io::Read::read_to_string(request.as_reader(), &mut body).is_err() {
        let _ = request.respond(tiny_http::Response::empty(400));
        return;
    }
    let parsed: IncomingRequest = match serde_json::from_str(&body) {
        Ok(parsed) => parsed,
        Err(_) => {
            let _ = request.respond(tiny_http::Response::empty(400));
            return;
        }
    };
    let key = fixture_key(&parsed.model, &parsed.prompt, &parsed.continuation);
    let path = dir.join(format!("{key}.json"));
    match std::fs::read(&path) {
        Ok(contents) => {
            let response = tiny_http::Response::from_data(contents).with_header(
                tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                    .expect("static header"),
            );
            let _ = request.respond(response);
        }
        Err(_) => {
            let _ = request.respond(tiny_http::Response::empty(404));
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

/// Write a recorded response file for (model, prompt, continuation) into a
/// fixture directory. Used to author hermetic test fixtures.
pub fn write_fixture(
    dir: &Path,
    model: &str,
    prompt: &str,
    continuation: &str,
    response_json: &serde_json::Value,
) -> Result<PathBuf> {
    let key = fixture_key(model, prompt, continuation);
    let path = dir.join(format!("{key}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(response_json).expect("serializes"))
        .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
