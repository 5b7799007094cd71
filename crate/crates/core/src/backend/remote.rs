//! HTTP client for remote likelihood scoring.
//!
//! Wire contract: POST `{model, prompt, continuation, echo_logprobs: true}`;
//! the endpoint replies `{tokens, token_logprobs, continuation_span}` and
//! the client sums `token_logprobs` over the half-open span after checking
//! that the span tokens reassemble the continuation exactly.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendDescriptor, BackendId, BackendParams, RawScore, ScoringBackend};
use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct ScoreRequestBody<'a> {
    model: &'a str,
    prompt: &'a str,
    continuation: &'a str,
    echo_logprobs: bool,
}

#[derive(Debug, Deserialize)]
struct ScoreResponseBody {
    tokens: Vec<String>,
    token_logprobs: Vec<f64>,
    continuation_span: [usize; 2],
}

pub struct RemoteBackend {
    descriptor: BackendDescriptor,
    endpoint: String,
    credential: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(
        model_id: impl Into<String>,
        params: BackendParams,
        endpoint: impl Into<String>,
        credential: Option<String>,
    ) -> RemoteBackend {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(params.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        RemoteBackend {
            descriptor: BackendDescriptor {
                backend_id: BackendId::RemoteScoring,
                model_id: model_id.into(),
                params,
            },
            endpoint: endpoint.into(),
            credential,
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn send_once(&self, prompt: &str, continuation: &str) -> SendOutcome {
        let body = ScoreRequestBody {
            model: &self.descriptor.model_id,
            prompt,
            continuation,
            echo_logprobs: true,
        };
        let mut request = self.agent.post(&self.endpoint);
        if let Some(credential) = &self.credential {
            request = request.header("authorization", format!("Bearer {credential}"));
        }
        let mut response = match request.send_json(&body) {
            Ok(response) => response,
            Err(e) => return SendOutcome::Retry(format!("transport: {e}")),
        };
        match response.status().as_u16() {
            200 => match response.body_mut().read_json::<ScoreResponseBody>() {
                Ok(body) => SendOutcome::Ok(body),
                Err(e) => SendOutcome::Fatal(Error::ProtocolError {
                    detail: format!("response missing log-probabilities: {e}"),
                }),
            },
            // a 404 means the endpoint has nothing for this request; retrying
            // cannot help
            404 => SendOutcome::Fatal(Error::BackendUnavailable {
                detail: format!("no response recorded at {} for this request", self.endpoint),
            }),
            code if (500..600).contains(&code) => {
                SendOutcome::Retry(format!("server error {code}"))
            }
            code => SendOutcome::Fatal(Error::ProtocolError {
                detail: format!("unexpected status {code}"),
            }),
        }
    }
}

enum SendOutcome {
    Ok(ScoreResponseBody),
    Retry(String),
    Fatal(Error),
}

impl ScoringBackend for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn score_raw(&self, prompt: &str, continuation: &str) -> Result<RawScore> {
        let params = &self.descriptor.params;
        let mut last_detail = String::new();
        for attempt in 0..params.max_retries.max(1) {
            if attempt > 0 {
                // exponential backoff: base, 2×base, 4×base, ...
                let backoff = params.retry_backoff_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            match self.send_once(prompt, continuation) {
                SendOutcome::Ok(body) => return interpret_response(body, continuation),
                SendOutcome::Retry(detail) => last_detail = detail,
                SendOutcome::Fatal(e) => return Err(e),
            }
        }
        Err(Error::BackendUnavailable {
            detail: format!(
                "gave up after {} attempts: {last_detail}",
                params.max_retries.max(1)
            ),
        })
    }
}

/// Validate the span against the continuation text and sum its logprobs.
fn interpret_response(body: ScoreResponseBody, continuation: &str) -> Result<RawScore> {
    if body.tokens.len() != body.token_logprobs.len() {
        return Err(Error::ProtocolError {
            detail: format!(
                "{} tokens but {} token_logprobs",
                body.tokens.len(),
                body.token_logprobs.len()
            ),
        });
    }
    let [start, end] = body.continuation_span;
    if start > end || end > body.tokens.len() {
        return Err(Error::ProtocolError {
            detail: format!(
                "continuation_span [{start}, {end}] out of range for {} tokens",
                body.tokens.len()
            ),
        });
    }
    let span_text: String = body.tokens[start..end].concat();
    if span_text != continuation {
        return Err(Error::ContinuationMisaligned {
            detail: format!(
                "span tokens reassemble to {span_text:?}, expected {continuation:?}"
            ),
        });
    }
    if start == end {
        return Err(Error::ContinuationMisaligned {
            detail: "continuation span is empty".into(),
        });
    }
    Ok(RawScore {
        summed_log_likelihood: body.token_logprobs[start..end].iter().sum(),
        token_count: end - start,
    })
}
