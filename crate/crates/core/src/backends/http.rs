//! Blocking JSON-over-HTTP client for a remote inference service.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::TokenSequence;
use crate::pipeline::MaskedSequence;

use super::{
    BackendError, GenderClassifier, GenderVerdict, Infiller, LanguageModel, LmScore, TokenScore, TokenScorer,
    MASK_TOKEN,
};

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            free: Mutex::new(n),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    endpoint: String,
    agent: ureq::Agent,
    permits: Permits,
    retries: u32,
}

#[derive(Deserialize)]
struct ScoreReply {
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct InfillReply {
    fills: Vec<Vec<String>>,
}

#[derive(Deserialize)]
struct ClassifyReply {
    p_female: f64,
}

#[derive(Deserialize)]
struct LmReply {
    logprob: f64,
    n_tokens: usize,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, max_in_flight: usize, retries: u32) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        HttpBackend {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_config(config),
            permits: Permits::new(max_in_flight.max(1)),
            retries,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn url(&self, route: &str) -> String {
        format!("{}{route}", self.endpoint)
    }

    fn protocol(&self, route: &str, message: impl Into<String>) -> BackendError {
        BackendError::Protocol {
            endpoint: self.url(route),
            message: message.into(),
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, route: &str, body: &B) -> Result<R, BackendError> {
        let mut attempt = 0;
        loop {
            match self.post_once(route, body) {
                Err(BackendError::Transport { .. }) if attempt < self.retries => {
                    attempt += 1;
                    log::warn!("retrying {} after transport error", self.url(route));
                }
                other => return other,
            }
        }
    }

    fn post_once<B: Serialize, R: DeserializeOwned>(&self, route: &str, body: &B) -> Result<R, BackendError> {
        let url = self.url(route);
        let _permit = self.permits.acquire();
        let transport = |cause: String| BackendError::Transport {
            endpoint: url.clone(),
            cause,
        };
        let response = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| transport(e.to_string()))?;
        if status != 200 {
            let snippet: String = text.chars().take(200).collect();
            return Err(self.protocol(route, format!("HTTP {status}: {snippet}")));
        }
        serde_json::from_str(&text).map_err(|e| self.protocol(route, format!("malformed reply: {e}")))
    }
}

impl TokenScorer for HttpBackend {
    fn score_tokens(&self, text: &TokenSequence) -> Result<Vec<TokenScore>, BackendError> {
        if text.is_empty() {
            return Err(BackendError::InvalidInput(
                "cannot score an empty token sequence".into(),
            ));
        }
        let tokens: Vec<&str> = text.surfaces().collect();
        let reply: ScoreReply = self.post("/score", &json!({ "tokens": tokens }))?;
        if reply.scores.len() != tokens.len() {
            return Err(self.protocol(
                "/score",
                format!("expected {} scores, got {}", tokens.len(), reply.scores.len()),
            ));
        }
        if reply.scores.iter().any(|s| !s.is_finite()) {
            return Err(self.protocol("/score", "non-finite score"));
        }
        Ok(reply
            .scores
            .into_iter()
            .enumerate()
            .map(|(word_index, score)| TokenScore { word_index, score })
            .collect())
    }
}

impl Infiller for HttpBackend {
    fn infill(&self, masked: &MaskedSequence) -> Result<Vec<Vec<String>>, BackendError> {
        let slots = masked.slots().len();
        if slots == 0 {
            return Err(BackendError::InvalidInput("infill request without mask slots".into()));
        }
        let reply: InfillReply = self.post("/infill", &json!({ "text": masked.render(), "mask_token": MASK_TOKEN }))?;
        if reply.fills.len() != slots {
            return Err(self.protocol("/infill", format!("expected {slots} fills, got {}", reply.fills.len())));
        }
        let fills: Vec<Vec<String>> = reply
            .fills
            .into_iter()
            .map(|fill| {
                fill.iter()
                    .flat_map(|w| w.split_whitespace())
                    .map(str::to_string)
                    .collect()
            })
            .collect();
        if fills.iter().any(Vec::is_empty) {
            return Err(self.protocol("/infill", "empty fill"));
        }
        Ok(fills)
    }
}

impl GenderClassifier for HttpBackend {
    fn classify_gender(&self, text: &str) -> Result<GenderVerdict, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidInput("cannot classify empty text".into()));
        }
        let reply: ClassifyReply = self.post("/classify", &json!({ "text": text }))?;
        if !(0.0..=1.0).contains(&reply.p_female) {
            return Err(self.protocol("/classify", format!("p_female {} outside [0, 1]", reply.p_female)));
        }
        Ok(GenderVerdict {
            p_female: reply.p_female,
        })
    }
}

impl LanguageModel for HttpBackend {
    fn lm_logprob(&self, text: &str) -> Result<LmScore, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidInput("cannot score empty text".into()));
        }
        let reply: LmReply = self.post("/lm", &json!({ "text": text }))?;
        if !reply.logprob.is_finite() || reply.logprob > 0.0 {
            return Err(self.protocol("/lm", format!("invalid log-probability {}", reply.logprob)));
        }
        if reply.n_tokens == 0 {
            return Err(self.protocol("/lm", "n_tokens must be positive"));
        }
        Ok(LmScore {
            logprob: reply.logprob,
            n_tokens: reply.n_tokens,
        })
    }
}
