//! Client for OpenAI-compatible `/chat/completions` and `/embeddings`.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use ureq::Agent;

use super::{AgentRequest, AgentResponse, Provider, ProviderConfig, ProviderError, TaskKind};
use crate::corpus::hashing::normalize;

pub struct HttpProvider {
    config: ProviderConfig,
    api_key: String,
    agent: Agent,
    next_slot: Mutex<Option<Instant>>,
    /// Embedding dimension, fixed by the first successful response.
    dim: Mutex<Option<usize>>,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig, api_key: String) -> Result<Self, ProviderError> {
        if config.endpoint.trim().is_empty() {
            return Err(ProviderError::Config("http provider requires an endpoint".into()));
        }
        if api_key.trim().is_empty() {
            return Err(ProviderError::Config("http provider requires a credential".into()));
        }
        if !(config.timeout_s > 0.0) {
            return Err(ProviderError::Config("timeout_s must be positive".into()));
        }
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, api_key, agent, next_slot: Mutex::new(None), dim: Mutex::new(None) })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    /// Blocks until the rate limiter grants a request slot.
    fn acquire_slot(&self) {
        if self.config.rate_limit_rps <= 0.0 {
            return;
        }
        let interval = Duration::from_secs_f64(1.0 / self.config.rate_limit_rps);
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + interval);
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = self.url(path);
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(100 << attempt.min(5)));
            }
            self.acquire_slot();
            let result = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(body);
            match result {
                Ok(mut resp) if resp.status().is_success() => {
                    return resp.body_mut().read_json::<Value>().map_err(|e| ProviderError::Transport {
                        attempts: attempt + 1,
                        message: format!("invalid JSON body from {url}: {e}"),
                    });
                }
                Ok(resp) => last_error = format!("{url} returned HTTP {}", resp.status()),
                Err(e) => last_error = format!("{url}: {e}"),
            }
            log::warn!("attempt {}/{attempts} failed: {last_error}", attempt + 1);
        }
        Err(ProviderError::Transport { attempts, message: last_error })
    }
}

fn instructions(task: TaskKind) -> &'static str {
    match task {
        TaskKind::InferComplexity => {
            "Assess how complex the decision goal is given the corpus digest. Reply with a fenced JSON block \
             {\"k_max\": <max children per criterion, 2-15>, \"d_max\": <max hierarchy depth, 1-6>}."
        }
        TaskKind::Summarize => {
            "The texts form one semantic cluster under the parent criterion. Name the decision criterion they \
             describe. Reply with a fenced JSON block {\"label\": <at most 8 words>, \"description\": <at most 2 sentences>}."
        }
        TaskKind::Verify => {
            "Rate how relevant the child criterion is as a sub-criterion of the parent criterion. Reply with a \
             fenced JSON block {\"score\": <number in [0,1]>}."
        }
        TaskKind::ElicitMatrix => {
            "Compare every pair of sibling criteria for the stated context on the Saaty 1-9 scale (values below 1 \
             mean the second is more important). Reply with a fenced JSON block {\"entries\": [{\"i\": <id>, \"j\": <id>, \
             \"value\": <number>}, ...]} covering each pair with i listed before j."
        }
        TaskKind::LeaderConstraints => {
            "As the leader, state any hard strategic priorities among the sibling criteria as ratios: criterion i \
             must weigh at least beta times criterion j. Reply with a fenced JSON block {\"constraints\": [{\"i\": <id>, \
             \"j\": <id>, \"beta\": <number >= 1>}, ...]}; use an empty list when there are none."
        }
        TaskKind::Score => {
            "Evaluate the alternative against the criterion using the profile and evidence. Explain briefly, then \
             end with a final line exactly of the form `SCORE: x/10`."
        }
        TaskKind::ReportProse => "Write a short decision summary paragraph from the structured facts. Do not invent numbers.",
    }
}

impl Provider for HttpProvider {
    fn complete(&self, request: &AgentRequest) -> Result<AgentResponse, ProviderError> {
        request.validate()?;
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "seed": request.seed,
            "messages": [
                {"role": "system", "content": format!("{}\n\n{}", request.persona, instructions(request.task))},
                {"role": "user", "content": serde_json::to_string_pretty(&request.payload).unwrap_or_default()},
            ],
        });
        let reply = self.post("chat/completions", &body)?;
        let content = reply["choices"][0]["message"]["content"].as_str().ok_or_else(|| ProviderError::Grammar {
            task: request.task,
            raw_text: reply.to_string(),
        })?;
        Ok(AgentResponse::from_raw(request.task, content.to_string()))
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidRequest {
                task: TaskKind::Summarize,
                message: "embed_texts requires at least one text".into(),
            });
        }
        let reply = self.post("embeddings", &json!({ "model": self.config.embedding_model, "input": texts }))?;
        let mut data: Vec<(usize, Vec<f64>)> = reply["data"]
            .as_array()
            .into_iter()
            .flatten()
            .enumerate()
            .map(|(pos, item)| {
                let index = item["index"].as_u64().map_or(pos, |i| i as usize);
                let values = item["embedding"].as_array().into_iter().flatten().filter_map(Value::as_f64).collect();
                (index, values)
            })
            .collect();
        data.sort_by_key(|(i, _)| *i);
        if data.len() != texts.len() {
            return Err(ProviderError::Transport {
                attempts: 1,
                message: format!("expected {} embeddings, got {}", texts.len(), data.len()),
            });
        }

        let mut dim = self.dim.lock().expect("dimension lock poisoned");
        let mut out = Vec::with_capacity(data.len());
        for (index, mut values) in data {
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected || expected == 0 {
                return Err(ProviderError::DimensionMismatch { index, expected, found: values.len() });
            }
            normalize(&mut values);
            out.push(values);
        }
        Ok(out)
    }
}
