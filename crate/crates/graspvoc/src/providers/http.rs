//! Generic HTTP provider.
//!
//! Segmentation speaks a minimal endpoint: POST the canonical request JSON,
//! receive `{"masks": [{"id", "rle"}]}`. The vision and language calls use
//! the de-facto chat-completions shape: POST `{"model", "messages"}`,
//! read `choices[0].message.content`. Neither contract is vendor-specific.
//! All calls go through [`super::call_with_retry`]; a conditioning answer
//! with an out-of-vocabulary label additionally triggers one corrective
//! re-prompt before counting as a failed attempt.

use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::json;

use super::{
    call_with_retry, parse, prompts, AssignmentRequest, CandidateLabelRequest,
    ConditioningRequest, ConditioningResponse, ProviderConfig, ProviderError, SegmentRequest,
    Segmenter, TaskConditioner, VisionLabeler,
};
use crate::viewrender::{decode_masks, Mask2D, MaskFile};

pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    segment_endpoint: String,
    model: String,
    token: Option<String>,
    retries: u32,
    backoff: Duration,
}

impl HttpProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self, ProviderError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| ProviderError::Config("http provider requires endpoint".into()))?;
        let segment_endpoint = config
            .segment_endpoint
            .clone()
            .unwrap_or_else(|| format!("{}/segment", endpoint.trim_end_matches('/')));
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint,
            segment_endpoint,
            model: config.model.clone(),
            token: std::env::var(&config.auth_env).ok(),
            retries: config.retries,
            backoff: Duration::from_millis(config.backoff_ms),
        })
    }

    fn post(&self, url: &str, body: &serde_json::Value) -> Result<String, ProviderError> {
        let mut req = self.client.post(url).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::Unavailable(format!("{url}: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Unavailable(format!("{url}: reading body: {e}")))?;
        if !status.is_success() {
            return Err(ProviderError::Unavailable(format!(
                "{url}: HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            )));
        }
        Ok(text)
    }

    /// One chat-completions round trip returning the assistant text.
    fn chat(&self, prompt: &str, image_pgm: Option<&[u8]>) -> Result<String, ProviderError> {
        use base64::Engine as _;
        let content = match image_pgm {
            None => json!(prompt),
            Some(bytes) => json!([
                {"type": "text", "text": prompt},
                {"type": "image_url", "image_url": {
                    "url": format!(
                        "data:image/x-portable-graymap;base64,{}",
                        base64::engine::general_purpose::STANDARD.encode(bytes)
                    )
                }}
            ]),
        };
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
        });
        let text = self.post(&self.endpoint, &body)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ProviderError::MalformedResponse(format!("chat response: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| {
                ProviderError::MalformedResponse(
                    "chat response lacks choices[0].message.content".into(),
                )
            })
    }
}

impl Segmenter for HttpProvider {
    fn segment(&self, req: &SegmentRequest) -> Result<Vec<Mask2D>, ProviderError> {
        let body = req.canonical_value();
        call_with_retry(self.retries, self.backoff, |_| {
            let text = self.post(&self.segment_endpoint, &body)?;
            let file: MaskFile = serde_json::from_str(&text)
                .map_err(|e| ProviderError::MalformedResponse(format!("mask response: {e}")))?;
            decode_masks(&file, (req.width, req.height))
                .map_err(|e| ProviderError::ValidationFailed(e.to_string()))
        })
    }
}

impl VisionLabeler for HttpProvider {
    fn candidate_labels(&self, req: &CandidateLabelRequest) -> Result<Vec<String>, ProviderError> {
        let prompt = prompts::build_candidate_prompt(&req.object_label)?;
        call_with_retry(self.retries, self.backoff, |_| {
            let content = self.chat(&prompt, Some(&req.image_pgm))?;
            parse::parse_candidate_response(&content)
        })
    }

    fn assign_labels(
        &self,
        req: &AssignmentRequest,
    ) -> Result<BTreeMap<u32, String>, ProviderError> {
        let ids: Vec<u32> = req.masks.iter().map(|m| m.id).collect();
        let prompt = prompts::build_assignment_prompt(&ids, &req.candidate_labels)?;
        call_with_retry(self.retries, self.backoff, |_| {
            let content = self.chat(&prompt, Some(&req.image_pgm))?;
            parse::parse_assignment_response(&content, &ids, &req.candidate_labels)
        })
    }
}

impl TaskConditioner for HttpProvider {
    fn condition(&self, req: &ConditioningRequest) -> Result<ConditioningResponse, ProviderError> {
        let prompt = prompts::build_conditioning_prompt(&req.task, &req.labels)?;
        call_with_retry(self.retries, self.backoff, |_| {
            let content = self.chat(&prompt, None)?;
            match parse::parse_conditioning_response(&content, &req.labels) {
                Err(ProviderError::UnknownLabel(bad)) => {
                    // one corrective re-prompt naming the violation
                    let amended = format!(
                        "{prompt}\nYour previous answer used the label {bad:?}, which is \
                         not in the subpart list. Answer again using only the listed \
                         labels.\n"
                    );
                    let content = self.chat(&amended, None)?;
                    parse::parse_conditioning_response(&content, &req.labels)
                }
                other => other,
            }
        })
    }
}
