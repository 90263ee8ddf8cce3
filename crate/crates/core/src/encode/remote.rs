//! HTTP client for an external embedding service.
//!
//! Wire protocol: `POST {base}/embed` with
//! `{"inputs": [{"kind", "image_uri"?, "crop"?, "text"?}]}`, answered by
//! `{"dim", "vectors": [[f32...]]}` with one vector per input, in order.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EncodeKind, EncodeRequest, Encoder, RawRows};
use crate::error::{Error, Result};
use crate::layout::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireInput {
    pub kind: EncodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl From<&EncodeRequest> for WireInput {
    fn from(req: &EncodeRequest) -> Self {
        Self {
            kind: req.kind,
            image_uri: req.image_ref.clone(),
            crop: req.crop,
            text: req.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequestBody {
    pub inputs: Vec<WireInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponseBody {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

pub struct RemoteEncoder {
    endpoint: String,
    dim: usize,
    batch_size: usize,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEncoder")
            .field("endpoint", &self.endpoint)
            .field("dim", &self.dim)
            .field("batch_size", &self.batch_size)
            .finish()
    }
}

impl RemoteEncoder {
    /// `base_url` is the service root; requests go to `{base_url}/embed`.
    pub fn new(base_url: &str, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            endpoint: format!("{}/embed", base_url.trim_end_matches('/')),
            dim,
            batch_size: 32,
            agent,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    fn post_batch(&self, batch: &[EncodeRequest]) -> Result<Vec<Vec<f32>>> {
        let body = EmbedRequestBody {
            inputs: batch.iter().map(WireInput::from).collect(),
        };
        let mut response =
            self.agent
                .post(&self.endpoint)
                .send_json(&body)
                .map_err(|e| match e {
                    ureq::Error::StatusCode(code) => {
                        Error::AdapterFailure(format!("{} returned HTTP {code}", self.endpoint))
                    }
                    other => Error::AdapterFailure(format!("{}: {other}", self.endpoint)),
                })?;
        let parsed: EmbedResponseBody = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::AdapterFailure(format!("bad response body: {e}")))?;
        if parsed.dim != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: parsed.dim,
            });
        }
        if parsed.vectors.len() != batch.len() {
            return Err(Error::AdapterFailure(format!(
                "service returned {} vectors for {} inputs",
                parsed.vectors.len(),
                batch.len()
            )));
        }
        Ok(parsed.vectors)
    }
}

impl Encoder for RemoteEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, requests: &[EncodeRequest]) -> Result<Vec<RawRows>> {
        let mut out = Vec::with_capacity(requests.len());
        for batch in requests.chunks(self.batch_size) {
            out.extend(self.post_batch(batch)?.into_iter().map(|v| vec![v]));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_input_omits_absent_fields() {
        let req = EncodeRequest::region("img://p", 0, BoundingBox::new(1.0, 2.0, 3.0, 4.0));
        assert_eq!(
            serde_json::to_string(&WireInput::from(&req)).unwrap(),
            r#"{"kind":"region","image_uri":"img://p","crop":[1.0,2.0,3.0,4.0]}"#
        );
        let req = EncodeRequest::query("hi").with_query_id("q");
        assert_eq!(
            serde_json::to_string(&WireInput::from(&req)).unwrap(),
            r#"{"kind":"query","text":"hi"}"#
        );
    }

    #[test]
    fn endpoint_joins_path() {
        assert_eq!(
            RemoteEncoder::new("http://h:1/", 4).endpoint,
            "http://h:1/embed"
        );
    }
}
