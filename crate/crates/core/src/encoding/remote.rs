use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use serde::Deserialize;
use serde_json::json;

use super::{EncodeError, Encoder};
use crate::service::{JsonService, ServiceConfig, ServiceError};

#[derive(Debug, Clone)]
pub struct RemoteEncoderConfig {
    pub service: ServiceConfig,
    /// Texts per request.
    pub batch_size: usize,
    /// Requests in flight at once.
    pub max_in_flight: usize,
    /// Expected dimension; learned from the first reply when `None`.
    pub dimension: Option<usize>,
}

impl RemoteEncoderConfig {
    pub fn new(service: ServiceConfig) -> Self {
        Self {
            service,
            batch_size: 64,
            max_in_flight: 4,
            dimension: None,
        }
    }

    /// `HELP_EMBED_URL`, `HELP_EMBED_MODEL`, `HELP_EMBED_KEY`.
    pub fn from_env() -> Result<Self, ServiceError> {
        ServiceConfig::from_env("HELP_EMBED").map(Self::new)
    }
}

#[derive(Deserialize)]
struct EmbeddingReply {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

/// Client for an embeddings web service speaking the common
/// `{"model", "input": [...]}` -> `{"data": [{"index", "embedding"}]}` shape.
#[derive(Debug)]
pub struct RemoteEncoder {
    service: JsonService,
    batch_size: usize,
    max_in_flight: usize,
    dimension: OnceLock<usize>,
}

impl RemoteEncoder {
    pub fn new(config: RemoteEncoderConfig) -> Result<Self, EncodeError> {
        let service = JsonService::new(config.service).map_err(failure)?;
        let dimension = OnceLock::new();
        if let Some(d) = config.dimension {
            dimension.set(d).expect("fresh cell");
        }
        Ok(Self {
            service,
            batch_size: config.batch_size.max(1),
            max_in_flight: config.max_in_flight.max(1),
            dimension,
        })
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncodeError> {
        let body = json!({ "model": self.service.config().model, "input": texts });
        let reply = self.service.post(&body).map_err(failure)?;
        let mut reply: EmbeddingReply = serde_json::from_value(reply)
            .map_err(|e| EncodeError::Failure(format!("malformed embedding reply: {e}")))?;
        reply.data.sort_by_key(|d| d.index);
        if reply.data.len() != texts.len()
            || reply.data.iter().enumerate().any(|(i, d)| d.index != i)
        {
            return Err(EncodeError::Failure(format!(
                "embedding reply indices do not cover 0..{}",
                texts.len()
            )));
        }
        let vectors: Vec<Vec<f32>> = reply.data.into_iter().map(|d| d.embedding).collect();
        for v in &vectors {
            let expected = *self.dimension.get_or_init(|| v.len());
            if v.len() != expected {
                return Err(EncodeError::DimensionMismatch {
                    expected,
                    got: v.len(),
                });
            }
        }
        Ok(vectors)
    }
}

fn failure(e: ServiceError) -> EncodeError {
    EncodeError::Failure(e.to_string())
}

impl Encoder for RemoteEncoder {
    fn id(&self) -> String {
        format!("remote-{}", self.service.config().model)
    }

    fn dimension(&self) -> Option<usize> {
        self.dimension.get().copied()
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncodeError> {
        let batches: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        let results: Vec<Mutex<Option<Vec<Vec<f32>>>>> =
            batches.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let first_error: Mutex<Option<EncodeError>> = Mutex::new(None);

        std::thread::scope(|scope| {
            for _ in 0..self.max_in_flight.min(batches.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= batches.len() || first_error.lock().unwrap().is_some() {
                        break;
                    }
                    match self.embed_batch(batches[i]) {
                        Ok(v) => *results[i].lock().unwrap() = Some(v),
                        Err(e) => {
                            first_error.lock().unwrap().get_or_insert(e);
                            break;
                        }
                    }
                });
            }
        });

        if let Some(e) = first_error.into_inner().unwrap() {
            return Err(e);
        }
        Ok(results
            .into_iter()
            .flat_map(|slot| slot.into_inner().unwrap().expect("all batches completed"))
            .collect())
    }
}
