use std::sync::Arc;

use serde::de::DeserializeOwned;

use super::transport::{HttpRequest, Transport};
use super::{ResilientClient, SourceError};

/// Transport plus the per-source throttle/retry wrapper.
#[derive(Clone)]
pub struct HttpClient {
    transport: Arc<dyn Transport>,
    resilience: ResilientClient,
}

impl HttpClient {
    pub fn new(transport: Arc<dyn Transport>, resilience: ResilientClient) -> Self {
        Self {
            transport,
            resilience,
        }
    }

    pub async fn get_text(&self, request: &HttpRequest) -> Result<String, SourceError> {
        self.resilience
            .run(|| async { self.transport.get(request).await?.into_body() })
            .await
    }

    pub async fn get_json<T: DeserializeOwned>(&self, request: &HttpRequest) -> Result<T, SourceError> {
        let body = self.get_text(request).await?;
        serde_json::from_str(&body).map_err(|e| SourceError::malformed(e.to_string(), &body))
    }
}

/// `serde_json::Value` accessors shared by the mappers.
pub(crate) mod json {
    use serde_json::Value;

    pub fn str_at<'a>(value: &'a Value, pointer: &str) -> Option<&'a str> {
        value.pointer(pointer).and_then(Value::as_str).filter(|s| !s.trim().is_empty())
    }

    /// Strings (or numbers) found at `pointer`, whether it holds a scalar or an array.
    pub fn strings_at(value: &Value, pointer: &str) -> Vec<String> {
        match value.pointer(pointer) {
            Some(Value::Array(items)) => items.iter().filter_map(scalar).collect(),
            Some(other) => scalar(other).into_iter().collect(),
            None => Vec::new(),
        }
    }

    pub fn scalar(value: &Value) -> Option<String> {
        match value {
            Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_owned()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        }
    }

    /// Some upstream JSON renders single-element lists as bare objects.
    pub fn one_or_many(value: Option<&Value>) -> Vec<&Value> {
        match value {
            Some(Value::Array(items)) => items.iter().collect(),
            Some(Value::Null) | None => Vec::new(),
            Some(other) => vec![other],
        }
    }
}
