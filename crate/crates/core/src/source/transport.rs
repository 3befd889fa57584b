//! HTTP transport used by the live adapters.

use std::time::Duration;

use async_trait::async_trait;
use url::Url;

use super::SourceError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: Url,
    pub headers: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(url: Url) -> Self {
        Self {
            url,
            headers: Vec::new(),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<Duration>,
}

impl HttpResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
            retry_after: None,
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            body: String::new(),
            retry_after: None,
        }
    }

    /// Maps the status code onto the adapter error classes.
    pub fn into_body(self) -> Result<String, SourceError> {
        match self.status {
            200..=299 => Ok(self.body),
            401 | 403 => Err(SourceError::Auth(format!("HTTP {}", self.status))),
            404 => Err(SourceError::NotFound(format!("HTTP 404: {}", truncate(&self.body)))),
            429 => Err(SourceError::RateLimited {
                retry_after: self.retry_after,
            }),
            500..=599 => Err(SourceError::Network(format!("HTTP {}", self.status))),
            status => Err(SourceError::Http { status }),
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(120).collect()
}

#[async_trait]
pub trait Transport: Send + Sync {
    async fn get(&self, request: &HttpRequest) -> Result<HttpResponse, SourceError>;
}

#[derive(Debug, Clone)]
pub struct ReqwestTransport {
    client: reqwest::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, SourceError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("bibrecon/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| SourceError::Network(e.to_string()))?;
        Ok(Self { client })
    }
}

#[async_trait]
impl Transport for ReqwestTransport {
    async fn get(&self, request: &HttpRequest) -> Result<HttpResponse, SourceError> {
        let mut builder = self.client.get(request.url.clone());
        for (name, value) in &request.headers {
            builder = builder.header(name, value);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| SourceError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = response
            .text()
            .await
            .map_err(|e| SourceError::Network(e.to_string()))?;
        Ok(HttpResponse {
            status,
            body,
            retry_after,
        })
    }
}

/// Serves canned responses; the first route whose fragments all occur in
/// the request URL wins, anything else gets a 404. Used with recorded
/// payloads so that adapters can be exercised without the network.
#[derive(Debug, Clone, Default)]
pub struct StaticTransport {
    routes: Vec<(Vec<String>, HttpResponse)>,
}

impl StaticTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route(mut self, fragments: &[&str], response: HttpResponse) -> Self {
        self.routes
            .push((fragments.iter().map(|f| (*f).to_owned()).collect(), response));
        self
    }
}

#[async_trait]
impl Transport for StaticTransport {
    async fn get(&self, request: &HttpRequest) -> Result<HttpResponse, SourceError> {
        let url = request.url.as_str();
        Ok(self
            .routes
            .iter()
            .find(|(fragments, _)| fragments.iter().all(|f| url.contains(f.as_str())))
            .map(|(_, response)| response.clone())
            .unwrap_or_else(|| HttpResponse::status(404)))
    }
}
