//! Token-bucket throttling and retry with exponential backoff.

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tokio::time::Instant;
use tracing::debug;

use super::SourceError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateLimit {
    pub per_second: f64,
    pub burst: u32,
}

impl Default for RateLimit {
    fn default() -> Self {
        Self {
            per_second: 5.0,
            burst: 5,
        }
    }
}

#[derive(Debug)]
struct BucketState {
    tokens: f64,
    refilled_at: Instant,
}

/// Token bucket. Callers that find it empty reserve a future token and
/// sleep until it is due, so waiters are served in arrival order.
#[derive(Debug)]
pub struct TokenBucket {
    limit: RateLimit,
    state: Mutex<BucketState>,
}

impl TokenBucket {
    pub fn new(limit: RateLimit) -> Self {
        assert!(limit.per_second > 0.0 && limit.burst > 0, "rate limit must be positive");
        Self {
            limit,
            state: Mutex::new(BucketState {
                tokens: f64::from(limit.burst),
                refilled_at: Instant::now(),
            }),
        }
    }

    /// Time the caller must wait before its request may go out.
    async fn reserve(&self) -> Duration {
        let mut state = self.state.lock().await;
        let now = Instant::now();
        let elapsed = now.duration_since(state.refilled_at).as_secs_f64();
        state.tokens = (state.tokens + elapsed * self.limit.per_second).min(f64::from(self.limit.burst));
        state.refilled_at = now;
        state.tokens -= 1.0;
        if state.tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-state.tokens / self.limit.per_second)
        }
    }

    pub async fn acquire(&self) {
        let wait = self.reserve().await;
        if !wait.is_zero() {
            tokio::time::sleep(wait).await;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    pub factor: u32,
    /// Full jitter: each delay is drawn uniformly from `[0, base * factor^n]`.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            factor: 2,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Upper bound of the backoff before retry number `retry` (0-based).
    pub fn ceiling(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(self.factor.saturating_pow(retry))
    }

    fn delay(&self, retry: u32, error: &SourceError) -> Duration {
        let ceiling = self.ceiling(retry);
        let backoff = if self.jitter {
            ceiling.mul_f64(rand::rng().random::<f64>())
        } else {
            ceiling
        };
        match error {
            SourceError::RateLimited {
                retry_after: Some(after),
            } => backoff.max(*after),
            _ => backoff,
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// Runs source operations through a shared token bucket and retry policy.
#[derive(Debug, Clone)]
pub struct ResilientClient {
    bucket: Option<Arc<TokenBucket>>,
    policy: RetryPolicy,
}

impl Default for ResilientClient {
    fn default() -> Self {
        Self::new(RateLimit::default(), RetryPolicy::default())
    }
}

impl ResilientClient {
    pub fn new(limit: RateLimit, policy: RetryPolicy) -> Self {
        Self {
            bucket: Some(Arc::new(TokenBucket::new(limit))),
            policy,
        }
    }

    /// Retries without throttling, for sources with no upstream to protect.
    pub fn unthrottled(policy: RetryPolicy) -> Self {
        Self { bucket: None, policy }
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    /// Every attempt, including retries, takes a token first. Non-retryable
    /// errors are returned as-is; retryable ones are wrapped in
    /// [`SourceError::ExhaustedRetries`] once the retry budget is spent.
    pub async fn run<T, F, Fut>(&self, mut op: F) -> Result<T, SourceError>
    where
        F: FnMut() -> Fut,
        Fut: Future<Output = Result<T, SourceError>>,
    {
        let mut retry = 0;
        loop {
            if let Some(bucket) = &self.bucket {
                bucket.acquire().await;
            }
            let error = match op().await {
                Ok(value) => return Ok(value),
                Err(error) if !error.is_retryable() => return Err(error),
                Err(error) => error,
            };
            if retry >= self.policy.max_retries {
                return Err(SourceError::ExhaustedRetries {
                    attempts: retry + 1,
                    last: Box::new(error),
                });
            }
            let delay = self.policy.delay(retry, &error);
            debug!(retry, ?delay, %error, "retrying source request");
            tokio::time::sleep(delay).await;
            retry += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;

    #[tokio::test(start_paused = true)]
    async fn sixth_request_waits_for_a_token() {
        let bucket = TokenBucket::new(RateLimit::default());
        let start = Instant::now();
        for _ in 0..5 {
            bucket.acquire().await;
        }
        assert_eq!(start.elapsed(), Duration::ZERO);
        bucket.acquire().await;
        assert!(start.elapsed() >= Duration::from_millis(200), "{:?}", start.elapsed());
    }

    #[tokio::test(start_paused = true)]
    async fn refills_over_time() {
        let bucket = TokenBucket::new(RateLimit { per_second: 10.0, burst: 1 });
        bucket.acquire().await;
        tokio::time::sleep(Duration::from_millis(100)).await;
        let start = Instant::now();
        bucket.acquire().await;
        assert_eq!(start.elapsed(), Duration::ZERO);
    }

    #[tokio::test(start_paused = true)]
    async fn retries_rate_limited_then_succeeds() {
        let client = ResilientClient::default();
        let calls = AtomicU32::new(0);
        let out = client
            .run(|| async {
                match calls.fetch_add(1, Ordering::SeqCst) {
                    0 | 1 => Err(SourceError::RateLimited { retry_after: None }),
                    _ => Ok("ok"),
                }
            })
            .await;
        assert_eq!(out, Ok("ok"));
        assert_eq!(calls.load(Ordering::SeqCst), 3, "two retries");
    }

    #[tokio::test(start_paused = true)]
    async fn auth_failure_is_not_retried() {
        let client = ResilientClient::default();
        let calls = AtomicU32::new(0);
        let out: Result<(), _> = client
            .run(|| async {
                calls.fetch_add(1, Ordering::SeqCst);
                Err(SourceError::Auth("bad key".into()))
            })
            .await;
        assert_eq!(out, Err(SourceError::Auth("bad key".into())));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[tokio::test(start_paused = true)]
    async fn exhausts_after_three_retries() {
        let client = ResilientClient::default();
        let calls = AtomicU32::new(0);
        let out: Result<(), _> = client
            .run(|| async {
                calls.fetch_add(1, Ordering::SeqCst);
                Err(SourceError::Network("reset".into()))
            })
            .await;
        assert_eq!(calls.load(Ordering::SeqCst), 4);
        match out {
            Err(SourceError::ExhaustedRetries { attempts, last }) => {
                assert_eq!(attempts, 4);
                assert_eq!(*last, SourceError::Network("reset".into()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[tokio::test(start_paused = true)]
    async fn backoff_without_jitter_doubles() {
        let policy = RetryPolicy { jitter: false, ..Default::default() };
        let client = ResilientClient::new(RateLimit { per_second: 1000.0, burst: 10 }, policy);
        let start = Instant::now();
        let _: Result<(), _> = client
            .run(|| async { Err(SourceError::Network("down".into())) })
            .await;
        // 500 + 1000 + 2000 ms of backoff
        let elapsed = start.elapsed();
        assert!(elapsed >= Duration::from_millis(3500), "{elapsed:?}");
        assert!(elapsed < Duration::from_millis(3600), "{elapsed:?}");
    }

    #[test]
    fn jittered_delay_stays_under_ceiling() {
        let policy = RetryPolicy::default();
        let err = SourceError::Network("x".into());
        for retry in 0..3 {
            for _ in 0..100 {
                assert!(policy.delay(retry, &err) <= policy.ceiling(retry));
            }
        }
        assert_eq!(policy.ceiling(2), Duration::from_secs(2));
    }

    #[test]
    fn retry_after_is_honoured() {
        let policy = RetryPolicy::default();
        let err = SourceError::RateLimited {
            retry_after: Some(Duration::from_secs(7)),
        };
        assert!(policy.delay(0, &err) >= Duration::from_secs(7));
    }
}
