//! Service configuration: a TOML file, then environment overrides, then
//! command-line flags (applied by the caller).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};
use url::Url;

use crate::hathitrust::{self, ColumnMap, TitleIndex};
use crate::matching::MatchConfig;
use crate::record::{SourceId, DEFAULT_LIMIT};
use crate::source::{
    FixtureSource, GoogleBooksSource, HathiTrustSource, HttpClient, LocSource, OclcSource, RateLimit,
    ReqwestTransport, ResilientClient, RetryPolicy, SourceHandle, SourceRegistry, ViafSource,
    WikidataSource, OCLC_KEY_ENV,
};

pub const ENV_PREFIX: &str = "BIBRECON_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSettings {
    pub enabled: bool,
    /// Overrides the adapter's built-in endpoint.
    pub endpoint: Option<Url>,
    pub limit: usize,
    /// Defaults to 5 requests/second with burst 5 for network sources; the
    /// fixture source is unthrottled unless set.
    pub rate: Option<RateLimit>,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
    /// API key (Google Books, OCLC).
    pub key: Option<String>,
    /// Corpus file for the fixture source; the bundled corpus when unset.
    pub corpus: Option<PathBuf>,
}

impl Default for SourceSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            endpoint: None,
            limit: DEFAULT_LIMIT,
            rate: None,
            retry: RetryPolicy::default(),
            timeout_secs: 30,
            key: None,
            corpus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HathiTrustSettings {
    /// Tab-separated dump, read at startup when no artifact is given.
    pub dump: Option<PathBuf>,
    /// Prebuilt index from `ingest-hathitrust`.
    pub artifact: Option<PathBuf>,
    pub column_map: ColumnMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub session_dir: PathBuf,
    /// Allowed CORS origin; `*` allows any.
    pub cors_origin: String,
    /// Directory of static review UI assets served under `/ui`.
    pub ui_dir: Option<PathBuf>,
    /// When false only the single best match is returned, without a cluster.
    pub clustering: bool,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub sources: BTreeMap<SourceId, SourceSettings>,
    pub hathitrust: HathiTrustSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".to_owned(),
            port: 8080,
            session_dir: PathBuf::from("sessions"),
            cors_origin: "*".to_owned(),
            ui_dir: None,
            clustering: true,
            matching: MatchConfig::default(),
            sources: BTreeMap::from([(SourceId::Fixture, SourceSettings::default())]),
            hathitrust: HathiTrustSettings::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment variable {var}: {message}")]
    Env { var: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Match(#[from] crate::matching::ConfigError),
    #[error(transparent)]
    Corpus(#[from] crate::source::CorpusError),
    #[error(transparent)]
    Ingest(#[from] hathitrust::IngestError),
    #[error(transparent)]
    Index(#[from] hathitrust::IndexError),
    #[error("source {source_id}: {message}")]
    Source { source_id: SourceId, message: String },
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies `BIBRECON_*` variables and `OCLC_API_KEY` through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(var: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.trim().parse().map_err(|e: T::Err| ConfigError::Env {
                var: var.to_owned(),
                message: e.to_string(),
            })
        }
        let var = |name: &str| {
            let full = format!("{ENV_PREFIX}{name}");
            lookup(&full).map(|v| (full, v))
        };

        if let Some((_, v)) = var("HOST") {
            self.host = v;
        }
        if let Some((name, v)) = var("PORT") {
            self.port = parse(&name, &v)?;
        }
        if let Some((name, v)) = var("THRESHOLD") {
            self.matching.threshold = parse(&name, &v)?;
        }
        if let Some((_, v)) = var("SESSION_DIR") {
            self.session_dir = PathBuf::from(v);
        }
        if let Some((_, v)) = var("CORS_ORIGIN") {
            self.cors_origin = v;
        }
        if let Some((_, v)) = var("UI_DIR") {
            self.ui_dir = Some(PathBuf::from(v));
        }
        if let Some((name, v)) = var("SOURCES") {
            let wanted = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse::<SourceId>(&name, s))
                .collect::<Result<Vec<_>, _>>()?;
            self.enable_only(&wanted);
        }
        if let Some(key) = lookup(OCLC_KEY_ENV).filter(|k| !k.trim().is_empty()) {
            self.sources.entry(SourceId::Oclc).or_insert_with(|| SourceSettings {
                enabled: false,
                ..Default::default()
            });
            if let Some(oclc) = self.sources.get_mut(&SourceId::Oclc) {
                oclc.key = Some(key);
            }
        }
        Ok(())
    }

    /// Enables exactly `wanted`, adding default settings for new sources.
    pub fn enable_only(&mut self, wanted: &[SourceId]) {
        for settings in self.sources.values_mut() {
            settings.enabled = false;
        }
        for id in wanted {
            self.sources.entry(*id).or_default().enabled = true;
        }
    }

    pub fn enabled_sources(&self) -> impl Iterator<Item = (SourceId, &SourceSettings)> {
        self.sources.iter().filter(|(_, s)| s.enabled).map(|(id, s)| (*id, s))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.matching.validate()?;
        if self.enabled_sources().next().is_none() {
            return Err(ConfigError::Invalid("no sources are enabled".into()));
        }
        for (id, s) in self.enabled_sources() {
            let bad = |message: &str| ConfigError::Source {
                source_id: id,
                message: message.to_owned(),
            };
            if s.limit == 0 {
                return Err(bad("limit must be at least 1"));
            }
            if s.rate.is_some_and(|r| !(r.per_second > 0.0) || r.burst == 0) {
                return Err(bad("rate.per_second must be positive and rate.burst at least 1"));
            }
            if s.timeout_secs == 0 {
                return Err(bad("timeout_secs must be at least 1"));
            }
        }
        if self.sources.get(&SourceId::HathiTrust).is_some_and(|s| s.enabled)
            && self.hathitrust.dump.is_none()
            && self.hathitrust.artifact.is_none()
        {
            return Err(ConfigError::Source {
                source_id: SourceId::HathiTrust,
                message: "set hathitrust.dump or hathitrust.artifact".into(),
            });
        }
        Ok(())
    }

    /// Loads the HathiTrust index from the artifact if configured, else
    /// from the dump.
    pub fn hathitrust_index(&self) -> Result<TitleIndex, ConfigError> {
        let records = match (&self.hathitrust.artifact, &self.hathitrust.dump) {
            (Some(artifact), _) => hathitrust::load_artifact(artifact)?,
            (None, Some(dump)) => {
                let report = hathitrust::load_dump(dump, &self.hathitrust.column_map)?;
                if report.skipped > 0 {
                    warn!(skipped = report.skipped, "skipped malformed dump lines");
                }
                report.records
            }
            (None, None) => {
                return Err(ConfigError::Source {
                    source_id: SourceId::HathiTrust,
                    message: "no dump or artifact configured".into(),
                })
            }
        };
        Ok(TitleIndex::build(records)?)
    }

    /// Instantiates every enabled source. OCLC without a key is skipped
    /// with a warning instead of failing.
    pub fn build_registry(&self) -> Result<SourceRegistry, ConfigError> {
        self.validate()?;
        let mut registry = SourceRegistry::new();
        for (id, settings) in self.enabled_sources() {
            let Some(adapter) = self.build_source(id, settings)? else {
                continue;
            };
            registry.insert(SourceHandle::new(adapter).with_max_limit(settings.limit));
        }
        if registry.is_empty() {
            return Err(ConfigError::Invalid("no enabled source could be started".into()));
        }
        info!(sources = ?registry.ids().map(SourceId::as_str).collect::<Vec<_>>(), "sources ready");
        Ok(registry)
    }

    fn build_source(
        &self,
        id: SourceId,
        settings: &SourceSettings,
    ) -> Result<Option<Arc<dyn crate::source::Source>>, ConfigError> {
        let resilience = || match (id, settings.rate) {
            (_, Some(rate)) => ResilientClient::new(rate, settings.retry),
            (SourceId::Fixture, None) => ResilientClient::unthrottled(settings.retry),
            (_, None) => ResilientClient::new(RateLimit::default(), settings.retry),
        };
        let http = || -> Result<HttpClient, ConfigError> {
            let transport = ReqwestTransport::new(Duration::from_secs(settings.timeout_secs)).map_err(|e| {
                ConfigError::Source {
                    source_id: id,
                    message: e.to_string(),
                }
            })?;
            Ok(HttpClient::new(Arc::new(transport), resilience()))
        };
        let endpoint = |default: &str| -> Url {
            settings
                .endpoint
                .clone()
                .unwrap_or_else(|| Url::parse(default).expect("built-in endpoint parses"))
        };

        let adapter: Arc<dyn crate::source::Source> = match id {
            SourceId::Fixture => {
                let source = match &settings.corpus {
                    Some(path) => FixtureSource::from_path(path)?,
                    None => FixtureSource::bundled(),
                };
                Arc::new(source.with_resilience(resilience()))
            }
            SourceId::Loc => Arc::new(LocSource::new(http()?, endpoint(LocSource::DEFAULT_ENDPOINT))),
            SourceId::GoogleBooks => Arc::new(GoogleBooksSource::new(
                http()?,
                endpoint(GoogleBooksSource::DEFAULT_ENDPOINT),
                settings.key.clone(),
            )),
            SourceId::Viaf => Arc::new(ViafSource::new(http()?, endpoint(ViafSource::DEFAULT_ENDPOINT))),
            SourceId::Wikidata => Arc::new(WikidataSource::new(
                http()?,
                endpoint(WikidataSource::DEFAULT_ENDPOINT),
            )),
            SourceId::Oclc => {
                let source = OclcSource::new(http()?, endpoint(OclcSource::DEFAULT_ENDPOINT), settings.key.clone());
                if !source.has_key() {
                    warn!("oclc is enabled but {OCLC_KEY_ENV} is not set; skipping it");
                    return Ok(None);
                }
                Arc::new(source)
            }
            SourceId::HathiTrust => {
                let index = self.hathitrust_index()?;
                info!(records = index.len(), "hathitrust index loaded");
                Arc::new(HathiTrustSource::new(Arc::new(index), self.matching.clone()))
            }
        };
        Ok(Some(adapter))
    }
}
