use bibrecon_core::extend::{ExtendMode, DEFAULT_DELIMITER};
use bibrecon_core::record::SourceId;
use bibrecon_core::source::SourceHandle;
use serde::Serialize;

pub const PREVIEW_WIDTH: u32 = 430;
pub const PREVIEW_HEIGHT: u32 = 300;

/// Service description returned from `GET /api/<source>/`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub versions: Vec<String>,
    pub name: String,
    pub identifier_space: String,
    pub schema_space: String,
    pub default_types: Vec<TypeRef>,
    pub preview: PreviewSpec,
    pub extend: ExtendSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypeRef {
    pub id: String,
    pub name: String,
}

impl TypeRef {
    pub fn work() -> Self {
        Self {
            id: "work".into(),
            name: "Work".into(),
        }
    }

    pub fn manifestation() -> Self {
        Self {
            id: "manifestation".into(),
            name: "Manifestation".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreviewSpec {
    pub url: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtendSpec {
    pub propose_properties: ProposeSpec,
    pub property_settings: Vec<PropertySetting>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposeSpec {
    pub service_url: String,
    pub service_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertySetting {
    pub name: String,
    pub label: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub default: String,
    pub help_text: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Choice {
    pub value: String,
    pub name: String,
}

pub fn display_name(source: SourceId) -> &'static str {
    match source {
        SourceId::Loc => "Library of Congress",
        SourceId::GoogleBooks => "Google Books",
        SourceId::Viaf => "VIAF",
        SourceId::Oclc => "OCLC WorldCat",
        SourceId::Wikidata => "Wikidata",
        SourceId::HathiTrust => "HathiTrust",
        SourceId::Fixture => "Fixture corpus",
    }
}

impl Manifest {
    /// `base` is the absolute URL of the service root without a trailing
    /// slash, e.g. `http://localhost:8080/api/loc`.
    pub fn new(handle: &SourceHandle, base: &str) -> Self {
        let source = handle.id();
        let settings = vec![
            PropertySetting {
                name: "mode".into(),
                label: "Multiple values".into(),
                kind: "select".into(),
                default: ExtendMode::Join.to_string(),
                help_text: "Join values into one cell or explode them into rows".into(),
                choices: vec![
                    Choice {
                        value: ExtendMode::Join.to_string(),
                        name: "Join".into(),
                    },
                    Choice {
                        value: ExtendMode::Explode.to_string(),
                        name: "Explode".into(),
                    },
                ],
            },
            PropertySetting {
                name: "delimiter".into(),
                label: "Delimiter".into(),
                kind: "text".into(),
                default: DEFAULT_DELIMITER.into(),
                help_text: "Separator used in join mode".into(),
                choices: Vec::new(),
            },
        ];
        Self {
            versions: vec!["0.2".into()],
            name: format!("bibrecon: {}", display_name(source)),
            identifier_space: format!("urn:bibrecon:{source}:"),
            schema_space: "urn:bibrecon:schema:".into(),
            default_types: vec![TypeRef::work(), TypeRef::manifestation()],
            preview: PreviewSpec {
                url: format!("{base}/preview?id={{{{id}}}}"),
                width: PREVIEW_WIDTH,
                height: PREVIEW_HEIGHT,
            },
            extend: ExtendSpec {
                propose_properties: ProposeSpec {
                    service_url: base.to_owned(),
                    service_path: "/extend/propose".into(),
                },
                property_settings: settings,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use bibrecon_core::source::FixtureSource;

    use super::*;

    #[test]
    fn preview_template_keeps_the_placeholder() {
        let handle = SourceHandle::new(Arc::new(FixtureSource::bundled()));
        let manifest = Manifest::new(&handle, "http://h/api/fixture");
        assert_eq!(manifest.preview.url, "http://h/api/fixture/preview?id={{id}}");
        assert_eq!(manifest.versions, ["0.2"]);
        let json = serde_json::to_value(&manifest).unwrap();
        assert!(json["identifierSpace"].is_string());
        assert_eq!(json["defaultTypes"][1]["id"], "manifestation");
    }
}
