use std::fmt::Write;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::response::Html;
use bibrecon_core::record::{CandidateRecord, GlobalId, IdentifierKind, MetadataField};
use bibrecon_core::source::SourceError;
use serde::Deserialize;
use tracing::warn;

use crate::error::ApiError;
use crate::manifest::{display_name, PREVIEW_HEIGHT, PREVIEW_WIDTH};
use crate::state::ServiceState;

#[derive(Debug, Deserialize)]
pub(crate) struct PreviewParams {
    id: String,
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn is_web_url(url: &str) -> bool {
    url.starts_with("https://") || url.starts_with("http://")
}

fn frame(body: &str) -> String {
    format!(
        "<div class=\"bibrecon-preview\" style=\"width:{PREVIEW_WIDTH}px;height:{PREVIEW_HEIGHT}px;\
         overflow:hidden;box-sizing:border-box;padding:6px;font:13px/1.35 sans-serif\">{body}</div>"
    )
}

/// Self-contained HTML for one record. The only external resource is the
/// thumbnail, when the record has one.
pub fn render_preview(record: &CandidateRecord) -> String {
    let mut body = String::new();
    if let Some(thumb) = record
        .metadata
        .get(&MetadataField::ThumbnailUrl)
        .and_then(|v| v.first())
        .filter(|u| is_web_url(u))
    {
        let _ = write!(
            body,
            "<img src=\"{}\" alt=\"\" style=\"float:right;max-width:96px;max-height:144px;margin-left:8px\">",
            escape(thumb)
        );
    }
    let _ = write!(body, "<h3 style=\"margin:0 0 4px\">{}</h3>", escape(&record.title));
    if !record.contributors.is_empty() {
        let _ = write!(body, "<p style=\"margin:0 0 6px\">{}</p>", escape(&record.contributors.join("; ")));
    }
    let identifiers: Vec<_> = IdentifierKind::ALL
        .into_iter()
        .filter_map(|k| record.identifiers.get(&k).filter(|v| !v.is_empty()).map(|v| (k, v)))
        .collect();
    if !identifiers.is_empty() {
        body.push_str("<dl style=\"margin:0 0 6px\">");
        for (kind, values) in identifiers {
            let _ = write!(
                body,
                "<dt style=\"font-weight:bold\">{}</dt><dd style=\"margin:0 0 2px 12px\">{}</dd>",
                escape(kind.label()),
                escape(&values.join(", "))
            );
        }
        body.push_str("</dl>");
    }
    let _ = write!(
        body,
        "<a href=\"{}\" target=\"_blank\" rel=\"noopener\">View in {}</a>",
        escape(&record.provenance_url),
        escape(display_name(record.source))
    );
    frame(&body)
}

fn unavailable(id: &str) -> String {
    frame(&format!("<p>record unavailable: {}</p>", escape(id)))
}

pub(crate) async fn preview(
    State(state): State<Arc<ServiceState>>,
    Path(source): Path<String>,
    query: Result<Query<PreviewParams>, QueryRejection>,
) -> Result<Html<String>, ApiError> {
    let handle = state.mount(&source)?;
    let Query(params) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let id: GlobalId = params
        .id
        .parse()
        .map_err(|e| ApiError::BadRequest(format!("{e}")))?;
    if id.source != handle.id() {
        return Err(ApiError::BadRequest(format!("`{}` is not a {} id", params.id, handle.label())));
    }
    match state.record(&id).await {
        Ok(record) => Ok(Html(render_preview(&record))),
        Err(e) => {
            if !matches!(e, SourceError::NotFound(_)) {
                warn!(id = %params.id, error = %e, "preview fetch failed");
            }
            Ok(Html(unavailable(&params.id)))
        }
    }
}
