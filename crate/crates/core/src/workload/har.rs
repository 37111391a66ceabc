use chrono::{DateTime, FixedOffset};
use serde::Deserialize;
use url::Url;

use crate::error::WorkloadError;

/// One object download from a HAR capture.
#[derive(Debug, Clone, PartialEq)]
pub struct HarEntry {
    pub url: String,
    pub host: String,
    pub scheme: String,
    pub body_size_bytes: u64,
    pub started_at: DateTime<FixedOffset>,
    /// Total elapsed time of the request in milliseconds.
    pub duration_ms: f64,
}

impl HarEntry {
    pub fn is_tls(&self) -> bool {
        self.scheme == "https"
    }
}

#[derive(Deserialize)]
struct RawHar {
    log: Option<RawLog>,
}

#[derive(Deserialize)]
struct RawLog {
    entries: Option<Vec<serde_json::Value>>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawEntry {
    started_date_time: String,
    time: f64,
    request: RawRequest,
    #[serde(default)]
    response: RawResponse,
}

#[derive(Deserialize)]
struct RawRequest {
    url: String,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase")]
struct RawResponse {
    body_size: Option<f64>,
    content: Option<RawContent>,
}

#[derive(Deserialize)]
struct RawContent {
    size: Option<f64>,
}

fn non_negative(v: Option<f64>) -> Option<u64> {
    v.filter(|s| *s >= 0.0).map(|s| s as u64)
}

/// Parses a HAR 1.2 document into one entry per `log.entries` element.
///
/// The body size comes from `response.content.size`, falling back to
/// `response.bodySize`, and is 0 when neither is usable.
pub fn parse_har(document: &[u8]) -> Result<Vec<HarEntry>, WorkloadError> {
    let malformed = |index: Option<usize>, reason: String| WorkloadError::MalformedHar { index, reason };
    let raw: RawHar = serde_json::from_slice(document).map_err(|e| malformed(None, e.to_string()))?;
    let entries = raw
        .log
        .and_then(|l| l.entries)
        .ok_or_else(|| malformed(None, "missing log.entries".into()))?;

    entries
        .into_iter()
        .enumerate()
        .map(|(i, value)| {
            let e: RawEntry = serde_json::from_value(value).map_err(|err| malformed(Some(i), err.to_string()))?;
            let url = Url::parse(&e.request.url).map_err(|err| malformed(Some(i), format!("bad url: {err}")))?;
            let host = url
                .host_str()
                .filter(|h| !h.is_empty())
                .ok_or_else(|| malformed(Some(i), "url has no host".into()))?
                .to_string();
            let started_at = DateTime::parse_from_rfc3339(&e.started_date_time)
                .map_err(|err| malformed(Some(i), format!("bad startedDateTime: {err}")))?;
            if !(e.time.is_finite() && e.time >= 0.0) {
                return Err(malformed(Some(i), "negative time".into()));
            }
            let size = non_negative(e.response.content.and_then(|c| c.size))
                .or_else(|| non_negative(e.response.body_size))
                .unwrap_or(0);
            Ok(HarEntry {
                url: e.request.url,
                host,
                scheme: url.scheme().to_string(),
                body_size_bytes: size,
                started_at,
                duration_ms: e.time,
            })
        })
        .collect()
}
