use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, CorpusRetriever};

/// Retriever backed by an Elasticsearch-compatible `_search` endpoint.
///
/// Issues a `match` query on `field` and returns the `_source[field]` of each
/// hit in score order.
#[derive(Debug, Clone)]
pub struct SearchServiceRetriever {
    endpoint: String,
    index: String,
    field: String,
    client: reqwest::blocking::Client,
}

impl SearchServiceRetriever {
    pub fn new(endpoint: &str, index: &str, field: &str) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| BackendError::new(e.to_string()))?;
        Ok(SearchServiceRetriever {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            index: index.to_string(),
            field: field.to_string(),
            client,
        })
    }

    fn url(&self) -> String {
        format!("{}/{}/_search", self.endpoint, self.index)
    }
}

impl CorpusRetriever for SearchServiceRetriever {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<String>, BackendError> {
        let body = json!({
            "size": k,
            "query": { "match": { &self.field: query } },
        });
        let response: Value = self
            .client
            .post(self.url())
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| BackendError::new(format!("search request failed: {e}")))?;
        let hits = response["hits"]["hits"]
            .as_array()
            .ok_or_else(|| BackendError::new("search response has no hits array"))?;
        Ok(hits
            .iter()
            .filter_map(|h| h["_source"][&self.field].as_str().map(str::to_string))
            .take(k)
            .collect())
    }
}
