//! JSONL-backed candidates and scores.

use std::collections::HashMap;
use std::io::BufRead;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Attempted, Generator, ProviderError, Scorer, SourceItem};
use crate::engine::Candidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredCandidate {
    pub text: String,
    pub score: f64,
}

/// One line of the offline record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRecord {
    pub source_id: String,
    #[serde(default)]
    pub source_text: String,
    pub candidates: IndexMap<String, StoredCandidate>,
}

impl OfflineRecord {
    pub fn source_item(&self) -> SourceItem {
        SourceItem::new(self.source_id.clone(), self.source_text.clone())
    }

    /// First required producer that is absent from this record.
    pub fn missing_producer<'a>(&self, required: &'a [String]) -> Option<&'a str> {
        required
            .iter()
            .find(|p| !self.candidates.contains_key(p.as_str()))
            .map(String::as_str)
    }
}

#[derive(Debug, Error)]
pub enum RecordFileError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate source_id {source_id:?}")]
    DuplicateSource { line: usize, source_id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses one record line; `line` is 1-based and only used for messages.
pub fn parse_record_line(text: &str, line: usize) -> Result<OfflineRecord, RecordFileError> {
    let record: OfflineRecord = serde_json::from_str(text).map_err(|e| RecordFileError::Malformed {
        line,
        message: e.to_string(),
    })?;
    if record.source_id.is_empty() {
        return Err(RecordFileError::Malformed {
            line,
            message: "source_id is empty".into(),
        });
    }
    for (producer, c) in &record.candidates {
        if !c.score.is_finite() {
            return Err(RecordFileError::Malformed {
                line,
                message: format!("score for {producer:?} is not finite"),
            });
        }
    }
    Ok(record)
}

/// In-memory record set, in file order.
#[derive(Debug, Clone, Default)]
pub struct OfflineStore {
    records: Vec<OfflineRecord>,
    index: HashMap<String, usize>,
}

impl OfflineStore {
    pub fn from_records(records: Vec<OfflineRecord>) -> Result<Self, RecordFileError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.source_id.clone(), i).is_some() {
                return Err(RecordFileError::DuplicateSource {
                    line: i + 1,
                    source_id: r.source_id.clone(),
                });
            }
        }
        Ok(Self { records, index })
    }

    /// Reads JSONL; blank lines are skipped but still counted.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, RecordFileError> {
        let mut records = Vec::new();
        let mut index = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = parse_record_line(&line, i + 1)?;
            if index.insert(record.source_id.clone(), records.len()).is_some() {
                return Err(RecordFileError::DuplicateSource {
                    line: i + 1,
                    source_id: record.source_id,
                });
            }
            records.push(record);
        }
        Ok(Self { records, index })
    }

    pub fn records(&self) -> &[OfflineRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, source_id: &str) -> Option<&OfflineRecord> {
        self.index.get(source_id).map(|&i| &self.records[i])
    }

    pub fn lookup(&self, source_id: &str, producer_id: &str) -> Result<&StoredCandidate, ProviderError> {
        self.get(source_id)
            .and_then(|r| r.candidates.get(producer_id))
            .ok_or_else(|| ProviderError::RecordNotFound {
                source_id: source_id.to_string(),
                producer_id: producer_id.to_string(),
            })
    }
}

#[derive(Debug, Clone)]
pub struct OfflineGenerator {
    producer_id: String,
    store: Arc<OfflineStore>,
}

impl OfflineGenerator {
    pub fn new(producer_id: String, store: Arc<OfflineStore>) -> Self {
        Self { producer_id, store }
    }
}

impl Generator for OfflineGenerator {
    fn producer_id(&self) -> &str {
        &self.producer_id
    }

    fn generate(&self, source: &SourceItem) -> Result<Attempted<Candidate>, ProviderError> {
        let stored = self.store.lookup(&source.source_id, &self.producer_id)?;
        Ok(Attempted::once(
            Candidate::new(self.producer_id.clone(), stored.text.clone()).with_score(stored.score),
        ))
    }
}

/// Returns the stored score for (source, producer).
#[derive(Debug, Clone)]
pub struct OfflineScorer {
    store: Arc<OfflineStore>,
}

impl OfflineScorer {
    pub fn new(store: Arc<OfflineStore>) -> Self {
        Self { store }
    }
}

impl Scorer for OfflineScorer {
    fn score(&self, source: &SourceItem, candidate: &Candidate) -> Result<Attempted<f64>, ProviderError> {
        if candidate.text.is_empty() {
            return Err(ProviderError::EmptyCandidate);
        }
        let stored = self.store.lookup(&source.source_id, &candidate.producer_id)?;
        if !stored.score.is_finite() {
            return Err(ProviderError::NonFiniteScore(stored.score));
        }
        Ok(Attempted::once(stored.score))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"{"source_id":"s1","source_text":"Hello","candidates":{"baseline_a":{"text":"Hallo","score":0.81},"baseline_b":{"text":"Hallo!","score":0.8716}}}

{"source_id":"s2","source_text":"Bye","candidates":{"baseline_a":{"text":"Tschüss","score":0.7}}}
"#;

    fn store() -> Arc<OfflineStore> {
        Arc::new(OfflineStore::from_jsonl(FIXTURE.as_bytes()).unwrap())
    }

    #[test]
    fn lookup_identity() {
        let g = OfflineGenerator::new("baseline_a".into(), store());
        let c = g.generate(&SourceItem::new("s1", "Hello")).unwrap().value;
        assert_eq!(c, Candidate::new("baseline_a", "Hallo").with_score(0.81));
        // pure: a second call is identical
        assert_eq!(g.generate(&SourceItem::new("s1", "Hello")).unwrap().value, c);
    }

    #[test]
    fn offline_scorer_returns_stored_value() {
        let s = OfflineScorer::new(store());
        let c = Candidate::new("baseline_b", "Hallo!");
        assert_eq!(s.score(&SourceItem::new("s1", ""), &c).unwrap().value, 0.8716);
    }

    #[test]
    fn missing_record_is_reported() {
        let g = OfflineGenerator::new("baseline_b".into(), store());
        let err = g.generate(&SourceItem::new("s2", "")).unwrap_err();
        assert!(matches!(err, ProviderError::RecordNotFound { ref source_id, ref producer_id }
            if source_id == "s2" && producer_id == "baseline_b"));
        assert!(g.generate(&SourceItem::new("nope", "")).is_err());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"source_id\":\"a\",\"candidates\":{}}\n{not json}\n";
        match OfflineStore::from_jsonl(text.as_bytes()) {
            Err(RecordFileError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_source_is_rejected() {
        let text = "{\"source_id\":\"a\",\"candidates\":{}}\n{\"source_id\":\"a\",\"candidates\":{}}\n";
        assert!(matches!(
            OfflineStore::from_jsonl(text.as_bytes()),
            Err(RecordFileError::DuplicateSource { line: 2, .. })
        ));
    }

    #[test]
    fn missing_producer_names_first_gap() {
        let st = store();
        let required = vec!["baseline_a".to_string(), "baseline_b".to_string()];
        assert_eq!(st.get("s1").unwrap().missing_producer(&required), None);
        assert_eq!(st.get("s2").unwrap().missing_producer(&required), Some("baseline_b"));
    }
}
