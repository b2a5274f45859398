//! Setup-time inputs: annotator roster, task lists and texts.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use shelflife_core::pooling::Task;
use shelflife_core::trec_io::{DocId, TopicId};

use crate::error::{Result, ServiceError};

/// Bearer tokens per annotator, one `annotator token` pair per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Roster {
    by_token: HashMap<String, String>,
}

impl Roster {
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut by_token = HashMap::new();
        let mut annotators = std::collections::HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [annotator, token] = fields[..] else {
                return Err(ServiceError::Setup(format!(
                    "roster line {}: expected `annotator token`",
                    i + 1
                )));
            };
            if !annotators.insert(annotator.to_string()) {
                return Err(ServiceError::Setup(format!(
                    "roster line {}: duplicate annotator {annotator}",
                    i + 1
                )));
            }
            if by_token.insert(token.to_string(), annotator.to_string()).is_some() {
                return Err(ServiceError::Setup(format!("roster line {}: duplicate token", i + 1)));
            }
        }
        Ok(Self { by_token })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self {
            by_token: pairs.into_iter().map(|(a, t)| (t.to_string(), a.to_string())).collect(),
        }
    }

    pub fn annotator_for(&self, token: &str) -> Option<&str> {
        self.by_token
            .iter()
            .find(|(t, _)| constant_time_eq(t.as_bytes(), token.as_bytes()))
            .map(|(_, a)| a.as_str())
    }

    pub fn contains_annotator(&self, annotator: &str) -> bool {
        self.by_token.values().any(|a| a == annotator)
    }

    /// Annotator ids, sorted.
    pub fn annotators(&self) -> Vec<String> {
        let mut out: Vec<String> = self.by_token.values().cloned().collect();
        out.sort();
        out
    }
}

pub(crate) fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug, Clone)]
pub struct ServiceSetup {
    pub tasks: Vec<Task>,
    pub topics: BTreeMap<TopicId, String>,
    pub corpus: BTreeMap<DocId, String>,
    pub roster: Roster,
    pub admin_token: Option<String>,
    /// Global seed for per-annotator queue shuffles.
    pub seed: u64,
    /// External search link with a `{query}` placeholder.
    pub search_url_template: Option<String>,
}

impl ServiceSetup {
    pub(crate) fn validate(&self) -> Result<()> {
        for t in &self.tasks {
            if !self.roster.contains_annotator(&t.annotator) {
                return Err(ServiceError::Setup(format!(
                    "annotator {} has tasks but no roster entry",
                    t.annotator
                )));
            }
            if !self.topics.contains_key(&t.topic) {
                return Err(ServiceError::Setup(format!("no text for topic {}", t.topic)));
            }
            if !self.corpus.contains_key(&t.doc) {
                return Err(ServiceError::Setup(format!("no text for doc {}", t.doc)));
            }
        }
        if let Some(template) = &self.search_url_template {
            if template.matches("{query}").count() != 1 {
                return Err(ServiceError::Setup(
                    "search URL template needs exactly one {query}".into(),
                ));
            }
        }
        if self.admin_token.as_deref().is_some_and(|t| t.is_empty()) {
            return Err(ServiceError::Setup("admin token is empty".into()));
        }
        Ok(())
    }
}
