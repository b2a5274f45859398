//! Line-delimited JSON annotation log and its last-write-wins fold.

use std::collections::BTreeMap;
use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::types::{AnnotationSet, DocId, Grade, Provenance, TopicId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentEvent {
    pub annotator: String,
    pub topic: TopicId,
    pub doc: DocId,
    pub grade: Grade,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrativeEvent {
    pub annotator: String,
    pub topic: TopicId,
    pub narrative_text: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagEvent {
    pub annotator: String,
    pub topic: TopicId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<DocId>,
    pub note: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event_type", rename_all = "snake_case")]
pub enum AnnotationEvent {
    Judgment(JudgmentEvent),
    Narrative(NarrativeEvent),
    Flag(FlagEvent),
}

impl AnnotationEvent {
    pub fn annotator(&self) -> &str {
        match self {
            AnnotationEvent::Judgment(e) => &e.annotator,
            AnnotationEvent::Narrative(e) => &e.annotator,
            AnnotationEvent::Flag(e) => &e.annotator,
        }
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        match self {
            AnnotationEvent::Judgment(e) => e.timestamp,
            AnnotationEvent::Narrative(e) => e.timestamp,
            AnnotationEvent::Flag(e) => e.timestamp,
        }
    }

    /// Checks field invariants not expressible in the serde schema.
    pub fn validate(&self) -> Result<()> {
        let blank = |s: &str| s.trim().is_empty();
        if blank(self.annotator()) {
            return Err(Error::Format("empty annotator".into()));
        }
        match self {
            AnnotationEvent::Narrative(e) if blank(&e.narrative_text) => {
                Err(Error::Format("empty narrative text".into()))
            }
            AnnotationEvent::Flag(e) if blank(&e.note) => Err(Error::Format("empty flag note".into())),
            _ => Ok(()),
        }
    }

    /// One log record without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

/// Parses a log in file order. Any malformed record, including a truncated
/// last line, halts replay with its line number.
pub fn parse_annotation_log<R: BufRead>(reader: R) -> Result<Vec<AnnotationEvent>> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: AnnotationEvent = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        event.validate().map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Result of folding a log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FoldedLog {
    /// One secondary set per annotator that submitted at least one judgment.
    pub sets: BTreeMap<String, AnnotationSet>,
    /// Every narrative version, in log order.
    pub narratives: Vec<NarrativeEvent>,
    pub flags: Vec<FlagEvent>,
}

impl FoldedLog {
    /// Latest narrative for (annotator, topic) by timestamp; later log
    /// position wins ties.
    pub fn latest_narrative(&self, annotator: &str, topic: &str) -> Option<&NarrativeEvent> {
        self.narratives
            .iter()
            .enumerate()
            .filter(|(_, n)| n.annotator == annotator && n.topic.as_str() == topic)
            .max_by_key(|(i, n)| (n.timestamp, *i))
            .map(|(_, n)| n)
    }
}

/// Folds events: for each (annotator, topic, doc) the judgment with the
/// latest timestamp wins, and among equal timestamps the later record wins.
pub fn fold_events<'a>(events: impl IntoIterator<Item = &'a AnnotationEvent>) -> FoldedLog {
    let mut latest: BTreeMap<(String, TopicId, DocId), (DateTime<Utc>, Grade)> = BTreeMap::new();
    let mut folded = FoldedLog::default();
    for event in events {
        match event {
            AnnotationEvent::Judgment(j) => {
                let key = (j.annotator.clone(), j.topic.clone(), j.doc.clone());
                match latest.get(&key) {
                    Some((ts, _)) if *ts > j.timestamp => {}
                    _ => {
                        latest.insert(key, (j.timestamp, j.grade));
                    }
                }
            }
            AnnotationEvent::Narrative(n) => folded.narratives.push(n.clone()),
            AnnotationEvent::Flag(f) => folded.flags.push(f.clone()),
        }
    }
    for ((annotator, topic, doc), (_, grade)) in latest {
        folded
            .sets
            .entry(annotator.clone())
            .or_insert_with(|| AnnotationSet::new(annotator, Provenance::Secondary))
            .set(topic, doc, grade.into());
    }
    folded
}
