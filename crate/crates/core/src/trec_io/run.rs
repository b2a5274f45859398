use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use super::types::{DocId, TopicId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc: DocId,
    pub rank: u32,
    pub score: f64,
}

/// A system's ranked output. Per topic, entries are ordered by
/// (score desc, doc asc) with ranks `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    tag: String,
    by_topic: BTreeMap<TopicId, Vec<RunEntry>>,
}

impl Run {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            by_topic: BTreeMap::new(),
        }
    }

    /// Builds a normalized run; a repeated (topic, doc) is a conflict.
    pub fn from_scored(
        tag: impl Into<String>,
        entries: impl IntoIterator<Item = (TopicId, DocId, f64)>,
    ) -> Result<Self> {
        let mut run = Self::new(tag);
        let mut seen = HashSet::new();
        for (topic, doc, score) in entries {
            if !seen.insert((topic.clone(), doc.clone())) {
                return Err(Error::Conflict {
                    line: 0,
                    topic: topic.to_string(),
                    doc: doc.to_string(),
                });
            }
            run.by_topic
                .entry(topic)
                .or_default()
                .push(RunEntry { doc, rank: 0, score });
        }
        run.normalize();
        Ok(run)
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn topic(&self, topic: &str) -> Option<&[RunEntry]> {
        self.by_topic.get(topic).map(Vec::as_slice)
    }

    pub fn topics(&self) -> impl Iterator<Item = &TopicId> {
        self.by_topic.keys()
    }

    pub fn by_topic(&self) -> &BTreeMap<TopicId, Vec<RunEntry>> {
        &self.by_topic
    }

    pub fn len(&self) -> usize {
        self.by_topic.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Re-sorts every topic by (score desc, doc asc) and renumbers ranks.
    pub fn normalize(&mut self) {
        for entries in self.by_topic.values_mut() {
            entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc.cmp(&b.doc)));
            renumber(entries);
        }
    }

    /// Keeps entries for which `keep` holds, preserving order and
    /// renumbering ranks. Topics left empty are kept as empty lists.
    pub fn retain(&mut self, mut keep: impl FnMut(&TopicId, &RunEntry) -> bool) {
        for (topic, entries) in self.by_topic.iter_mut() {
            entries.retain(|e| keep(topic, e));
            renumber(entries);
        }
    }

    /// Inserts a topic list as-is. Callers must supply strictly decreasing
    /// scores for the order to survive normalization.
    pub(crate) fn insert_topic(&mut self, topic: TopicId, entries: Vec<RunEntry>) {
        self.by_topic.insert(topic, entries);
    }
}

fn renumber(entries: &mut [RunEntry]) {
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i as u32 + 1;
    }
}

/// Parses a six-column TREC run. The rank column is validated as an integer
/// but ordering comes from the scores.
pub fn parse_run<R: BufRead>(reader: R) -> Result<Run> {
    let mut tag: Option<String> = None;
    let mut seen: HashSet<(TopicId, DocId)> = HashSet::new();
    let mut run = Run::new("");
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        if fields.len() != 6 {
            return Err(parse_err(format!("expected 6 fields, found {}", fields.len())));
        }
        let topic = TopicId::new(fields[0]).map_err(|e| parse_err(e.to_string()))?;
        let doc = DocId::new(fields[2]).map_err(|e| parse_err(e.to_string()))?;
        fields[3]
            .parse::<i64>()
            .map_err(|_| parse_err(format!("rank {:?} is not an integer", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| parse_err(format!("score {:?} is not a finite number", fields[4])))?;
        match &tag {
            None => tag = Some(fields[5].to_string()),
            Some(t) if t != fields[5] => {
                return Err(Error::MixedTags {
                    line: line_no,
                    expected: t.clone(),
                    found: fields[5].to_string(),
                })
            }
            Some(_) => {}
        }
        if !seen.insert((topic.clone(), doc.clone())) {
            return Err(Error::Conflict {
                line: line_no,
                topic: topic.to_string(),
                doc: doc.to_string(),
            });
        }
        run.by_topic
            .entry(topic)
            .or_default()
            .push(RunEntry { doc, rank: 0, score });
    }
    let tag = tag.ok_or(Error::EmptyRun)?;
    run.tag = tag;
    run.normalize();
    Ok(run)
}

/// Serializes in six-column format with shortest round-trip scores.
pub fn export_run(run: &Run) -> String {
    let mut out = String::new();
    for (topic, entries) in &run.by_topic {
        for e in entries {
            writeln!(out, "{topic} Q0 {} {} {} {}", e.doc, e.rank, e.score, run.tag).expect("write to String");
        }
    }
    out
}
