//! Parsing and serialization of qrels, runs, topic lists and the annotation log.

mod log;
mod qrels;
mod run;
mod text;
mod types;

pub use log::{
    fold_events, parse_annotation_log, AnnotationEvent, FlagEvent, FoldedLog, JudgmentEvent, NarrativeEvent,
};
pub use qrels::{export_aggregate_qrels, export_qrels, parse_aggregate_qrels, parse_qrels};
pub use run::{export_run, parse_run, Run, RunEntry};
pub use text::{parse_corpus, parse_topics};
pub use types::{AnnotationSet, DocId, FracGrade, Grade, Judgment, Provenance, TopicId};

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::Result;

/// Reads a qrels file, labelling the set with the file stem.
pub fn read_qrels(path: &Path, provenance: Provenance) -> Result<AnnotationSet> {
    let set = parse_qrels(BufReader::new(File::open(path)?))?;
    Ok(set.with_annotator(file_label(path)).with_provenance(provenance))
}

pub fn read_run(path: &Path) -> Result<Run> {
    parse_run(BufReader::new(File::open(path)?))
}

pub(crate) fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
