use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use shelflife_core::pooling::Task;
use shelflife_core::trec_io::{
    export_qrels, fold_events, parse_annotation_log, AnnotationEvent, DocId, FlagEvent, FoldedLog, Grade,
    JudgmentEvent, NarrativeEvent, TopicId,
};

use crate::error::{Result, ServiceError};
use crate::setup::{constant_time_eq, ServiceSetup};
use crate::store::LogStore;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GradeLabel {
    pub grade: u8,
    pub label: &'static str,
    pub guideline: &'static str,
}

/// TREC Deep Learning passage grades, highest first.
pub const GRADE_LABELS: [GradeLabel; 4] = [
    GradeLabel {
        grade: 3,
        label: "perfectly relevant",
        guideline: "The passage is dedicated to the query and contains the exact answer.",
    },
    GradeLabel {
        grade: 2,
        label: "highly relevant",
        guideline: "The passage has some answer for the query, but the answer may be a bit unclear, \
                    or hidden amongst extraneous information.",
    },
    GradeLabel {
        grade: 1,
        label: "related",
        guideline: "The passage seems related to the query but does not answer it.",
    },
    GradeLabel {
        grade: 0,
        label: "non-relevant",
        guideline: "The passage has nothing to do with the query.",
    },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PublicConfig {
    pub grades: Vec<GradeLabel>,
    pub search_url_template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Identity {
    Annotator(String),
    Admin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskView {
    /// 1-based position in the annotator's queue.
    pub position: usize,
    pub total: usize,
    pub topic: TopicId,
    pub topic_text: String,
    pub doc: DocId,
    pub doc_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NextTask {
    pub done: bool,
    pub task: Option<TaskView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopicProgress {
    pub topic: TopicId,
    pub judged: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub annotator: String,
    pub judged: usize,
    pub total: usize,
    pub topics: Vec<TopicProgress>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopicView {
    pub topic: TopicId,
    pub title: String,
    pub judged: usize,
    pub total: usize,
    pub has_narrative: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ack {
    pub timestamp: DateTime<Utc>,
    /// Distinct tasks judged by the annotator after this event.
    pub judged: usize,
    /// True when this judgment was the first for its task.
    pub first: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NarrativeView {
    pub topic: TopicId,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub versions: usize,
}

struct State {
    store: Box<dyn LogStore>,
    judged: BTreeMap<String, HashSet<(TopicId, DocId)>>,
    narratives: BTreeMap<(String, TopicId), Vec<NarrativeEvent>>,
    last_timestamp: Option<DateTime<Utc>>,
}

struct Committed<'a> {
    event: AnnotationEvent,
    state: MutexGuard<'a, State>,
    first: bool,
}

pub struct AnnotationService {
    queues: BTreeMap<String, Vec<(TopicId, DocId)>>,
    assigned: HashSet<(String, TopicId, DocId)>,
    owned_topics: BTreeMap<String, BTreeSet<TopicId>>,
    setup: ServiceSetup,
    clock: Clock,
    state: Mutex<State>,
}

/// Seed of an annotator's queue shuffle, derived from the global seed and
/// the annotator id.
pub fn queue_seed(seed: u64, annotator: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(annotator.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

impl AnnotationService {
    /// Builds queues and replays the existing log to restore progress.
    pub fn open(setup: ServiceSetup, store: Box<dyn LogStore>) -> Result<Self> {
        Self::open_with_clock(setup, store, Arc::new(Utc::now))
    }

    pub fn open_with_clock(setup: ServiceSetup, store: Box<dyn LogStore>, clock: Clock) -> Result<Self> {
        setup.validate()?;
        let mut queues: BTreeMap<String, Vec<(TopicId, DocId)>> = BTreeMap::new();
        let mut assigned = HashSet::new();
        let mut owned_topics: BTreeMap<String, BTreeSet<TopicId>> = BTreeMap::new();
        for Task { annotator, topic, doc } in &setup.tasks {
            if assigned.insert((annotator.clone(), topic.clone(), doc.clone())) {
                queues
                    .entry(annotator.clone())
                    .or_default()
                    .push((topic.clone(), doc.clone()));
                owned_topics.entry(annotator.clone()).or_default().insert(topic.clone());
            }
        }
        for (annotator, queue) in &mut queues {
            queue.sort();
            queue.shuffle(&mut ChaCha8Rng::seed_from_u64(queue_seed(setup.seed, annotator)));
        }

        let bytes = store.read_all()?;
        let events = parse_annotation_log(bytes.as_slice()).map_err(ServiceError::Replay)?;
        let mut state = State {
            store,
            judged: BTreeMap::new(),
            narratives: BTreeMap::new(),
            last_timestamp: None,
        };
        for event in &events {
            Self::apply(&mut state, &assigned, event);
        }
        Ok(Self {
            queues,
            assigned,
            owned_topics,
            setup,
            clock,
            state: Mutex::new(state),
        })
    }

    /// Updates in-memory state; true when a judgment covers a task for the first time.
    fn apply(state: &mut State, assigned: &HashSet<(String, TopicId, DocId)>, event: &AnnotationEvent) -> bool {
        let ts = event.timestamp();
        state.last_timestamp = Some(state.last_timestamp.map_or(ts, |t| t.max(ts)));
        match event {
            AnnotationEvent::Judgment(j) => {
                assigned.contains(&(j.annotator.clone(), j.topic.clone(), j.doc.clone()))
                    && state
                        .judged
                        .entry(j.annotator.clone())
                        .or_default()
                        .insert((j.topic.clone(), j.doc.clone()))
            }
            AnnotationEvent::Narrative(n) => {
                state
                    .narratives
                    .entry((n.annotator.clone(), n.topic.clone()))
                    .or_default()
                    .push(n.clone());
                false
            }
            AnnotationEvent::Flag(_) => false,
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn identify(&self, token: &str) -> Result<Identity> {
        if let Some(admin) = &self.setup.admin_token {
            if constant_time_eq(admin.as_bytes(), token.as_bytes()) {
                return Ok(Identity::Admin);
            }
        }
        self.setup
            .roster
            .annotator_for(token)
            .map(|a| Identity::Annotator(a.to_string()))
            .ok_or_else(|| ServiceError::Unauthorized("unknown token".into()))
    }

    pub fn public_config(&self) -> PublicConfig {
        PublicConfig {
            grades: GRADE_LABELS.to_vec(),
            search_url_template: self.setup.search_url_template.clone(),
        }
    }

    fn queue(&self, annotator: &str) -> Result<&[(TopicId, DocId)]> {
        if !self.setup.roster.contains_annotator(annotator) {
            return Err(ServiceError::Unauthorized(format!("unknown annotator {annotator}")));
        }
        Ok(self.queues.get(annotator).map_or(&[], Vec::as_slice))
    }

    fn owns_topic(&self, annotator: &str, topic: &TopicId) -> bool {
        self.owned_topics.get(annotator).is_some_and(|t| t.contains(topic))
    }

    /// Earliest unjudged task in the annotator's queue.
    pub fn next_task(&self, annotator: &str) -> Result<NextTask> {
        let queue = self.queue(annotator)?;
        let state = self.lock();
        let judged = state.judged.get(annotator);
        let next = queue
            .iter()
            .enumerate()
            .find(|(_, key)| !judged.is_some_and(|j| j.contains(*key)));
        Ok(match next {
            None => NextTask { done: true, task: None },
            Some((i, (topic, doc))) => NextTask {
                done: false,
                task: Some(TaskView {
                    position: i + 1,
                    total: queue.len(),
                    topic: topic.clone(),
                    topic_text: self.setup.topics[topic].clone(),
                    doc: doc.clone(),
                    doc_text: self.setup.corpus[doc].clone(),
                }),
            },
        })
    }

    pub fn progress(&self, annotator: &str) -> Result<Progress> {
        let queue = self.queue(annotator)?;
        let state = self.lock();
        let judged = state.judged.get(annotator);
        let mut topics: BTreeMap<&TopicId, (usize, usize)> = BTreeMap::new();
        for key in queue {
            let e = topics.entry(&key.0).or_default();
            e.1 += 1;
            if judged.is_some_and(|j| j.contains(key)) {
                e.0 += 1;
            }
        }
        Ok(Progress {
            annotator: annotator.to_string(),
            judged: judged.map_or(0, HashSet::len),
            total: queue.len(),
            topics: topics
                .into_iter()
                .map(|(t, (judged, total))| TopicProgress {
                    topic: t.clone(),
                    judged,
                    total,
                })
                .collect(),
        })
    }

    pub fn topics(&self, annotator: &str) -> Result<Vec<TopicView>> {
        let progress = self.progress(annotator)?;
        let state = self.lock();
        Ok(progress
            .topics
            .into_iter()
            .map(|p| TopicView {
                title: self.setup.topics[&p.topic].clone(),
                has_narrative: state.narratives.contains_key(&(annotator.to_string(), p.topic.clone())),
                topic: p.topic,
                judged: p.judged,
                total: p.total,
            })
            .collect())
    }

    /// Appends under the lock with a timestamp no earlier than any logged
    /// one, so the newest submission always wins the fold.
    fn commit(&self, build: impl FnOnce(DateTime<Utc>) -> AnnotationEvent) -> Result<Committed<'_>> {
        let mut state = self.lock();
        let now = (self.clock)();
        let ts = state.last_timestamp.map_or(now, |t| t.max(now));
        let event = build(ts);
        event.validate().map_err(|e| ServiceError::Validation(e.to_string()))?;
        state.store.append(&event.to_line())?;
        let first = Self::apply(&mut state, &self.assigned, &event);
        Ok(Committed { event, state, first })
    }

    pub fn submit_judgment(&self, annotator: &str, topic: &str, doc: &str, grade: i64) -> Result<Ack> {
        self.queue(annotator)?;
        let topic = TopicId::new(topic).map_err(|e| ServiceError::Validation(e.to_string()))?;
        let doc = DocId::new(doc).map_err(|e| ServiceError::Validation(e.to_string()))?;
        if !self
            .assigned
            .contains(&(annotator.to_string(), topic.clone(), doc.clone()))
        {
            return Err(ServiceError::Ownership(format!(
                "{topic}/{doc} is not assigned to {annotator}"
            )));
        }
        let grade = Grade::try_from(grade).map_err(|e| ServiceError::Validation(e.to_string()))?;
        let Committed { event, state, first } = self.commit(|timestamp| {
            AnnotationEvent::Judgment(JudgmentEvent {
                annotator: annotator.to_string(),
                topic,
                doc,
                grade,
                timestamp,
            })
        })?;
        Ok(Ack {
            timestamp: event.timestamp(),
            judged: state.judged.get(annotator).map_or(0, HashSet::len),
            first,
        })
    }

    fn owned(&self, annotator: &str, topic: &str) -> Result<TopicId> {
        self.queue(annotator)?;
        let topic = TopicId::new(topic).map_err(|e| ServiceError::Validation(e.to_string()))?;
        if !self.owns_topic(annotator, &topic) {
            return Err(ServiceError::Ownership(format!(
                "topic {topic} is not assigned to {annotator}"
            )));
        }
        Ok(topic)
    }

    pub fn submit_narrative(&self, annotator: &str, topic: &str, text: &str) -> Result<NarrativeView> {
        let topic = self.owned(annotator, topic)?;
        let Committed { state, .. } = self.commit(|timestamp| {
            AnnotationEvent::Narrative(NarrativeEvent {
                annotator: annotator.to_string(),
                topic: topic.clone(),
                narrative_text: text.to_string(),
                timestamp,
            })
        })?;
        Ok(Self::narrative_view(&state, annotator, &topic).expect("just stored"))
    }

    pub fn submit_flag(&self, annotator: &str, topic: &str, doc: Option<&str>, note: &str) -> Result<Ack> {
        let topic = self.owned(annotator, topic)?;
        let doc = doc
            .map(|d| DocId::new(d).map_err(|e| ServiceError::Validation(e.to_string())))
            .transpose()?;
        if let Some(d) = &doc {
            if !self
                .assigned
                .contains(&(annotator.to_string(), topic.clone(), d.clone()))
            {
                return Err(ServiceError::Ownership(format!(
                    "{topic}/{d} is not assigned to {annotator}"
                )));
            }
        }
        let Committed { event, state, .. } = self.commit(|timestamp| {
            AnnotationEvent::Flag(FlagEvent {
                annotator: annotator.to_string(),
                topic,
                doc,
                note: note.to_string(),
                timestamp,
            })
        })?;
        Ok(Ack {
            timestamp: event.timestamp(),
            judged: state.judged.get(annotator).map_or(0, HashSet::len),
            first: false,
        })
    }

    fn narrative_view(state: &State, annotator: &str, topic: &TopicId) -> Option<NarrativeView> {
        let versions = state.narratives.get(&(annotator.to_string(), topic.clone()))?;
        let latest = versions.last()?;
        Some(NarrativeView {
            topic: topic.clone(),
            text: latest.narrative_text.clone(),
            timestamp: latest.timestamp,
            versions: versions.len(),
        })
    }

    /// Latest narrative version for an owned topic.
    pub fn narrative(&self, annotator: &str, topic: &str) -> Result<NarrativeView> {
        let topic = self.owned(annotator, topic)?;
        Self::narrative_view(&self.lock(), annotator, &topic)
            .ok_or_else(|| ServiceError::NotFound(format!("no narrative for topic {topic}")))
    }

    /// Folds the committed log into per-annotator sets, narratives and flags.
    pub fn export_annotations(&self) -> Result<FoldedLog> {
        let bytes = self.lock().store.read_all()?;
        let events = parse_annotation_log(bytes.as_slice()).map_err(ServiceError::Replay)?;
        Ok(fold_events(&events))
    }

    /// Per-annotator qrels text of the folded log.
    pub fn export_qrels(&self) -> Result<BTreeMap<String, String>> {
        self.export_annotations()?
            .sets
            .iter()
            .map(|(a, set)| export_qrels(set).map(|q| (a.clone(), q)).map_err(ServiceError::Replay))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setup::Roster;
    use crate::store::MemoryLogStore;
    use chrono::TimeZone;
    use std::sync::atomic::{AtomicI64, Ordering};

    fn tid(s: &str) -> TopicId {
        TopicId::new(s).unwrap()
    }

    fn did(s: &str) -> DocId {
        DocId::new(s).unwrap()
    }

    pub(crate) fn setup() -> ServiceSetup {
        let mut tasks = Vec::new();
        for (a, topic, docs) in [
            ("ann1", "t1", &["d1", "d2", "d3"][..]),
            ("ann2", "t1", &["d1", "d4"][..]),
        ] {
            for d in docs {
                tasks.push(Task {
                    annotator: a.into(),
                    topic: tid(topic),
                    doc: did(d),
                });
            }
        }
        ServiceSetup {
            tasks,
            topics: [
                (tid("t1"), "do goldfish grow".to_string()),
                (tid("t2"), "other".to_string()),
            ]
            .into(),
            corpus: (1..=4)
                .map(|i| (did(&format!("d{i}")), format!("passage {i}")))
                .collect(),
            roster: Roster::from_pairs([("ann1", "tok1"), ("ann2", "tok2"), ("ann3", "tok3")]),
            admin_token: Some("admin".into()),
            seed: 42,
            search_url_template: Some("https://search.example/?q={query}".into()),
        }
    }

    fn ticking() -> Clock {
        let t = Arc::new(AtomicI64::new(0));
        Arc::new(move || {
            Utc.timestamp_opt(1_700_000_000 + t.fetch_add(1, Ordering::SeqCst), 0)
                .unwrap()
        })
    }

    fn service() -> AnnotationService {
        AnnotationService::open_with_clock(setup(), Box::new(MemoryLogStore::default()), ticking()).unwrap()
    }

    #[test]
    fn queue_walk_and_done() {
        let s = service();
        let mut seen = Vec::new();
        loop {
            let next = s.next_task("ann1").unwrap();
            let Some(task) = next.task else {
                assert!(next.done);
                break;
            };
            assert_eq!(task.position, seen.len() + 1);
            assert_eq!(task.total, 3);
            assert_eq!(task.topic_text, "do goldfish grow");
            seen.push(task.doc.to_string());
            s.submit_judgment("ann1", "t1", task.doc.as_str(), 2).unwrap();
        }
        seen.sort();
        assert_eq!(seen, ["d1", "d2", "d3"]);
        let p = s.progress("ann1").unwrap();
        assert_eq!((p.judged, p.total), (3, 3));
        assert!(s.next_task("ann3").unwrap().done);
        assert!(matches!(s.next_task("nobody"), Err(ServiceError::Unauthorized(_))));
    }

    #[test]
    fn queue_order_is_seeded_per_annotator() {
        let a = service().queues["ann1"].clone();
        assert_eq!(a, service().queues["ann1"]);
        assert_ne!(queue_seed(42, "ann1"), queue_seed(42, "ann2"));
        assert_ne!(queue_seed(42, "ann1"), queue_seed(43, "ann1"));
    }

    #[test]
    fn resubmission_keeps_progress_and_latest_grade() {
        let s = service();
        let first = s.submit_judgment("ann1", "t1", "d1", 2).unwrap();
        assert!(first.first);
        assert_eq!(first.judged, 1);
        let again = s.submit_judgment("ann1", "t1", "d1", 1).unwrap();
        assert!(!again.first);
        assert_eq!(again.judged, 1);
        let folded = s.export_annotations().unwrap();
        assert_eq!(folded.sets["ann1"].get("t1", "d1").unwrap().to_f64(), 1.0);
    }

    #[test]
    fn validation_and_ownership() {
        let s = service();
        assert!(matches!(
            s.submit_judgment("ann1", "t1", "d1", 4),
            Err(ServiceError::Validation(_))
        ));
        assert!(matches!(
            s.submit_judgment("ann1", "t1", "d1", -1),
            Err(ServiceError::Validation(_))
        ));
        assert!(matches!(
            s.submit_judgment("ann1", "t1", "d4", 1),
            Err(ServiceError::Ownership(_))
        ));
        assert!(matches!(
            s.submit_narrative("ann1", "t2", "text"),
            Err(ServiceError::Ownership(_))
        ));
        assert!(matches!(
            s.submit_narrative("ann1", "t1", "  "),
            Err(ServiceError::Validation(_))
        ));
        assert!(matches!(
            s.submit_flag("ann1", "t1", None, ""),
            Err(ServiceError::Validation(_))
        ));
        assert!(matches!(
            s.submit_flag("ann1", "t1", Some("d4"), "x"),
            Err(ServiceError::Ownership(_))
        ));
        assert!(s.export_annotations().unwrap().sets.is_empty());
    }

    #[test]
    fn narratives_are_versioned() {
        let s = service();
        assert!(matches!(s.narrative("ann1", "t1"), Err(ServiceError::NotFound(_))));
        s.submit_narrative("ann1", "t1", "first").unwrap();
        let v = s.submit_narrative("ann1", "t1", "second").unwrap();
        assert_eq!((v.text.as_str(), v.versions), ("second", 2));
        assert_eq!(s.narrative("ann1", "t1").unwrap(), v);
        let folded = s.export_annotations().unwrap();
        assert_eq!(folded.narratives.len(), 2);
        assert!(s.topics("ann1").unwrap()[0].has_narrative);
    }

    #[test]
    fn timestamps_never_go_backwards() {
        let disk = MemoryLogStore::default().disk();
        let early: Clock = Arc::new(|| Utc.timestamp_opt(1_000, 0).unwrap());
        let late: Clock = Arc::new(|| Utc.timestamp_opt(2_000, 0).unwrap());
        let s =
            AnnotationService::open_with_clock(setup(), Box::new(MemoryLogStore::open(disk.clone())), late).unwrap();
        s.submit_judgment("ann1", "t1", "d1", 3).unwrap();
        drop(s);
        let s = AnnotationService::open_with_clock(setup(), Box::new(MemoryLogStore::open(disk)), early).unwrap();
        let ack = s.submit_judgment("ann1", "t1", "d1", 0).unwrap();
        assert_eq!(ack.timestamp, Utc.timestamp_opt(2_000, 0).unwrap());
        assert_eq!(
            s.export_annotations().unwrap().sets["ann1"]
                .get("t1", "d1")
                .unwrap()
                .to_f64(),
            0.0
        );
        assert_eq!(s.progress("ann1").unwrap().judged, 1);
    }

    #[test]
    fn identities() {
        let s = service();
        assert_eq!(s.identify("admin").unwrap(), Identity::Admin);
        assert_eq!(s.identify("tok2").unwrap(), Identity::Annotator("ann2".into()));
        assert!(s.identify("nope").is_err());
    }

    #[test]
    fn corrupt_log_names_line() {
        let disk = MemoryLogStore::default().disk();
        disk.lock().unwrap().extend_from_slice(b"not json\n");
        let err = AnnotationService::open(setup(), Box::new(MemoryLogStore::open(disk)))
            .err()
            .unwrap();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
