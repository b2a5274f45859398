//! Crash injection for durability checks.
//!
//! [`FaultyStore`] fails appends on demand: before writing, after a torn
//! partial write, or after a complete write but before the caller can
//! acknowledge. [`run_crash_campaign`] drives a service through many such
//! crashes, restarting it over the surviving bytes each time, and checks
//! that no acknowledged judgment is ever lost.

use std::collections::BTreeMap;
use std::io;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shelflife_core::pooling::Task;
use shelflife_core::trec_io::{fold_events, parse_annotation_log, DocId, TopicId};

use crate::error::{Result, ServiceError};
use crate::service::{AnnotationService, Clock};
use crate::setup::{Roster, ServiceSetup};
use crate::store::{committed_len, LogStore, MemoryLogStore, SharedDisk};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Nothing reaches the disk.
    BeforeWrite,
    /// Only the first `n` bytes of the record reach the disk.
    Torn(usize),
    /// The whole record is durable but the process dies before acknowledging.
    AfterWrite,
}

/// Arms the next append of a [`FaultyStore`].
pub type FaultSwitch = Arc<Mutex<Option<Fault>>>;

#[derive(Debug)]
pub struct FaultyStore {
    inner: MemoryLogStore,
    switch: FaultSwitch,
    /// Reports torn writes as successful: a deliberately broken store for
    /// checking that the campaign detects loss.
    pub acknowledge_torn: bool,
}

impl FaultyStore {
    pub fn open(disk: SharedDisk, switch: FaultSwitch) -> Self {
        Self {
            inner: MemoryLogStore::open(disk),
            switch,
            acknowledge_torn: false,
        }
    }
}

impl LogStore for FaultyStore {
    fn append(&mut self, record: &str) -> io::Result<()> {
        let fault = self.switch.lock().expect("switch lock").take();
        let crash = || Err(io::Error::other("injected crash"));
        match fault {
            None => self.inner.append(record),
            Some(Fault::BeforeWrite) => crash(),
            Some(Fault::Torn(n)) => {
                let disk = self.inner.disk();
                let mut bytes = disk.lock().expect("disk lock");
                bytes.extend_from_slice(&record.as_bytes()[..n.min(record.len())]);
                if self.acknowledge_torn {
                    Ok(())
                } else {
                    crash()
                }
            }
            Some(Fault::AfterWrite) => {
                self.inner.append(record)?;
                crash()
            }
        }
    }

    fn read_all(&self) -> io::Result<Vec<u8>> {
        self.inner.read_all()
    }
}

/// `annotators` annotators, each owning `topics` topics of `docs` documents.
pub fn demo_setup(annotators: usize, topics: usize, docs: usize, seed: u64) -> ServiceSetup {
    let tid = |t: usize| TopicId::new(format!("t{t}")).expect("valid id");
    let did = |t: usize, d: usize| DocId::new(format!("t{t}-d{d}")).expect("valid id");
    let names: Vec<String> = (0..annotators).map(|a| format!("ann{a}")).collect();
    let mut tasks = Vec::new();
    for (a, name) in names.iter().enumerate() {
        for t in 0..topics {
            for d in 0..docs {
                tasks.push(Task {
                    annotator: name.clone(),
                    topic: tid(a * topics + t),
                    doc: did(a * topics + t, d),
                });
            }
        }
    }
    let all_topics = annotators * topics;
    ServiceSetup {
        tasks,
        topics: (0..all_topics).map(|t| (tid(t), format!("query {t}"))).collect(),
        corpus: (0..all_topics)
            .flat_map(|t| (0..docs).map(move |d| (did(t, d), format!("passage {d} of topic {t}"))))
            .collect(),
        roster: Roster::from_pairs(
            names
                .iter()
                .map(String::as_str)
                .zip(["tok0", "tok1", "tok2", "tok3", "tok4", "tok5", "tok6", "tok7"]),
        ),
        admin_token: Some("admin".into()),
        seed,
        search_url_template: None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignReport {
    pub crashes: usize,
    pub acknowledged: usize,
    /// Acknowledged judgments missing from the log after a restart.
    pub lost: usize,
    /// Keys whose folded grade is neither the last acknowledged grade nor a
    /// later unacknowledged write that reached the disk.
    pub wrong_grade: usize,
    /// Restarts where the export differed from a fresh fold of the log.
    pub impure_exports: usize,
    /// Restarts where reported progress disagreed with the folded log.
    pub progress_mismatches: usize,
    /// Set when a restart could not replay the log.
    pub unrecoverable: Option<String>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.lost == 0
            && self.wrong_grade == 0
            && self.impure_exports == 0
            && self.progress_mismatches == 0
            && self.unrecoverable.is_none()
    }
}

#[derive(Default)]
struct KeyHistory {
    acked: Option<u8>,
    /// Unacknowledged writes since the last acknowledgment that hit the disk.
    persisted_after: Vec<u8>,
}

/// Submits random judgments, injecting a fault into roughly one append in
/// four and restarting after each, until `crashes` crashes have occurred.
pub fn run_crash_campaign(crashes: usize, seed: u64) -> Result<CampaignReport> {
    campaign(crashes, seed, false)
}

/// The same campaign over a store that acknowledges torn writes; its report
/// must not pass.
pub fn run_broken_store_campaign(crashes: usize, seed: u64) -> Result<CampaignReport> {
    campaign(crashes, seed, true)
}

fn campaign(crashes: usize, seed: u64, acknowledge_torn: bool) -> Result<CampaignReport> {
    let setup = demo_setup(4, 3, 8, seed);
    let disk: SharedDisk = Arc::default();
    let switch: FaultSwitch = Arc::default();
    let tick = Arc::new(AtomicI64::new(0));
    let clock: Clock = {
        let tick = Arc::clone(&tick);
        Arc::new(move || {
            Utc.timestamp_opt(1_700_000_000 + tick.fetch_add(1, Ordering::SeqCst) / 3, 0)
                .single()
                .expect("valid timestamp")
        })
    };
    let open = || {
        let mut store = FaultyStore::open(Arc::clone(&disk), Arc::clone(&switch));
        store.acknowledge_torn = acknowledge_torn;
        AnnotationService::open_with_clock(setup.clone(), Box::new(store), Arc::clone(&clock))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut service = open()?;
    let mut history: BTreeMap<(String, String, String), KeyHistory> = BTreeMap::new();
    let mut acked_lines: Vec<Vec<u8>> = Vec::new();
    let mut report = CampaignReport {
        crashes: 0,
        acknowledged: 0,
        lost: 0,
        wrong_grade: 0,
        impure_exports: 0,
        progress_mismatches: 0,
        unrecoverable: None,
    };

    while report.crashes < crashes {
        let task = &setup.tasks[rng.random_range(0..setup.tasks.len())];
        let grade: u8 = rng.random_range(0..=3);
        let fault = if rng.random_bool(0.25) {
            Some(match rng.random_range(0..3) {
                0 => Fault::BeforeWrite,
                1 => Fault::Torn(rng.random_range(0..40)),
                _ => Fault::AfterWrite,
            })
        } else {
            None
        };
        *switch.lock().expect("switch lock") = fault;
        let key = (task.annotator.clone(), task.topic.to_string(), task.doc.to_string());
        let before = disk.lock().expect("disk lock").len();
        match service.submit_judgment(&task.annotator, task.topic.as_str(), task.doc.as_str(), grade.into()) {
            Ok(_) => {
                let bytes = disk.lock().expect("disk lock");
                acked_lines.push(bytes[before..].to_vec());
                report.acknowledged += 1;
                let h = history.entry(key).or_default();
                h.acked = Some(grade);
                h.persisted_after.clear();
            }
            Err(ServiceError::Storage(_)) => {
                if fault == Some(Fault::AfterWrite) {
                    history.entry(key).or_default().persisted_after.push(grade);
                }
                drop(service);
                report.crashes += 1;
                service = match open() {
                    Ok(s) => s,
                    Err(e @ ServiceError::Replay(_)) => {
                        report.unrecoverable = Some(e.to_string());
                        return Ok(report);
                    }
                    Err(e) => return Err(e),
                };
                verify(&service, &disk, &acked_lines, &history, &mut report)?;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

fn verify(
    service: &AnnotationService,
    disk: &SharedDisk,
    acked_lines: &[Vec<u8>],
    history: &BTreeMap<(String, String, String), KeyHistory>,
    report: &mut CampaignReport,
) -> Result<()> {
    let bytes = disk.lock().expect("disk lock").clone();
    let committed = &bytes[..committed_len(&bytes)];
    let lines: std::collections::HashSet<&[u8]> = committed.split_inclusive(|&b| b == b'\n').collect();
    report.lost = acked_lines.iter().filter(|l| !lines.contains(l.as_slice())).count();

    let exported = service.export_annotations()?;
    let events = parse_annotation_log(committed).map_err(ServiceError::Replay)?;
    if exported != fold_events(&events) || exported != service.export_annotations()? {
        report.impure_exports += 1;
    }
    for ((annotator, topic, doc), h) in history {
        let folded = exported
            .sets
            .get(annotator)
            .and_then(|s| s.get(topic, doc))
            .and_then(|j| j.as_grade())
            .map(|g| g.value());
        let ok = match folded {
            Some(g) => h.acked == Some(g) || h.persisted_after.contains(&g),
            None => h.acked.is_none() && h.persisted_after.is_empty(),
        };
        if !ok {
            report.wrong_grade += 1;
        }
    }
    for (annotator, set) in &exported.sets {
        if service.progress(annotator)?.judged != set.len() {
            report.progress_mismatches += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_campaign_passes() {
        let r = run_crash_campaign(20, 3).unwrap();
        assert_eq!(r.crashes, 20);
        assert!(r.acknowledged > 0);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn broken_store_is_caught() {
        let r = run_broken_store_campaign(20, 3).unwrap();
        assert!(!r.passed(), "{r:?}");
    }

    #[test]
    fn torn_write_is_discarded_on_restart() {
        let disk: SharedDisk = Arc::default();
        let switch: FaultSwitch = Arc::new(Mutex::new(Some(Fault::Torn(10))));
        let mut store = FaultyStore::open(Arc::clone(&disk), Arc::clone(&switch));
        assert!(store.append("{\"x\":1}").is_err());
        assert_eq!(disk.lock().unwrap().len(), 7);
        let store = FaultyStore::open(Arc::clone(&disk), switch);
        assert!(store.read_all().unwrap().is_empty());
        assert!(disk.lock().unwrap().is_empty());
    }
}
