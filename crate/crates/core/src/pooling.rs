//! Secondary pool construction and topic-to-annotator assignment.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Read;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trec_io::{AnnotationSet, DocId, FracGrade, Grade, TopicId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolConfig {
    pub nonrel_sample_per_annotator: usize,
    pub seed: u64,
    pub min_grade_included: Grade,
    pub annotators_per_topic: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            nonrel_sample_per_annotator: 100,
            seed: 0,
            min_grade_included: Grade::new(1).expect("valid grade"),
            annotators_per_topic: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicPool {
    /// Docs at or above the inclusion grade, judged by every annotator.
    pub core: Vec<DocId>,
    /// One independent grade-0 sample per annotator slot.
    pub samples: Vec<Vec<DocId>>,
}

impl TopicPool {
    /// Documents one annotator judges on this topic.
    pub fn per_annotator_size(&self) -> usize {
        self.core.len() + self.samples.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn docs_for_slot(&self, slot: usize) -> impl Iterator<Item = &DocId> {
        self.core.iter().chain(self.samples.get(slot).into_iter().flatten())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolWarning {
    pub topic: TopicId,
    pub requested: usize,
    pub available: usize,
}

impl std::fmt::Display for PoolWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "topic {}: requested {} non-relevant docs per annotator, only {} available",
            self.topic, self.requested, self.available
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecondaryPool {
    pub topics: BTreeMap<TopicId, TopicPool>,
    pub warnings: Vec<PoolWarning>,
}

impl SecondaryPool {
    pub fn sizes(&self) -> Vec<(TopicId, u64)> {
        self.topics
            .iter()
            .map(|(t, p)| (t.clone(), p.per_annotator_size() as u64))
            .collect()
    }
}

/// Builds each topic's re-annotation pool from primary judgments: the
/// relevant core plus independent non-relevant samples per annotator slot.
pub fn build_secondary_pool(primary: &AnnotationSet, cfg: &PoolConfig) -> Result<SecondaryPool> {
    if primary.is_empty() {
        return Err(Error::InsufficientData("primary judgments are empty".into()));
    }
    if cfg.annotators_per_topic == 0 {
        return Err(Error::Config("annotators per topic must be >= 1".into()));
    }
    let threshold = FracGrade::from_integer(cfg.min_grade_included.value().into())?;
    let zero = FracGrade::from_integer(0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut topics = BTreeMap::new();
    let mut warnings = Vec::new();
    for (topic, docs) in primary.by_topic() {
        let core: Vec<DocId> = docs
            .iter()
            .filter(|(_, j)| j.meets(threshold))
            .map(|(d, _)| d.clone())
            .collect();
        let nonrel: Vec<&DocId> = docs
            .iter()
            .filter(|(_, j)| j.ratio() == zero.ratio())
            .map(|(d, _)| d)
            .collect();
        let take = cfg.nonrel_sample_per_annotator.min(nonrel.len());
        if take < cfg.nonrel_sample_per_annotator {
            warnings.push(PoolWarning {
                topic: topic.clone(),
                requested: cfg.nonrel_sample_per_annotator,
                available: nonrel.len(),
            });
        }
        let samples = (0..cfg.annotators_per_topic)
            .map(|_| {
                let mut s: Vec<DocId> = nonrel.choose_multiple(&mut rng, take).map(|d| (*d).clone()).collect();
                s.sort();
                s
            })
            .collect();
        topics.insert(topic.clone(), TopicPool { core, samples });
    }
    Ok(SecondaryPool { topics, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairingMode {
    /// Annotators form fixed partnerships; each pair takes whole topics.
    #[default]
    Fixed,
    /// Each topic goes to the two currently least-loaded annotators.
    Dynamic,
}

impl FromStr for PairingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "dynamic" => Ok(Self::Dynamic),
            _ => Err(Error::Config(format!("unknown pairing mode {s:?} (fixed|dynamic)"))),
        }
    }
}

/// Stop balancing once the load gap is within this fraction of the mean load.
pub const BALANCE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub topics: BTreeMap<TopicId, (String, String)>,
    /// Per-annotator load in judgments.
    pub loads: BTreeMap<String, u64>,
    pub sizes: BTreeMap<TopicId, u64>,
}

impl Assignment {
    pub fn load_gap(&self) -> u64 {
        let max = self.loads.values().max().copied().unwrap_or(0);
        let min = self.loads.values().min().copied().unwrap_or(0);
        max - min
    }

    pub fn topics_of<'a>(&'a self, annotator: &'a str) -> impl Iterator<Item = &'a TopicId> + 'a {
        self.topics
            .iter()
            .filter(move |(_, (a, b))| a == annotator || b == annotator)
            .map(|(t, _)| t)
    }
}

fn sorted_topics(sizes: &[(TopicId, u64)]) -> Vec<(TopicId, u64)> {
    let mut order = sizes.to_vec();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    order
}

/// Assigns every topic to two annotators, balancing per-annotator load.
/// Annotators are shuffled by `seed` before pairing.
pub fn assign_topics(
    sizes: &[(TopicId, u64)],
    annotators: &[String],
    seed: u64,
    mode: PairingMode,
) -> Result<Assignment> {
    if annotators.len() < 2 {
        return Err(Error::Config("at least 2 annotators are required".into()));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = annotators.iter().find(|a| !seen.insert(a.as_str())) {
        return Err(Error::Config(format!("duplicate annotator {dup:?}")));
    }
    let mut check = std::collections::HashSet::new();
    if let Some((dup, _)) = sizes.iter().find(|(t, _)| !check.insert(t)) {
        return Err(Error::Config(format!("duplicate topic {dup}")));
    }
    let mut shuffled = annotators.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let topics = match mode {
        PairingMode::Fixed => assign_fixed(sizes, &shuffled)?,
        PairingMode::Dynamic => assign_dynamic(sizes, &shuffled),
    };
    let sizes: BTreeMap<TopicId, u64> = sizes.iter().cloned().collect();
    let mut loads: BTreeMap<String, u64> = annotators.iter().map(|a| (a.clone(), 0)).collect();
    for (topic, (a, b)) in &topics {
        for who in [a, b] {
            *loads.get_mut(who).expect("known annotator") += sizes[topic];
        }
    }
    Ok(Assignment { topics, loads, sizes })
}

fn assign_fixed(sizes: &[(TopicId, u64)], annotators: &[String]) -> Result<BTreeMap<TopicId, (String, String)>> {
    if !annotators.len().is_multiple_of(2) {
        return Err(Error::Config(format!(
            "fixed pairing needs an even number of annotators, got {}",
            annotators.len()
        )));
    }
    let n_pairs = annotators.len() / 2;
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..n_pairs).map(|p| Reverse((0, p))).collect();
    let mut held: Vec<Vec<(TopicId, u64)>> = vec![Vec::new(); n_pairs];
    let mut loads = vec![0u64; n_pairs];
    for (topic, size) in sorted_topics(sizes) {
        let Reverse((load, pair)) = heap.pop().expect("non-empty heap");
        held[pair].push((topic, size));
        loads[pair] = load + size;
        heap.push(Reverse((loads[pair], pair)));
    }
    rebalance(&mut held, &mut loads, annotators.len());
    Ok(held
        .into_iter()
        .enumerate()
        .flat_map(|(p, ts)| {
            let pair = (annotators[2 * p].clone(), annotators[2 * p + 1].clone());
            ts.into_iter().map(move |(t, _)| (t, pair.clone()))
        })
        .collect())
}

fn gap(loads: &[u64]) -> u64 {
    loads.iter().max().unwrap_or(&0) - loads.iter().min().unwrap_or(&0)
}

/// Moves topics from the most- to the least-loaded pair while that strictly
/// narrows the gap and the gap exceeds tolerance.
fn rebalance(held: &mut [Vec<(TopicId, u64)>], loads: &mut [u64], n_annotators: usize) {
    let total: u64 = loads.iter().sum::<u64>() * 2;
    let tolerance = BALANCE_TOLERANCE * total as f64 / n_annotators as f64;
    loop {
        let current = gap(loads);
        if current as f64 <= tolerance {
            return;
        }
        // Lowest index among equals keeps the pass deterministic.
        let hi = (0..loads.len()).max_by_key(|&i| (loads[i], Reverse(i))).expect("pairs");
        let lo = (0..loads.len()).min_by_key(|&i| (loads[i], i)).expect("pairs");
        let mut candidates: Vec<usize> = (0..held[hi].len()).collect();
        candidates.sort_by(|&a, &b| {
            held[hi][b]
                .1
                .cmp(&held[hi][a].1)
                .then_with(|| held[hi][a].0.cmp(&held[hi][b].0))
        });
        let movable = candidates.into_iter().find(|&i| {
            let s = held[hi][i].1;
            let mut trial = loads.to_vec();
            trial[hi] -= s;
            trial[lo] += s;
            gap(&trial) < current
        });
        let Some(i) = movable else { return };
        let (topic, s) = held[hi].remove(i);
        loads[hi] -= s;
        loads[lo] += s;
        held[lo].push((topic, s));
    }
}

fn assign_dynamic(sizes: &[(TopicId, u64)], annotators: &[String]) -> BTreeMap<TopicId, (String, String)> {
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..annotators.len()).map(|a| Reverse((0, a))).collect();
    let mut out = BTreeMap::new();
    for (topic, size) in sorted_topics(sizes) {
        let Reverse((la, a)) = heap.pop().expect("two annotators");
        let Reverse((lb, b)) = heap.pop().expect("two annotators");
        heap.push(Reverse((la + size, a)));
        heap.push(Reverse((lb + size, b)));
        let (first, second) = if a < b { (a, b) } else { (b, a) };
        out.insert(topic, (annotators[first].clone(), annotators[second].clone()));
    }
    out
}

/// CSV with columns topic, annotator_a, annotator_b, core_size, sample_size.
pub fn assignment_to_csv(assignment: &Assignment, pool: &SecondaryPool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["topic", "annotator_a", "annotator_b", "core_size", "sample_size"])?;
    for (topic, (a, b)) in &assignment.topics {
        let p = pool
            .topics
            .get(topic)
            .ok_or_else(|| Error::Coverage(format!("topic {topic} missing from pool")))?;
        let sample = p.samples.iter().map(Vec::len).max().unwrap_or(0);
        w.write_record([topic.as_str(), a, b, &p.core.len().to_string(), &sample.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Task {
    pub annotator: String,
    pub topic: TopicId,
    pub doc: DocId,
}

/// Each annotator's (topic, doc) work items: the topic's core plus the
/// sample of the slot the annotator occupies.
pub fn task_lists(assignment: &Assignment, pool: &SecondaryPool) -> Result<BTreeMap<String, Vec<Task>>> {
    let mut out: BTreeMap<String, Vec<Task>> = assignment.loads.keys().map(|a| (a.clone(), Vec::new())).collect();
    for (topic, (a, b)) in &assignment.topics {
        let p = pool
            .topics
            .get(topic)
            .ok_or_else(|| Error::Coverage(format!("topic {topic} missing from pool")))?;
        for (slot, who) in [a, b].into_iter().enumerate() {
            let tasks = out.get_mut(who).expect("known annotator");
            tasks.extend(p.docs_for_slot(slot).map(|d| Task {
                annotator: who.clone(),
                topic: topic.clone(),
                doc: d.clone(),
            }));
        }
    }
    Ok(out)
}

pub fn tasks_to_csv<'a>(tasks: impl IntoIterator<Item = &'a Task>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in tasks {
        w.serialize(t)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
}

pub fn parse_tasks<R: Read>(reader: R) -> Result<Vec<Task>> {
    csv::Reader::from_reader(reader)
        .into_deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
