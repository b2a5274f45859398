//! Per-topic annotator choices: enumeration, seeded sampling and realization
//! of hypothetical judgment sets.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trec_io::{AnnotationSet, Provenance, TopicId};

/// Which annotation set supplies each topic's judgments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CombinationSpec {
    pub choices: BTreeMap<TopicId, usize>,
}

impl CombinationSpec {
    pub fn choice(&self, topic: &str) -> Option<usize> {
        self.choices.get(topic).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinationMode {
    /// Primary plus the secondary annotators of each topic.
    InSample,
    /// Secondary annotators only.
    Natural,
}

impl FromStr for CombinationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-sample" | "in_sample" => Ok(CombinationMode::InSample),
            "natural" => Ok(CombinationMode::Natural),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?}; expected in-sample or natural"
            ))),
        }
    }
}

impl CombinationMode {
    pub fn label(self) -> &'static str {
        match self {
            CombinationMode::InSample => "in-sample",
            CombinationMode::Natural => "natural",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleConfig {
    pub samples: usize,
    pub seed: u64,
    pub mode: CombinationMode,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            mode: CombinationMode::InSample,
        }
    }
}

fn counts_for(topics: &[TopicId], choices: &BTreeMap<TopicId, usize>) -> Result<Vec<usize>> {
    topics
        .iter()
        .map(|t| match choices.get(t) {
            Some(&c) if c >= 1 => Ok(c),
            _ => Err(Error::Coverage(format!("topic {t} has no choices"))),
        })
        .collect()
}

/// Lazy odometer over all specs; the first topic varies slowest.
#[derive(Debug, Clone)]
pub struct Combinations {
    topics: Vec<TopicId>,
    counts: Vec<usize>,
    next: Option<Vec<usize>>,
    total: u64,
}

impl Combinations {
    /// Number of specs the iterator yields in total.
    pub fn total(&self) -> u64 {
        self.total
    }
}

impl Iterator for Combinations {
    type Item = CombinationSpec;

    fn next(&mut self) -> Option<CombinationSpec> {
        let current = self.next.take()?;
        let spec = CombinationSpec {
            choices: self.topics.iter().cloned().zip(current.iter().copied()).collect(),
        };
        let mut digits = current;
        for i in (0..digits.len()).rev() {
            digits[i] += 1;
            if digits[i] < self.counts[i] {
                self.next = Some(digits);
                return Some(spec);
            }
            digits[i] = 0;
        }
        Some(spec)
    }
}

/// Every spec exactly once in lexicographic order of per-topic indices.
pub fn enumerate_combinations(
    topics: &[TopicId],
    choices_per_topic: &BTreeMap<TopicId, usize>,
) -> Result<Combinations> {
    let counts = counts_for(topics, choices_per_topic)?;
    let total = counts
        .iter()
        .try_fold(1u64, |acc, &c| acc.checked_mul(c as u64))
        .ok_or_else(|| Error::EnumerationTooLarge(format!("{} topics", topics.len())))?;
    Ok(Combinations {
        topics: topics.to_vec(),
        counts: counts.clone(),
        next: Some(vec![0; counts.len()]),
        total,
    })
}

/// `cfg.samples` specs, each topic's choice drawn uniformly and
/// independently (with replacement) from a ChaCha8 stream seeded by `cfg.seed`.
pub fn sample_combinations(
    cfg: &SampleConfig,
    topics: &[TopicId],
    choices_per_topic: &BTreeMap<TopicId, usize>,
) -> Result<Vec<CombinationSpec>> {
    if cfg.samples == 0 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    let counts = counts_for(topics, choices_per_topic)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.samples)
        .map(|_| CombinationSpec {
            choices: topics
                .iter()
                .zip(&counts)
                .map(|(t, &c)| (t.clone(), rng.random_range(0..c)))
                .collect(),
        })
        .collect())
}

/// Annotation sets available per topic, in choice-index order.
#[derive(Debug, Clone)]
pub struct TopicCandidates<'a> {
    by_topic: BTreeMap<TopicId, Vec<&'a AnnotationSet>>,
}

impl<'a> TopicCandidates<'a> {
    /// Per topic: the primary first (if given and it judges the topic), then
    /// every secondary judging the topic, in the given order.
    pub fn new(primary: Option<&'a AnnotationSet>, secondaries: &'a [AnnotationSet]) -> Self {
        let mut by_topic: BTreeMap<TopicId, Vec<&'a AnnotationSet>> = BTreeMap::new();
        for set in primary.into_iter().chain(secondaries) {
            for topic in set.topics() {
                if set.judges_topic(topic.as_str()) {
                    by_topic.entry(topic.clone()).or_default().push(set);
                }
            }
        }
        Self { by_topic }
    }

    /// Candidates for a mode; in-sample topics must be judged by the primary.
    pub fn for_mode(mode: CombinationMode, primary: &'a AnnotationSet, secondaries: &'a [AnnotationSet]) -> Self {
        match mode {
            CombinationMode::InSample => {
                let mut c = Self::new(Some(primary), secondaries);
                c.by_topic
                    .retain(|t, sets| primary.judges_topic(t.as_str()) && sets.len() > 1);
                c
            }
            CombinationMode::Natural => Self::new(None, secondaries),
        }
    }

    pub fn from_map(by_topic: BTreeMap<TopicId, Vec<&'a AnnotationSet>>) -> Self {
        Self { by_topic }
    }

    pub fn topics(&self) -> Vec<TopicId> {
        self.by_topic.keys().cloned().collect()
    }

    pub fn choice_counts(&self) -> BTreeMap<TopicId, usize> {
        self.by_topic.iter().map(|(t, s)| (t.clone(), s.len())).collect()
    }

    pub fn sets(&self, topic: &str) -> Option<&[&'a AnnotationSet]> {
        self.by_topic.get(topic).map(Vec::as_slice)
    }

    pub fn by_topic(&self) -> &BTreeMap<TopicId, Vec<&'a AnnotationSet>> {
        &self.by_topic
    }

    /// Keeps only the given topics.
    pub fn restrict(&mut self, keep: impl Fn(&TopicId) -> bool) {
        self.by_topic.retain(|t, _| keep(t));
    }
}

/// Concatenates each topic's chosen judgments into one set.
pub fn realize_combination(spec: &CombinationSpec, candidates: &TopicCandidates<'_>) -> Result<AnnotationSet> {
    let mut out = AnnotationSet::new("combination", Provenance::Aggregate);
    for (topic, sets) in &candidates.by_topic {
        let idx = spec
            .choice(topic.as_str())
            .ok_or_else(|| Error::Coverage(format!("spec has no choice for topic {topic}")))?;
        let set = sets
            .get(idx)
            .ok_or_else(|| Error::Coverage(format!("choice {idx} invalid for topic {topic}")))?;
        if let Some(docs) = set.topic(topic.as_str()) {
            out.insert_topic(topic.clone(), docs.clone());
        }
    }
    for topic in spec.choices.keys() {
        if !candidates.by_topic.contains_key(topic) {
            return Err(Error::Coverage(format!("no annotation sets for topic {topic}")));
        }
    }
    Ok(out)
}

/// Audit CSV: combination index, topic, chosen annotator.
pub fn specs_to_csv(specs: &[CombinationSpec], candidates: &TopicCandidates<'_>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["combination", "topic", "annotator"])?;
    for (i, spec) in specs.iter().enumerate() {
        for (topic, &idx) in &spec.choices {
            let annotator = candidates
                .sets(topic.as_str())
                .and_then(|s| s.get(idx))
                .map(|s| s.annotator().to_string())
                .ok_or_else(|| Error::Coverage(format!("choice {idx} invalid for topic {topic}")))?;
            w.write_record([i.to_string(), topic.to_string(), annotator])?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trec_io::parse_qrels;
    use std::collections::HashSet;

    fn topics(n: usize) -> Vec<TopicId> {
        (0..n).map(|i| TopicId::new(format!("t{i:02}")).unwrap()).collect()
    }

    fn uniform(ts: &[TopicId], c: usize) -> BTreeMap<TopicId, usize> {
        ts.iter().map(|t| (t.clone(), c)).collect()
    }

    #[test]
    fn three_by_three_is_27() {
        let ts = topics(3);
        let all: Vec<_> = enumerate_combinations(&ts, &uniform(&ts, 3)).unwrap().collect();
        assert_eq!(all.len(), 27);
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), 27);
    }

    #[test]
    fn single_topic_pure_sets() {
        let ts = topics(1);
        let all: Vec<_> = enumerate_combinations(&ts, &uniform(&ts, 3)).unwrap().collect();
        assert_eq!(all.iter().map(|s| s.choices[&ts[0]]).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn forty_three_binary_topics_lazily() {
        let ts = topics(43);
        let mut combos = enumerate_combinations(&ts, &uniform(&ts, 2)).unwrap();
        assert_eq!(combos.total(), 1u64 << 43);
        let first = combos.next().unwrap();
        assert!(first.choices.values().all(|&c| c == 0));
        // Jump to the last spec by constructing the odometer state directly.
        combos.next = Some(vec![1; 43]);
        let last = combos.next().unwrap();
        assert!(last.choices.values().all(|&c| c == 1));
        assert!(combos.next().is_none());
    }

    #[test]
    fn overflow_is_reported() {
        let ts = topics(50);
        assert!(matches!(
            enumerate_combinations(&ts, &uniform(&ts, 3)),
            Err(Error::EnumerationTooLarge(_))
        ));
    }

    #[test]
    fn sampling_deterministic_and_single_choice() {
        let ts = topics(5);
        let cfg = SampleConfig {
            samples: 50,
            seed: 9,
            ..Default::default()
        };
        let a = sample_combinations(&cfg, &ts, &uniform(&ts, 3)).unwrap();
        assert_eq!(a, sample_combinations(&cfg, &ts, &uniform(&ts, 3)).unwrap());
        let other = SampleConfig { seed: 10, ..cfg };
        assert_ne!(a, sample_combinations(&other, &ts, &uniform(&ts, 3)).unwrap());
        let ones = sample_combinations(&cfg, &ts, &uniform(&ts, 1)).unwrap();
        assert!(ones.iter().all(|s| s.choices.values().all(|&c| c == 0)));
    }

    #[test]
    fn realization_is_per_topic() {
        let primary = parse_qrels("a 0 d1 3\na 0 d2 0\nb 0 d3 1".as_bytes())
            .unwrap()
            .with_annotator("primary");
        let secondaries = vec![parse_qrels("a 0 d1 1\nb 0 d3 2\nb 0 d4 0".as_bytes())
            .unwrap()
            .with_annotator("s1")];
        let cands = TopicCandidates::for_mode(CombinationMode::InSample, &primary, &secondaries);
        let mk = |a, b| CombinationSpec {
            choices: [(TopicId::new("a").unwrap(), a), (TopicId::new("b").unwrap(), b)].into(),
        };
        let pure = realize_combination(&mk(0, 0), &cands).unwrap();
        assert_eq!(pure.by_topic(), primary.by_topic());
        let mixed = realize_combination(&mk(0, 1), &cands).unwrap();
        assert_eq!(mixed.topic("a"), primary.topic("a"));
        assert_eq!(mixed.topic("b"), secondaries[0].topic("b"));
        assert_eq!(mixed.len(), 2 + 2);
        assert!(realize_combination(&mk(0, 2), &cands).is_err());
        let partial = CombinationSpec {
            choices: [(TopicId::new("a").unwrap(), 0)].into(),
        };
        assert!(matches!(realize_combination(&partial, &cands), Err(Error::Coverage(_))));
    }
}
