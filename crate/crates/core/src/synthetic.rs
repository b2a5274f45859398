//! Seeded synthetic collections: ground-truth judgments, systems of graded
//! quality, and annotators that confuse grades at a given rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trec_io::{AnnotationSet, DocId, Grade, Judgment, Provenance, Run, TopicId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub docs_per_topic: usize,
    pub systems: usize,
    pub annotators: usize,
    /// Probability that an annotator replaces a grade with a different one.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            topics: 40,
            docs_per_topic: 30,
            systems: 20,
            annotators: 3,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCollection {
    pub truth: AnnotationSet,
    pub runs: Vec<Run>,
    pub annotators: Vec<AnnotationSet>,
}

// Streams keep truth and runs identical across noise levels.
const TRUTH_STREAM: u64 = 0;
const RUN_STREAM: u64 = 1;
const ANNOTATOR_STREAM: u64 = 2;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn grade(g: u8) -> Judgment {
    Judgment::Graded(Grade::new(g).expect("grade in range"))
}

/// Builds a collection. System `i` scores each document as
/// `quality_i * grade + U(0, 3)`, with qualities evenly spaced in (0, 1], so
/// better systems rank relevant documents higher on average.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCollection> {
    if cfg.topics == 0 || cfg.docs_per_topic == 0 || cfg.systems == 0 || cfg.annotators == 0 {
        return Err(Error::Config("synthetic collection sizes must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::Config(format!("noise {} outside [0, 1]", cfg.noise)));
    }
    let topic = |t: usize| TopicId::new(format!("q{t:03}")).expect("valid id");
    let doc = |t: usize, d: usize| DocId::new(format!("q{t:03}-p{d:03}")).expect("valid id");

    let mut r = rng(cfg.seed, TRUTH_STREAM);
    let mut truth = AnnotationSet::new("truth", Provenance::Primary);
    let mut grades = vec![vec![0u8; cfg.docs_per_topic]; cfg.topics];
    for (t, row) in grades.iter_mut().enumerate() {
        for (d, g) in row.iter_mut().enumerate() {
            let u: f64 = r.random();
            *g = match u {
                u if u < 0.5 => 0,
                u if u < 0.75 => 1,
                u if u < 0.9 => 2,
                _ => 3,
            };
            truth.insert(topic(t), doc(t, d), grade(*g))?;
        }
    }

    let mut r = rng(cfg.seed, RUN_STREAM);
    let mut runs = Vec::with_capacity(cfg.systems);
    for s in 0..cfg.systems {
        let quality = (s + 1) as f64 / cfg.systems as f64;
        let mut scored = Vec::with_capacity(cfg.topics * cfg.docs_per_topic);
        for (t, row) in grades.iter().enumerate() {
            for (d, &g) in row.iter().enumerate() {
                let score = quality * f64::from(g) + r.random_range(0.0..3.0);
                scored.push((topic(t), doc(t, d), score));
            }
        }
        runs.push(Run::from_scored(format!("sys{s:02}"), scored)?);
    }

    let mut r = rng(cfg.seed, ANNOTATOR_STREAM);
    let annotators = (0..cfg.annotators)
        .map(|a| {
            let mut set = AnnotationSet::new(format!("annotator{a}"), Provenance::Secondary);
            for (t, row) in grades.iter().enumerate() {
                for (d, &g) in row.iter().enumerate() {
                    let flip = r.random_bool(cfg.noise);
                    let other = (g + r.random_range(1..4u8)) % 4;
                    set.insert(topic(t), doc(t, d), grade(if flip { other } else { g }))?;
                }
            }
            Ok(set)
        })
        .collect::<Result<_>>()?;
    Ok(SyntheticCollection {
        truth,
        runs,
        annotators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: f64) -> SyntheticConfig {
        SyntheticConfig {
            topics: 4,
            docs_per_topic: 10,
            systems: 3,
            annotators: 2,
            noise,
            seed: 3,
        }
    }

    #[test]
    fn noise_free_annotators_copy_truth() {
        let c = generate(&small(0.0)).unwrap();
        assert_eq!(c.runs.len(), 3);
        assert_eq!(c.truth.len(), 40);
        for a in &c.annotators {
            assert!(a.iter().all(|(t, d, j)| c.truth.get(t.as_str(), d.as_str()) == Some(j)));
        }
    }

    #[test]
    fn full_noise_changes_every_grade() {
        let c = generate(&small(1.0)).unwrap();
        for a in &c.annotators {
            assert!(a.iter().all(|(t, d, j)| c.truth.get(t.as_str(), d.as_str()) != Some(j)));
        }
    }

    #[test]
    fn truth_and_runs_do_not_depend_on_noise() {
        let a = generate(&small(0.0)).unwrap();
        let b = generate(&small(0.3)).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.runs, b.runs);
        assert!(generate(&SyntheticConfig {
            noise: 1.5,
            ..small(0.0)
        })
        .is_err());
    }
}
