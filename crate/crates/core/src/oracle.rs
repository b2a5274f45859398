//! Annotators as rankers: runs that order each topic's judged documents by
//! grade, and their sensitivity to the order within a grade.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{compute_metric, MetricId, MetricOptions};
use crate::trec_io::{AnnotationSet, DocId, Judgment, Run, RunEntry, TopicId};

/// Per topic, judged documents grouped by grade, highest grade first; each
/// group sorted by doc id.
fn grade_groups(source: &AnnotationSet) -> Vec<(TopicId, Vec<Vec<DocId>>)> {
    source
        .by_topic()
        .iter()
        .filter(|(_, docs)| !docs.is_empty())
        .map(|(topic, docs)| {
            let mut by_grade: Vec<(Judgment, &DocId)> = docs.iter().map(|(d, j)| (*j, d)).collect();
            by_grade.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            let groups = by_grade
                .into_iter()
                .chunk_by(|(j, _)| *j)
                .into_iter()
                .map(|(_, g)| g.map(|(_, d)| d.clone()).collect())
                .collect();
            (topic.clone(), groups)
        })
        .collect()
}

fn assemble(tag: &str, topics: impl IntoIterator<Item = (TopicId, Vec<DocId>)>) -> Run {
    let mut run = Run::new(tag);
    for (topic, docs) in topics {
        let n = docs.len();
        let entries = docs
            .into_iter()
            .enumerate()
            .map(|(i, doc)| RunEntry {
                doc,
                rank: i as u32 + 1,
                score: (n - i) as f64,
            })
            .collect();
        run.insert_topic(topic, entries);
    }
    run
}

fn shuffled(tag: &str, groups: &[(TopicId, Vec<Vec<DocId>>)], rng: &mut ChaCha8Rng) -> Run {
    assemble(
        tag,
        groups.iter().map(|(topic, gs)| {
            let docs = gs
                .iter()
                .flat_map(|g| {
                    let mut g = g.clone();
                    g.shuffle(rng);
                    g
                })
                .collect();
            (topic.clone(), docs)
        }),
    )
}

/// Orders each topic's judged documents by grade, descending; documents
/// sharing a grade are shuffled by `seed`. Scores are `n - rank + 1`.
pub fn build_oracle_run(source: &AnnotationSet, tag: &str, seed: u64) -> Result<Run> {
    if source.is_empty() {
        return Err(Error::InsufficientData("oracle source has no judgments".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(shuffled(tag, &grade_groups(source), &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleStability {
    pub mean: f64,
    /// Population standard deviation of the run-level metric mean.
    pub std_dev: f64,
    /// Number of oracle runs evaluated.
    pub runs: usize,
    /// True when every distinct in-grade arrangement was evaluated.
    pub exhaustive: bool,
}

fn factorial_capped(n: usize, cap: u64) -> u64 {
    (1..=n as u64)
        .try_fold(1u64, |acc, k| acc.checked_mul(k).filter(|v| *v <= cap))
        .unwrap_or(cap + 1)
}

/// Spread of an oracle's score over in-grade shuffles.
///
/// When the number of distinct arrangements is at most `n_shuffles`, all of
/// them are evaluated once each and the result is exact; otherwise
/// `n_shuffles` seeded shuffles are drawn, repetition `r` using ChaCha
/// stream `r` of `seed`.
pub fn oracle_stability(
    source: &AnnotationSet,
    eval_set: &AnnotationSet,
    metric: MetricId,
    opts: &MetricOptions,
    n_shuffles: usize,
    seed: u64,
) -> Result<OracleStability> {
    if n_shuffles < 2 {
        return Err(Error::Config("oracle stability needs at least 2 shuffles".into()));
    }
    if source.is_empty() {
        return Err(Error::InsufficientData("oracle source has no judgments".into()));
    }
    let groups = grade_groups(source);
    let cap = n_shuffles as u64;
    let arrangements = groups
        .iter()
        .flat_map(|(_, gs)| gs.iter().map(Vec::len))
        .try_fold(1u64, |acc, len| {
            acc.checked_mul(factorial_capped(len, cap)).filter(|v| *v <= cap)
        });

    let (values, exhaustive) = match arrangements {
        Some(_) => (exhaustive_values(&groups, eval_set, metric, opts)?, true),
        None => {
            let values = (0..n_shuffles)
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(r as u64);
                    let run = shuffled("oracle", &groups, &mut rng);
                    compute_metric(&run, eval_set, metric, opts).map(|rep| rep.mean)
                })
                .collect::<Result<Vec<_>>>()?;
            (values, false)
        }
    };
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(OracleStability {
        mean,
        std_dev: var.sqrt(),
        runs: values.len(),
        exhaustive,
    })
}

fn exhaustive_values(
    groups: &[(TopicId, Vec<Vec<DocId>>)],
    eval_set: &AnnotationSet,
    metric: MetricId,
    opts: &MetricOptions,
) -> Result<Vec<f64>> {
    // Every ordering of one topic: the product of its groups' permutations.
    let per_topic: Vec<Vec<Vec<DocId>>> = groups
        .iter()
        .map(|(_, gs)| {
            gs.iter()
                .map(|g| g.iter().cloned().permutations(g.len()).collect::<Vec<_>>())
                .multi_cartesian_product()
                .map(|parts| parts.concat())
                .collect()
        })
        .collect();
    per_topic
        .iter()
        .map(|orders| orders.iter())
        .multi_cartesian_product()
        .map(|choice| {
            let run = assemble(
                "oracle",
                groups
                    .iter()
                    .zip(choice)
                    .map(|((t, _), docs)| (t.clone(), docs.clone())),
            );
            compute_metric(&run, eval_set, metric, opts).map(|rep| rep.mean)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trec_io::parse_qrels;

    fn set(text: &str) -> AnnotationSet {
        parse_qrels(text.as_bytes()).unwrap()
    }

    fn order(run: &Run, topic: &str) -> Vec<String> {
        run.topic(topic).unwrap().iter().map(|e| e.doc.to_string()).collect()
    }

    #[test]
    fn distinct_grades_sorted() {
        let run = build_oracle_run(&set("t 0 d3 0\nt 0 d1 3\nt 0 d2 1"), "o", 1).unwrap();
        assert_eq!(order(&run, "t"), ["d1", "d2", "d3"]);
        let scores: Vec<f64> = run.topic("t").unwrap().iter().map(|e| e.score).collect();
        assert_eq!(scores, [3.0, 2.0, 1.0]);
        let mut normalized = run.clone();
        normalized.normalize();
        assert_eq!(normalized, run);
    }

    #[test]
    fn ties_follow_seed() {
        let src = set(&(0..8).map(|i| format!("t 0 d{i} 1\n")).collect::<String>());
        let orders: std::collections::HashSet<_> = (0..10)
            .map(|s| order(&build_oracle_run(&src, "o", s).unwrap(), "t"))
            .collect();
        assert!(orders.len() > 1);
        assert_eq!(
            order(&build_oracle_run(&src, "o", 3).unwrap(), "t"),
            order(&build_oracle_run(&src, "o", 3).unwrap(), "t")
        );
    }

    #[test]
    fn self_evaluation_is_ideal() {
        let src = set("t 0 a 2\nt 0 b 2\nt 0 c 3\nt 0 d 0\nu 0 e 1\nu 0 f 1");
        let run = build_oracle_run(&src, "o", 5).unwrap();
        let r = compute_metric(&run, &src, MetricId::ndcg(10), &MetricOptions::default()).unwrap();
        assert!(r.per_topic.values().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn no_ties_means_no_spread() {
        let src = set("t 0 a 3\nt 0 b 2\nt 0 c 1\nt 0 d 0");
        let eval = set("t 0 a 1\nt 0 b 3\nt 0 c 0\nt 0 d 2");
        let s = oracle_stability(&src, &eval, MetricId::ndcg(10), &MetricOptions::default(), 10, 0).unwrap();
        assert_eq!(s.std_dev, 0.0);
        assert!(s.exhaustive);
        assert_eq!(s.runs, 1);
        assert!(oracle_stability(&src, &eval, MetricId::ndcg(10), &MetricOptions::default(), 1, 0).is_err());
    }

    #[test]
    fn sampling_when_too_many_arrangements() {
        let src = set(&(0..12).map(|i| format!("t 0 d{i:02} {}\n", i % 2)).collect::<String>());
        let eval = set(&(0..12).map(|i| format!("t 0 d{i:02} {}\n", i % 4)).collect::<String>());
        let s = oracle_stability(&src, &eval, MetricId::ndcg(5), &MetricOptions::default(), 50, 1).unwrap();
        assert!(!s.exhaustive);
        assert_eq!(s.runs, 50);
        assert!(s.std_dev > 0.0);
    }
}
