use rayon::prelude::*;

use crate::combinations::{CombinationSpec, TopicCandidates};
use crate::error::{Error, Result};
use crate::metrics::{compute_metric, mean_of, topic_value, MetricId, MetricOptions};
use crate::trec_io::{AnnotationSet, Run};

/// Precomputed per-topic scores of every run under every candidate set.
///
/// A combination only swaps whole topics, so its mean score for a run is
/// the mean of the chosen per-topic values. This is numerically identical
/// to realizing the combination and calling [`compute_metric`].
#[derive(Debug, Clone)]
pub struct CombinationEvaluator {
    systems: Vec<String>,
    /// [system][topic][choice] -> Some(value) | None (skipped or not evaluated)
    table: Vec<Vec<Vec<Option<f64>>>>,
    topics: Vec<String>,
}

impl CombinationEvaluator {
    pub fn new(runs: &[Run], candidates: &TopicCandidates<'_>, metric: MetricId, opts: &MetricOptions) -> Self {
        let topics: Vec<String> = candidates.by_topic().keys().map(|t| t.to_string()).collect();
        let table = runs
            .par_iter()
            .map(|run| {
                candidates
                    .by_topic()
                    .iter()
                    .map(|(topic, sets)| {
                        sets.iter()
                            .map(|set| {
                                let entries = run.topic(topic.as_str())?;
                                let judged = set.topic(topic.as_str()).filter(|d| !d.is_empty())?;
                                topic_value(entries, judged, metric, opts)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            systems: runs.iter().map(|r| r.tag().to_string()).collect(),
            table,
            topics,
        }
    }

    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    /// Mean score per system under one combination.
    pub fn system_means(&self, spec: &CombinationSpec) -> Result<Vec<f64>> {
        let choices: Vec<usize> = self
            .topics
            .iter()
            .map(|t| {
                spec.choice(t)
                    .ok_or_else(|| Error::Coverage(format!("spec has no choice for topic {t}")))
            })
            .collect::<Result<_>>()?;
        self.table
            .iter()
            .zip(&self.systems)
            .map(|(per_topic, tag)| {
                let values = per_topic.iter().zip(&choices).map(|(c, &i)| {
                    c.get(i)
                        .copied()
                        .ok_or_else(|| Error::Coverage(format!("choice {i} out of range")))
                });
                let values: Vec<Option<f64>> = values.collect::<Result<_>>()?;
                mean_of(values.into_iter().flatten()).ok_or_else(|| Error::NoOverlap { tag: tag.clone() })
            })
            .collect()
    }
}

/// Mean score per run against one judgment set.
pub fn system_means(
    runs: &[Run],
    judgments: &AnnotationSet,
    metric: MetricId,
    opts: &MetricOptions,
) -> Result<Vec<f64>> {
    runs.iter()
        .map(|r| compute_metric(r, judgments, metric, opts).map(|rep| rep.mean))
        .collect()
}
