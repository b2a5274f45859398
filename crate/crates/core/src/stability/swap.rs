use rayon::prelude::*;

use super::evaluator::{system_means, CombinationEvaluator};
use crate::combinations::CombinationSpec;
use crate::error::{Error, Result};
use crate::metrics::{MetricId, MetricOptions};
use crate::trec_io::{AnnotationSet, Run};

/// Pairwise win counts across judgment samples.
///
/// `counts[i][j]` is the number of samples in which system `i` scored
/// strictly higher than system `j`; ties count for neither.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapMatrix {
    pub systems: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub samples: u64,
}

impl SwapMatrix {
    pub fn swap_probability(&self, i: usize, j: usize) -> f64 {
        self.counts[i][j].min(self.counts[j][i]) as f64 / self.samples as f64
    }
}

/// Swap counts plus the per-sample data behind scatter and variance plots.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapAnalysis {
    pub matrix: SwapMatrix,
    /// Mean over samples of |score_i - score_j|.
    pub mean_abs_delta: Vec<Vec<f64>>,
    /// Mean score of each system in each sample: [system][sample].
    pub scores: Vec<Vec<f64>>,
}

impl SwapAnalysis {
    /// Accumulates per-sample system means in sample order.
    pub fn from_samples(systems: Vec<String>, samples: &[Vec<f64>]) -> Result<Self> {
        let n = systems.len();
        if n < 2 {
            return Err(Error::InsufficientData("swap analysis needs at least 2 systems".into()));
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData("swap analysis needs at least 1 sample".into()));
        }
        let mut counts = vec![vec![0u64; n]; n];
        let mut abs_sum = vec![vec![0.0f64; n]; n];
        for means in samples {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    if means[i] > means[j] {
                        counts[i][j] += 1;
                    }
                    abs_sum[i][j] += (means[i] - means[j]).abs();
                }
            }
        }
        let s = samples.len() as f64;
        let scores = (0..n).map(|i| samples.iter().map(|m| m[i]).collect()).collect();
        Ok(Self {
            matrix: SwapMatrix {
                systems,
                counts,
                samples: samples.len() as u64,
            },
            mean_abs_delta: abs_sum
                .into_iter()
                .map(|row| row.into_iter().map(|v| v / s).collect())
                .collect(),
            scores,
        })
    }
}

/// Swap analysis over materialized judgment sets.
pub fn swap_analysis(
    runs: &[Run],
    combination_sets: &[AnnotationSet],
    metric: MetricId,
    opts: &MetricOptions,
) -> Result<SwapAnalysis> {
    let samples: Vec<Vec<f64>> = combination_sets
        .par_iter()
        .map(|set| system_means(runs, set, metric, opts))
        .collect::<Result<_>>()?;
    SwapAnalysis::from_samples(runs.iter().map(|r| r.tag().to_string()).collect(), &samples)
}

/// Swap analysis over combination specs without materializing each set.
pub fn swap_analysis_specs(evaluator: &CombinationEvaluator, specs: &[CombinationSpec]) -> Result<SwapAnalysis> {
    let samples: Vec<Vec<f64>> = specs
        .par_iter()
        .map(|spec| evaluator.system_means(spec))
        .collect::<Result<_>>()?;
    SwapAnalysis::from_samples(evaluator.systems().to_vec(), &samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_of_ten() {
        let mut samples = vec![vec![0.6, 0.5]; 7];
        samples.extend(vec![vec![0.4, 0.5]; 3]);
        let a = SwapAnalysis::from_samples(vec!["i".into(), "j".into()], &samples).unwrap();
        assert_eq!(a.matrix.counts, vec![vec![0, 7], vec![3, 0]]);
        assert!((a.matrix.swap_probability(0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(a.matrix.swap_probability(0, 1), a.matrix.swap_probability(1, 0));
        assert!((a.mean_abs_delta[0][1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dominance_and_ties() {
        let samples = vec![vec![0.9, 0.1, 0.5], vec![0.8, 0.2, 0.2]];
        let a = SwapAnalysis::from_samples(vec!["a".into(), "b".into(), "c".into()], &samples).unwrap();
        assert_eq!(a.matrix.swap_probability(0, 1), 0.0);
        // b and c tie in the second sample.
        assert_eq!(a.matrix.counts[1][2] + a.matrix.counts[2][1], 1);
    }
}
