//! System-order stability under alternative judgments: swap counts, rank
//! correlation, rank deltas and paired significance tests.

mod correlation;
mod delta;
mod evaluator;
mod significance;
mod swap;

pub use correlation::{
    average_ranks, kendall_tau_b, rank_correlations, rbo_ext, spearman_rho, RankCorrelation, SystemOrdering,
};
pub use delta::{correlation_summary, CorrelationSummary, RankDeltaReport, SystemRankDelta};
pub use evaluator::{system_means, CombinationEvaluator};
pub use significance::{
    paired_t_test_bonferroni, wilcoxon_signed_rank, PairedTTest, WilcoxonResult, ALPHA, WILCOXON_EXACT_MAX_N,
};
pub use swap::{swap_analysis, swap_analysis_specs, SwapAnalysis, SwapMatrix};

use rayon::prelude::*;

use crate::combinations::{CombinationSpec, TopicCandidates};
use crate::error::Result;
use crate::metrics::{MetricId, MetricOptions};
use crate::trec_io::{AnnotationSet, Run};

/// Default RBO persistence.
pub const DEFAULT_RBO_P: f64 = 0.9;

fn tags(runs: &[Run]) -> Vec<String> {
    runs.iter().map(|r| r.tag().to_string()).collect()
}

/// Rank deltas over materialized judgment sets relative to `official`.
pub fn rank_delta(
    runs: &[Run],
    combination_sets: &[AnnotationSet],
    official: &AnnotationSet,
    metric: MetricId,
    opts: &MetricOptions,
) -> Result<RankDeltaReport> {
    let base = system_means(runs, official, metric, opts)?;
    let samples: Vec<Vec<f64>> = combination_sets
        .par_iter()
        .map(|s| system_means(runs, s, metric, opts))
        .collect::<Result<_>>()?;
    RankDeltaReport::from_samples(&tags(runs), &base, &samples)
}

/// Per-combination system means for a list of specs.
pub fn spec_samples(evaluator: &CombinationEvaluator, specs: &[CombinationSpec]) -> Result<Vec<Vec<f64>>> {
    specs.par_iter().map(|s| evaluator.system_means(s)).collect()
}

/// System means under the official judgments, restricted to the topics the
/// candidates cover so both sides score the same topic set.
pub fn official_means(
    runs: &[Run],
    official: &AnnotationSet,
    candidates: &TopicCandidates<'_>,
    metric: MetricId,
    opts: &MetricOptions,
) -> Result<Vec<f64>> {
    let restricted = official.restrict_to(candidates.by_topic().keys());
    system_means(runs, &restricted, metric, opts)
}
