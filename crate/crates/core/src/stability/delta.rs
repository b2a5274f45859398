use super::correlation::{rank_correlations, RankCorrelation, SystemOrdering};
use super::significance::{wilcoxon_signed_rank, WilcoxonResult, ALPHA};
use crate::error::{Error, Result};

fn ordering(systems: &[String], means: &[f64]) -> Result<SystemOrdering> {
    SystemOrdering::new(systems.iter().cloned().zip(means.iter().copied()))
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemRankDelta {
    pub tag: String,
    pub official_rank: usize,
    /// rank under combination minus official rank, one per combination.
    pub deltas: Vec<i64>,
    pub mean: f64,
    pub median: f64,
    /// min, 25%, 50%, 75%, max
    pub quantiles: [f64; 5],
    /// Signed-rank test of combination ranks against the official rank;
    /// `None` when every delta is zero.
    pub wilcoxon: Option<WilcoxonResult>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankDeltaReport {
    pub systems: Vec<SystemRankDelta>,
    pub combinations: usize,
}

impl RankDeltaReport {
    /// `samples[c][s]` is the mean score of system `s` under combination `c`.
    pub fn from_samples(systems: &[String], official: &[f64], samples: &[Vec<f64>]) -> Result<Self> {
        if systems.len() < 2 {
            return Err(Error::InsufficientData("rank deltas need at least 2 systems".into()));
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData(
                "rank deltas need at least 1 combination".into(),
            ));
        }
        let base = ordering(systems, official)?;
        let base_pos = base.positions();
        let mut deltas = vec![Vec::with_capacity(samples.len()); systems.len()];
        for means in samples {
            let ord = ordering(systems, means)?;
            let pos = ord.positions();
            for (s, tag) in systems.iter().enumerate() {
                deltas[s].push(pos[tag.as_str()] as i64 - base_pos[tag.as_str()] as i64);
            }
        }
        let systems = systems
            .iter()
            .zip(deltas)
            .map(|(tag, deltas)| {
                let official_rank = base_pos[tag.as_str()];
                let mut sorted: Vec<f64> = deltas.iter().map(|&d| d as f64).collect();
                sorted.sort_by(f64::total_cmp);
                let quantiles = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile(&sorted, q));
                let observed: Vec<f64> = deltas.iter().map(|&d| (official_rank as i64 + d) as f64).collect();
                let reference = vec![official_rank as f64; deltas.len()];
                let wilcoxon = match wilcoxon_signed_rank(&observed, &reference) {
                    Ok(w) => Some(w),
                    Err(Error::Degenerate(_)) => None,
                    Err(e) => return Err(e),
                };
                Ok(SystemRankDelta {
                    tag: tag.clone(),
                    official_rank,
                    mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
                    median: quantiles[2],
                    quantiles,
                    significant: wilcoxon.is_some_and(|w| w.p_value < ALPHA),
                    wilcoxon,
                    deltas,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            systems,
            combinations: samples.len(),
        })
    }
}

/// Mean rank correlation between each combination's ordering and the
/// official ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSummary {
    pub mean: RankCorrelation,
    pub combinations: usize,
}

pub fn correlation_summary(
    systems: &[String],
    official: &[f64],
    samples: &[Vec<f64>],
    rbo_p: f64,
) -> Result<CorrelationSummary> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no combinations".into()));
    }
    let base = ordering(systems, official)?;
    let (mut tau, mut rho, mut rbo) = (0.0, 0.0, 0.0);
    for means in samples {
        let c = rank_correlations(&ordering(systems, means)?, &base, rbo_p)?;
        tau += c.tau;
        rho += c.rho;
        rbo += c.rbo;
    }
    let n = samples.len() as f64;
    Ok(CorrelationSummary {
        mean: RankCorrelation {
            tau: tau / n,
            rho: rho / n,
            rbo: rbo / n,
        },
        combinations: samples.len(),
    })
}
