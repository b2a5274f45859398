use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub const ALPHA: f64 = 0.05;

/// Largest number of nonzero differences for which the Wilcoxon p-value is
/// computed exactly.
pub const WILCOXON_EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    /// NaN when the differences have zero variance.
    pub t_statistic: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub significant: bool,
    /// Zero-variance differences: reported as non-significant with p = 1.
    pub degenerate: bool,
}

/// Two-sided paired t-test, Bonferroni-adjusted for `m_comparisons`.
pub fn paired_t_test_bonferroni(a: &[f64], b: &[f64], m_comparisons: usize) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData("paired t-test needs n >= 2".into()));
    }
    if m_comparisons == 0 {
        return Err(Error::Config("number of comparisons must be >= 1".into()));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Ok(PairedTTest {
            t_statistic: f64::NAN,
            raw_p: 1.0,
            adjusted_p: 1.0,
            significant: false,
            degenerate: true,
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid degrees of freedom");
    let raw_p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    let adjusted_p = (raw_p * m_comparisons as f64).min(1.0);
    Ok(PairedTTest {
        t_statistic: t,
        raw_p,
        adjusted_p,
        significant: adjusted_p < ALPHA,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// min(W+, W-)
    pub w_statistic: f64,
    pub p_value: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub exact: bool,
}

/// Wilcoxon signed-rank test (two-sided). Zero differences are dropped and
/// tied magnitudes share their mean rank.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mut diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let n = diffs.len();

    // Doubled ranks keep tied (half-integer) ranks integral.
    let mut doubled = vec![0u64; n];
    let mut tie_groups = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let r2 = (i + j + 2) as u64; // (i+1 + j+1)
        doubled[i..=j].iter_mut().for_each(|r| *r = r2);
        tie_groups.push(j - i + 1);
        i = j + 1;
    }
    let total2: u64 = doubled.iter().sum();
    let plus2: u64 = diffs
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let w2 = plus2.min(total2 - plus2);
    let w_statistic = w2 as f64 / 2.0;

    if n <= WILCOXON_EXACT_MAX_N {
        // counts[s] = number of sign assignments with doubled W+ = s.
        let mut counts = vec![0u64; total2 as usize + 1];
        counts[0] = 1;
        for &r in &doubled {
            let r = r as usize;
            for s in (r..counts.len()).rev() {
                counts[s] += counts[s - r];
            }
        }
        let tail: u64 = counts[..=w2 as usize].iter().sum();
        let p = (2.0 * tail as f64 / (1u64 << n) as f64).min(1.0);
        return Ok(WilcoxonResult {
            w_statistic,
            p_value: p,
            n,
            exact: true,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_groups.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = ((w_statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(WilcoxonResult {
        w_statistic,
        p_value: (2.0 * normal.cdf(-z)).min(1.0),
        n,
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_t() {
        let r = paired_t_test_bonferroni(&[0.3, 0.5], &[0.3, 0.5], 3).unwrap();
        assert!(r.degenerate && !r.significant);
        assert_eq!(r.adjusted_p, 1.0);
        assert!(paired_t_test_bonferroni(&[1.0], &[1.0], 1).is_err());
    }

    #[test]
    fn t_bonferroni_scaling() {
        let a = [0.61, 0.72, 0.55, 0.80, 0.67, 0.59];
        let b = [0.52, 0.70, 0.49, 0.71, 0.66, 0.50];
        let one = paired_t_test_bonferroni(&a, &b, 1).unwrap();
        assert_eq!(one.raw_p, one.adjusted_p);
        let three = paired_t_test_bonferroni(&a, &b, 3).unwrap();
        assert!((three.adjusted_p - (3.0 * one.raw_p).min(1.0)).abs() < 1e-15);
    }

    #[test]
    fn wilcoxon_all_positive() {
        let r = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]).unwrap();
        assert_eq!(r.w_statistic, 0.0);
        // Only the all-positive and all-negative assignments reach W = 0.
        assert!((r.p_value - 2.0 / 32.0).abs() < 1e-15);
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0], &[1.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn wilcoxon_symmetric_in_arguments() {
        let a = [1.2, 3.4, 0.2, 5.5, 2.2, 7.0, 0.9];
        let b = [1.0, 3.9, 0.2, 4.0, 2.9, 6.1, 0.1];
        let x = wilcoxon_signed_rank(&a, &b).unwrap();
        let y = wilcoxon_signed_rank(&b, &a).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.n, 6);
    }
}
