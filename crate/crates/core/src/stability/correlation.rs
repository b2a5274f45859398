use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

/// Systems ranked by a metric, descending; equal values are ordered by tag
/// but remain ties for the correlation measures.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemOrdering {
    entries: Vec<(String, f64)>,
}

impl SystemOrdering {
    pub fn new(values: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut entries: Vec<(String, f64)> = values.into_iter().collect();
        let mut seen = HashSet::new();
        for (tag, v) in &entries {
            if !seen.insert(tag.as_str()) {
                return Err(Error::Domain(format!("duplicate system {tag:?}")));
            }
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite value for {tag:?}")));
            }
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(t, _)| t.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based position of each system.
    pub fn positions(&self) -> BTreeMap<&str, usize> {
        self.tags().enumerate().map(|(i, t)| (t, i + 1)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCorrelation {
    pub tau: f64,
    pub rho: f64,
    pub rbo: f64,
}

/// Kendall's tau-b, treating equal values as ties.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("tau needs two equal-length samples of size >= 2".into()));
    }
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {
                    tied_x += 1;
                    tied_y += 1;
                }
                (true, false) => tied_x += 1,
                (false, true) => tied_y += 1,
                (false, false) if (dx > 0.0) == (dy > 0.0) => concordant += 1,
                (false, false) => discordant += 1,
            }
        }
    }
    let n0 = (x.len() * (x.len() - 1) / 2) as i64;
    let denom = (((n0 - tied_x) * (n0 - tied_y)) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::Degenerate("tau undefined: one ordering is entirely tied".into()));
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Ranks in descending value order, tied values sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of tie-averaged ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("rho needs two equal-length samples of size >= 2".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("rho undefined: one ordering is entirely tied".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Extrapolated rank-biased overlap of two equal-length rankings without
/// duplicates, with persistence `p` in (0, 1).
pub fn rbo_ext<T: Eq + std::hash::Hash>(a: &[T], b: &[T], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("RBO persistence {p} outside (0, 1)")));
    }
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Domain("RBO needs two non-empty rankings of equal length".into()));
    }
    let mut seen_a = HashSet::new();
    let mut seen_b = HashSet::new();
    let mut overlap = 0usize;
    let mut sum = 0.0;
    let mut weight = 1.0;
    for (d, (x, y)) in a.iter().zip(b).enumerate() {
        if !seen_a.insert(x) || !seen_b.insert(y) {
            return Err(Error::Domain("RBO rankings contain duplicates".into()));
        }
        if x == y {
            overlap += 1;
        } else {
            overlap += usize::from(seen_b.contains(x)) + usize::from(seen_a.contains(y));
        }
        weight *= p;
        sum += overlap as f64 / (d + 1) as f64 * weight;
    }
    let k = a.len() as f64;
    Ok((overlap as f64 / k * weight + (1.0 - p) / p * sum).min(1.0))
}

/// Kendall's tau-b, Spearman's rho and extrapolated RBO between two
/// orderings of the same systems.
pub fn rank_correlations(a: &SystemOrdering, b: &SystemOrdering, rbo_p: f64) -> Result<RankCorrelation> {
    if a.len() < 2 {
        return Err(Error::Domain("need at least 2 systems".into()));
    }
    let b_values: BTreeMap<&str, f64> = b.entries().iter().map(|(t, v)| (t.as_str(), *v)).collect();
    if a.len() != b.len() || a.tags().any(|t| !b_values.contains_key(t)) {
        return Err(Error::Domain("orderings cover different systems".into()));
    }
    let x: Vec<f64> = a.entries().iter().map(|(_, v)| *v).collect();
    let y: Vec<f64> = a.tags().map(|t| b_values[t]).collect();
    let ta: Vec<&str> = a.tags().collect();
    let tb: Vec<&str> = b.tags().collect();
    Ok(RankCorrelation {
        tau: kendall_tau_b(&x, &y)?,
        rho: spearman_rho(&x, &y)?,
        rbo: rbo_ext(&ta, &tb, rbo_p)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ordering(pairs: &[(&str, f64)]) -> SystemOrdering {
        SystemOrdering::new(pairs.iter().map(|(t, v)| (t.to_string(), *v))).unwrap()
    }

    #[test]
    fn identity_and_reversal() {
        let a = ordering(&[("a", 3.0), ("b", 2.0), ("c", 1.0), ("d", 0.5)]);
        let same = rank_correlations(&a, &a, 0.9).unwrap();
        assert_eq!((same.tau, same.rho), (1.0, 1.0));
        assert!((same.rbo - 1.0).abs() < 1e-12);
        let rev = ordering(&[("a", 0.5), ("b", 1.0), ("c", 2.0), ("d", 3.0)]);
        let r = rank_correlations(&a, &rev, 0.9).unwrap();
        assert_eq!((r.tau, r.rho), (-1.0, -1.0));
    }

    #[test]
    fn one_adjacent_swap() {
        let a = ordering(&[("a", 3.0), ("b", 2.0), ("c", 1.0)]);
        let b = ordering(&[("a", 3.0), ("c", 2.0), ("b", 1.0)]);
        let r = rank_correlations(&a, &b, 0.9).unwrap();
        assert!((r.tau - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.rho - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rbo_matches_direct_sum() {
        let a = ["a", "b", "c", "d", "e"];
        let b = ["b", "a", "e", "c", "d"];
        let p: f64 = 0.8;
        let mut direct = 0.0;
        let mut x_k = 0.0;
        for d in 1..=5 {
            let sa: HashSet<_> = a[..d].iter().collect();
            let sb: HashSet<_> = b[..d].iter().collect();
            let x = sa.intersection(&sb).count() as f64;
            direct += x / d as f64 * p.powi(d as i32);
            x_k = x;
        }
        let expected = x_k / 5.0 * p.powi(5) + (1.0 - p) / p * direct;
        assert!((rbo_ext(&a, &b, p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ties_and_errors() {
        assert_eq!(average_ranks(&[0.5, 0.9, 0.5, 0.1]), vec![2.5, 1.0, 2.5, 4.0]);
        let a = ordering(&[("a", 1.0), ("b", 1.0)]);
        assert!(matches!(rank_correlations(&a, &a, 0.9), Err(Error::Degenerate(_))));
        let c = ordering(&[("a", 1.0), ("z", 0.0)]);
        let d = ordering(&[("a", 1.0), ("b", 0.0)]);
        assert!(matches!(rank_correlations(&c, &d, 0.9), Err(Error::Domain(_))));
        assert!(rbo_ext(&["a"], &["a"], 1.0).is_err());
        assert!(SystemOrdering::new(vec![("a".to_string(), 1.0), ("a".to_string(), 2.0)]).is_err());
    }

    #[test]
    fn tau_b_with_ties() {
        // x has one tied pair; hand count: C=4, D=1, n0=6, tx=1, ty=0.
        let x = [4.0, 3.0, 3.0, 1.0];
        let y = [4.0, 3.0, 1.0, 2.0];
        let expected = (4.0 - 1.0) / ((5.0f64) * 6.0).sqrt();
        assert!((kendall_tau_b(&x, &y).unwrap() - expected).abs() < 1e-15);
    }
}
