//! Graded effectiveness metrics over runs and judgment sets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::trec_io::{AnnotationSet, DocId, FracGrade, Judgment, Run, RunEntry, TopicId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    Ndcg,
    Precision,
    Mrr,
    Recall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetricId {
    pub kind: MetricKind,
    pub cutoff: usize,
}

impl MetricId {
    pub fn new(kind: MetricKind, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::Config("metric cutoff must be >= 1".into()));
        }
        Ok(Self { kind, cutoff })
    }

    pub fn ndcg(cutoff: usize) -> Self {
        Self::new(MetricKind::Ndcg, cutoff).expect("positive cutoff")
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            MetricKind::Ndcg => "ndcg",
            MetricKind::Precision => "p",
            MetricKind::Mrr => "mrr",
            MetricKind::Recall => "r",
        };
        write!(f, "{name}@{}", self.cutoff)
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown metric {s:?}; expected e.g. ndcg@10, p@10, mrr@10, r@100"
            ))
        };
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let kind = match name.to_ascii_lowercase().as_str() {
            "ndcg" => MetricKind::Ndcg,
            "p" | "precision" => MetricKind::Precision,
            "mrr" | "rr" => MetricKind::Mrr,
            "r" | "recall" => MetricKind::Recall,
            _ => return Err(bad()),
        };
        let cutoff = k.parse().map_err(|_| bad())?;
        Self::new(kind, cutoff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gain {
    /// g = grade
    #[default]
    Linear,
    /// g = 2^grade - 1
    Exponential,
}

impl FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(Gain::Linear),
            "exp" | "exponential" => Ok(Gain::Exponential),
            _ => Err(Error::Config(format!("unknown gain {s:?} (linear|exp)"))),
        }
    }
}

impl Gain {
    fn apply(self, judgment: Judgment) -> f64 {
        let g = judgment.to_f64();
        match self {
            Gain::Linear => g,
            Gain::Exponential => g.exp2() - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    pub gain: Gain,
    /// A document is relevant for binary metrics iff its grade is at least this.
    pub binary_threshold: FracGrade,
    /// Drop unjudged documents from runs before scoring.
    pub judged_only: bool,
}

impl MetricOptions {
    pub fn new(gain: Gain, binary_threshold: FracGrade, judged_only: bool) -> Result<Self> {
        if binary_threshold.to_f64() <= 0.0 {
            return Err(Error::Config("binary threshold must lie in (0, 3]".into()));
        }
        Ok(Self {
            gain,
            binary_threshold,
            judged_only,
        })
    }
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            gain: Gain::Linear,
            binary_threshold: FracGrade::from_integer(2).expect("in range"),
            judged_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessReport {
    pub tag: String,
    pub metric: MetricId,
    pub per_topic: BTreeMap<TopicId, f64>,
    pub mean: f64,
}

/// Score for one topic, or `None` when the topic is skipped (recall and
/// reciprocal rank with no relevant documents).
pub(crate) fn topic_value(
    entries: &[RunEntry],
    judged: &BTreeMap<DocId, Judgment>,
    metric: MetricId,
    opts: &MetricOptions,
) -> Option<f64> {
    let k = metric.cutoff;
    let ranked = entries
        .iter()
        .map(|e| judged.get(&e.doc).copied())
        .filter(|j| !opts.judged_only || j.is_some())
        .take(k);
    let relevant = |j: &Option<Judgment>| j.is_some_and(|j| j.meets(opts.binary_threshold));

    match metric.kind {
        MetricKind::Ndcg => {
            let dcg: f64 = ranked
                .enumerate()
                .map(|(i, j)| j.map_or(0.0, |j| opts.gain.apply(j)) / (i as f64 + 2.0).log2())
                .sum();
            let mut ideal: Vec<Judgment> = judged.values().copied().collect();
            ideal.sort_unstable_by(|a, b| b.cmp(a));
            let idcg: f64 = ideal
                .into_iter()
                .take(k)
                .enumerate()
                .map(|(i, j)| opts.gain.apply(j) / (i as f64 + 2.0).log2())
                .sum();
            Some(if idcg > 0.0 { dcg / idcg } else { 0.0 })
        }
        MetricKind::Precision => {
            let hits = ranked.filter(relevant).count();
            Some(hits as f64 / k as f64)
        }
        MetricKind::Mrr => {
            let total = judged.values().filter(|j| j.meets(opts.binary_threshold)).count();
            if total == 0 {
                return None;
            }
            let mut ranked = ranked;
            Some(
                ranked
                    .position(|j| relevant(&j))
                    .map_or(0.0, |p| 1.0 / (p as f64 + 1.0)),
            )
        }
        MetricKind::Recall => {
            let total = judged.values().filter(|j| j.meets(opts.binary_threshold)).count();
            if total == 0 {
                return None;
            }
            let hits = ranked.filter(relevant).count();
            Some(hits as f64 / total as f64)
        }
    }
}

pub(crate) fn mean_of(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores one run. Topics are evaluated where the run retrieved something
/// and the judgments judge the topic; unjudged retrieved documents have gain 0.
pub fn compute_metric(
    run: &Run,
    judgments: &AnnotationSet,
    metric: MetricId,
    opts: &MetricOptions,
) -> Result<EffectivenessReport> {
    let mut per_topic = BTreeMap::new();
    let mut overlap = false;
    for (topic, entries) in run.by_topic() {
        let Some(judged) = judgments.topic(topic.as_str()).filter(|d| !d.is_empty()) else {
            continue;
        };
        overlap = true;
        if let Some(v) = topic_value(entries, judged, metric, opts) {
            per_topic.insert(topic.clone(), v);
        }
    }
    if !overlap {
        return Err(Error::NoOverlap {
            tag: run.tag().to_string(),
        });
    }
    let mean = mean_of(per_topic.values().copied()).ok_or_else(|| {
        Error::InsufficientData(format!(
            "{metric} skips every topic of {:?}: no relevant documents",
            run.tag()
        ))
    })?;
    Ok(EffectivenessReport {
        tag: run.tag().to_string(),
        metric,
        per_topic,
        mean,
    })
}

/// Removes unjudged documents per topic, preserving order.
pub fn filter_judged_only(run: &Run, judgments: &AnnotationSet) -> Run {
    let mut out = run.clone();
    out.retain(|topic, e| judgments.get(topic.as_str(), e.doc.as_str()).is_some());
    out
}

/// One report per (run, metric), ordered by (tag, metric).
pub fn evaluate_systems(
    runs: &[Run],
    judgments: &AnnotationSet,
    metrics: &[MetricId],
    opts: &MetricOptions,
) -> Result<Vec<EffectivenessReport>> {
    if runs.is_empty() || metrics.is_empty() {
        return Err(Error::InsufficientData("need at least one run and one metric".into()));
    }
    let mut units: Vec<(&Run, MetricId)> = runs.iter().flat_map(|r| metrics.iter().map(move |m| (r, *m))).collect();
    units.sort_by(|a, b| a.0.tag().cmp(b.0.tag()).then(a.1.cmp(&b.1)));
    units
        .into_par_iter()
        .map(|(run, metric)| compute_metric(run, judgments, metric, opts))
        .collect()
}

/// CSV with columns tag, metric, topic, value; the mean row uses topic `ALL`.
pub fn reports_to_csv(reports: &[EffectivenessReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tag", "metric", "topic", "value"])?;
    for r in reports {
        let metric = r.metric.to_string();
        for (topic, v) in &r.per_topic {
            w.write_record([r.tag.as_str(), &metric, topic.as_str(), &v.to_string()])?;
        }
        w.write_record([r.tag.as_str(), &metric, "ALL", &r.mean.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trec_io::{parse_qrels, parse_run};

    fn fixture(run: &str, qrels: &str) -> (Run, AnnotationSet) {
        (
            parse_run(run.as_bytes()).unwrap(),
            parse_qrels(qrels.as_bytes()).unwrap(),
        )
    }

    #[test]
    fn ndcg_of_zero_then_three() {
        let (run, qrels) = fixture("t Q0 a 1 2 s\nt Q0 b 2 1 s", "t 0 a 0\nt 0 b 3");
        let r = compute_metric(&run, &qrels, MetricId::ndcg(10), &MetricOptions::default()).unwrap();
        let expected = (3.0 / 3f64.log2()) / 3.0;
        assert!((r.mean - expected).abs() < 1e-12);
        assert!((r.mean - 0.63093).abs() < 1e-5);
    }

    #[test]
    fn ideal_order_scores_one() {
        let (run, qrels) = fixture(
            "t Q0 a 1 5 s\nt Q0 b 2 4 s\nt Q0 c 3 3 s\nt Q0 d 4 2 s",
            "t 0 a 3\nt 0 b 2\nt 0 c 2\nt 0 d 0",
        );
        let r = compute_metric(&run, &qrels, MetricId::ndcg(10), &MetricOptions::default()).unwrap();
        assert!((r.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_relevant_at_rank_two() {
        let (run, qrels) = fixture("t Q0 a 1 2 s\nt Q0 b 2 1 s", "t 0 a 0\nt 0 b 3");
        let opts = MetricOptions::default();
        let get = |m: &str| compute_metric(&run, &qrels, m.parse().unwrap(), &opts).unwrap().mean;
        assert_eq!(get("mrr@10"), 0.5);
        assert_eq!(get("p@10"), 0.1);
        assert_eq!(get("r@100"), 1.0);
    }

    #[test]
    fn zero_ideal_scores_zero_and_recall_skips() {
        let (run, qrels) = fixture("t Q0 a 1 2 s\nu Q0 b 1 1 s", "t 0 a 0\nu 0 b 3");
        let opts = MetricOptions::default();
        let ndcg = compute_metric(&run, &qrels, MetricId::ndcg(10), &opts).unwrap();
        assert_eq!(ndcg.per_topic["t"], 0.0);
        assert_eq!(ndcg.mean, 0.5);
        let recall = compute_metric(&run, &qrels, "r@100".parse().unwrap(), &opts).unwrap();
        assert_eq!(recall.per_topic.len(), 1);
        assert_eq!(recall.mean, 1.0);
    }

    #[test]
    fn no_overlap_is_error() {
        let (run, qrels) = fixture("t Q0 a 1 2 s", "u 0 a 1");
        assert!(matches!(
            compute_metric(&run, &qrels, MetricId::ndcg(10), &MetricOptions::default()),
            Err(Error::NoOverlap { .. })
        ));
    }

    #[test]
    fn judged_only_filter() {
        let (run, qrels) = fixture("t Q0 dA 1 3 s\nt Q0 dB 2 2 s\nt Q0 dC 3 1 s", "t 0 dA 1\nt 0 dC 2");
        let filtered = filter_judged_only(&run, &qrels);
        let entries = filtered.topic("t").unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!((entries[0].doc.as_str(), entries[0].rank), ("dA", 1));
        assert_eq!((entries[1].doc.as_str(), entries[1].rank), ("dC", 2));

        let full = parse_qrels("t 0 dA 1\nt 0 dB 0\nt 0 dC 2".as_bytes()).unwrap();
        assert_eq!(filter_judged_only(&run, &full), run);
    }

    #[test]
    fn exponential_gain() {
        let (run, qrels) = fixture("t Q0 a 1 2 s\nt Q0 b 2 1 s", "t 0 a 1\nt 0 b 3");
        let opts = MetricOptions {
            gain: Gain::Exponential,
            ..MetricOptions::default()
        };
        let r = compute_metric(&run, &qrels, MetricId::ndcg(10), &opts).unwrap();
        let dcg = 1.0 + 7.0 / 3f64.log2();
        let idcg = 7.0 + 1.0 / 3f64.log2();
        assert!((r.mean - dcg / idcg).abs() < 1e-12);
    }

    #[test]
    fn metric_ids_parse() {
        for s in ["ndcg@10", "p@10", "mrr@10", "r@100"] {
            assert_eq!(s.parse::<MetricId>().unwrap().to_string(), s);
        }
        assert!("ndcg@0".parse::<MetricId>().is_err());
        assert!("map".parse::<MetricId>().is_err());
    }

    #[test]
    fn batch_order_and_csv() {
        let (a, qrels) = fixture("t Q0 a 1 2 zz\nt Q0 b 2 1 zz", "t 0 a 0\nt 0 b 3");
        let b = a.clone().with_tag("aa");
        let metrics = ["p@10".parse().unwrap(), MetricId::ndcg(10)];
        let reports = evaluate_systems(&[a, b], &qrels, &metrics, &MetricOptions::default()).unwrap();
        let keys: Vec<_> = reports.iter().map(|r| (r.tag.clone(), r.metric.to_string())).collect();
        assert_eq!(
            keys,
            [("aa", "ndcg@10"), ("aa", "p@10"), ("zz", "ndcg@10"), ("zz", "p@10")]
                .map(|(a, b)| (a.to_string(), b.to_string()))
        );
        assert_eq!(reports[0].per_topic, reports[2].per_topic);
        let csv = reports_to_csv(&reports[..1]).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().last().unwrap().starts_with("aa,ndcg@10,ALL,"));
    }
}
