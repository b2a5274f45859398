//! Pooling several annotation sets into one by minimum, mean or maximum.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::trec_io::{AnnotationSet, DocId, Judgment, Provenance, TopicId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregateOp {
    Minimum,
    Mean,
    Maximum,
}

impl AggregateOp {
    pub const ALL: [AggregateOp; 3] = [AggregateOp::Minimum, AggregateOp::Mean, AggregateOp::Maximum];

    pub fn name(self) -> &'static str {
        match self {
            AggregateOp::Minimum => "minimum",
            AggregateOp::Mean => "mean",
            AggregateOp::Maximum => "maximum",
        }
    }
}

impl fmt::Display for AggregateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregateOp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" | "minimum" => Ok(AggregateOp::Minimum),
            "mean" => Ok(AggregateOp::Mean),
            "max" | "maximum" => Ok(AggregateOp::Maximum),
            _ => Err(Error::Config(format!(
                "unknown aggregate {s:?}; expected min, mean or max"
            ))),
        }
    }
}

/// Combines judgments per (topic, doc). Only sets that judged a pair
/// contribute to it; absence is never read as grade 0. The mean is kept
/// exact, so it may be fractional.
pub fn aggregate_judgments(sets: &[&AnnotationSet], op: AggregateOp) -> Result<AnnotationSet> {
    if sets.is_empty() {
        return Err(Error::InsufficientData("no annotation sets to aggregate".into()));
    }
    let mut grouped: BTreeMap<(&TopicId, &DocId), Vec<Judgment>> = BTreeMap::new();
    for set in sets {
        for (t, d, j) in set.iter() {
            grouped.entry((t, d)).or_default().push(j);
        }
    }
    let mut out = AnnotationSet::new(op.name(), Provenance::Aggregate);
    for ((t, d), values) in grouped {
        let combined = match op {
            AggregateOp::Minimum => *values.iter().min().expect("non-empty"),
            AggregateOp::Maximum => *values.iter().max().expect("non-empty"),
            AggregateOp::Mean => {
                let sum: Ratio<i64> = values.iter().map(|j| j.ratio()).sum();
                Judgment::from_ratio(sum / Ratio::from_integer(values.len() as i64))?
            }
        };
        out.set(t.clone(), d.clone(), combined);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trec_io::parse_qrels;

    fn set(text: &str) -> AnnotationSet {
        parse_qrels(text.as_bytes()).unwrap()
    }

    #[test]
    fn one_and_two() {
        let a = set("t 0 d 1");
        let b = set("t 0 d 2");
        let get = |op| aggregate_judgments(&[&a, &b], op).unwrap().get("t", "d").unwrap();
        assert_eq!(get(AggregateOp::Mean).to_string(), "1.5");
        assert_eq!(get(AggregateOp::Minimum).as_grade().unwrap().value(), 1);
        assert_eq!(get(AggregateOp::Maximum).as_grade().unwrap().value(), 2);
    }

    #[test]
    fn missing_judgments_do_not_count_as_zero() {
        let a = set("t 0 d 3\nt 0 e 2");
        let b = set("t 0 d 1");
        let min = aggregate_judgments(&[&a, &b], AggregateOp::Minimum).unwrap();
        assert_eq!(min.get("t", "e").unwrap().as_grade().unwrap().value(), 2);
        assert_eq!(min.len(), 2);
    }

    #[test]
    fn singleton_identity() {
        let a = set("t 0 d 3\nt 0 e 0\nu 0 f 1");
        for op in AggregateOp::ALL {
            let out = aggregate_judgments(&[&a], op).unwrap();
            assert_eq!(out.by_topic(), a.by_topic());
            assert_eq!(out.provenance(), Provenance::Aggregate);
            assert_eq!(aggregate_judgments(&[&out], op).unwrap(), out);
        }
        assert!(aggregate_judgments(&[], AggregateOp::Mean).is_err());
    }
}
