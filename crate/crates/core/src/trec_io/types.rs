use std::borrow::Borrow;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! token_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self> {
                let id = id.into();
                if id.is_empty() || id.chars().any(char::is_whitespace) {
                    return Err(Error::InvalidId(id));
                }
                Ok(Self(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;
            fn try_from(value: String) -> Result<Self> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(value: $name) -> String {
                value.0
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

token_id!(
    /// Opaque topic (query) identifier.
    TopicId
);
token_id!(
    /// Opaque document identifier.
    DocId
);

/// Integer relevance grade in `0..=3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Grade(u8);

impl Grade {
    pub const MAX: u8 = 3;
    pub const ALL: [Grade; 4] = [Grade(0), Grade(1), Grade(2), Grade(3)];

    pub fn new(value: u8) -> Result<Self> {
        if value > Self::MAX {
            return Err(Error::InvalidGrade(format!("{value} outside 0..=3")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<i64> for Grade {
    type Error = Error;
    fn try_from(value: i64) -> Result<Self> {
        u8::try_from(value)
            .map_err(|_| Error::InvalidGrade(format!("{value} outside 0..=3")))
            .and_then(Grade::new)
    }
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        g.0
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Exact rational relevance value in `[0, 3]`, produced by aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FracGrade(Ratio<i64>);

impl FracGrade {
    pub fn new(value: Ratio<i64>) -> Result<Self> {
        if value < Ratio::zero() || value > Ratio::from_integer(3) {
            return Err(Error::InvalidGrade(format!("{value} outside [0, 3]")));
        }
        Ok(Self(value))
    }

    pub fn from_integer(value: i64) -> Result<Self> {
        Self::new(Ratio::from_integer(value))
    }

    pub fn ratio(self) -> Ratio<i64> {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Parses a plain decimal (`1.5`, `2`, `0.3333`) exactly.
    pub fn parse_decimal(s: &str) -> Result<Self> {
        let bad = || Error::InvalidGrade(format!("{s:?} is not a decimal grade"));
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || frac_part.len() > 17
        {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let numer: i64 = digits.parse().map_err(|_| bad())?;
        let denom = 10i64.pow(frac_part.len() as u32);
        Self::new(Ratio::new(numer, denom))
    }

    /// Exact decimal when the denominator divides a power of ten, otherwise
    /// the shortest `f64` representation.
    pub fn to_decimal_string(self) -> String {
        let r = self.0;
        let mut denom = *r.denom();
        let (mut twos, mut fives) = (0u32, 0u32);
        while denom % 2 == 0 {
            denom /= 2;
            twos += 1;
        }
        while denom % 5 == 0 {
            denom /= 5;
            fives += 1;
        }
        if denom != 1 {
            return format!("{}", self.to_f64());
        }
        let places = twos.max(fives);
        if places == 0 {
            return r.numer().to_string();
        }
        let scaled = r * Ratio::from_integer(10i64.pow(places));
        let n = scaled.to_integer();
        let scale = 10i64.pow(places);
        let frac = format!("{:0width$}", n % scale, width = places as usize);
        format!("{}.{}", n / scale, frac)
    }
}

/// A single relevance judgment: an integer grade or an aggregated fraction.
///
/// Equality and ordering compare the numeric value, so `Grade(2)` equals a
/// fractional `2/1`.
#[derive(Debug, Clone, Copy)]
pub enum Judgment {
    Graded(Grade),
    Fractional(FracGrade),
}

impl Judgment {
    /// Collapses integral ratios to [`Judgment::Graded`].
    pub fn from_ratio(value: Ratio<i64>) -> Result<Self> {
        let frac = FracGrade::new(value)?;
        if value.is_integer() {
            Ok(Judgment::Graded(Grade::new(value.to_integer() as u8)?))
        } else {
            Ok(Judgment::Fractional(frac))
        }
    }

    pub fn ratio(self) -> Ratio<i64> {
        match self {
            Judgment::Graded(g) => Ratio::from_integer(g.value() as i64),
            Judgment::Fractional(f) => f.ratio(),
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Judgment::Graded(g) => g.value() as f64,
            Judgment::Fractional(f) => f.to_f64(),
        }
    }

    pub fn as_grade(self) -> Option<Grade> {
        match self {
            Judgment::Graded(g) => Some(g),
            Judgment::Fractional(f) if f.ratio().is_integer() => Grade::new(f.ratio().to_integer() as u8).ok(),
            Judgment::Fractional(_) => None,
        }
    }

    pub fn meets(self, threshold: FracGrade) -> bool {
        self.ratio() >= threshold.ratio()
    }
}

impl From<Grade> for Judgment {
    fn from(g: Grade) -> Self {
        Judgment::Graded(g)
    }
}

impl PartialEq for Judgment {
    fn eq(&self, other: &Self) -> bool {
        self.ratio() == other.ratio()
    }
}

impl Eq for Judgment {}

impl PartialOrd for Judgment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Judgment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ratio().cmp(&other.ratio())
    }
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Judgment::Graded(g) => write!(f, "{g}"),
            Judgment::Fractional(x) => f.write_str(&x.to_decimal_string()),
        }
    }
}

/// Where an annotation set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Primary,
    Secondary,
    Aggregate,
}

/// One annotator's judgments, at most one per (topic, doc).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    annotator: String,
    provenance: Provenance,
    judgments: BTreeMap<TopicId, BTreeMap<DocId, Judgment>>,
}

impl AnnotationSet {
    pub fn new(annotator: impl Into<String>, provenance: Provenance) -> Self {
        Self {
            annotator: annotator.into(),
            provenance,
            judgments: BTreeMap::new(),
        }
    }

    pub fn with_annotator(mut self, annotator: impl Into<String>) -> Self {
        self.annotator = annotator.into();
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn annotator(&self) -> &str {
        &self.annotator
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Inserts a judgment; an existing entry with a different value is a
    /// conflict and leaves the set untouched.
    pub fn insert(&mut self, topic: TopicId, doc: DocId, judgment: Judgment) -> Result<()> {
        let docs = self.judgments.entry(topic.clone()).or_default();
        match docs.get(&doc) {
            Some(existing) if *existing != judgment => Err(Error::Conflict {
                line: 0,
                topic: topic.to_string(),
                doc: doc.to_string(),
            }),
            _ => {
                docs.insert(doc, judgment);
                Ok(())
            }
        }
    }

    /// Inserts or overwrites.
    pub fn set(&mut self, topic: TopicId, doc: DocId, judgment: Judgment) {
        self.judgments.entry(topic).or_default().insert(doc, judgment);
    }

    pub fn get(&self, topic: &str, doc: &str) -> Option<Judgment> {
        self.judgments.get(topic).and_then(|d| d.get(doc)).copied()
    }

    pub fn topic(&self, topic: &str) -> Option<&BTreeMap<DocId, Judgment>> {
        self.judgments.get(topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = &TopicId> {
        self.judgments.keys()
    }

    pub fn by_topic(&self) -> &BTreeMap<TopicId, BTreeMap<DocId, Judgment>> {
        &self.judgments
    }

    pub fn judges_topic(&self, topic: &str) -> bool {
        self.judgments.get(topic).is_some_and(|d| !d.is_empty())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TopicId, &DocId, Judgment)> {
        self.judgments
            .iter()
            .flat_map(|(t, docs)| docs.iter().map(move |(d, j)| (t, d, *j)))
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when every judgment is an integer grade.
    pub fn is_integer(&self) -> bool {
        self.iter().all(|(_, _, j)| j.as_grade().is_some())
    }

    /// Copy restricted to the given topics.
    pub fn restrict_to<'a>(&self, topics: impl IntoIterator<Item = &'a TopicId>) -> Self {
        let mut out = Self::new(self.annotator.clone(), self.provenance);
        for t in topics {
            if let Some(docs) = self.judgments.get(t) {
                out.judgments.insert(t.clone(), docs.clone());
            }
        }
        out
    }

    /// Copy restricted to (topic, doc) pairs for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&TopicId, &DocId) -> bool) -> Self {
        let mut out = Self::new(self.annotator.clone(), self.provenance);
        for (t, d, j) in self.iter() {
            if keep(t, d) {
                out.set(t.clone(), d.clone(), j);
            }
        }
        out
    }

    pub(crate) fn insert_topic(&mut self, topic: TopicId, docs: BTreeMap<DocId, Judgment>) {
        self.judgments.insert(topic, docs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_reject_whitespace_and_empty() {
        assert!(TopicId::new("").is_err());
        assert!(DocId::new("a b").is_err());
        assert_eq!(TopicId::new("1037798").unwrap().as_str(), "1037798");
    }

    #[test]
    fn decimal_round_trip() {
        for s in ["1.5", "0", "3", "2.25", "0.125"] {
            let g = FracGrade::parse_decimal(s).unwrap();
            assert_eq!(g.to_decimal_string(), s);
        }
        let third = FracGrade::new(Ratio::new(4, 3)).unwrap();
        assert_eq!(third.to_decimal_string(), format!("{}", 4.0 / 3.0));
        assert!(FracGrade::parse_decimal("3.5").is_err());
        assert!(FracGrade::parse_decimal("-1").is_err());
        assert!(FracGrade::parse_decimal(".").is_err());
    }

    #[test]
    fn judgment_compares_by_value() {
        let two = Judgment::Graded(Grade::new(2).unwrap());
        let frac_two = Judgment::Fractional(FracGrade::from_integer(2).unwrap());
        assert_eq!(two, frac_two);
        let mid = Judgment::from_ratio(Ratio::new(3, 2)).unwrap();
        assert!(mid > Judgment::Graded(Grade::new(1).unwrap()) && mid < two);
        assert!(matches!(
            Judgment::from_ratio(Ratio::new(4, 2)).unwrap(),
            Judgment::Graded(_)
        ));
    }

    #[test]
    fn insert_detects_conflicts() {
        let mut set = AnnotationSet::new("a", Provenance::Primary);
        let t = TopicId::new("t").unwrap();
        let d = DocId::new("d").unwrap();
        set.insert(t.clone(), d.clone(), Grade::new(1).unwrap().into()).unwrap();
        set.insert(t.clone(), d.clone(), Grade::new(1).unwrap().into()).unwrap();
        assert!(set.insert(t, d, Grade::new(2).unwrap().into()).is_err());
        assert_eq!(set.len(), 1);
    }
}
