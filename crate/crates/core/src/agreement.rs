//! Inter-annotator agreement over co-judged (topic, doc) pairs.

use std::collections::BTreeSet;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::trec_io::{AnnotationSet, DocId, Grade, TopicId};

/// Category scheme used when comparing grades.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// The four grades 0..=3.
    Graded,
    /// Relevant iff grade >= threshold.
    Binary { threshold: Grade },
}

impl Scale {
    /// Default binarization for agreement: grade >= 1 counts as relevant.
    pub fn binary() -> Self {
        Scale::Binary {
            threshold: Grade::new(1).expect("in range"),
        }
    }

    pub fn categories(self) -> usize {
        match self {
            Scale::Graded => 4,
            Scale::Binary { .. } => 2,
        }
    }

    pub fn category(self, grade: Grade) -> usize {
        match self {
            Scale::Graded => grade.index(),
            Scale::Binary { threshold } => usize::from(grade >= threshold),
        }
    }
}

fn integer_grade(set: &AnnotationSet, topic: &TopicId, doc: &DocId) -> Result<Option<Grade>> {
    match set.get(topic.as_str(), doc.as_str()) {
        None => Ok(None),
        Some(j) => j.as_grade().map(Some).ok_or_else(|| {
            Error::Format(format!(
                "{}: fractional grade at {topic}/{doc}; agreement needs integer grades",
                set.annotator()
            ))
        }),
    }
}

/// Grades of every (topic, doc) judged by both sets, in (topic, doc) order.
pub fn co_judged(a: &AnnotationSet, b: &AnnotationSet) -> Result<Vec<(Grade, Grade)>> {
    let mut out = Vec::new();
    for (topic, doc, _) in a.iter() {
        if let Some(gb) = integer_grade(b, topic, doc)? {
            let ga = integer_grade(a, topic, doc)?.expect("present in a");
            out.push((ga, gb));
        }
    }
    Ok(out)
}

fn jaccard(pairs: &[(Grade, Grade)], in_a: impl Fn(Grade) -> bool, in_b: impl Fn(Grade) -> bool) -> Option<f64> {
    let (mut inter, mut union) = (0usize, 0usize);
    for &(ga, gb) in pairs {
        let (x, y) = (in_a(ga), in_b(gb));
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    (union > 0).then(|| inter as f64 / union as f64)
}

/// Jaccard overlap of judgments over co-judged pairs.
///
/// Binary: overlap of the pairs each set deems relevant. Graded: mean over
/// grades 1..=3 of the per-grade overlap, skipping grades neither set uses.
pub fn overlap(a: &AnnotationSet, b: &AnnotationSet, scale: Scale) -> Result<f64> {
    overlap_of_pairs(&co_judged(a, b)?, scale)
}

pub fn overlap_of_pairs(pairs: &[(Grade, Grade)], scale: Scale) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedAgreement("no co-judged pairs".into()));
    }
    match scale {
        Scale::Binary { threshold } => {
            let rel = |g: Grade| g >= threshold;
            jaccard(pairs, rel, rel)
                .ok_or_else(|| Error::UndefinedAgreement("neither set judged any pair relevant".into()))
        }
        Scale::Graded => {
            let per_grade: Vec<f64> = Grade::ALL[1..]
                .iter()
                .filter_map(|&g| jaccard(pairs, |x| x == g, |x| x == g))
                .collect();
            if per_grade.is_empty() {
                return Err(Error::UndefinedAgreement("no positive grades in either set".into()));
            }
            Ok(per_grade.iter().sum::<f64>() / per_grade.len() as f64)
        }
    }
}

/// Cohen's kappa between two annotation sets over co-judged pairs.
pub fn cohen_kappa(a: &AnnotationSet, b: &AnnotationSet, scale: Scale) -> Result<f64> {
    let pairs = co_judged(a, b)?;
    let (la, lb): (Vec<usize>, Vec<usize>) = pairs
        .iter()
        .map(|&(x, y)| (scale.category(x), scale.category(y)))
        .unzip();
    cohen_kappa_labels(&la, &lb, scale.categories())
}

/// Cohen's kappa over paired category labels in `0..categories`.
pub fn cohen_kappa_labels(a: &[usize], b: &[usize], categories: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "label vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} co-judged pairs; need at least 2",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let mut ma = vec![0usize; categories];
    let mut mb = vec![0usize; categories];
    let mut agree = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x >= categories || y >= categories {
            return Err(Error::Shape(format!("label outside 0..{categories}")));
        }
        ma[x] += 1;
        mb[y] += 1;
        agree += usize::from(x == y);
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = ma.iter().zip(&mb).map(|(&x, &y)| (x as f64 / n) * (y as f64 / n)).sum();
    if p_e >= 1.0 {
        // Both annotators used a single, shared category.
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Fleiss' kappa. Each item holds per-category rating counts; every item
/// must have the same total number of raters r >= 2.
pub fn fleiss_kappa(items: &[Vec<usize>]) -> Result<f64> {
    let first = items
        .first()
        .ok_or_else(|| Error::InsufficientData("no items".into()))?;
    let categories = first.len();
    let raters: usize = first.iter().sum();
    if raters < 2 {
        return Err(Error::Shape(format!("{raters} raters per item; need at least 2")));
    }
    let mut totals = vec![0usize; categories];
    let mut p_bar = 0.0;
    for (i, item) in items.iter().enumerate() {
        if item.len() != categories || item.iter().sum::<usize>() != raters {
            return Err(Error::Shape(format!(
                "item {i} does not have {raters} ratings over {categories} categories"
            )));
        }
        let agreeing: usize = item.iter().map(|&c| c * c.saturating_sub(1)).sum();
        p_bar += agreeing as f64 / (raters * (raters - 1)) as f64;
        for (t, &c) in totals.iter_mut().zip(item) {
            *t += c;
        }
    }
    let n = items.len() as f64;
    p_bar /= n;
    let all = n * raters as f64;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / all).powi(2)).sum();
    if p_e >= 1.0 {
        return if p_bar >= 1.0 {
            Ok(1.0)
        } else {
            Err(Error::Degenerate("expected agreement is 1 but observed is not".into()))
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Items for Fleiss' kappa: (topic, doc) pairs judged by every set.
pub fn fleiss_items(sets: &[&AnnotationSet], scale: Scale) -> Result<Vec<Vec<usize>>> {
    let Some((first, rest)) = sets.split_first() else {
        return Ok(Vec::new());
    };
    let mut items = Vec::new();
    'pairs: for (topic, doc, _) in first.iter() {
        let mut counts = vec![0usize; scale.categories()];
        for set in std::iter::once(first).chain(rest) {
            match integer_grade(set, topic, doc)? {
                Some(g) => counts[scale.category(g)] += 1,
                None => continue 'pairs,
            }
        }
        items.push(counts);
    }
    Ok(items)
}

/// Agreement summary for one annotator group.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub group: String,
    pub fleiss_4: f64,
    pub fleiss_2: f64,
    pub overlap_4: f64,
    pub overlap_2: f64,
    pub cohen_4: f64,
    pub cohen_2: f64,
    pub n_items: usize,
    pub n_topics: usize,
}

type PairStat<'a> = &'a dyn Fn(&[(Grade, Grade)]) -> Result<f64>;

/// Fleiss' kappa over pairs judged by every member, and unweighted means of
/// pairwise Cohen's kappa and overlap over member pairs with co-judged data.
pub fn group_report(group: &str, sets: &[&AnnotationSet], binary: Scale) -> Result<AgreementReport> {
    if sets.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "group {group:?} needs at least 2 annotators"
        )));
    }
    let items4 = fleiss_items(sets, Scale::Graded)?;
    if items4.is_empty() {
        return Err(Error::UndefinedAgreement(format!(
            "group {group:?} has no pair judged by all members"
        )));
    }
    let items2 = fleiss_items(sets, binary)?;
    let mut topics = BTreeSet::new();
    for (topic, doc, _) in sets[0].iter() {
        if sets[1..].iter().all(|s| s.get(topic.as_str(), doc.as_str()).is_some()) {
            topics.insert(topic.clone());
        }
    }

    let mut pairs = Vec::new();
    for (a, b) in sets.iter().tuple_combinations() {
        let p = co_judged(a, b)?;
        if p.len() >= 2 {
            pairs.push(p);
        }
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData(format!(
            "group {group:?} has no annotator pair with 2 co-judged items"
        )));
    }
    let mean_over = |f: PairStat| -> Result<f64> {
        let vals = pairs.iter().map(|p| f(p)).collect::<Result<Vec<_>>>()?;
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let kappa = |scale: Scale| {
        move |p: &[(Grade, Grade)]| {
            let (la, lb): (Vec<usize>, Vec<usize>) =
                p.iter().map(|&(x, y)| (scale.category(x), scale.category(y))).unzip();
            cohen_kappa_labels(&la, &lb, scale.categories())
        }
    };

    Ok(AgreementReport {
        group: group.to_string(),
        fleiss_4: fleiss_kappa(&items4)?,
        fleiss_2: fleiss_kappa(&items2)?,
        overlap_4: mean_over(&|p| overlap_of_pairs(p, Scale::Graded))?,
        overlap_2: mean_over(&|p| overlap_of_pairs(p, binary))?,
        cohen_4: mean_over(&kappa(Scale::Graded))?,
        cohen_2: mean_over(&kappa(binary))?,
        n_items: items4.len(),
        n_topics: topics.len(),
    })
}

/// Grade transitions: rows are primary grades, columns secondary grades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TransitionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl TransitionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, primary: Grade) -> u64 {
        self.counts[primary.index()].iter().sum()
    }
}

/// Each secondary set contributes one count per pair it co-judges with the primary.
pub fn transition_matrix(primary: &AnnotationSet, secondaries: &[&AnnotationSet]) -> Result<TransitionMatrix> {
    let mut m = TransitionMatrix::default();
    for s in secondaries {
        for (p, q) in co_judged(primary, s)? {
            m.counts[p.index()][q.index()] += 1;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradeRatio {
    pub ratios: [f64; 4],
    pub total: usize,
}

pub fn grade_ratios(set: &AnnotationSet) -> Result<GradeRatio> {
    if set.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no judgments", set.annotator())));
    }
    let mut counts = [0usize; 4];
    for (topic, doc, j) in set.iter() {
        let g = j
            .as_grade()
            .ok_or_else(|| Error::Format(format!("fractional grade at {topic}/{doc}; ratios need integer grades")))?;
        counts[g.index()] += 1;
    }
    let total = set.len();
    Ok(GradeRatio {
        ratios: counts.map(|c| c as f64 / total as f64),
        total,
    })
}
