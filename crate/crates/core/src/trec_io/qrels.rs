use std::fmt::Write as _;
use std::io::BufRead;

use super::types::{AnnotationSet, DocId, FracGrade, Grade, Judgment, Provenance, TopicId};
use crate::error::{Error, Result};

fn qrels_fields(line_no: usize, line: &str) -> Result<Option<[&str; 4]>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    match fields.len() {
        0 => Ok(None),
        4 => Ok(Some([fields[0], fields[1], fields[2], fields[3]])),
        n => Err(Error::Parse {
            line: line_no,
            message: format!("expected 4 fields, found {n}"),
        }),
    }
}

fn ids(line_no: usize, topic: &str, doc: &str) -> Result<(TopicId, DocId)> {
    let wrap = |e: Error| Error::Parse {
        line: line_no,
        message: e.to_string(),
    };
    Ok((TopicId::new(topic).map_err(wrap)?, DocId::new(doc).map_err(wrap)?))
}

fn insert_line(set: &mut AnnotationSet, line_no: usize, topic: TopicId, doc: DocId, judgment: Judgment) -> Result<()> {
    set.insert(topic, doc, judgment).map_err(|e| match e {
        Error::Conflict { topic, doc, .. } => Error::Conflict {
            line: line_no,
            topic,
            doc,
        },
        other => other,
    })
}

/// Parses `<topic> <iter> <doc> <grade>` lines into an integer-graded set.
///
/// The iteration column is discarded. Repeating a (topic, doc) pair with the
/// same grade is tolerated; a different grade is a conflict.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<AnnotationSet> {
    let mut set = AnnotationSet::new("qrels", Provenance::Primary);
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let Some([topic, _iter, doc, grade]) = qrels_fields(line_no, &line)? else {
            continue;
        };
        let value: i64 = grade.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("grade {grade:?} is not an integer"),
        })?;
        let grade = Grade::try_from(value).map_err(|_| Error::GradeRange {
            line: line_no,
            value: grade.to_string(),
        })?;
        let (topic, doc) = ids(line_no, topic, doc)?;
        insert_line(&mut set, line_no, topic, doc, grade.into())?;
    }
    Ok(set)
}

/// Parses the aggregate format, whose grade column may be a decimal.
pub fn parse_aggregate_qrels<R: BufRead>(reader: R) -> Result<AnnotationSet> {
    let mut set = AnnotationSet::new("aggregate", Provenance::Aggregate);
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let Some([topic, _iter, doc, grade]) = qrels_fields(line_no, &line)? else {
            continue;
        };
        let value = FracGrade::parse_decimal(grade).map_err(|_| {
            if grade.parse::<f64>().is_ok() {
                Error::GradeRange {
                    line: line_no,
                    value: grade.to_string(),
                }
            } else {
                Error::Parse {
                    line: line_no,
                    message: format!("grade {grade:?} is not a decimal"),
                }
            }
        })?;
        let (topic, doc) = ids(line_no, topic, doc)?;
        let judgment = Judgment::from_ratio(value.ratio())?;
        insert_line(&mut set, line_no, topic, doc, judgment)?;
    }
    Ok(set)
}

/// Serializes an integer-graded set, sorted by (topic, doc).
pub fn export_qrels(set: &AnnotationSet) -> Result<String> {
    let mut out = String::new();
    for (topic, doc, judgment) in set.iter() {
        let grade = judgment
            .as_grade()
            .ok_or_else(|| Error::Format(format!("fractional grade for {topic}/{doc}; use the aggregate export")))?;
        writeln!(out, "{topic} 0 {doc} {grade}").expect("write to String");
    }
    Ok(out)
}

/// Serializes any set, printing fractional grades as decimals.
pub fn export_aggregate_qrels(set: &AnnotationSet) -> String {
    let mut out = String::new();
    for (topic, doc, judgment) in set.iter() {
        writeln!(out, "{topic} 0 {doc} {judgment}").expect("write to String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn parses_format_echo() {
        let set = parse_qrels("t1 0 dA 3\nt1 0 dB 0".as_bytes()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.get("t1", "dA").unwrap().as_grade().unwrap().value(), 3);
        assert_eq!(set.get("t1", "dB").unwrap().as_grade().unwrap().value(), 0);
    }

    #[test]
    fn empty_stream_is_empty_set() {
        assert!(parse_qrels("".as_bytes()).unwrap().is_empty());
        assert!(parse_qrels("\n  \n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn tabs_and_trailing_whitespace() {
        let set = parse_qrels("t1\t0\tdA\t2  \n".as_bytes()).unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn range_error_names_line() {
        match parse_qrels("t1 0 dA 5".as_bytes()) {
            Err(Error::GradeRange { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_qrels("t1 0 dA 1\nt1 0 dB -1".as_bytes()) {
            Err(Error::GradeRange { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_qrels("t1 0 dA".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_qrels("t1 0 dA 1\nt1 0 dB x".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_qrels("t1 0 dA 1\nt1 0 dA 2".as_bytes()),
            Err(Error::Conflict { line: 2, .. })
        ));
    }

    #[test]
    fn export_sorted_and_rejects_fractions() {
        let set = parse_qrels("t2 7 dZ 1\nt1 3 dA 2\n".as_bytes()).unwrap();
        assert_eq!(export_qrels(&set).unwrap(), "t1 0 dA 2\nt2 0 dZ 1\n");
        assert_eq!(export_qrels(&AnnotationSet::new("x", Provenance::Primary)).unwrap(), "");

        let mut agg = AnnotationSet::new("mean", Provenance::Aggregate);
        agg.set(
            TopicId::new("t").unwrap(),
            DocId::new("d").unwrap(),
            Judgment::from_ratio(Ratio::new(3, 2)).unwrap(),
        );
        assert!(matches!(export_qrels(&agg), Err(Error::Format(_))));
        let text = export_aggregate_qrels(&agg);
        assert_eq!(text, "t 0 d 1.5\n");
        assert_eq!(
            parse_aggregate_qrels(text.as_bytes()).unwrap().get("t", "d"),
            agg.get("t", "d")
        );
    }
}
