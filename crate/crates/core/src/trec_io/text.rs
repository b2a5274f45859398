use std::collections::BTreeMap;
use std::io::BufRead;

use super::types::{DocId, TopicId};
use crate::error::{Error, Result};

fn parse_tab_records<R: BufRead, K>(reader: R, make_key: impl Fn(&str) -> Result<K>) -> Result<BTreeMap<K, String>>
where
    K: Ord + std::fmt::Display,
{
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected <id>\\t<text>".into(),
        })?;
        let key = make_key(id.trim()).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let text = text.trim_end().to_string();
        if let Some(prev) = out.get(&key) {
            if *prev != text {
                return Err(Error::Conflict {
                    line: line_no,
                    topic: key.to_string(),
                    doc: String::new(),
                });
            }
        }
        out.insert(key, text);
    }
    Ok(out)
}

/// Parses a topic list: `<topic>\t<title>` per line.
pub fn parse_topics<R: BufRead>(reader: R) -> Result<BTreeMap<TopicId, String>> {
    parse_tab_records(reader, |s| TopicId::new(s))
}

/// Parses a passage corpus: `<doc>\t<text>` per line.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<BTreeMap<DocId, String>> {
    parse_tab_records(reader, |s| DocId::new(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topics_and_corpus() {
        let topics = parse_topics(
            "1037798\twho is robert gray\n\n19335\tanthropological definition of environment\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(topics.len(), 2);
        assert_eq!(topics["19335"], "anthropological definition of environment");
        let corpus = parse_corpus("d1\ttext with\ttab\n".as_bytes()).unwrap();
        assert_eq!(corpus["d1"], "text with\ttab");
        assert!(matches!(
            parse_topics("no-tab-here".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
