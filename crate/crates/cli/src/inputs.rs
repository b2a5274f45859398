//! Loading judgments, runs and run manifests.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use shelflife_core::trec_io::{read_qrels, read_run, AnnotationSet, Provenance, Run};

/// Ranker family, used to label system pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Llm,
    Neural,
    Lexical,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::Llm => "LLM",
            Category::Neural => "Neural",
            Category::Lexical => "Lexical",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "llm" => Ok(Category::Llm),
            "neural" => Ok(Category::Neural),
            "lexical" => Ok(Category::Lexical),
            _ => bail!("unknown category {s:?} (lexical|neural|llm)"),
        }
    }
}

/// Label for a pair of systems, e.g. "LLM-Neural"; families listed LLM, Neural, Lexical.
pub fn pair_label(a: Option<Category>, b: Option<Category>) -> String {
    match (a, b) {
        (Some(a), Some(b)) => {
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            format!("{x}-{y}")
        }
        _ => "unknown".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemRun {
    pub run: Run,
    pub category: Option<Category>,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    path: PathBuf,
    #[serde(default)]
    tag: Option<String>,
    #[serde(default)]
    category: Option<String>,
}

/// Reads a manifest CSV with header `path,tag,category`; relative paths
/// resolve against the manifest's directory, and an empty tag keeps the run's own.
pub fn read_manifest(path: &Path) -> Result<Vec<SystemRun>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let file = File::open(path).with_context(|| format!("opening manifest {}", path.display()))?;
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_reader(BufReader::new(file)).deserialize().enumerate() {
        let row: ManifestRow = row.with_context(|| format!("manifest {} row {}", path.display(), i + 2))?;
        let run_path = if row.path.is_absolute() {
            row.path.clone()
        } else {
            base.join(&row.path)
        };
        let mut run = read_run(&run_path).with_context(|| format!("reading run {}", run_path.display()))?;
        if let Some(tag) = row.tag.filter(|t| !t.trim().is_empty()) {
            run = run.with_tag(tag.trim());
        }
        let category = row
            .category
            .filter(|c| !c.trim().is_empty())
            .map(|c| c.trim().parse())
            .transpose()
            .with_context(|| format!("manifest {} row {}", path.display(), i + 2))?;
        out.push(SystemRun { run, category });
    }
    Ok(out)
}

/// Runs from explicit files and/or a manifest; tags must be unique. A
/// `.csv` file among `files` is read as a manifest.
pub fn load_runs(files: &[PathBuf], manifest: Option<&Path>) -> Result<Vec<SystemRun>> {
    let mut runs = Vec::new();
    for f in files {
        if f.extension().is_some_and(|e| e == "csv") {
            runs.extend(read_manifest(f)?);
            continue;
        }
        let run = read_run(f).with_context(|| format!("reading run {}", f.display()))?;
        runs.push(SystemRun { run, category: None });
    }
    if let Some(m) = manifest {
        runs.extend(read_manifest(m)?);
    }
    if runs.is_empty() {
        bail!("no runs given (use --runs or --manifest)");
    }
    let mut seen = HashSet::new();
    for r in &runs {
        if !seen.insert(r.run.tag().to_string()) {
            bail!("duplicate run tag {:?}", r.run.tag());
        }
    }
    Ok(runs)
}

pub fn load_qrels(path: &Path, provenance: Provenance) -> Result<AnnotationSet> {
    read_qrels(path, provenance).with_context(|| format!("reading qrels {}", path.display()))
}

/// Secondary sets from explicit files plus every `*.qrels` file in `dir`,
/// each labelled with its file stem.
pub fn load_secondaries(files: &[PathBuf], dir: Option<&Path>) -> Result<Vec<AnnotationSet>> {
    let mut paths: Vec<PathBuf> = files.to_vec();
    if let Some(dir) = dir {
        let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        found.retain(|p| p.extension().is_some_and(|e| e == "qrels"));
        found.sort();
        paths.extend(found);
    }
    let sets = paths
        .iter()
        .map(|p| load_qrels(p, Provenance::Secondary))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = HashSet::new();
    for s in &sets {
        if !seen.insert(s.annotator().to_string()) {
            bail!("two secondary files share the label {:?}", s.annotator());
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_labels_are_ordered() {
        use Category::*;
        assert_eq!(pair_label(Some(Neural), Some(Llm)), "LLM-Neural");
        assert_eq!(pair_label(Some(Lexical), Some(Neural)), "Neural-Lexical");
        assert_eq!(pair_label(Some(Lexical), Some(Lexical)), "Lexical-Lexical");
        assert_eq!(pair_label(None, Some(Llm)), "unknown");
        assert!("transformer".parse::<Category>().is_err());
    }

    #[test]
    fn manifest_resolves_relative_paths_and_overrides_tags() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.run"), "1 Q0 d1 1 2.0 orig\n").unwrap();
        std::fs::write(dir.path().join("b.run"), "1 Q0 d1 1 2.0 other\n").unwrap();
        std::fs::write(
            dir.path().join("m.csv"),
            "path,tag,category\na.run,bm25,lexical\nb.run,,llm\n",
        )
        .unwrap();
        let runs = read_manifest(&dir.path().join("m.csv")).unwrap();
        assert_eq!(runs[0].run.tag(), "bm25");
        assert_eq!(runs[0].category, Some(Category::Lexical));
        assert_eq!(runs[1].run.tag(), "other");
        let dup = load_runs(&[dir.path().join("a.run"), dir.path().join("a.run")], None);
        assert!(dup.is_err());
    }
}
