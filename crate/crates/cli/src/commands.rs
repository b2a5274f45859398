use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use itertools::Itertools;

use shelflife_core::aggregation::{aggregate_judgments, AggregateOp};
use shelflife_core::agreement::{grade_ratios, group_report, transition_matrix, Scale};
use shelflife_core::combinations::{
    enumerate_combinations, sample_combinations, CombinationMode, CombinationSpec, SampleConfig, TopicCandidates,
};
use shelflife_core::metrics::{compute_metric, evaluate_systems, filter_judged_only, MetricId, MetricOptions};
use shelflife_core::oracle::{build_oracle_run, oracle_stability};
use shelflife_core::pooling::{
    assign_topics, build_secondary_pool, parse_tasks, task_lists, PairingMode, PoolConfig, SecondaryPool,
};
use shelflife_core::stability::{
    correlation_summary, official_means, paired_t_test_bonferroni, rank_correlations, spec_samples,
    swap_analysis_specs, system_means, CombinationEvaluator, RankDeltaReport, SystemOrdering,
};
use shelflife_core::trec_io::{
    export_aggregate_qrels, export_run, parse_corpus, parse_topics, AnnotationSet, Grade, Provenance, Run,
};
use shelflife_core::Error as CoreError;
use shelflife_service::store::FileLogStore;
use shelflife_service::{AnnotationService, Roster, ServiceSetup};

use crate::args::{parse_ops, Cli, Command, JudgmentArgs, MetricArgs, RunArgs, SampleArgs};
use crate::inputs::{load_qrels, load_runs, load_secondaries, pair_label, Category, SystemRun};
use crate::report::{Cell, Table};
use crate::row;

/// Environment variable holding the service admin token.
pub const ADMIN_TOKEN_ENV: &str = "SHELFLIFE_ADMIN_TOKEN";

/// Oracle comparisons per system: one per aggregate.
const ORACLE_COMPARISONS: usize = 3;

/// Executes a parsed command line and returns the paths it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let seed = cli.seed;
    let out = cli.out.as_path();
    let mut written = Vec::new();
    let tables = match cli.command {
        Command::Pool {
            qrels,
            sample,
            min_grade,
        } => pool(&qrels, sample, min_grade, seed)?,
        Command::Assign {
            qrels,
            annotators,
            roster,
            sample,
            min_grade,
            pairing,
        } => assign(&qrels, annotators, roster.as_deref(), sample, min_grade, pairing, seed)?,
        Command::Serve {
            tasks,
            topics,
            corpus,
            roster,
            log,
            addr,
            search_url,
        } => {
            let setup = ServiceSetup {
                tasks: parse_tasks(open(&tasks)?).with_context(|| format!("reading tasks {}", tasks.display()))?,
                topics: parse_topics(open(&topics)?).with_context(|| format!("reading topics {}", topics.display()))?,
                corpus: parse_corpus(open(&corpus)?).with_context(|| format!("reading corpus {}", corpus.display()))?,
                roster: Roster::parse(open(&roster)?)
                    .with_context(|| format!("reading roster {}", roster.display()))?,
                admin_token: std::env::var(ADMIN_TOKEN_ENV).ok(),
                seed,
                search_url_template: search_url,
            };
            let store = FileLogStore::open(&log).with_context(|| format!("opening log {}", log.display()))?;
            let service = AnnotationService::open(setup, Box::new(store))?;
            eprintln!("serving on http://{addr}");
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(shelflife_service::http::serve(addr, Arc::new(service)))?;
            return Ok(written);
        }
        Command::Agreement {
            judgments,
            agreement_threshold,
        } => vec![agreement(&judgments, agreement_threshold)?],
        Command::Ratios { qrels } => vec![ratios(&qrels)?],
        Command::Transitions { judgments } => vec![transitions(&judgments)?],
        Command::Aggregate {
            judgments,
            op,
            include_primary,
        } => {
            let (tables, files) = aggregate(&judgments, &op, include_primary)?;
            written.extend(write_files(out, files)?);
            tables
        }
        Command::Combos { judgments, sample } => combos(&judgments, &sample, seed)?,
        Command::Swap {
            runs,
            judgments,
            sample,
            metric,
        } => swap(&runs, &judgments, &sample, &metric, seed)?,
        Command::Correlate {
            runs,
            reference,
            candidate,
            primary,
            secondary,
            sets,
            samples,
            metric,
            rbo_p,
        } => {
            let runs = load_runs(&runs.runs, runs.manifest.as_deref())?;
            match reference {
                Some(reference) => vec![correlate_sets(&runs, &reference, &candidate, &metric, rbo_p)?],
                None => {
                    let judgments = JudgmentArgs {
                        primary: primary.context("--primary or --reference is required")?,
                        secondary,
                        sets,
                    };
                    vec![correlate_combinations(
                        &runs, &judgments, samples, &metric, rbo_p, seed,
                    )?]
                }
            }
        }
        Command::Rankdelta {
            runs,
            judgments,
            sample,
            metric,
        } => rankdelta(&runs, &judgments, &sample, &metric, seed)?,
        Command::Oracle {
            runs,
            judgments,
            metric,
            shuffles,
            include_primary,
        } => {
            let (tables, files) = oracle(&runs, &judgments, &metric, shuffles, include_primary, seed)?;
            written.extend(write_files(out, files)?);
            tables
        }
        Command::Evaluate { runs, qrels, metric } => vec![evaluate(&runs, &qrels, &metric)?],
    };
    for t in &tables {
        written.extend(t.write(out)?);
    }
    Ok(written)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_files(dir: &Path, files: Vec<(String, String)>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}

fn options(m: &MetricArgs) -> Result<MetricOptions> {
    Ok(MetricOptions::new(m.gain, m.binary_threshold, m.judged_only)?)
}

fn single_metric(m: &MetricArgs) -> Result<MetricId> {
    match m.metric[..] {
        [one] => Ok(one),
        _ => bail!("this command takes exactly one --metric"),
    }
}

struct Judgments {
    primary: AnnotationSet,
    secondaries: Vec<AnnotationSet>,
}

fn load_judgments(args: &JudgmentArgs) -> Result<Judgments> {
    let primary = load_qrels(&args.primary, Provenance::Primary)?;
    let secondaries = load_secondaries(&args.secondary, args.sets.as_deref())?;
    ensure!(
        !secondaries.is_empty(),
        "no secondary judgments given (use --secondary or --sets)"
    );
    ensure!(
        secondaries.iter().all(|s| s.annotator() != primary.annotator()),
        "a secondary set shares the primary's label {:?}",
        primary.annotator()
    );
    Ok(Judgments { primary, secondaries })
}

/// Runs prepared for combination analyses. Under judged-only, documents the
/// primary did not judge are removed up front, so every combination scores
/// the same ranked lists.
fn combination_runs(runs: &[SystemRun], primary: &AnnotationSet, opts: &mut MetricOptions) -> Vec<Run> {
    let judged_only = std::mem::replace(&mut opts.judged_only, false);
    runs.iter()
        .map(|r| {
            if judged_only {
                filter_judged_only(&r.run, primary)
            } else {
                r.run.clone()
            }
        })
        .collect()
}

/// Every combination when the space holds at most `samples`, else a seeded sample.
fn plan_specs(
    candidates: &TopicCandidates<'_>,
    mode: CombinationMode,
    samples: usize,
    seed: u64,
) -> Result<(Vec<CombinationSpec>, bool)> {
    let topics = candidates.topics();
    ensure!(
        !topics.is_empty(),
        "no topic has judgments for {} combinations",
        mode.label()
    );
    let counts = candidates.choice_counts();
    match enumerate_combinations(&topics, &counts) {
        Ok(all) if all.total() <= samples as u64 => Ok((all.collect(), true)),
        Ok(_) | Err(CoreError::EnumerationTooLarge(_)) => {
            let cfg = SampleConfig { samples, seed, mode };
            Ok((sample_combinations(&cfg, &topics, &counts)?, false))
        }
        Err(e) => Err(e.into()),
    }
}

fn categories(runs: &[SystemRun]) -> BTreeMap<String, Option<Category>> {
    runs.iter().map(|r| (r.run.tag().to_string(), r.category)).collect()
}

fn category_cell(c: Option<Category>) -> Cell {
    Cell::Text(c.map(|c| c.label().to_string()).unwrap_or_default())
}

fn population_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn pool_config(sample: usize, min_grade: u8, seed: u64) -> Result<PoolConfig> {
    Ok(PoolConfig {
        nonrel_sample_per_annotator: sample,
        seed,
        min_grade_included: Grade::new(min_grade)?,
        ..PoolConfig::default()
    })
}

fn build_pool(qrels: &Path, sample: usize, min_grade: u8, seed: u64) -> Result<SecondaryPool> {
    let primary = load_qrels(qrels, Provenance::Primary)?;
    let pool = build_secondary_pool(&primary, &pool_config(sample, min_grade, seed)?)?;
    for w in &pool.warnings {
        eprintln!("warning: {w}");
    }
    Ok(pool)
}

fn pool(qrels: &Path, sample: usize, min_grade: u8, seed: u64) -> Result<Vec<Table>> {
    let pool = build_pool(qrels, sample, min_grade, seed)?;
    let mut docs = Table::new("pool", &["topic", "doc", "part"]);
    let mut sizes = Table::new("pool_sizes", &["topic", "core_size", "sample_size", "per_annotator"]);
    for (topic, p) in &pool.topics {
        for d in &p.core {
            docs.push(row![topic.as_str(), d.as_str(), "core"]);
        }
        for (slot, s) in p.samples.iter().enumerate() {
            for d in s {
                docs.push(row![topic.as_str(), d.as_str(), format!("sample{slot}")]);
            }
        }
        let sample_size = p.samples.iter().map(Vec::len).max().unwrap_or(0);
        sizes.push(row![topic.as_str(), p.core.len(), sample_size, p.per_annotator_size()]);
    }
    Ok(vec![docs, sizes])
}

fn assign(
    qrels: &Path,
    mut annotators: Vec<String>,
    roster: Option<&Path>,
    sample: usize,
    min_grade: u8,
    pairing: PairingMode,
    seed: u64,
) -> Result<Vec<Table>> {
    if let Some(path) = roster {
        let r = Roster::parse(open(path)?).with_context(|| format!("reading roster {}", path.display()))?;
        annotators.extend(r.annotators());
    }
    let pool = build_pool(qrels, sample, min_grade, seed)?;
    let assignment = assign_topics(&pool.sizes(), &annotators, seed, pairing)?;

    let mut table = Table::new(
        "assignment",
        &["topic", "annotator_a", "annotator_b", "core_size", "sample_size"],
    );
    for (topic, (a, b)) in &assignment.topics {
        let p = &pool.topics[topic];
        let sample_size = p.samples.iter().map(Vec::len).max().unwrap_or(0);
        table.push(row![topic.as_str(), a, b, p.core.len(), sample_size]);
    }
    let mut loads = Table::new("loads", &["annotator", "load", "topics"]);
    for (who, load) in &assignment.loads {
        loads.push(row![who, *load, assignment.topics_of(who).count()]);
    }
    let mut tasks = Table::new("tasks", &["annotator", "topic", "doc"]);
    for t in task_lists(&assignment, &pool)?.values().flatten() {
        tasks.push(row![&t.annotator, t.topic.as_str(), t.doc.as_str()]);
    }
    eprintln!("load gap: {}", assignment.load_gap());
    Ok(vec![table, loads, tasks])
}

/// Per secondary pair sharing topics: the pair alone and the pair with the
/// primary, every member restricted to the topics the pair shares.
fn agreement_groups(j: &Judgments) -> Vec<(String, Vec<AnnotationSet>)> {
    let mut groups = Vec::new();
    for (a, b) in j.secondaries.iter().tuple_combinations() {
        let shared: Vec<_> = a.topics().filter(|t| b.judges_topic(t.as_str())).cloned().collect();
        if shared.is_empty() {
            continue;
        }
        let (pa, pb) = (a.restrict_to(&shared), b.restrict_to(&shared));
        let p = j.primary.restrict_to(&shared);
        groups.push((
            format!("{}+{}+{}", j.primary.annotator(), a.annotator(), b.annotator()),
            vec![p, pa.clone(), pb.clone()],
        ));
        groups.push((format!("{}+{}", a.annotator(), b.annotator()), vec![pa, pb]));
    }
    groups
}

fn agreement(args: &JudgmentArgs, threshold: u8) -> Result<Table> {
    let j = load_judgments(args)?;
    let binary = Scale::Binary {
        threshold: Grade::new(threshold)?,
    };
    let groups = agreement_groups(&j);
    ensure!(!groups.is_empty(), "no two secondary sets share a topic");
    let mut t = Table::new(
        "agreement",
        &[
            "group",
            "n_topics",
            "n_items",
            "fleiss_4",
            "fleiss_2",
            "overlap_4",
            "overlap_2",
            "cohen_4",
            "cohen_2",
        ],
    );
    for (name, sets) in groups {
        let refs: Vec<&AnnotationSet> = sets.iter().collect();
        let r = group_report(&name, &refs, binary).with_context(|| format!("agreement for group {name}"))?;
        t.push(row![
            r.group,
            r.n_topics,
            r.n_items,
            r.fleiss_4,
            r.fleiss_2,
            r.overlap_4,
            r.overlap_2,
            r.cohen_4,
            r.cohen_2
        ]);
    }
    Ok(t)
}

fn ratios(files: &[PathBuf]) -> Result<Table> {
    let mut t = Table::new("ratios", &["set", "grade_0", "grade_1", "grade_2", "grade_3", "total"]);
    for f in files {
        let set = load_qrels(f, Provenance::Secondary)?;
        let r = grade_ratios(&set).with_context(|| format!("grade ratios of {}", f.display()))?;
        t.push(row![
            set.annotator(),
            r.ratios[0],
            r.ratios[1],
            r.ratios[2],
            r.ratios[3],
            r.total
        ]);
    }
    Ok(t)
}

fn transitions(args: &JudgmentArgs) -> Result<Table> {
    let j = load_judgments(args)?;
    let refs: Vec<&AnnotationSet> = j.secondaries.iter().collect();
    let m = transition_matrix(&j.primary, &refs)?;
    let mut t = Table::new(
        "transitions",
        &["primary_grade", "secondary_grade", "count", "row_fraction"],
    );
    for p in Grade::ALL {
        let row_sum = m.row_sum(p);
        for s in Grade::ALL {
            let count = m.counts[p.index()][s.index()];
            let frac = if row_sum == 0 {
                0.0
            } else {
                count as f64 / row_sum as f64
            };
            t.push(row![p.value(), s.value(), count, frac]);
        }
    }
    Ok(t)
}

fn aggregation_inputs(j: &Judgments, include_primary: bool) -> Vec<&AnnotationSet> {
    include_primary
        .then_some(&j.primary)
        .into_iter()
        .chain(&j.secondaries)
        .collect()
}

type Files = Vec<(String, String)>;

fn aggregate(args: &JudgmentArgs, ops: &str, include_primary: bool) -> Result<(Vec<Table>, Files)> {
    let j = load_judgments(args)?;
    let sets = aggregation_inputs(&j, include_primary);
    let mut t = Table::new(
        "aggregate_summary",
        &["op", "topics", "judgments", "fractional", "mean_grade"],
    );
    let mut files = Vec::new();
    for op in parse_ops(ops)? {
        let agg = aggregate_judgments(&sets, op)?;
        let fractional = agg.iter().filter(|(_, _, j)| j.as_grade().is_none()).count();
        let mean = agg.iter().map(|(_, _, j)| j.to_f64()).sum::<f64>() / agg.len().max(1) as f64;
        t.push(row![op.name(), agg.topics().count(), agg.len(), fractional, mean]);
        files.push((format!("aggregate_{}.qrels", op.name()), export_aggregate_qrels(&agg)));
    }
    Ok((vec![t], files))
}

fn combos(args: &JudgmentArgs, sample: &SampleArgs, seed: u64) -> Result<Vec<Table>> {
    let j = load_judgments(args)?;
    let candidates = TopicCandidates::for_mode(sample.mode, &j.primary, &j.secondaries);
    let (specs, enumerated) = plan_specs(&candidates, sample.mode, sample.samples, seed)?;
    let mut t = Table::new("combinations", &["combination", "topic", "annotator"]);
    for (i, spec) in specs.iter().enumerate() {
        for (topic, &c) in &spec.choices {
            let set = candidates
                .sets(topic.as_str())
                .and_then(|s| s.get(c))
                .context("spec outside candidates")?;
            t.push(row![i, topic.as_str(), set.annotator()]);
        }
    }
    let mut summary = Table::new(
        "combinations_summary",
        &["mode", "topics", "space", "combinations", "enumerated"],
    );
    let space = candidates
        .choice_counts()
        .values()
        .try_fold(1u64, |acc, &c| acc.checked_mul(c as u64))
        .map_or_else(|| "overflow".to_string(), |v| v.to_string());
    summary.push(row![
        sample.mode.label(),
        candidates.topics().len(),
        space,
        specs.len(),
        enumerated
    ]);
    Ok(vec![t, summary])
}

/// Per-combination system means plus the primary's, over the same topics.
struct Samples {
    systems: Vec<String>,
    official: Vec<f64>,
    samples: Vec<Vec<f64>>,
    evaluator: CombinationEvaluator,
    specs: Vec<CombinationSpec>,
}

fn combination_samples(
    runs: &[SystemRun],
    j: &Judgments,
    mode: CombinationMode,
    samples: usize,
    metric: &MetricArgs,
    seed: u64,
) -> Result<Samples> {
    let id = single_metric(metric)?;
    let mut opts = options(metric)?;
    let runs = combination_runs(runs, &j.primary, &mut opts);
    let candidates = TopicCandidates::for_mode(mode, &j.primary, &j.secondaries);
    let (specs, _) = plan_specs(&candidates, mode, samples, seed)?;
    let evaluator = CombinationEvaluator::new(&runs, &candidates, id, &opts);
    let official = official_means(&runs, &j.primary, &candidates, id, &opts)?;
    let per_spec = spec_samples(&evaluator, &specs)?;
    Ok(Samples {
        systems: evaluator.systems().to_vec(),
        official,
        samples: per_spec,
        evaluator,
        specs,
    })
}

fn swap(
    runs: &RunArgs,
    args: &JudgmentArgs,
    sample: &SampleArgs,
    metric: &MetricArgs,
    seed: u64,
) -> Result<Vec<Table>> {
    let runs = load_runs(&runs.runs, runs.manifest.as_deref())?;
    let j = load_judgments(args)?;
    let s = combination_samples(&runs, &j, sample.mode, sample.samples, metric, seed)?;
    let analysis = swap_analysis_specs(&s.evaluator, &s.specs)?;
    let cats = categories(&runs);
    let m = &analysis.matrix;

    let mut t = Table::new(
        "swap",
        &[
            "system_a",
            "system_b",
            "category_pair",
            "official_delta",
            "mean_abs_delta",
            "wins_a",
            "wins_b",
            "swap_probability",
        ],
    );
    for (a, b) in (0..m.systems.len()).tuple_combinations() {
        let (ta, tb) = (&m.systems[a], &m.systems[b]);
        t.push(row![
            ta,
            tb,
            pair_label(cats[ta], cats[tb]),
            s.official[a] - s.official[b],
            analysis.mean_abs_delta[a][b],
            m.counts[a][b],
            m.counts[b][a],
            m.swap_probability(a, b),
        ]);
    }
    let mut v = Table::new(
        "system_variance",
        &["system", "category", "official", "mean", "sd", "min", "max"],
    );
    for (i, tag) in s.systems.iter().enumerate() {
        let scores = &analysis.scores[i];
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.push(vec![
            tag.into(),
            category_cell(cats[tag]),
            s.official[i].into(),
            mean.into(),
            population_sd(scores).into(),
            min.into(),
            max.into(),
        ]);
    }
    Ok(vec![t, v])
}

const CORRELATION_HEADERS: [&str; 7] = ["reference", "candidate", "tau", "rho", "rbo", "systems", "combinations"];

fn correlate_sets(
    runs: &[SystemRun],
    reference: &Path,
    candidates: &[PathBuf],
    metric: &MetricArgs,
    rbo_p: f64,
) -> Result<Table> {
    ensure!(!candidates.is_empty(), "--reference needs at least one --candidate");
    let id = single_metric(metric)?;
    let opts = options(metric)?;
    let runs: Vec<Run> = runs.iter().map(|r| r.run.clone()).collect();
    let tags: Vec<String> = runs.iter().map(|r| r.tag().to_string()).collect();
    let ordering = |set: &AnnotationSet| -> Result<SystemOrdering> {
        let means = system_means(&runs, set, id, &opts)?;
        Ok(SystemOrdering::new(tags.iter().cloned().zip(means))?)
    };
    let reference = load_qrels(reference, Provenance::Primary)?;
    let base = ordering(&reference)?;
    let mut t = Table::new("correlation", &CORRELATION_HEADERS);
    for path in candidates {
        let cand = load_qrels(path, Provenance::Secondary)?;
        let c = rank_correlations(&ordering(&cand)?, &base, rbo_p)?;
        t.push(row![
            reference.annotator(),
            cand.annotator(),
            c.tau,
            c.rho,
            c.rbo,
            tags.len(),
            1usize
        ]);
    }
    Ok(t)
}

fn correlate_combinations(
    runs: &[SystemRun],
    args: &JudgmentArgs,
    samples: usize,
    metric: &MetricArgs,
    rbo_p: f64,
    seed: u64,
) -> Result<Table> {
    let j = load_judgments(args)?;
    let mut t = Table::new("correlation", &CORRELATION_HEADERS);
    for (mode, label) in [
        (CombinationMode::Natural, "combination"),
        (CombinationMode::InSample, "in-sample"),
    ] {
        let s = combination_samples(runs, &j, mode, samples, metric, seed)?;
        let c = correlation_summary(&s.systems, &s.official, &s.samples, rbo_p)?;
        t.push(row![
            j.primary.annotator(),
            label,
            c.mean.tau,
            c.mean.rho,
            c.mean.rbo,
            s.systems.len(),
            c.combinations
        ]);
    }
    Ok(t)
}

fn rankdelta(
    runs: &RunArgs,
    args: &JudgmentArgs,
    sample: &SampleArgs,
    metric: &MetricArgs,
    seed: u64,
) -> Result<Vec<Table>> {
    let runs = load_runs(&runs.runs, runs.manifest.as_deref())?;
    let j = load_judgments(args)?;
    let s = combination_samples(&runs, &j, sample.mode, sample.samples, metric, seed)?;
    let report = RankDeltaReport::from_samples(&s.systems, &s.official, &s.samples)?;
    let cats = categories(&runs);

    let mut t = Table::new(
        "rankdelta",
        &[
            "system",
            "category",
            "official_rank",
            "mean",
            "median",
            "min",
            "q25",
            "q75",
            "max",
            "wilcoxon_w",
            "wilcoxon_p",
            "wilcoxon_n",
            "exact",
            "significant",
            "combinations",
        ],
    );
    let mut samples = Table::new("rankdelta_samples", &["combination", "system", "delta"]);
    for d in &report.systems {
        let q = d.quantiles;
        let (w, p, n, exact) = match d.wilcoxon {
            Some(w) => (
                Cell::Num(w.w_statistic),
                Cell::Num(w.p_value),
                Cell::from(w.n),
                Cell::from(w.exact),
            ),
            None => (Cell::from(""), Cell::from(""), Cell::from(0usize), Cell::from("")),
        };
        t.push(vec![
            (&d.tag).into(),
            category_cell(cats[&d.tag]),
            d.official_rank.into(),
            d.mean.into(),
            d.median.into(),
            q[0].into(),
            q[1].into(),
            q[3].into(),
            q[4].into(),
            w,
            p,
            n,
            exact,
            d.significant.into(),
            report.combinations.into(),
        ]);
    }
    for c in 0..report.combinations {
        for d in &report.systems {
            samples.push(row![c, &d.tag, d.deltas[c]]);
        }
    }
    Ok(vec![t, samples])
}

fn oracle(
    runs: &RunArgs,
    args: &JudgmentArgs,
    metric: &MetricArgs,
    shuffles: usize,
    include_primary: bool,
    seed: u64,
) -> Result<(Vec<Table>, Files)> {
    let runs = load_runs(&runs.runs, runs.manifest.as_deref())?;
    let j = load_judgments(args)?;
    let opts = options(metric)?;
    let cats = categories(&runs);
    let sets = aggregation_inputs(&j, include_primary);

    let mut oracles = Vec::new();
    let mut files = Vec::new();
    for op in AggregateOp::ALL {
        let agg = aggregate_judgments(&sets, op)?;
        let run = build_oracle_run(&agg, op.name(), seed)?;
        files.push((format!("oracle_{}.run", op.name()), export_run(&run)));
        oracles.push((op, agg, run));
    }
    let covered: BTreeSet<_> = oracles.iter().flat_map(|(_, a, _)| a.topics().cloned()).collect();
    let eval = j.primary.restrict_to(&covered);

    let mut table = Table::new(
        "oracle",
        &[
            "metric",
            "name",
            "kind",
            "category",
            "mean",
            "topic_sd",
            "shuffle_mean",
            "shuffle_sd",
            "shuffles",
            "exhaustive",
            "topics",
        ],
    );
    let mut tests = Table::new(
        "oracle_tests",
        &[
            "metric",
            "system",
            "oracle",
            "n",
            "t",
            "raw_p",
            "adjusted_p",
            "significant",
        ],
    );
    for &id in &metric.metric {
        let mut oracle_topics = Vec::new();
        for (op, agg, run) in &oracles {
            let rep = compute_metric(run, &eval, id, &opts)?;
            let st = oracle_stability(agg, &eval, id, &opts, shuffles, seed)?;
            let values: Vec<f64> = rep.per_topic.values().copied().collect();
            table.push(row![
                id.to_string(),
                op.name(),
                "oracle",
                "",
                rep.mean,
                population_sd(&values),
                st.mean,
                st.std_dev,
                st.runs,
                st.exhaustive,
                values.len()
            ]);
            oracle_topics.push((op.name(), rep.per_topic));
        }
        let systems: Vec<Run> = runs.iter().map(|r| r.run.clone()).collect();
        for rep in evaluate_systems(&systems, &eval, &[id], &opts)? {
            let values: Vec<f64> = rep.per_topic.values().copied().collect();
            table.push(vec![
                id.to_string().into(),
                (&rep.tag).into(),
                "system".into(),
                category_cell(cats[&rep.tag]),
                rep.mean.into(),
                population_sd(&values).into(),
                "".into(),
                "".into(),
                "".into(),
                "".into(),
                values.len().into(),
            ]);
            for (name, per_topic) in &oracle_topics {
                let shared: Vec<_> = rep.per_topic.keys().filter(|t| per_topic.contains_key(*t)).collect();
                let a: Vec<f64> = shared.iter().map(|t| rep.per_topic[*t]).collect();
                let b: Vec<f64> = shared.iter().map(|t| per_topic[*t]).collect();
                let tt = paired_t_test_bonferroni(&a, &b, ORACLE_COMPARISONS)
                    .with_context(|| format!("t-test of {} against the {name} oracle", rep.tag))?;
                tests.push(row![
                    id.to_string(),
                    &rep.tag,
                    *name,
                    shared.len(),
                    tt.t_statistic,
                    tt.raw_p,
                    tt.adjusted_p,
                    tt.significant
                ]);
            }
        }
    }
    Ok((vec![table, tests], files))
}

fn evaluate(runs: &RunArgs, qrels: &Path, metric: &MetricArgs) -> Result<Table> {
    let runs: Vec<Run> = load_runs(&runs.runs, runs.manifest.as_deref())?
        .into_iter()
        .map(|r| r.run)
        .collect();
    let judgments = load_qrels(qrels, Provenance::Primary)?;
    let reports = evaluate_systems(&runs, &judgments, &metric.metric, &options(metric)?)?;
    let mut t = Table::new("evaluation", &["tag", "metric", "topic", "value"]);
    for r in &reports {
        let name = r.metric.to_string();
        for (topic, v) in &r.per_topic {
            t.push(row![&r.tag, name.as_str(), topic.as_str(), *v]);
        }
        t.push(row![&r.tag, name.as_str(), "ALL", r.mean]);
    }
    Ok(t)
}
