use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use shelflife_core::aggregation::AggregateOp;
use shelflife_core::combinations::CombinationMode;
use shelflife_core::metrics::{Gain, MetricId};
use shelflife_core::pooling::PairingMode;
use shelflife_core::trec_io::FracGrade;

fn frac_grade(s: &str) -> Result<FracGrade, String> {
    FracGrade::parse_decimal(s).map_err(|e| e.to_string())
}

/// Reliability analysis for IR test collections: re-annotation pooling and
/// serving, agreement, judgment combinations and system-order stability.
///
/// Every subcommand writes `<table>.csv` plus a markdown rendering
/// `<table>.md` into `--out`. Outputs are byte-identical for identical
/// inputs, flags and `--seed`.
#[derive(Debug, Parser)]
#[command(name = "shelflife", version)]
pub struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    /// Metric(s): ndcg@K, p@K, mrr@K or r@K. Only `evaluate` accepts several.
    #[arg(long, num_args = 1.., default_value = "ndcg@10")]
    pub metric: Vec<MetricId>,

    /// nDCG gain: linear (g) or exp (2^g - 1).
    #[arg(long, default_value = "linear")]
    pub gain: Gain,

    /// Minimum grade counted relevant by P, MRR and R.
    #[arg(long, value_parser = frac_grade, default_value = "2")]
    pub binary_threshold: FracGrade,

    /// Drop unjudged documents from runs before scoring; combination
    /// analyses judge "unjudged" against the primary qrels.
    #[arg(long)]
    pub judged_only: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TREC run files.
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,

    /// CSV with header `path,tag,category`; category is lexical, neural or llm.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct JudgmentArgs {
    /// Official (primary) qrels.
    #[arg(long)]
    pub primary: PathBuf,

    /// Secondary annotators' qrels, labelled by file stem.
    #[arg(long, num_args = 1..)]
    pub secondary: Vec<PathBuf>,

    /// Directory whose `*.qrels` files are added as secondary sets.
    #[arg(long)]
    pub sets: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// in-sample: primary plus secondaries per topic; natural: secondaries only.
    #[arg(long, default_value = "in-sample")]
    pub mode: CombinationMode,

    /// Number of sampled combinations; when the full space is no larger,
    /// every combination is enumerated instead.
    #[arg(long = "s", default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the re-annotation pool. Writes pool (topic, doc, slot) and
    /// pool_sizes (topic, core_size, sample_size, per_annotator).
    Pool {
        #[arg(long)]
        qrels: PathBuf,
        /// Grade-0 documents sampled per annotator slot.
        #[arg(long, default_value_t = 100)]
        sample: usize,
        /// Lowest grade included in the shared core.
        #[arg(long, default_value_t = 1)]
        min_grade: u8,
    },

    /// Pool and assign topics to annotator pairs. Writes assignment (topic,
    /// annotator_a, annotator_b, core_size, sample_size), loads (annotator,
    /// load, topics) and tasks (annotator, topic, doc).
    Assign {
        #[arg(long)]
        qrels: PathBuf,
        /// Annotator ids.
        #[arg(long, num_args = 1.., required_unless_present = "roster")]
        annotators: Vec<String>,
        /// Roster file (`annotator token` lines) naming the annotators.
        #[arg(long)]
        roster: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        sample: usize,
        #[arg(long, default_value_t = 1)]
        min_grade: u8,
        /// fixed: partnerships for the whole study; dynamic: per-topic pairing.
        #[arg(long, default_value = "fixed")]
        pairing: PairingMode,
    },

    /// Run the annotation service. The admin token is read from
    /// SHELFLIFE_ADMIN_TOKEN.
    Serve {
        /// Task list CSV (annotator, topic, doc) as written by `assign`.
        #[arg(long)]
        tasks: PathBuf,
        /// Topic texts, `<id>\t<text>` per line.
        #[arg(long)]
        topics: PathBuf,
        /// Passage texts, `<id>\t<text>` per line.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        roster: PathBuf,
        /// Append-only event log (created if missing).
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// External search link containing `{query}`.
        #[arg(long)]
        search_url: Option<String>,
    },

    /// Agreement per annotator group. Writes agreement (group, n_topics,
    /// n_items, overlap_4, overlap_2, cohen_4, cohen_2, fleiss_4, fleiss_2).
    Agreement {
        #[command(flatten)]
        judgments: JudgmentArgs,
        /// Lowest grade counted relevant in binarized agreement.
        #[arg(long, default_value_t = 1)]
        agreement_threshold: u8,
    },

    /// Grade distribution per qrels file. Writes ratios (set, grade_0..grade_3, total).
    Ratios {
        #[arg(long, num_args = 1.., required = true)]
        qrels: Vec<PathBuf>,
    },

    /// Primary-to-secondary grade transitions over co-judged pairs. Writes
    /// transitions (primary_grade, secondary_grade, count, row_fraction).
    Transitions {
        #[command(flatten)]
        judgments: JudgmentArgs,
    },

    /// Min/mean/max aggregation of secondary judgments. Writes
    /// aggregate_<op>.qrels per operator plus aggregate_summary.
    Aggregate {
        #[command(flatten)]
        judgments: JudgmentArgs,
        /// Comma-separated min, mean, max, or all.
        #[arg(long, default_value = "all")]
        op: String,
        /// Aggregate the primary together with the secondaries.
        #[arg(long)]
        include_primary: bool,
    },

    /// Judgment combinations. Writes combinations (combination, topic, annotator).
    Combos {
        #[command(flatten)]
        judgments: JudgmentArgs,
        #[command(flatten)]
        sample: SampleArgs,
    },

    /// Pairwise swap rates across combinations. Writes swap (system_a,
    /// system_b, category_pair, official_delta, mean_abs_delta, wins_a,
    /// wins_b, swap_probability) and system_variance.
    Swap {
        #[command(flatten)]
        runs: RunArgs,
        #[command(flatten)]
        judgments: JudgmentArgs,
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        metric: MetricArgs,
    },

    /// Rank correlation between system orderings. With --candidate, each
    /// candidate qrels against --reference; otherwise mean correlation of
    /// combination orderings with the primary ordering for both modes.
    /// Writes correlation (reference, candidate, tau, rho, rbo, n).
    Correlate {
        #[command(flatten)]
        runs: RunArgs,
        #[arg(long, required_unless_present = "primary")]
        reference: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        candidate: Vec<PathBuf>,
        #[arg(long)]
        primary: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        secondary: Vec<PathBuf>,
        #[arg(long)]
        sets: Option<PathBuf>,
        #[arg(long = "s", default_value_t = 10_000)]
        samples: usize,
        #[command(flatten)]
        metric: MetricArgs,
        /// RBO persistence.
        #[arg(long, default_value_t = 0.9)]
        rbo_p: f64,
    },

    /// Rank change of each system across combinations. Writes rankdelta
    /// (summary and Wilcoxon test per system) and rankdelta_samples.
    Rankdelta {
        #[command(flatten)]
        runs: RunArgs,
        #[command(flatten)]
        judgments: JudgmentArgs,
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        metric: MetricArgs,
    },

    /// Aggregated annotators as oracle rankers against the primary qrels.
    /// Writes oracle (name, kind, mean, sd, shuffles) and oracle_tests
    /// (Bonferroni-corrected paired t-tests of each oracle against each system).
    Oracle {
        #[command(flatten)]
        runs: RunArgs,
        #[command(flatten)]
        judgments: JudgmentArgs,
        #[command(flatten)]
        metric: MetricArgs,
        /// In-grade shuffles per oracle.
        #[arg(long, default_value_t = 100)]
        shuffles: usize,
        /// Aggregate the primary together with the secondaries.
        #[arg(long)]
        include_primary: bool,
    },

    /// Score runs. Writes evaluation (tag, metric, topic, value) with an ALL row per run.
    Evaluate {
        #[command(flatten)]
        runs: RunArgs,
        #[arg(long)]
        qrels: PathBuf,
        #[command(flatten)]
        metric: MetricArgs,
    },
}

pub fn parse_ops(s: &str) -> Result<Vec<AggregateOp>, shelflife_core::Error> {
    if s == "all" {
        return Ok(AggregateOp::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}
