use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use embcomp::codecs::CodecConfig;
use embcomp::corpus_builder::{self, assemble, filter_runs, mine_distractors, parse_runs, read_id_list, rrf_fuse};
use embcomp::embed_store::{generate_planted, generate_synthetic, write_matrix, PlantedSpec, SyntheticSpec};
use embcomp::ir_metrics::{Gain, Qrels};
use embcomp::pipeline::{self, CodecList, ExperimentConfig, GridKeyword};
use embcomp::report;

#[derive(Parser)]
#[command(name = "embcomp", version, about = "Evaluate embedding compression codecs on retrieval tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a clustered synthetic embedding file, or a full planted task.
    Synth(SynthArgs),
    /// Build nested corpora from TREC runs and qrels.
    Subsample(SubsampleArgs),
    /// Run an experiment grid.
    Run(RunArgs),
    /// Codec x corpus-size table of one metric.
    Report(ReportArgs),
    /// Compression ratio vs metric, one row per codec.
    Pareto(CsvArgs),
    /// Metric per codec and corpus size.
    Scaling(CsvArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output embedding file, or output directory with --planted-queries.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    clusters: usize,
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
    #[arg(long)]
    count: usize,
    /// Also plant this many queries with relevant documents; writes
    /// corpus.cemb, queries.cemb and qrels.txt into --out.
    #[arg(long)]
    planted_queries: Option<usize>,
    #[arg(long, default_value_t = 10)]
    relevant_per_query: usize,
    #[arg(long, default_value_t = 0.05)]
    query_spread: f64,
    #[arg(long, default_value_t = 0.05)]
    relevant_spread: f64,
}

#[derive(Args)]
struct SubsampleArgs {
    /// TREC run files.
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    qrels: PathBuf,
    /// Newline-delimited ids of every document available.
    #[arg(long)]
    universe: PathBuf,
    /// Target sizes, ascending, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = corpus_builder::DEFAULT_DROP_FRACTION)]
    drop_fraction: f64,
    #[arg(long, default_value_t = corpus_builder::DEFAULT_K_RRF)]
    k_rrf: f64,
    #[arg(long, default_value_t = corpus_builder::DEFAULT_DISTRACTORS)]
    distractors: usize,
    /// Manifest JSON path; per-size id files are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GainArg {
    Linear,
    Exponential,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// `builtin_grid`, a JSON file with a codec list, or inline JSON.
    #[arg(long)]
    codecs: Option<String>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    native_bits: Option<u32>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    gain: Option<GainArg>,
    #[arg(long)]
    min_grade: Option<u32>,
    #[arg(long)]
    significance_metric: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    calibration_rows: Option<usize>,
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result files or directories (searched recursively).
    #[arg(long, required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    #[arg(long, default_value = "recall@100")]
    metric: String,
    /// Restrict to one dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// Also write the long-format CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CsvArgs {
    #[arg(long, required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    #[arg(long, default_value = "recall@100")]
    metric: String,
    #[arg(long)]
    dataset: Option<String>,
    /// Restrict to one corpus size.
    #[arg(long)]
    size: Option<usize>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let background = SyntheticSpec { seed: a.seed, dim: a.dim, n_clusters: a.clusters, cluster_spread: a.spread, count: a.count };
    let Some(n_queries) = a.planted_queries else {
        let m = generate_synthetic(&background)?;
        write_matrix(&m, &a.out)?;
        eprintln!("wrote {} vectors of dim {} to {}", m.len(), m.dim(), a.out.display());
        return Ok(());
    };
    let task = generate_planted(&PlantedSpec {
        background,
        n_queries,
        relevant_per_query: a.relevant_per_query,
        query_spread: a.query_spread,
        relevant_spread: a.relevant_spread,
    })?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_matrix(&task.corpus, &a.out.join("corpus.cemb"))?;
    write_matrix(&task.queries, &a.out.join("queries.cemb"))?;
    let mut qrels = Qrels::new();
    for (q, d) in &task.judgments {
        qrels.insert(q.as_str(), d.as_str(), 1);
    }
    fs::write(a.out.join("qrels.txt"), qrels.to_trec())?;
    eprintln!(
        "wrote {} corpus vectors, {} queries and {} judgments to {}",
        task.corpus.len(),
        task.queries.len(),
        task.judgments.len(),
        a.out.display()
    );
    Ok(())
}

fn subsample(a: SubsampleArgs) -> Result<()> {
    let pool = parse_runs(&a.runs)?;
    let qrels = Qrels::from_path(&a.qrels)?;
    let kept = filter_runs(&pool, &qrels, a.drop_fraction)?;
    let fused = rrf_fuse(&kept, a.k_rrf)?;
    let distractors = mine_distractors(&fused, &qrels, a.distractors)?;
    let universe = read_id_list(&a.universe)?;
    let manifest = assemble(&qrels, &distractors, &universe, &a.sizes, a.seed)?;
    let written = manifest.write(&a.out)?;
    eprintln!(
        "kept {} of {} runs; {} mandatory docs; wrote {} files",
        kept.len(),
        pool.len(),
        manifest.stats.n_mandatory,
        written.len()
    );
    Ok(())
}

fn parse_codecs(spec: &str) -> Result<CodecList> {
    if spec == "builtin_grid" {
        return Ok(CodecList::Grid(GridKeyword::BuiltinGrid));
    }
    let text = if Path::new(spec).is_file() { fs::read_to_string(spec)? } else { spec.to_string() };
    let list: Vec<CodecConfig> = serde_json::from_str(&text).context("parsing codec list")?;
    Ok(CodecList::List(list))
}

fn build_config(a: RunArgs) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => {
            let (Some(corpus), Some(queries), Some(qrels), Some(out)) = (&a.corpus, &a.queries, &a.qrels, &a.output_dir)
            else {
                bail!("without --config, --corpus, --queries, --qrels and --output-dir are required");
            };
            ExperimentConfig::minimal(corpus, queries, qrels, out)
        }
    };
    if let Some(v) = a.corpus {
        c.corpus_path = v;
    }
    if let Some(v) = a.queries {
        c.query_path = v;
    }
    if let Some(v) = a.qrels {
        c.qrels_path = v;
    }
    if let Some(v) = a.manifest {
        c.corpus_manifest = Some(v);
    }
    if let Some(v) = a.sizes {
        c.sizes = Some(v);
    }
    if let Some(v) = a.codecs {
        c.codecs = parse_codecs(&v)?;
    }
    if let Some(v) = a.ks {
        c.ks = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.native_bits {
        c.native_bits = v;
    }
    if let Some(v) = a.output_dir {
        c.output_dir = v;
    }
    if let Some(v) = a.gain {
        c.gain = match v {
            GainArg::Linear => Gain::Linear,
            GainArg::Exponential => Gain::Exponential,
        };
    }
    if let Some(v) = a.min_grade {
        c.min_grade = v;
    }
    if let Some(v) = a.significance_metric {
        c.significance_metric = Some(v);
    }
    if let Some(v) = a.alpha {
        c.alpha = v;
    }
    if let Some(v) = a.calibration_rows {
        c.calibration_rows = v;
    }
    if let Some(v) = a.dataset {
        c.dataset = Some(v);
    }
    Ok(c)
}

fn run(a: RunArgs) -> Result<bool> {
    let config = build_config(a)?;
    let outcome = pipeline::run(&config)?;
    for cell in outcome.summary.cells.iter().filter(|c| !c.ok) {
        eprintln!("failed: {}", cell.error.as_deref().unwrap_or("unknown error"));
    }
    eprintln!(
        "{} cells, {} failed; results in {}",
        outcome.summary.cells.len(),
        outcome.summary.failures,
        config.output_dir.display()
    );
    Ok(outcome.all_ok())
}

fn load(results: &[PathBuf], dataset: Option<&str>, size: Option<usize>) -> Result<Vec<pipeline::EvalResult>> {
    let mut r = report::load_results(results)?;
    if let Some(d) = dataset {
        r.retain(|x| x.metadata.dataset == d);
    }
    if let Some(s) = size {
        r.retain(|x| x.metadata.corpus_size == s);
    }
    if r.is_empty() {
        bail!("no results match the filters");
    }
    Ok(r)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Subsample(a) => subsample(a).map(|_| true),
        Command::Run(a) => run(a),
        Command::Report(a) => (|| {
            let r = load(&a.results, a.dataset.as_deref(), None)?;
            let table = report::report_table(&r, &a.metric)?;
            if let Some(p) = &a.csv {
                emit(&table.render_csv(), Some(p))?;
            }
            emit(&table.render_text(), a.out.as_deref())?;
            Ok(true)
        })(),
        Command::Pareto(a) => (|| {
            let r = load(&a.results, a.dataset.as_deref(), a.size)?;
            emit(&report::pareto_csv(&r, &a.metric)?, a.out.as_deref())?;
            Ok(true)
        })(),
        Command::Scaling(a) => (|| {
            let r = load(&a.results, a.dataset.as_deref(), a.size)?;
            emit(&report::scaling_csv(&r, &a.metric)?, a.out.as_deref())?;
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
