//! `glam`: synthetic data, ingestion, labeling, training, inference,
//! evaluation, benchmarking and rendering from one binary.

mod render;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use glam_core::eval::{coco_thresholds, mean_ap_with};
use glam_core::featurize::FeatureSchema;
use glam_core::graph_build::GraphFile;
use glam_core::ingest::{adapt_doclaynet, categories_for, load_cells, parse_results, save_cells, CocoFile, MergeParams};
use glam_core::labeler::DEFAULT_IOU_FLOOR;
use glam_core::model::{load_checkpoint, save_checkpoint, train, Checkpoint, Glam, GraphInputs, ModelConfig, TrainConfig};
use glam_core::pipeline::{coco_results, image_ids, infer_pages, label_pages, preprocess, InferOptions};
use glam_core::segmenter::PairRule;
use glam_core::synth::{generate_corpus, perturb};
use glam_core::ClassSchema;

#[derive(Parser)]
#[command(name = "glam", version, about = "Graph-based document layout analysis")]
struct Cli {
    /// Seed for every random choice a subcommand makes.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of cells and COCO ground truth.
    Synth(SynthArgs),
    /// Clean (and optionally merge) cells into a cell file.
    Ingest(IngestArgs),
    /// Build page graphs and label them from COCO ground truth.
    Label(LabelArgs),
    /// Train a model on labeled graphs.
    Train(TrainArgs),
    /// Segment pages with a trained model and write COCO results.
    Infer(InferArgs),
    /// Score COCO results against ground truth.
    Eval(EvalArgs),
    /// Time inference over a cell file.
    Bench(BenchArgs),
    /// Draw pages and boxes as SVG.
    Render(RenderArgs),
    /// Print class and feature schemas and the model size.
    Schema(SchemaArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    pages: usize,
    #[arg(long)]
    out_cells: PathBuf,
    #[arg(long)]
    out_coco: PathBuf,
    /// Uniform jitter, in pixels, applied to every ground-truth coordinate.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Fraction of cells dropped from each page.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
}

#[derive(Args)]
struct MergeFlags {
    /// Merge horizontally adjacent cells on a shared baseline.
    #[arg(long)]
    merge: bool,
    #[arg(long, default_value_t = 0.5)]
    h_gap_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    v_gap_frac: f64,
    /// Cells narrower or shorter than this many pixels are dropped.
    #[arg(long, default_value_t = 10.0)]
    min_px: f64,
}

impl MergeFlags {
    fn params(&self) -> Option<MergeParams> {
        self.merge.then(|| MergeParams { h_gap_frac: self.h_gap_frac, v_gap_frac: self.v_gap_frac, ..MergeParams::default() })
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Cell file, or DocLayNet page JSON (file or directory) with --doclaynet.
    #[arg(long)]
    cells: PathBuf,
    #[arg(long)]
    doclaynet: bool,
    #[command(flatten)]
    merge: MergeFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    cells: PathBuf,
    #[arg(long)]
    coco: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_FLOOR)]
    iou_floor: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled graphs from `glam label`.
    #[arg(long)]
    graphs: PathBuf,
    /// JSON file with optional `model` and `train` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Per-epoch JSON lines; stdout when absent.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    And,
    Or,
}

#[derive(Args)]
struct InferFlags {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    merge: MergeFlags,
    #[arg(long, default_value_t = 0.5)]
    edge_threshold: f32,
    #[arg(long, value_enum, default_value_t = RuleArg::And)]
    pair_rule: RuleArg,
    /// Worker threads; each page runs on one thread.
    #[arg(long)]
    threads: Option<usize>,
}

impl InferFlags {
    fn options(&self) -> InferOptions {
        InferOptions {
            min_px: self.merge.min_px,
            merge: self.merge.params(),
            edge_threshold: self.edge_threshold,
            pair_rule: match self.pair_rule {
                RuleArg::And => PairRule::And,
                RuleArg::Or => PairRule::Or,
            },
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.threads {
            if t == 0 {
                bail!("--threads must be at least 1");
            }
            b = b.num_threads(t);
        }
        Ok(b.build()?)
    }
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    cells: PathBuf,
    #[command(flatten)]
    flags: InferFlags,
    /// Ground truth whose image ids the results should use.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    results: PathBuf,
    /// Comma-separated IoU thresholds replacing 0.50:0.05:0.95.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    cells: PathBuf,
    #[command(flatten)]
    flags: InferFlags,
    /// Timed runs after one warm-up run.
    #[arg(long, default_value_t = 5)]
    runs: usize,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    cells: PathBuf,
    #[arg(long, conflicts_with = "coco")]
    results: Option<PathBuf>,
    #[arg(long)]
    coco: Option<PathBuf>,
    /// Ground truth mapping result image ids to pages.
    #[arg(long, requires = "results")]
    gt: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    min_score: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SchemaArgs {
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: ModelConfig,
    train: TrainConfig,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_slice(&bytes).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

/// Writes through a sibling temporary file so a failed run leaves no
/// partial artifact behind.
fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn with_tmp(path: &Path, save: impl FnOnce(&Path) -> glam_core::Result<()>) -> Result<()> {
    let tmp = path.with_extension("partial");
    save(&tmp).with_context(|| format!("writing {}", path.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_cells(path: &Path) -> Result<Vec<glam_core::Page>> {
    load_cells(path).with_context(|| format!("loading cells from {}", path.display()))
}

fn read_coco(path: &Path) -> Result<CocoFile> {
    CocoFile::load(path).with_context(|| format!("loading COCO file {}", path.display()))
}

/// Class schema named by a COCO file's categories, in id order.
fn schema_of(coco: &CocoFile) -> Result<ClassSchema> {
    let mut cats = coco.categories.clone();
    cats.sort_by_key(|c| c.id);
    Ok(ClassSchema::new(cats.into_iter().map(|c| c.name))?)
}

fn synth(seed: u64, a: &SynthArgs) -> Result<()> {
    let schema = ClassSchema::doclaynet();
    let mut corpus = generate_corpus(a.pages, seed, &schema)?;
    if a.jitter > 0.0 || a.dropout > 0.0 {
        corpus = perturb(&corpus, a.jitter, a.dropout, seed);
    }
    with_tmp(&a.out_cells, |p| save_cells(&corpus.pages, p))?;
    with_tmp(&a.out_coco, |p| corpus.coco.save(p))?;
    info!("{} pages, {} annotations", corpus.pages.len(), corpus.coco.annotations.len());
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let pages = if a.doclaynet {
        let mut files = Vec::new();
        if a.cells.is_dir() {
            for entry in fs::read_dir(&a.cells)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "json") {
                    files.push(p);
                }
            }
            files.sort();
        } else {
            files.push(a.cells.clone());
        }
        files
            .iter()
            .map(|f| adapt_doclaynet(&fs::read(f)?).with_context(|| format!("adapting {}", f.display())))
            .collect::<Result<Vec<_>>>()?
    } else {
        read_cells(&a.cells)?
    };
    let merge = a.merge.params();
    let cleaned: Vec<_> = pages.iter().map(|p| preprocess(p, a.merge.min_px, merge.as_ref())).collect();
    let before: usize = pages.iter().map(|p| p.len()).sum();
    let after: usize = cleaned.iter().map(|p| p.len()).sum();
    info!("{} pages, {before} cells in, {after} out", cleaned.len());
    with_tmp(&a.out, |p| save_cells(&cleaned, p))
}

fn label(a: &LabelArgs) -> Result<()> {
    let pages = read_cells(&a.cells)?;
    let gt = read_coco(&a.coco)?;
    let classes = schema_of(&gt)?;
    let labeled = label_pages(&pages, &gt, &classes, &FeatureSchema::v1(), a.iou_floor)?;
    let conflicts: usize = labeled.iter().map(|(_, r)| r.conflicts).sum();
    let below = labeled
        .iter()
        .flat_map(|(_, r)| &r.assignments)
        .filter(|s| s.iou < a.iou_floor)
        .count();
    if below > 0 {
        warn!("{below} annotations could not be snapped to IoU {}", a.iou_floor);
    }
    info!("{} graphs, {conflicts} contested cells", labeled.len());
    let graphs: Vec<_> = labeled.into_iter().map(|(g, _)| g).collect();
    with_tmp(&a.out, |p| GraphFile::new(&classes, &graphs).save(p))
}

fn load_graphs(path: &Path) -> Result<(ClassSchema, Vec<GraphInputs<f32>>)> {
    let file = GraphFile::load(path).with_context(|| format!("loading graphs from {}", path.display()))?;
    let (classes, graphs) = file.into_graphs()?;
    let inputs = graphs.iter().map(GraphInputs::from_graph).collect::<glam_core::Result<Vec<_>>>()?;
    Ok((classes, inputs))
}

fn train_cmd(seed: Option<u64>, a: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let (classes, graphs) = load_graphs(&a.graphs)?;
    let val = match &a.val {
        Some(v) => {
            let (vc, vg) = load_graphs(v)?;
            if vc != classes {
                bail!("validation graphs use a different class schema");
            }
            Some(vg)
        }
        None => None,
    };
    let features = FeatureSchema::v1();
    cfg.model.n_classes = classes.num_node_classes();
    cfg.model.node_features = features.dim();
    if let Some(s) = seed {
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.model.validate()?;
    info!("{} parameters, {} training graphs", cfg.model.param_count(), graphs.len());

    let mut sink: Box<dyn Write> = match &a.log {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut log_err = None;
    let outcome = train(&graphs, val.as_deref(), cfg.model, &cfg.train, |line| {
        let json = serde_json::to_string(line).expect("log line serializes");
        if let Err(e) = writeln!(sink, "{json}").and_then(|_| sink.flush()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e).context("writing training log");
    }
    info!("best epoch {}", outcome.best_epoch);
    let ckpt = Checkpoint::new(outcome.model, &features, &classes);
    with_tmp(&a.out, |p| save_checkpoint(&ckpt, p))
}

fn open_checkpoint(path: &Path) -> Result<(Glam<f32>, FeatureSchema, ClassSchema)> {
    let ckpt = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let features = FeatureSchema::v1();
    let classes = ckpt.class_schema()?;
    ckpt.check_compatible(&features, &classes)?;
    Ok((ckpt.model, features, classes))
}

fn infer(a: &InferArgs) -> Result<()> {
    let pages = read_cells(&a.cells)?;
    let (model, features, classes) = open_checkpoint(&a.flags.ckpt)?;
    let gt = a.gt.as_deref().map(read_coco).transpose()?;
    let ids = image_ids(&pages, gt.as_ref())?;
    let opts = a.flags.options();
    let preds = a.flags.pool()?.install(|| infer_pages(&model, &features, &classes, &pages, &opts))?;
    let results = coco_results(&preds, &ids);
    info!("{} pages, {} segments", pages.len(), results.len());
    write_file(&a.out, &serde_json::to_vec(&results)?)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let gt = read_coco(&a.gt)?;
    let bytes = fs::read(&a.results).with_context(|| format!("reading {}", a.results.display()))?;
    let results = parse_results(&bytes).with_context(|| format!("parsing {}", a.results.display()))?;
    let classes = schema_of(&gt)?;
    let thresholds = a.thresholds.clone().unwrap_or_else(coco_thresholds);
    if thresholds.is_empty() || thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        bail!("thresholds must lie in [0, 1]");
    }
    let report = mean_ap_with(&results, &gt, &classes, &thresholds)?;
    if let Some(out) = &a.out {
        write_file(out, report.to_json().as_bytes())?;
    }
    if a.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    pages: usize,
    max_nodes: usize,
    threads: usize,
    runs: usize,
    ms_per_page: f64,
    pages_per_sec: f64,
    run_seconds: Vec<f64>,
}

fn bench(a: &BenchArgs) -> Result<()> {
    if a.runs < 3 {
        bail!("--runs must be at least 3");
    }
    let pages = read_cells(&a.cells)?;
    if pages.is_empty() {
        bail!("{} holds no pages", a.cells.display());
    }
    let (model, features, classes) = open_checkpoint(&a.flags.ckpt)?;
    let opts = a.flags.options();
    let pool = a.flags.pool()?;
    let run = || pool.install(|| infer_pages(&model, &features, &classes, &pages, &opts));
    run()?;
    let mut secs = Vec::with_capacity(a.runs);
    for _ in 0..a.runs {
        let t = Instant::now();
        run()?;
        secs.push(t.elapsed().as_secs_f64());
    }
    let mean = secs.iter().sum::<f64>() / secs.len() as f64;
    let report = BenchReport {
        pages: pages.len(),
        max_nodes: pages.iter().map(|p| p.len()).max().unwrap_or(0),
        threads: pool.current_num_threads(),
        runs: a.runs,
        ms_per_page: 1e3 * mean / pages.len() as f64,
        pages_per_sec: pages.len() as f64 / mean,
        run_seconds: secs,
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn render_cmd(a: &RenderArgs) -> Result<()> {
    let pages = read_cells(&a.cells)?;
    let (boxes, classes) = match (&a.results, &a.coco) {
        (Some(r), None) => {
            let bytes = fs::read(r).with_context(|| format!("reading {}", r.display()))?;
            let results = parse_results(&bytes)?;
            let gt = a.gt.as_deref().map(read_coco).transpose()?;
            let (classes, cats) = match &gt {
                Some(g) => {
                    let classes = schema_of(g)?;
                    let cats = g.category_map(&classes)?;
                    (classes, cats)
                }
                None => {
                    let classes = ClassSchema::doclaynet();
                    let cats = categories_for(&classes).into_iter().map(|c| c.id).zip(0..).collect();
                    (classes, cats)
                }
            };
            let ids = image_ids(&pages, gt.as_ref())?;
            (render::from_results(&results, &ids, &cats, a.min_score), classes)
        }
        (None, Some(c)) => {
            let gt = read_coco(c)?;
            let classes = schema_of(&gt)?;
            let cats = gt.category_map(&classes)?;
            let ids = image_ids(&pages, Some(&gt))?;
            (render::from_coco(&gt, &ids, &cats), classes)
        }
        (None, None) => (vec![Vec::new(); pages.len()], ClassSchema::doclaynet()),
        (Some(_), Some(_)) => unreachable!("clap rejects --results with --coco"),
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (page, page_boxes) in pages.iter().zip(&boxes) {
        let svg = render::svg(page, page_boxes, &classes);
        let name = render::file_name(&page.page_id);
        write_file(&a.out.join(name), svg.as_bytes())?;
    }
    info!("{} pages rendered", pages.len());
    Ok(())
}

#[derive(Serialize)]
struct SchemaReport<'a> {
    classes: &'a [String],
    node_classes: usize,
    feature_schema_version: u32,
    features: &'a [&'static str],
    edge_features: usize,
    model: &'a ModelConfig,
    param_count: usize,
    layout: Vec<(String, usize, usize)>,
}

fn schema(a: &SchemaArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    cfg.model.validate()?;
    let classes = ClassSchema::doclaynet();
    let features = FeatureSchema::v1();
    let report = SchemaReport {
        classes: classes.names(),
        node_classes: classes.num_node_classes(),
        feature_schema_version: features.version,
        features: features.names(),
        edge_features: cfg.model.edge_features,
        model: &cfg.model,
        param_count: cfg.model.param_count(),
        layout: cfg.model.layout(),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth(a) => synth(seed.unwrap_or(0), a),
        Command::Ingest(a) => ingest(a),
        Command::Label(a) => label(a),
        Command::Train(a) => train_cmd(seed, a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Render(a) => render_cmd(a),
        Command::Schema(a) => schema(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GLAM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
