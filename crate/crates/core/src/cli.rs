//! `diet` command-line interface.
//!
//! Settings resolve in three layers: built-in defaults, then an optional JSON
//! file given with `--config`, then explicit flags.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    export_heatmap, grad_check, position_cosine_stats, rank_scan, sharing_census, toeplitz_check,
    verify_input_gradient_equality, verify_rank_bound, zero_param_equivalence, ColorMap,
    GradCheckOptions,
};
use crate::archive::TensorArchive;
use crate::bench::{compare_all, scaling, BenchOptions};
use crate::config::{AttentionConfig, PositionScheme, SchemeName, SegmentLocation, Sharing};
use crate::encodings::SegmentMap;
use crate::error::{Error, Result};
use crate::model::task::TaskName;
use crate::model::{train, Example, LossKind, Model, ModelConfig, Optimizer, Task, TrainOptions};
use crate::rng::SeedRng;
use crate::tensor::Matrix;

/// Environment variable that makes `verify` perturb analytic gradients, so its failure path can be tested.
pub const CORRUPT_GRADIENT_ENV: &str = "DIET_VERIFY_CORRUPT_GRADIENT";

#[derive(Debug, Parser)]
#[command(
    name = "diet",
    version,
    about = "Positional-encoding attention experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the rank bound, gradient identities and parameter invariants.
    Verify(VerifyArgs),
    /// Train a small model on a synthetic task.
    Train(TrainArgs),
    /// Time training steps and inference for every scheme.
    Bench(BenchArgs),
    /// Heatmaps, ranks and cosine histograms for a checkpoint.
    Viz(VizArgs),
    /// Numerical ranks of every head's scores.
    RankScan(RankScanArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON file with any subset of the run settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sequence length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Model width.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// DIET-ABS width.
    #[arg(long = "d-p")]
    pub d_p: Option<usize>,
    #[arg(long)]
    pub scheme: Option<SchemeName>,
    /// none, layer or head.
    #[arg(long)]
    pub sharing: Option<Sharing>,
    /// Number of segments.
    #[arg(long)]
    pub segments: Option<usize>,
    /// input, per-head or none.
    #[arg(long = "segment-location")]
    pub segment_location: Option<SegmentLocation>,
    #[arg(long)]
    pub vocab: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Random draws for the rank bound.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// position-probe or selective-copy.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskName>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    /// Offset copied by the selective-copy task.
    #[arg(long)]
    pub shift: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Also sweep n over 64..512 for full and Linformer attention.
    #[arg(long)]
    pub scaling: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VizArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint written by `train`; defaults to `<out>/checkpoint.bin`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RankScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Scan this checkpoint instead of a freshly initialized model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Random sequences to scan.
    #[arg(long)]
    pub examples: Option<usize>,
}

fn parse_task(s: &str) -> std::result::Result<TaskName, String> {
    match s {
        "position-probe" => Ok(TaskName::PositionProbe),
        "selective-copy" => Ok(TaskName::SelectiveCopy),
        other => Err(format!(
            "unknown task '{other}' (expected position-probe or selective-copy)"
        )),
    }
}

/// Every setting a command may read. Serialized next to each artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Kept out of result files so that they do not depend on where they are written.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub n: usize,
    pub d: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_p: usize,
    pub scheme: SchemeName,
    pub sharing: Sharing,
    pub segments: usize,
    pub segment_location: SegmentLocation,
    pub vocab: usize,
    pub task: TaskName,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub shift: usize,
    pub reps: usize,
    pub warmup: usize,
    pub trials: usize,
    pub examples: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            n: 32,
            d: 32,
            heads: 4,
            layers: 2,
            d_p: 8,
            scheme: SchemeName::DietRel,
            sharing: Sharing::NoSharing,
            segments: 1,
            segment_location: SegmentLocation::None,
            vocab: 64,
            task: TaskName::PositionProbe,
            steps: 2000,
            lr: 1e-3,
            batch_size: 1,
            shift: 1,
            reps: 30,
            warmup: 5,
            trials: 100,
            examples: 4,
            checkpoint: None,
        }
    }
}

impl RunConfig {
    pub fn attention(&self) -> AttentionConfig {
        let base = AttentionConfig::new(
            self.n,
            self.d,
            self.heads,
            self.layers,
            PositionScheme::None,
        )
        .with_sharing(self.sharing)
        .with_segments(self.segments, self.segment_location);
        self.scheme.configure(&base, self.d_p)
    }

    fn num_classes(&self) -> usize {
        match self.task {
            TaskName::PositionProbe => self.n,
            TaskName::SelectiveCopy => self.vocab,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.attention(), self.vocab, self.num_classes())
    }

    /// Equal-length segments when more than one segment is configured.
    pub fn segmap(&self) -> Result<Option<SegmentMap>> {
        if self.segments <= 1 {
            return Ok(None);
        }
        let base = self.n / self.segments;
        let mut lengths = vec![base; self.segments];
        lengths[self.segments - 1] += self.n - base * self.segments;
        SegmentMap::from_lengths(&lengths).map(Some)
    }

    pub fn task(&self) -> Result<Task> {
        let task = match self.task {
            TaskName::PositionProbe => Task::position_probe(self.n, self.vocab, self.n)?,
            TaskName::SelectiveCopy => Task::selective_copy(self.n, self.vocab, self.shift)?,
        };
        Ok(match self.segmap()? {
            Some(map) => task.with_segments(map),
            None => task,
        })
    }
}

macro_rules! override_fields {
    ($cfg:expr, $args:expr, $($field:ident),+) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })+
    };
}

fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    override_fields!(
        cfg,
        common,
        seed,
        out,
        n,
        d,
        heads,
        layers,
        d_p,
        scheme,
        sharing,
        segments,
        segment_location,
        vocab
    );
    if cfg.segments > 1 && cfg.segment_location == SegmentLocation::None {
        cfg.segment_location = SegmentLocation::PerHead;
    }
    Ok(cfg)
}

fn prepare_out(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    write_json(
        &cfg.out.join(format!("{command}.run.json")),
        &json!({
            "command": command,
            "seed": cfg.seed,
            "out": cfg.out,
            "config": cfg,
            "created_unix": created,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(cfg.out.clone())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs one command; `Ok(false)` means a check failed.
pub fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Verify(a) => {
            let mut cfg = resolve(&a.common)?;
            override_fields!(cfg, a, trials);
            cmd_verify(&cfg)
        }
        Command::Train(a) => {
            let mut cfg = resolve(&a.common)?;
            override_fields!(cfg, a, task, steps, lr, batch_size, shift);
            cmd_train(&cfg).map(|_| true)
        }
        Command::Bench(a) => {
            let mut cfg = resolve(&a.common)?;
            override_fields!(cfg, a, reps, warmup);
            cmd_bench(&cfg, a.scaling).map(|_| true)
        }
        Command::Viz(a) => {
            let mut cfg = resolve(&a.common)?;
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint;
            }
            cmd_viz(&cfg).map(|_| true)
        }
        Command::RankScan(a) => {
            let mut cfg = resolve(&a.common)?;
            override_fields!(cfg, a, examples);
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint;
            }
            cmd_rank_scan(&cfg).map(|_| true)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

/// Small model used by the gradient suites so that `verify` finishes in seconds.
fn suite_config(scheme: SchemeName, d_p: usize) -> AttentionConfig {
    scheme.configure(
        &AttentionConfig::new(8, 8, 2, 2, PositionScheme::None),
        d_p.clamp(1, 8),
    )
}

fn suite_batch(model: &Model, size: usize, seed: u64) -> Result<Vec<Example>> {
    let c = model.config();
    let mut rng = SeedRng::new(seed);
    Ok((0..size)
        .map(|_| Example {
            tokens: (0..c.attention.n).map(|_| rng.below(c.vocab)).collect(),
            segments: None,
            labels: (0..c.attention.n)
                .map(|_| rng.below(c.num_classes))
                .collect(),
        })
        .collect())
}

fn suite<T: Serialize>(name: &str, result: Result<(bool, T)>) -> SuiteResult {
    match result {
        Ok((passed, detail)) => SuiteResult {
            name: name.into(),
            passed,
            detail: serde_json::to_value(detail).unwrap_or(Value::Null),
        },
        Err(e) => SuiteResult {
            name: name.into(),
            passed: false,
            detail: json!({ "error": e.to_string() }),
        },
    }
}

pub fn verify_suites(cfg: &RunConfig) -> Vec<SuiteResult> {
    let d_h = cfg.d / cfg.heads.max(1);
    let corrupt = std::env::var_os(CORRUPT_GRADIENT_ENV).map_or(0.0, |_| 1e-3);
    let gopts = GradCheckOptions {
        corrupt,
        ..GradCheckOptions::default()
    };
    let mut out = vec![suite(
        "rank-bound",
        verify_rank_bound(cfg.n, cfg.d, d_h, cfg.d_p, cfg.trials, cfg.seed)
            .map(|r| (r.passed(), r)),
    )];

    out.push(suite(
        "gradient-equality",
        (|| {
            let mut model = Model::new(
                ModelConfig::new(suite_config(SchemeName::InputAdd, 1), 8, 8),
                cfg.seed,
            )?;
            model.perturb(0.1, cfg.seed)?;
            let mut reports = Vec::new();
            for kind in [LossKind::CrossEntropy, LossKind::Mse] {
                reports.push(verify_input_gradient_equality(
                    &model,
                    &suite_batch(&model, 5, cfg.seed)?,
                    kind,
                    &gopts,
                )?);
            }
            let ok = reports
                .iter()
                .all(|r| r.x_vs_p_bitwise == Some(true) && r.max_rel_err() <= 1e-4);
            Ok((ok, reports))
        })(),
    ));

    out.push(suite(
        "zero-parameter-equivalence",
        (|| {
            let mut reports = Vec::new();
            for scheme in [
                SchemeName::DietAbs,
                SchemeName::DietRel,
                SchemeName::T5,
                SchemeName::Shaw,
            ] {
                let c = suite_config(scheme, cfg.d_p).with_segments(2, SegmentLocation::PerHead);
                reports.push(zero_param_equivalence(&c, 10, cfg.seed)?);
            }
            Ok((reports.iter().all(|r| r.mismatches == 0), reports))
        })(),
    ));

    out.push(suite(
        "finite-difference-gradients",
        (|| {
            let mut worst = Vec::new();
            for scheme in [
                SchemeName::InputAdd,
                SchemeName::DietAbs,
                SchemeName::DietRel,
                SchemeName::Shaw,
                SchemeName::T5,
                SchemeName::LinformerDietAbs,
            ] {
                let mut model = Model::new(
                    ModelConfig::new(suite_config(scheme, cfg.d_p), 8, 8),
                    cfg.seed,
                )?;
                model.perturb(0.1, cfg.seed)?;
                let r = grad_check(
                    &model,
                    &suite_batch(&model, 1, cfg.seed)?,
                    LossKind::CrossEntropy,
                    &gopts,
                )?;
                worst.push(json!({
                    "scheme": scheme,
                    "max_rel_err": r.max_rel_err(),
                    "worst_param": r.worst().map(|p| p.name.clone()),
                }));
            }
            let ok = worst
                .iter()
                .all(|w| w["max_rel_err"].as_f64().is_some_and(|e| e <= 1e-4));
            Ok((ok, worst))
        })(),
    ));

    out.push(suite(
        "toeplitz-relative-bias",
        (|| {
            let mut reports = Vec::new();
            for sharing in [Sharing::NoSharing, Sharing::LayerWise, Sharing::HeadWise] {
                let c = suite_config(SchemeName::DietRel, 1).with_sharing(sharing);
                reports.push(toeplitz_check(&c, cfg.seed)?);
            }
            Ok((reports.iter().all(|r| r.violations.is_empty()), reports))
        })(),
    ));

    out.push(suite(
        "sharing-census",
        sharing_census(PositionScheme::DietRel, 2, 4).map(|c| {
            let expected = [
                (Sharing::NoSharing, 8),
                (Sharing::LayerWise, 4),
                (Sharing::HeadWise, 2),
            ];
            (c == expected, c)
        }),
    ));
    out
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<bool> {
    let out = prepare_out(cfg, "verify")?;
    let suites = verify_suites(cfg);
    let passed = suites.iter().all(|s| s.passed);
    for s in &suites {
        println!("{} {}", if s.passed { "PASS" } else { "FAIL" }, s.name);
    }
    write_json(
        &out.join("verify.json"),
        &json!({ "seed": cfg.seed, "passed": passed, "suites": suites }),
    )?;
    Ok(passed)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<f64> {
    let out = prepare_out(cfg, "train")?;
    let task = cfg.task()?;
    let mut model = Model::new(cfg.model_config(), cfg.seed)?;
    let opts = TrainOptions {
        steps: cfg.steps,
        optimizer: Optimizer::adam(cfg.lr),
        batch_size: cfg.batch_size,
        loss: LossKind::CrossEntropy,
        seed: cfg.seed,
        eval_size: 8,
    };
    let history = train(&mut model, &task, &opts)?;
    fs::write(out.join("history.csv"), history.to_csv())?;
    model.to_archive()?.save(&out.join("checkpoint.bin"))?;
    let last = history.records.last().expect("at least one step");
    write_json(
        &out.join("train.json"),
        &json!({
            "seed": cfg.seed,
            "config": cfg,
            "final_loss": last.loss,
            "final_metric": history.final_metric,
            "chance": 1.0 / cfg.num_classes() as f64,
        }),
    )?;
    println!(
        "trained {} on {:?}: final loss {:.4e}, accuracy {:.4}",
        cfg.scheme, cfg.task, last.loss, history.final_metric
    );
    Ok(history.final_metric)
}

pub fn cmd_bench(cfg: &RunConfig, with_scaling: bool) -> Result<()> {
    let out = prepare_out(cfg, "bench")?;
    let opts = BenchOptions {
        reps: cfg.reps,
        warmup: cfg.warmup,
        seed: cfg.seed,
        d_p: cfg.d_p,
        linformer_k: None,
    };
    let report = compare_all(&cfg.model_config(), &opts)?;
    fs::write(out.join("bench.csv"), report.to_csv())?;
    write_json(&out.join("bench.json"), &report)?;
    print!("{}", report.to_csv());
    if with_scaling {
        let base = ModelConfig::new(
            AttentionConfig::new(64, 8, 4, 1, PositionScheme::None).with_d_h(8),
            16,
            16,
        );
        let sopts = BenchOptions {
            linformer_k: Some(32),
            ..opts
        };
        let reports = scaling(
            &base,
            &[SchemeName::DietAbs, SchemeName::LinformerDietAbs],
            &[64, 128, 256, 512],
            &sopts,
        )?;
        let mut csv = String::from("scheme,n,median_ns\n");
        for r in &reports {
            for (n, t) in &r.points {
                csv.push_str(&format!("{},{n},{t:.1}\n", r.scheme));
            }
            println!("{} log-log slope {:.3}", r.scheme, r.slope);
        }
        fs::write(out.join("scaling.csv"), csv)?;
        write_json(&out.join("scaling.json"), &reports)?;
    }
    Ok(())
}

fn load_model(cfg: &RunConfig) -> Result<Model> {
    match &cfg.checkpoint {
        Some(path) => Model::from_archive(&TensorArchive::load(path)?),
        None => Model::new(cfg.model_config(), cfg.seed),
    }
}

fn sample_batch(model: &Model, cfg: &RunConfig, size: usize) -> Result<Vec<Example>> {
    let c = model.config();
    let a = &c.attention;
    let segmap = match a.num_segments {
        1 => None,
        s => Some(SegmentMap::from_lengths(
            &(0..s)
                .map(|i| a.n / s + usize::from(i == s - 1) * (a.n % s))
                .collect::<Vec<_>>(),
        )?),
    };
    let mut rng = SeedRng::new(cfg.seed).split("scan-data");
    Ok((0..size)
        .map(|_| Example {
            tokens: (0..a.n).map(|_| rng.below(c.vocab)).collect(),
            segments: segmap.clone(),
            labels: vec![0; a.n],
        })
        .collect())
}

/// Diagonal structure of a square bias: mean absolute deviation within each
/// diagonal, spread of the diagonal means, and the offset `j − i` with the largest mean.
fn diagonal_profile(b: &Matrix) -> Value {
    let n = b.rows();
    let mut sums = vec![0.0; 2 * n - 1];
    let mut counts = vec![0usize; 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            sums[j + n - 1 - i] += b[(i, j)];
            counts[j + n - 1 - i] += 1;
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let total = b.data().iter().sum::<f64>() / (n * n) as f64;
    let (mut along, mut across) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let m = means[j + n - 1 - i];
            along += (b[(i, j)] - m).abs();
            across += (m - total).abs();
        }
    }
    let cells = (n * n) as f64;
    let best = (0..means.len())
        .max_by(|&x, &y| means[x].total_cmp(&means[y]))
        .unwrap_or(0);
    json!({
        "along_diagonal_mad": along / cells,
        "across_diagonal_mad": across / cells,
        "dominant_offset": best as i64 - (n as i64 - 1),
    })
}

pub fn cmd_viz(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg, "viz")?;
    let path = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("checkpoint.bin"));
    let model = Model::from_archive(&TensorArchive::load(&path)?)?;
    let batch = sample_batch(&model, cfg, 1)?;
    let ex = &batch[0];
    let dir = out.join("heatmaps");
    fs::create_dir_all(&dir)?;
    let mut heads = Vec::new();
    for (l, per_head) in model
        .head_scores(&ex.tokens, ex.segments.as_ref())?
        .into_iter()
        .enumerate()
    {
        for (h, (scores, bias)) in per_head.into_iter().enumerate() {
            export_heatmap(
                &scores,
                dir.join(format!("layer{l}_head{h}_scores.svg")),
                ColorMap::Diverging,
            )?;
            let mut entry = json!({ "layer": l, "head": h });
            if let Some(b) = bias {
                export_heatmap(
                    &b,
                    dir.join(format!("layer{l}_head{h}_bias.svg")),
                    ColorMap::Diverging,
                )?;
                entry["bias_min"] = json!(b.min_value());
                entry["bias_max"] = json!(b.max_value());
                if b.rows() == b.cols() {
                    entry["diagonals"] = diagonal_profile(&b);
                }
            }
            heads.push(entry);
        }
    }
    let ranks = rank_scan(&model, &batch)?;
    fs::write(out.join("rank.csv"), ranks.to_csv())?;
    write_json(&out.join("rank.json"), &ranks)?;

    let mut tables: Vec<(String, Matrix)> = Vec::new();
    for (key, m) in model.params.pos.named_tensors() {
        if key.ends_with("/p") || key.ends_with("/p_q") || key.ends_with("/p_k") {
            tables.push((key.replace('/', "_").replace('*', "all"), m.clone()));
        }
    }
    let mut cosine = serde_json::Map::new();
    for (name, m) in &tables {
        let stats = position_cosine_stats(m)?;
        let mut buf = Vec::new();
        stats.write_csv(&mut buf)?;
        fs::write(out.join(format!("cosine_{name}.csv")), buf)?;
        cosine.insert(name.clone(), serde_json::to_value(&stats)?);
    }
    write_json(
        &out.join("viz.json"),
        &json!({ "seed": cfg.seed, "checkpoint": path, "heads": heads, "cosine": cosine }),
    )?;
    println!("wrote {} head summaries to {}", heads.len(), out.display());
    Ok(())
}

pub fn cmd_rank_scan(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg, "rank-scan")?;
    let model = load_model(cfg)?;
    if cfg.examples == 0 {
        return Err(Error::Config("examples must be positive".into()));
    }
    let report = rank_scan(&model, &sample_batch(&model, cfg, cfg.examples)?)?;
    fs::write(out.join("rank.csv"), report.to_csv())?;
    write_json(&out.join("rank.json"), &report)?;
    print!("{}", report.to_csv());
    Ok(())
}
