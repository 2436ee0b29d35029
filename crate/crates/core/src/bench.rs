//! Wall-clock micro-benchmarks of training steps and inference per scheme.
//!
//! Repetitions of different schemes are interleaved so that slow drift in
//! machine load affects every scheme alike. Slowdowns compare medians.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::SchemeName;
use crate::encodings::PositionCache;
use crate::error::{Error, Result};
use crate::model::{Example, LossKind, Model, ModelConfig, Task};
use crate::rng::SeedRng;

/// A measured step must last at least this many timer ticks.
pub const MIN_TICKS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Forward and backward pass.
    Train,
    /// Forward pass only, using the positional cache where the scheme has one.
    Inference,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Inference => "inference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
    /// DIET-ABS width used when installing schemes.
    pub d_p: usize,
    /// Projected length for the Linformer path; `None` means `max(1, n/4)`.
    pub linformer_k: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            reps: 30,
            warmup: 5,
            seed: 0,
            d_p: 8,
            linformer_k: None,
        }
    }
}

impl BenchOptions {
    fn validate(&self) -> Result<()> {
        if self.reps < 10 || self.warmup < 3 {
            return Err(Error::Config(format!(
                "benchmarks need reps >= 10 and warmup >= 3, got {} and {}",
                self.reps, self.warmup
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchEntry {
    pub scheme: SchemeName,
    pub mode: Mode,
    pub n: usize,
    pub d: usize,
    pub h: usize,
    pub d_h: usize,
    pub reps: usize,
    pub mean_ns: f64,
    pub stdev_ns: f64,
    pub min_ns: f64,
    pub median_ns: f64,
    /// Median time relative to the input-additive baseline in the same mode.
    pub rel_slowdown: f64,
    /// Sum of the outputs of one step; identical across runs with the same seed.
    pub checksum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: ModelConfig,
    pub options: BenchOptions,
    pub timer_tick_ns: f64,
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn entry(&self, scheme: SchemeName, mode: Mode) -> Option<&BenchEntry> {
        self.entries
            .iter()
            .find(|e| e.scheme == scheme && e.mode == mode)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(
            out,
            "scheme,mode,n,d,h,d_h,reps,mean_ns,stdev_ns,min_ns,rel_slowdown"
        )?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.1},{:.1},{:.1},{:.4}",
                e.scheme,
                e.mode.as_str(),
                e.n,
                e.d,
                e.h,
                e.d_h,
                e.reps,
                e.mean_ns,
                e.stdev_ns,
                e.min_ns,
                e.rel_slowdown
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Smallest nonzero difference between consecutive readings of the monotonic clock.
pub fn timer_tick_ns() -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..200 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min((b - a).as_nanos() as f64);
    }
    best
}

/// One prepared workload.
struct Bench {
    scheme: SchemeName,
    mode: Mode,
    model: Model,
    example: Example,
    cache: Option<PositionCache>,
    times: Vec<f64>,
    checksum: f64,
}

impl Bench {
    fn new(
        config: &ModelConfig,
        scheme: SchemeName,
        mode: Mode,
        opts: &BenchOptions,
    ) -> Result<Self> {
        let mut mc = config.clone();
        mc.attention = scheme.configure(&config.attention, opts.d_p);
        if let (SchemeName::LinformerDietAbs, Some(k)) = (scheme, opts.linformer_k) {
            mc.attention.linformer_k = Some(k);
        }
        let mut model = Model::new(mc, opts.seed)?;
        // Non-zero positional tables so that no scheme takes a shortcut.
        model.perturb(0.02, opts.seed)?;
        let a = model.attention_config();
        let task = Task::selective_copy(a.n, config.vocab, 1)?;
        let mut example = task
            .sample(1, &mut SeedRng::new(opts.seed).split("bench-data"))?
            .remove(0);
        example
            .labels
            .iter_mut()
            .for_each(|y| *y %= config.num_classes);
        let cache = match mode {
            Mode::Inference => model.build_cache(None)?,
            Mode::Train => None,
        };
        Ok(Self {
            scheme,
            mode,
            model,
            example,
            cache,
            times: Vec::new(),
            checksum: 0.0,
        })
    }

    fn run(&self) -> Result<f64> {
        Ok(match self.mode {
            Mode::Inference => {
                let logits = match &self.cache {
                    Some(c) => self.model.forward_cached(&self.example.tokens, None, c)?,
                    None => self.model.forward(&self.example.tokens, None)?,
                };
                logits.data().iter().sum()
            }
            Mode::Train => {
                let (loss, _) = self
                    .model
                    .loss_and_grads(std::slice::from_ref(&self.example), LossKind::CrossEntropy)?;
                loss
            }
        })
    }

    fn timed(&mut self) -> Result<()> {
        let start = Instant::now();
        let out = black_box(self.run()?);
        self.times.push(start.elapsed().as_nanos() as f64);
        self.checksum = out;
        Ok(())
    }

    fn entry(&self, tick: f64) -> Result<BenchEntry> {
        let k = self.times.len() as f64;
        let mean = self.times.iter().sum::<f64>() / k;
        let var = self
            .times
            .iter()
            .map(|t| (t - mean) * (t - mean))
            .sum::<f64>()
            / (k - 1.0);
        let mut sorted = self.times.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        if median < MIN_TICKS * tick {
            return Err(Error::Measurement(format!(
                "{} {} step takes {median:.0} ns, under {MIN_TICKS} timer ticks of {tick:.0} ns; use a larger config",
                self.scheme,
                self.mode.as_str()
            )));
        }
        let a = self.model.attention_config();
        Ok(BenchEntry {
            scheme: self.scheme,
            mode: self.mode,
            n: a.n,
            d: a.d,
            h: a.h,
            d_h: a.d_h,
            reps: self.times.len(),
            mean_ns: mean,
            stdev_ns: var.sqrt(),
            min_ns: sorted[0],
            median_ns: median,
            rel_slowdown: f64::NAN,
            checksum: self.checksum,
        })
    }
}

/// Benchmarks the given (scheme, mode) pairs with interleaved repetitions.
pub fn bench_many(
    config: &ModelConfig,
    runs: &[(SchemeName, Mode)],
    opts: &BenchOptions,
) -> Result<BenchReport> {
    opts.validate()?;
    let tick = timer_tick_ns();
    let mut benches = runs
        .iter()
        .map(|&(s, m)| Bench::new(config, s, m, opts))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..opts.warmup {
        for b in &benches {
            black_box(b.run()?);
        }
    }
    for _ in 0..opts.reps {
        for b in &mut benches {
            b.timed()?;
        }
    }
    let mut entries = benches
        .iter()
        .map(|b| b.entry(tick))
        .collect::<Result<Vec<_>>>()?;
    for mode in [Mode::Train, Mode::Inference] {
        let base = entries
            .iter()
            .find(|e| e.mode == mode && e.scheme == SchemeName::InputAdd)
            .map(|e| e.median_ns);
        for e in entries.iter_mut().filter(|e| e.mode == mode) {
            e.rel_slowdown = base.map_or(f64::NAN, |b| e.median_ns / b);
        }
    }
    Ok(BenchReport {
        config: config.clone(),
        options: *opts,
        timer_tick_ns: tick,
        entries,
    })
}

/// Benchmarks one scheme in one mode.
pub fn bench_scheme(
    config: &ModelConfig,
    scheme: SchemeName,
    mode: Mode,
    opts: &BenchOptions,
) -> Result<BenchEntry> {
    let mut runs = vec![(scheme, mode)];
    if scheme != SchemeName::InputAdd {
        runs.push((SchemeName::InputAdd, mode));
    }
    Ok(bench_many(config, &runs, opts)?.entries.remove(0))
}

/// Every scheme in both modes: one CSV row per (scheme, mode).
pub fn compare_all(config: &ModelConfig, opts: &BenchOptions) -> Result<BenchReport> {
    let runs: Vec<_> = [Mode::Train, Mode::Inference]
        .into_iter()
        .flat_map(|m| SchemeName::ALL.into_iter().map(move |s| (s, m)))
        .collect();
    bench_many(config, &runs, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub scheme: SchemeName,
    /// `(n, median inference ns)`.
    pub points: Vec<(usize, f64)>,
    /// Least-squares slope of `ln t` against `ln n`.
    pub slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(usize, f64)]) -> f64 {
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Inference time against sequence length for each scheme; `config.attention.n` is overridden.
pub fn scaling(
    config: &ModelConfig,
    schemes: &[SchemeName],
    ns: &[usize],
    opts: &BenchOptions,
) -> Result<Vec<ScalingReport>> {
    let mut reports: Vec<ScalingReport> = schemes
        .iter()
        .map(|&scheme| ScalingReport {
            scheme,
            points: Vec::new(),
            slope: f64::NAN,
        })
        .collect();
    for &n in ns {
        let mut c = config.clone();
        c.attention.n = n;
        let runs: Vec<_> = schemes.iter().map(|&s| (s, Mode::Inference)).collect();
        let report = bench_many(&c, &runs, opts)?;
        for (r, e) in reports.iter_mut().zip(&report.entries) {
            r.points.push((n, e.median_ns));
        }
    }
    for r in &mut reports {
        r.slope = log_log_slope(&r.points);
    }
    Ok(reports)
}
