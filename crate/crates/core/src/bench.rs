//! Wall-clock comparison of SLIC and quick shift.
//!
//! Every configuration sees every frame. Timing is frame-major: for each
//! frame all configurations run back to back, in reversed order on odd
//! frames, so slow drift of the machine spreads evenly over them.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classify::{svm_predict, ClassifyError, SvmModel, SvmParams};
use crate::dataset::Disease;
use crate::features::{extract_features, FeatureError, LbpParams, FEATURE_COUNT};
use crate::frame::{Frame, FrameError};
use crate::pipeline::{describe_frame, train_model, PipelineError};
use crate::selection::ScorerParams;
use crate::superpixel::{quickshift_segment, slic_segment, QsParams, SlicParams, SuperpixelError};
use crate::synth::synth_frame;

pub const MIN_FRAMES: usize = 5;
pub const MIN_WARMUP: usize = 3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least {MIN_FRAMES} frames, got {0}")]
    TooFewFrames(usize),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Superpixel(#[from] SuperpixelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("thread pool: {0}")]
    Threads(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    SegmentOnly,
    FullMethod,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::SegmentOnly => "segment_only",
            Stage::FullMethod => "full_method",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BenchConfig {
    Slic(SlicParams, Stage),
    Quickshift(QsParams),
}

impl BenchConfig {
    pub fn algorithm(&self) -> &'static str {
        match self {
            BenchConfig::Slic(..) => "slic",
            BenchConfig::Quickshift(_) => "quickshift",
        }
    }

    pub fn params(&self) -> String {
        match self {
            BenchConfig::Slic(p, _) => format!("n={};m={}", p.n_superpixels, p.compactness),
            BenchConfig::Quickshift(p) => format!("sigma={};tau={}", p.kernel_size, p.max_dist),
        }
    }

    pub fn stage(&self) -> Stage {
        match self {
            BenchConfig::Slic(_, s) => *s,
            BenchConfig::Quickshift(_) => Stage::SegmentOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub config: BenchConfig,
    pub frames: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub threads: usize,
    pub warmup: usize,
}

#[derive(Debug, Clone)]
pub struct BenchParams {
    pub slic: SlicParams,
    pub kernel_sizes: Vec<f64>,
    pub max_dists: Vec<f64>,
    pub warmup: usize,
    pub lbp: LbpParams,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            slic: SlicParams::default(),
            kernel_sizes: crate::config::DEFAULT_KERNEL_SIZES.to_vec(),
            max_dists: crate::config::DEFAULT_MAX_DISTS.to_vec(),
            warmup: MIN_WARMUP,
            lbp: LbpParams::default(),
        }
    }
}

impl BenchParams {
    pub fn configs(&self) -> Vec<BenchConfig> {
        let mut out = vec![
            BenchConfig::Slic(self.slic.clone(), Stage::SegmentOnly),
            BenchConfig::Slic(self.slic.clone(), Stage::FullMethod),
        ];
        for &kernel_size in &self.kernel_sizes {
            for &max_dist in &self.max_dists {
                out.push(BenchConfig::Quickshift(QsParams {
                    kernel_size,
                    max_dist,
                }));
            }
        }
        out
    }
}

/// SVM for the full-method timing, trained on a few synthetic frames.
pub fn default_model(slic: &SlicParams, lbp: &LbpParams, seed: u64) -> Result<SvmModel, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segmenter = crate::pipeline::Segmenter::Slic(slic.clone());
    let parts = Disease::ABNORMAL
        .iter()
        .map(|&d| {
            let (frame, mask) = synth_frame(&mut rng, 128, d, [0.0; 3])?;
            Ok(describe_frame(&frame, &mask, &segmenter, lbp, 0.5)?)
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    let svm = SvmParams {
        seed,
        ..SvmParams::default()
    };
    let trained = train_model(
        parts.iter().map(|p| (&p.features, &p.labels)),
        &ScorerParams::default(),
        &svm,
        slic.n_superpixels,
    )?;
    Ok(trained.model)
}

fn run_once(config: &BenchConfig, frame: &Frame, model: &SvmModel, lbp: &LbpParams) -> Result<(), BenchError> {
    match config {
        BenchConfig::Slic(p, stage) => {
            let map = slic_segment(frame, p)?;
            if *stage == Stage::FullMethod {
                let fm = extract_features(frame, &map, lbp)?;
                let (labels, _) = svm_predict(model, fm.data(), FEATURE_COUNT)?;
                std::hint::black_box(labels);
            }
            std::hint::black_box(map);
        }
        BenchConfig::Quickshift(p) => {
            std::hint::black_box(quickshift_segment(frame, p)?);
        }
    }
    Ok(())
}

/// Time every configuration on every frame, single-threaded. The first
/// frame is run `warmup` times per configuration before timing starts.
pub fn run_bench(frames: &[Frame], params: &BenchParams, model: &SvmModel) -> Result<BenchResult, BenchError> {
    if frames.len() < MIN_FRAMES {
        return Err(BenchError::TooFewFrames(frames.len()));
    }
    if params.warmup < MIN_WARMUP {
        return Err(BenchError::InvalidParam(format!(
            "warmup must be at least {MIN_WARMUP}, got {}",
            params.warmup
        )));
    }
    let configs = params.configs();
    for c in &configs {
        match c {
            BenchConfig::Slic(p, _) => p.validate(frames[0].width(), frames[0].height())?,
            BenchConfig::Quickshift(p) => p.validate()?,
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| BenchError::Threads(e.to_string()))?;
    pool.install(|| {
        for c in &configs {
            for _ in 0..params.warmup {
                run_once(c, &frames[0], model, &params.lbp)?;
            }
        }
        let mut times = vec![Vec::with_capacity(frames.len()); configs.len()];
        for (fi, frame) in frames.iter().enumerate() {
            let order: Vec<usize> = if fi % 2 == 0 {
                (0..configs.len()).collect()
            } else {
                (0..configs.len()).rev().collect()
            };
            for ci in order {
                let start = Instant::now();
                run_once(&configs[ci], frame, model, &params.lbp)?;
                times[ci].push(start.elapsed().as_secs_f64());
            }
        }
        let rows = configs
            .into_iter()
            .zip(times)
            .map(|(config, t)| {
                let n = t.len() as f64;
                let mean = t.iter().sum::<f64>() / n;
                let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                BenchRow {
                    config,
                    frames: t.len(),
                    mean_seconds: mean,
                    std_seconds: var.sqrt(),
                }
            })
            .collect();
        Ok(BenchResult {
            rows,
            threads: rayon::current_num_threads(),
            warmup: params.warmup,
        })
    })
}

impl BenchResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("algorithm,params,stage,frames,mean_seconds,std_seconds\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6}",
                r.config.algorithm(),
                r.config.params(),
                r.config.stage().as_str(),
                r.frames,
                r.mean_seconds,
                r.std_seconds
            );
        }
        s
    }

    pub fn find(&self, pred: impl Fn(&BenchConfig) -> bool) -> Option<&BenchRow> {
        self.rows.iter().find(|r| pred(&r.config))
    }

    pub fn qs_row(&self, kernel_size: f64, max_dist: f64) -> Option<&BenchRow> {
        self.find(|c| matches!(c, BenchConfig::Quickshift(p) if p.kernel_size == kernel_size && p.max_dist == max_dist))
    }

    pub fn slic_row(&self, stage: Stage) -> Option<&BenchRow> {
        self.find(|c| matches!(c, BenchConfig::Slic(_, s) if *s == stage))
    }

    /// Human-readable comparison of SLIC against each quick shift setting.
    pub fn summary(&self) -> String {
        let mut s = format!("threads: {}\nwarmup per configuration: {}\n", self.threads, self.warmup);
        let seg = self.slic_row(Stage::SegmentOnly);
        if let (Some(seg), Some(full)) = (seg, self.slic_row(Stage::FullMethod)) {
            let _ = writeln!(
                s,
                "slic {}: segment {:.4} s, full method {:.4} s per frame",
                seg.config.params(),
                seg.mean_seconds,
                full.mean_seconds
            );
        }
        for r in self.rows.iter().filter(|r| matches!(r.config, BenchConfig::Quickshift(_))) {
            let ratio = seg.map(|g| r.mean_seconds / g.mean_seconds).unwrap_or(f64::NAN);
            let _ = writeln!(
                s,
                "quickshift {}: {:.4} s per frame ({ratio:.1}x slic segmentation)",
                r.config.params(),
                r.mean_seconds
            );
        }
        s
    }
}
