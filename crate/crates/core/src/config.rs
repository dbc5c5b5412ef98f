//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//!
//! | key | default |
//! |-----|---------|
//! | `manifest` | (required) |
//! | `output_dir` | `out` |
//! | `superpixel_counts` | `25,50,100,250,500` |
//! | `algorithm` | `slic` (`slic` or `quickshift`) |
//! | `seed` | `0` (patient split and SVM) |
//! | `min_train_frames` | `6` |
//! | `overlap_threshold` | `0.5` |
//! | `overlays` | `true` |
//! | `threads` | `0` (all cores) |
//! | `slic.compactness` / `slic.iterations` / `slic.enforce_connectivity` | `10` / `10` / `true` |
//! | `qs.kernel_size` / `qs.max_dist` | `5` / `10` |
//! | `bench.kernel_sizes` / `bench.max_dists` | `5,10` / `10,15,20,25,30,100,1000` |
//! | `bench.warmup` | `3` |
//! | `lbp.neighbors` / `lbp.radius` / `lbp.interpolation` | `8` / `1` / `bilinear` |
//! | `selection.k_neighbors` / `selection.heat_t` / `selection.keep` | `5` / `auto` / `20` |
//! | `svm.kernel` / `svm.c` / `svm.gamma` / `svm.tol` / `svm.max_passes` | `rbf` / `1` / `auto` / `0.001` / `5` |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::classify::{Gamma, KernelKind, SvmParams};
use crate::features::{Interpolation, LbpParams};
use crate::selection::{HeatT, ScorerParams};
use crate::superpixel::{QsParams, SlicParams};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {msg}")]
    BadValue {
        key: String,
        value: String,
        msg: String,
    },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Slic,
    Quickshift,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Slic => "slic",
            Algorithm::Quickshift => "quickshift",
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "slic" => Ok(Algorithm::Slic),
            "quickshift" | "qs" => Ok(Algorithm::Quickshift),
            _ => Err("expected slic or quickshift".into()),
        }
    }
}

pub const DEFAULT_COUNTS: [usize; 5] = [25, 50, 100, 250, 500];
pub const DEFAULT_KERNEL_SIZES: [f64; 2] = [5.0, 10.0];
pub const DEFAULT_MAX_DISTS: [f64; 7] = [10.0, 15.0, 20.0, 25.0, 30.0, 100.0, 1000.0];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub superpixel_counts: Vec<usize>,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub min_train_frames: usize,
    pub overlap_threshold: f64,
    pub overlays: bool,
    pub threads: usize,
    /// `n_superpixels` is taken from `superpixel_counts`.
    pub slic: SlicParams,
    pub qs: QsParams,
    pub bench_kernel_sizes: Vec<f64>,
    pub bench_max_dists: Vec<f64>,
    pub bench_warmup: usize,
    pub lbp: LbpParams,
    pub selection: ScorerParams,
    /// `seed` is taken from the top-level `seed`.
    pub svm: SvmParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            output_dir: PathBuf::from("out"),
            superpixel_counts: DEFAULT_COUNTS.to_vec(),
            algorithm: Algorithm::Slic,
            seed: 0,
            min_train_frames: 6,
            overlap_threshold: crate::features::DEFAULT_OVERLAP_THRESHOLD,
            overlays: true,
            threads: 0,
            slic: SlicParams::default(),
            qs: QsParams::default(),
            bench_kernel_sizes: DEFAULT_KERNEL_SIZES.to_vec(),
            bench_max_dists: DEFAULT_MAX_DISTS.to_vec(),
            bench_warmup: 3,
            lbp: LbpParams::default(),
            selection: ScorerParams::default(),
            svm: SvmParams::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        msg: e.to_string(),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Read a config file; relative `manifest` and `output_dir` paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = &cfg.manifest {
            if m.is_relative() {
                cfg.manifest = Some(base.join(m));
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "superpixel_counts" => self.superpixel_counts = parse_list(key, value)?,
            "algorithm" => self.algorithm = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "min_train_frames" => self.min_train_frames = parse(key, value)?,
            "overlap_threshold" => self.overlap_threshold = parse(key, value)?,
            "overlays" => self.overlays = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "slic.compactness" => self.slic.compactness = parse(key, value)?,
            "slic.iterations" => self.slic.iterations = parse(key, value)?,
            "slic.enforce_connectivity" => self.slic.enforce_bounds = parse(key, value)?,
            "qs.kernel_size" => self.qs.kernel_size = parse(key, value)?,
            "qs.max_dist" => self.qs.max_dist = parse(key, value)?,
            "bench.kernel_sizes" => self.bench_kernel_sizes = parse_list(key, value)?,
            "bench.max_dists" => self.bench_max_dists = parse_list(key, value)?,
            "bench.warmup" => self.bench_warmup = parse(key, value)?,
            "lbp.neighbors" => self.lbp.neighbors = parse(key, value)?,
            "lbp.radius" => self.lbp.radius = parse(key, value)?,
            "lbp.interpolation" => {
                self.lbp.interpolation = match value {
                    "bilinear" => Interpolation::Bilinear,
                    "nearest" => Interpolation::Nearest,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: value.into(),
                            msg: "expected bilinear or nearest".into(),
                        })
                    }
                }
            }
            "selection.k_neighbors" => self.selection.k_neighbors = parse(key, value)?,
            "selection.heat_t" => {
                self.selection.heat_t = if value == "auto" {
                    HeatT::Auto
                } else {
                    HeatT::Fixed(parse(key, value)?)
                }
            }
            "selection.keep" => self.selection.keep = parse(key, value)?,
            "svm.kernel" => {
                self.svm.kernel = value.parse::<KernelKind>().map_err(|e| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    msg: e.to_string(),
                })?
            }
            "svm.c" => self.svm.c = parse(key, value)?,
            "svm.gamma" => {
                self.svm.gamma = if value == "auto" {
                    Gamma::Auto
                } else {
                    Gamma::Fixed(parse(key, value)?)
                }
            }
            "svm.tol" => self.svm.tol = parse(key, value)?,
            "svm.max_passes" => self.svm.max_passes = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// SVM parameters with the top-level seed applied.
    pub fn svm_params(&self) -> SvmParams {
        SvmParams {
            seed: self.seed,
            ..self.svm
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.manifest.is_none() {
            return Err(ConfigError::Missing("manifest"));
        }
        if self.superpixel_counts.is_empty() {
            return invalid("superpixel_counts is empty".into());
        }
        if let Some(n) = self.superpixel_counts.iter().find(|&&n| n < 4) {
            return invalid(format!("superpixel count {n} is below 4"));
        }
        let mut seen = self.superpixel_counts.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.superpixel_counts.len() {
            return invalid("superpixel_counts has duplicates".into());
        }
        if !(0.0..=1.0).contains(&self.overlap_threshold) {
            return invalid(format!("overlap_threshold {} outside [0, 1]", self.overlap_threshold));
        }
        if self.bench_kernel_sizes.is_empty() || self.bench_max_dists.is_empty() {
            return invalid("bench grids must be nonempty".into());
        }
        if self.selection.keep > crate::features::FEATURE_COUNT {
            return invalid(format!("selection.keep {} exceeds 35", self.selection.keep));
        }
        self.selection
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.svm.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.lbp.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.qs.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        // the count bounds depend on frame size; checked again per frame
        let slic = SlicParams {
            n_superpixels: 4,
            ..self.slic.clone()
        };
        slic.validate(64, 64).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Every key with its current value, in config-file syntax.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        if let Some(m) = &self.manifest {
            kv("manifest", m.display().to_string());
        }
        kv("output_dir", self.output_dir.display().to_string());
        kv("superpixel_counts", join(&self.superpixel_counts));
        kv("algorithm", self.algorithm.as_str().into());
        kv("seed", self.seed.to_string());
        kv("min_train_frames", self.min_train_frames.to_string());
        kv("overlap_threshold", self.overlap_threshold.to_string());
        kv("overlays", self.overlays.to_string());
        kv("threads", self.threads.to_string());
        kv("slic.compactness", self.slic.compactness.to_string());
        kv("slic.iterations", self.slic.iterations.to_string());
        kv("slic.enforce_connectivity", self.slic.enforce_bounds.to_string());
        kv("qs.kernel_size", self.qs.kernel_size.to_string());
        kv("qs.max_dist", self.qs.max_dist.to_string());
        kv("bench.kernel_sizes", join(&self.bench_kernel_sizes));
        kv("bench.max_dists", join(&self.bench_max_dists));
        kv("bench.warmup", self.bench_warmup.to_string());
        kv("lbp.neighbors", self.lbp.neighbors.to_string());
        kv("lbp.radius", self.lbp.radius.to_string());
        kv(
            "lbp.interpolation",
            match self.lbp.interpolation {
                Interpolation::Bilinear => "bilinear",
                Interpolation::Nearest => "nearest",
            }
            .into(),
        );
        kv("selection.k_neighbors", self.selection.k_neighbors.to_string());
        kv(
            "selection.heat_t",
            match self.selection.heat_t {
                HeatT::Auto => "auto".into(),
                HeatT::Fixed(t) => t.to_string(),
            },
        );
        kv("selection.keep", self.selection.keep.to_string());
        kv("svm.kernel", self.svm.kernel.as_str().into());
        kv("svm.c", self.svm.c.to_string());
        kv(
            "svm.gamma",
            match self.svm.gamma {
                Gamma::Auto => "auto".into(),
                Gamma::Fixed(g) => g.to_string(),
            },
        );
        kv("svm.tol", self.svm.tol.to_string());
        kv("svm.max_passes", self.svm.max_passes.to_string());
        out
    }
}
