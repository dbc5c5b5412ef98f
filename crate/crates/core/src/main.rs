use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use capseg::bench::{default_model, run_bench, BenchError, BenchParams};
use capseg::classify::ClassifyError;
use capseg::config::{Algorithm, ConfigError, PipelineConfig};
use capseg::dataset::{DatasetError, Disease};
use capseg::eval::{measures, EvalError};
use capseg::features::{FeatureError, FeatureMatrix};
use capseg::io_util::write_atomic;
use capseg::pipeline::{load_manifest_frames, run_pipeline, train_model, PipelineError, Segmenter};
use capseg::superpixel::SuperpixelError;
use capseg::synth::{generate_dataset, synth_frame, SynthError, SynthParams};
use capseg::{load_frame, load_mask, load_model, pixel_confusion, save_model, svm_predict, DatasetManifest, Mask, SuperpixelMap};

#[derive(Parser)]
#[command(name = "capseg", version, about = "Superpixel lesion segmentation for capsule endoscopy frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus `key=value` overrides; any config key works with `--set`.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_name = "N,N,...")]
    superpixel_counts: Option<String>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let mut set = |k: &str, v: String| cfg.set(k, &v);
        if let Some(v) = self.seed {
            set("seed", v.to_string())?;
        }
        if let Some(v) = &self.manifest {
            set("manifest", v.display().to_string())?;
        }
        if let Some(v) = &self.output_dir {
            set("output_dir", v.display().to_string())?;
        }
        if let Some(v) = &self.superpixel_counts {
            set("superpixel_counts", v.clone())?;
        }
        if let Some(v) = &self.algorithm {
            set("algorithm", v.clone())?;
        }
        if let Some(v) = self.threads {
            set("threads", v.to_string())?;
        }
        for o in &self.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                msg: format!("--set expects KEY=VALUE, got {o:?}"),
            })?;
            set(k.trim(), v.trim().to_string())?;
        }
        Ok(cfg)
    }

    fn segmenter(cfg: &PipelineConfig, n: Option<usize>) -> Segmenter {
        match cfg.algorithm {
            Algorithm::Slic => Segmenter::Slic(capseg::SlicParams {
                n_superpixels: n.unwrap_or(cfg.superpixel_counts[0]),
                ..cfg.slic.clone()
            }),
            Algorithm::Quickshift => Segmenter::Quickshift(cfg.qs),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset: frames/, masks/ and manifest.csv.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        patients: usize,
        #[arg(long, default_value_t = 6)]
        frames_per_patient: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Segment one frame into superpixels (label PNG plus .txt sidecar).
    Segment {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Superpixel count for SLIC; defaults to the first configured count.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Describe each superpixel of a frame by its 35 features.
    Features {
        #[arg(long)]
        frame: PathBuf,
        /// Superpixel map written by `segment`.
        #[arg(long)]
        map: PathBuf,
        /// Lesion mask; rows get overlap labels when given.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Rank features and train an SVM on labeled feature CSVs.
    Train {
        #[arg(long, required = true, num_args = 1..)]
        features: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ranking: Option<PathBuf>,
        /// Value recorded as the model's superpixel count.
        #[arg(long, default_value_t = 0)]
        n: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Label superpixels with a trained model: `label,decision` per row.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pixel-level measures of one frame's predictions against its mask.
    Evaluate {
        /// Output of `predict`.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// Omit for a normal frame.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Full run over a manifest; writes models, features, overlays and report.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Single-threaded SLIC vs quick shift timing.
    Bench {
        /// CSV output; the summary goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Synthetic frames to time when no manifest is configured.
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Failure with its exit status: 2 for bad input, 1 for everything else.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn validation(e: impl std::fmt::Display) -> Self {
        Self { code: 2, msg: e.to_string() }
    }
    fn runtime(e: impl std::fmt::Display) -> Self {
        Self { code: 1, msg: e.to_string() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_validation() {
            Self::validation(e)
        } else {
            Self::runtime(e)
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::validation(e)
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidParam(_) => Self::validation(e),
            _ => Self::runtime(e),
        }
    }
}

impl From<SuperpixelError> for Failure {
    fn from(e: SuperpixelError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<FeatureError> for Failure {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Malformed(_) | FeatureError::DimensionMismatch { .. } => Self::validation(e),
            e => PipelineError::from(e).into(),
        }
    }
}

impl From<ClassifyError> for Failure {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Io(_) => Self::runtime(e),
            _ => Self::validation(e),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Self::validation(e)
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::TooFewFrames(_) | BenchError::InvalidParam(_) => Self::validation(e),
            BenchError::Pipeline(p) => p.into(),
            _ => Self::runtime(e),
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, text.as_bytes()).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn frame_failure(path: &Path) -> impl FnOnce(capseg::FrameError) -> Failure + '_ {
    move |e| Failure::validation(format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth {
            out,
            patients,
            frames_per_patient,
            size,
            seed,
        } => {
            let m = generate_dataset(
                &out,
                &SynthParams {
                    patients,
                    frames_per_patient,
                    size,
                    seed,
                },
            )?;
            println!("wrote {} frames to {}", m.records.len(), out.display());
        }
        Command::Segment { frame, out, n, cfg } => {
            let c = cfg.resolve()?;
            let f = load_frame(&frame).map_err(frame_failure(&frame))?;
            let map = ConfigArgs::segmenter(&c, n).segment(&f)?;
            map.save(&out)?;
            println!("{} superpixels", map.count());
        }
        Command::Features {
            frame,
            map,
            mask,
            out,
            cfg,
        } => {
            let c = cfg.resolve()?;
            c.lbp.validate()?;
            let f = load_frame(&frame).map_err(frame_failure(&frame))?;
            let m = SuperpixelMap::load(&map)?;
            let fm = capseg::extract_features(&f, &m, &c.lbp)?;
            let labels = match &mask {
                Some(p) => {
                    let k = load_mask(p).map_err(frame_failure(p))?;
                    Some(capseg::label_superpixels(&m, &k, c.overlap_threshold)?)
                }
                None => None,
            };
            write_text(&out, &fm.to_csv(labels.as_ref()))?;
        }
        Command::Train {
            features,
            out,
            ranking,
            n,
            cfg,
        } => {
            let c = cfg.resolve()?;
            let mut parts = Vec::new();
            for p in &features {
                let (fm, labels) = FeatureMatrix::from_csv(&read_text(p)?)?;
                let labels =
                    labels.ok_or_else(|| Failure::validation(format!("{}: rows are unlabeled", p.display())))?;
                parts.push((fm, labels));
            }
            let trained = train_model(parts.iter().map(|(f, l)| (f, l)), &c.selection, &c.svm_params(), n)?;
            save_model(&trained.model, &out)?;
            if let Some(r) = ranking {
                write_text(&r, &trained.ranking.to_csv())?;
            }
            println!(
                "{} support vectors, features {:?}, converged {}",
                trained.model.support_count(),
                trained.ranking.selected,
                trained.report.converged
            );
        }
        Command::Predict {
            model,
            features,
            out,
            seed: _,
        } => {
            let m = load_model(&model)?;
            let (fm, _) = FeatureMatrix::from_csv(&read_text(&features)?)?;
            let (labels, decisions) = svm_predict(&m, fm.data(), fm.cols())?;
            let mut text = String::from("label,decision\n");
            for (l, d) in labels.iter().zip(&decisions) {
                text.push_str(&format!("{l},{d:.17e}\n"));
            }
            write_text(&out, &text)?;
        }
        Command::Evaluate {
            predictions,
            map,
            mask,
            seed: _,
        } => {
            let labels = read_text(&predictions)?
                .lines()
                .skip(1)
                .filter(|l| !l.trim().is_empty())
                .map(|l| match l.split(',').next().map(str::trim) {
                    Some("0") => Ok(0),
                    Some("1") => Ok(1),
                    _ => Err(Failure::validation(format!("bad prediction row {l:?}"))),
                })
                .collect::<Result<Vec<u8>, _>>()?;
            let m = SuperpixelMap::load(&map)?;
            let k = match &mask {
                Some(p) => load_mask(p).map_err(frame_failure(p))?,
                None => Mask::empty(m.width(), m.height()),
            };
            let conf = pixel_confusion(&labels, &m, &k)?;
            let ms = measures(&conf)?;
            println!("tp,fn,tn,fp,sensitivity,specificity,accuracy,precision");
            println!(
                "{},{},{},{},{},{},{},{}",
                conf.tp, conf.fn_, conf.tn, conf.fp, ms.sensitivity, ms.specificity, ms.accuracy, ms.precision
            );
        }
        Command::Pipeline { cfg } => {
            let c = cfg.resolve()?;
            let out = run_pipeline(&c)?;
            for r in &out.runs {
                eprintln!(
                    "{}: {} train rows, {} support vectors, features {:?}, {} cached frames",
                    r.name, r.train_rows, r.support_vectors, r.selected, r.cache_hits
                );
            }
            print!("{}", out.report_csv);
        }
        Command::Bench { out, frames, size, cfg } => {
            let c = cfg.resolve()?;
            let loaded = match &c.manifest {
                Some(m) => load_manifest_frames(&DatasetManifest::load(m)?)?
                    .into_iter()
                    .map(|f| f.frame)
                    .collect(),
                None => {
                    use rand::SeedableRng;
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(c.seed);
                    (0..frames)
                        .map(|i| {
                            synth_frame(&mut rng, size, Disease::ABNORMAL[i % 5], [0.0; 3])
                                .map(|(f, _)| f)
                                .map_err(Failure::validation)
                        })
                        .collect::<Result<Vec<_>, _>>()?
                }
            };
            let slic = match ConfigArgs::segmenter(&PipelineConfig { algorithm: Algorithm::Slic, ..c.clone() }, None) {
                Segmenter::Slic(p) => p,
                Segmenter::Quickshift(_) => unreachable!(),
            };
            let params = BenchParams {
                slic,
                kernel_sizes: c.bench_kernel_sizes.clone(),
                max_dists: c.bench_max_dists.clone(),
                warmup: c.bench_warmup,
                lbp: c.lbp,
            };
            let model = default_model(&params.slic, &params.lbp, c.seed)?;
            let result = run_bench(&loaded, &params, &model)?;
            if let Some(p) = out {
                write_text(&p, &result.to_csv())?;
            } else {
                print!("{}", result.to_csv());
            }
            print!("{}", result.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
