//! End-to-end runs: segment, describe, rank, train, predict, evaluate.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! maps/<run>/<frame>.png (+ .txt)   superpixel labels
//! features/<run>/<frame>.csv        features and overlap labels
//! features/<run>/<frame>.key        content hash of the inputs behind them
//! ranking/<run>.csv                 Laplacian scores and selection
//! models/<run>.svm                  trained classifier
//! overlays/<run>/<frame>.png        test-frame predictions
//! report.csv, report_counts.csv, report.meta.txt, config.txt
//! ```
//!
//! `<run>` is `n<N>` for SLIC and `qs_k<sigma>_d<tau>` for quick shift.
//! Per-frame features are reused when the stored key matches.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::{save_model, svm_predict, svm_train, ClassifyError, SvmModel, SvmParams, TrainReport};
use crate::config::{Algorithm, ConfigError, PipelineConfig};
use crate::dataset::{split_by_patient, DatasetError, DatasetManifest, Disease};
use crate::eval::{aggregate, overlay, pixel_confusion, EvalError, FrameResult, Report, ReportMeta};
use crate::features::{
    extract_features, label_superpixels, FeatureError, FeatureMatrix, LbpParams, SuperpixelLabels,
    FEATURE_COUNT,
};
use crate::frame::{load_frame, load_mask, Frame, FrameError, Mask};
use crate::io_util::write_atomic;
use crate::selection::{laplacian_scores, select_features, FeatureRanking, ScorerParams, SelectionError};
use crate::superpixel::{quickshift_segment, slic_segment, QsParams, SlicParams, SuperpixelError, SuperpixelMap};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Frame { path: String, source: FrameError },
    #[error(transparent)]
    Superpixel(#[from] SuperpixelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Threads(String),
}

impl PipelineError {
    /// Errors caused by bad input or parameters rather than the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Dataset(
                    DatasetError::EmptyManifest
                        | DatasetError::UnknownDisease(_)
                        | DatasetError::DuplicateFrame(_)
                        | DatasetError::MissingMask(_)
                        | DatasetError::Malformed { .. }
                )
                | PipelineError::Superpixel(SuperpixelError::InvalidParam(_))
                | PipelineError::Feature(FeatureError::InvalidParam(_))
                | PipelineError::Feature(FeatureError::ImageTooSmall { .. })
                | PipelineError::Selection(SelectionError::InvalidParam(_))
                | PipelineError::Classify(ClassifyError::InvalidParam(_))
        )
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let context = context.into();
    move |source| PipelineError::Io { context, source }
}

/// Superpixel method with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Segmenter {
    Slic(SlicParams),
    Quickshift(QsParams),
}

impl Segmenter {
    pub fn segment(&self, frame: &Frame) -> Result<SuperpixelMap, SuperpixelError> {
        match self {
            Segmenter::Slic(p) => slic_segment(frame, p),
            Segmenter::Quickshift(p) => quickshift_segment(frame, p),
        }
    }

    pub fn run_name(&self) -> String {
        match self {
            Segmenter::Slic(p) => format!("n{}", p.n_superpixels),
            Segmenter::Quickshift(p) => format!("qs_k{}_d{}", p.kernel_size, p.max_dist),
        }
    }

    fn tag(&self) -> String {
        format!("{self:?}")
    }
}

/// A frame of the manifest, loaded.
#[derive(Debug, Clone)]
pub struct LoadedFrame {
    pub stem: String,
    pub disease: Disease,
    pub frame: Frame,
    pub mask: Mask,
    content: [u8; 32],
}

pub fn load_manifest_frames(manifest: &DatasetManifest) -> Result<Vec<LoadedFrame>, PipelineError> {
    manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let frame_path = manifest.resolve(&r.frame_path);
            let frame_err = |p: &Path| {
                let path = p.display().to_string();
                move |source| PipelineError::Frame { path, source }
            };
            let frame = load_frame(&frame_path).map_err(frame_err(&frame_path))?;
            let mut hasher = Sha256::new();
            hasher.update(std::fs::read(&frame_path).map_err(io_err(frame_path.display().to_string()))?);
            let mask = match &r.mask_path {
                Some(m) => {
                    let mask_path = manifest.resolve(m);
                    let mask = load_mask(&mask_path).map_err(frame_err(&mask_path))?;
                    mask.check_matches(frame.width(), frame.height())
                        .map_err(frame_err(&mask_path))?;
                    hasher.update(b"mask");
                    hasher.update(std::fs::read(&mask_path).map_err(io_err(mask_path.display().to_string()))?);
                    mask
                }
                None => Mask::empty(frame.width(), frame.height()),
            };
            let stem = Path::new(&r.frame_path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let stem: String = stem
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            Ok(LoadedFrame {
                stem: format!("{i:04}_{stem}"),
                disease: r.disease,
                frame,
                mask,
                content: hasher.finalize().into(),
            })
        })
        .collect()
}

/// Superpixels, features and overlap labels of one frame.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub map: SuperpixelMap,
    pub features: FeatureMatrix,
    pub labels: SuperpixelLabels,
    pub cached: bool,
}

pub fn describe_frame(
    frame: &Frame,
    mask: &Mask,
    segmenter: &Segmenter,
    lbp: &LbpParams,
    threshold: f64,
) -> Result<FrameFeatures, PipelineError> {
    let map = segmenter.segment(frame)?;
    let features = extract_features(frame, &map, lbp)?;
    let labels = label_superpixels(&map, mask, threshold)?;
    Ok(FrameFeatures {
        map,
        features,
        labels,
        cached: false,
    })
}

fn cache_key(f: &LoadedFrame, segmenter: &Segmenter, lbp: &LbpParams, threshold: f64) -> String {
    let mut h = Sha256::new();
    h.update(f.content);
    h.update(segmenter.tag());
    h.update(format!("{lbp:?}"));
    h.update(threshold.to_le_bytes());
    hex::encode(h.finalize())
}

struct RunDirs {
    maps: PathBuf,
    features: PathBuf,
    overlays: PathBuf,
}

fn describe_cached(
    f: &LoadedFrame,
    dirs: &RunDirs,
    segmenter: &Segmenter,
    lbp: &LbpParams,
    threshold: f64,
) -> Result<FrameFeatures, PipelineError> {
    let key = cache_key(f, segmenter, lbp, threshold);
    let map_path = dirs.maps.join(format!("{}.png", f.stem));
    let csv_path = dirs.features.join(format!("{}.csv", f.stem));
    let key_path = dirs.features.join(format!("{}.key", f.stem));

    if std::fs::read_to_string(&key_path).map(|k| k.trim() == key).unwrap_or(false) {
        let hit = (|| {
            let map = SuperpixelMap::load(&map_path).ok()?;
            let (features, labels) = FeatureMatrix::from_csv(&std::fs::read_to_string(&csv_path).ok()?).ok()?;
            (features.rows() == map.count()).then_some(FrameFeatures {
                map,
                features,
                labels: labels?,
                cached: true,
            })
        })();
        if let Some(hit) = hit {
            return Ok(hit);
        }
    }

    let out = describe_frame(&f.frame, &f.mask, segmenter, lbp, threshold)?;
    out.map.save(&map_path)?;
    write_atomic(&csv_path, out.features.to_csv(Some(&out.labels)).as_bytes())
        .map_err(io_err(csv_path.display().to_string()))?;
    // the key goes last: an interrupted write leaves a stale or missing key
    write_atomic(&key_path, format!("{key}\n").as_bytes()).map_err(io_err(key_path.display().to_string()))?;
    Ok(out)
}

/// Model trained on stacked per-frame features.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: SvmModel,
    pub ranking: FeatureRanking,
    pub report: TrainReport,
}

/// Rank features by Laplacian score on the training rows, keep the best
/// `selection.keep`, and fit the SVM on them.
pub fn train_model<'a>(
    parts: impl IntoIterator<Item = (&'a FeatureMatrix, &'a SuperpixelLabels)>,
    selection: &ScorerParams,
    svm: &SvmParams,
    trained_for: usize,
) -> Result<TrainedModel, PipelineError> {
    let mut matrices = Vec::new();
    let mut y = Vec::new();
    for (fm, labels) in parts {
        matrices.push(fm);
        y.extend_from_slice(&labels.labels);
    }
    let x = FeatureMatrix::concat(matrices);
    let scores = laplacian_scores(x.data(), FEATURE_COUNT, selection)?;
    let ranking = select_features(&scores, selection.keep)?;
    let training = svm_train(x.data(), FEATURE_COUNT, &y, &ranking.selected, svm)?;
    let mut model = training.model;
    model.trained_for = trained_for;
    Ok(TrainedModel {
        model,
        ranking,
        report: training.report,
    })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub name: String,
    /// Value of the report's N column for this run.
    pub n: usize,
    pub train_frames: usize,
    pub test_frames: usize,
    pub train_rows: usize,
    pub selected: Vec<usize>,
    pub support_vectors: usize,
    pub train_report: TrainReport,
    pub cache_hits: usize,
    pub model_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Report,
    pub report_csv: String,
    pub runs: Vec<RunSummary>,
}

fn check_writable(dir: &Path) -> Result<(), PipelineError> {
    let ctx = format!("output directory {} is not writable", dir.display());
    std::fs::create_dir_all(dir).map_err(io_err(ctx.clone()))?;
    let probe = dir.join(format!(".probe{}", std::process::id()));
    std::fs::write(&probe, b"").map_err(io_err(ctx.clone()))?;
    std::fs::remove_file(&probe).map_err(io_err(ctx))?;
    Ok(())
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    check_writable(&cfg.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| PipelineError::Threads(e.to_string()))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let manifest_path = cfg.manifest.as_ref().expect("validated");
    let manifest = DatasetManifest::load(manifest_path)?;
    let frames = load_manifest_frames(&manifest)?;
    let split = split_by_patient(&manifest, cfg.min_train_frames, cfg.seed)?;
    if split.test.is_empty() {
        return Err(ConfigError::Invalid("patient split left no test frames".into()).into());
    }

    let segmenters: Vec<Segmenter> = match cfg.algorithm {
        Algorithm::Slic => cfg
            .superpixel_counts
            .iter()
            .map(|&n| {
                Segmenter::Slic(SlicParams {
                    n_superpixels: n,
                    ..cfg.slic.clone()
                })
            })
            .collect(),
        Algorithm::Quickshift => vec![Segmenter::Quickshift(cfg.qs)],
    };
    if let Algorithm::Slic = cfg.algorithm {
        for f in &frames {
            for s in &segmenters {
                if let Segmenter::Slic(p) = s {
                    p.validate(f.frame.width(), f.frame.height())?;
                }
            }
        }
    }

    let out = &cfg.output_dir;
    let mut results = Vec::new();
    let mut runs = Vec::new();
    for segmenter in &segmenters {
        let name = segmenter.run_name();
        let dirs = RunDirs {
            maps: out.join("maps").join(&name),
            features: out.join("features").join(&name),
            overlays: out.join("overlays").join(&name),
        };
        let described: Vec<FrameFeatures> = frames
            .par_iter()
            .map(|f| describe_cached(f, &dirs, segmenter, &cfg.lbp, cfg.overlap_threshold))
            .collect::<Result<_, _>>()?;

        let n = match segmenter {
            Segmenter::Slic(p) => p.n_superpixels,
            // quick shift has no requested count; report the realized mean
            Segmenter::Quickshift(_) => {
                let total: usize = described.iter().map(|d| d.map.count()).sum();
                (total as f64 / described.len() as f64).round() as usize
            }
        };

        let trained = train_model(
            split.train.iter().map(|&i| (&described[i].features, &described[i].labels)),
            &cfg.selection,
            &cfg.svm_params(),
            n,
        )?;
        let model_path = out.join("models").join(format!("{name}.svm"));
        save_model(&trained.model, &model_path)?;
        let ranking_path = out.join("ranking").join(format!("{name}.csv"));
        write_atomic(&ranking_path, trained.ranking.to_csv().as_bytes())
            .map_err(io_err(ranking_path.display().to_string()))?;

        let frame_results: Vec<FrameResult> = split
            .test
            .par_iter()
            .map(|&i| {
                let d = &described[i];
                let f = &frames[i];
                let (labels, _) = svm_predict(&trained.model, d.features.data(), FEATURE_COUNT)?;
                let confusion = pixel_confusion(&labels, &d.map, &f.mask)?;
                if cfg.overlays {
                    let mask = (f.disease != Disease::Normal).then_some(&f.mask);
                    let path = dirs.overlays.join(format!("{}.png", f.stem));
                    overlay(&f.frame, &d.map, &labels, mask)
                        .save_png(&path)
                        .map_err(|source| PipelineError::Frame {
                            path: path.display().to_string(),
                            source,
                        })?;
                }
                Ok(FrameResult {
                    disease: f.disease,
                    n,
                    confusion,
                })
            })
            .collect::<Result<_, PipelineError>>()?;
        results.extend(frame_results);

        runs.push(RunSummary {
            name,
            n,
            train_frames: split.train.len(),
            test_frames: split.test.len(),
            train_rows: split.train.iter().map(|&i| described[i].features.rows()).sum(),
            selected: trained.ranking.selected.clone(),
            support_vectors: trained.model.support_count(),
            train_report: trained.report,
            cache_hits: described.iter().filter(|d| d.cached).count(),
            model_path,
        });
    }

    let report = aggregate(&results)?;
    let report_csv = report.to_csv();
    let meta = ReportMeta {
        seed: cfg.seed,
        normal_frames_in_total: split.test.iter().any(|&i| frames[i].disease == Disease::Normal),
        params: cfg
            .to_text()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        threads: rayon::current_num_threads(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    for (file, text) in [
        ("report.csv", report_csv.clone()),
        ("report_counts.csv", report.counts_csv()),
        ("report.meta.txt", meta.to_text()),
        ("config.txt", cfg.to_text()),
    ] {
        let path = out.join(file);
        write_atomic(&path, text.as_bytes()).map_err(io_err(path.display().to_string()))?;
    }
    Ok(PipelineOutput {
        report,
        report_csv,
        runs,
    })
}
