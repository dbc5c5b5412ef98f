//! Per-superpixel texture and color statistics.

mod lbp;
mod moments;

pub use lbp::{
    lbp_map, transitions, uniform_lbp_map, CodeKind, CodeMap, Interpolation, LbpParams,
    UniformMapping,
};
pub use moments::{channel_moments, Moments, ENTROPY_BINS};

use std::fmt::Write as _;

use thiserror::Error;

use crate::channels::derive_channels;
use crate::frame::{Frame, Mask};
use crate::superpixel::SuperpixelMap;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{width}x{height} image is smaller than {min_side}x{min_side}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_side: usize,
    },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("malformed feature table: {0}")]
    Malformed(String),
}

pub const CHANNEL_NAMES: [&str; 7] = ["gray", "lbp", "ulbp", "hue", "red", "green", "blue"];
pub const MOMENT_NAMES: [&str; 5] = ["mean", "variance", "skewness", "kurtosis", "entropy"];
pub const FEATURE_COUNT: usize = CHANNEL_NAMES.len() * MOMENT_NAMES.len();

/// Human-readable name of feature column `i`, e.g. `hue_mean`.
pub fn feature_name(i: usize) -> String {
    format!("{}_{}", CHANNEL_NAMES[i / 5], MOMENT_NAMES[i % 5])
}

/// K rows of 35 features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, data: Vec<f64>) -> Result<Self, FeatureError> {
        if data.len() != rows * FEATURE_COUNT {
            return Err(FeatureError::DimensionMismatch {
                expected: (FEATURE_COUNT, rows),
                got: (FEATURE_COUNT, data.len() / FEATURE_COUNT),
            });
        }
        Ok(Self { rows, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        FEATURE_COUNT
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * FEATURE_COUNT..(r + 1) * FEATURE_COUNT]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * FEATURE_COUNT + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Stack several matrices vertically.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a FeatureMatrix>) -> Self {
        let mut rows = 0;
        let mut data = Vec::new();
        for m in parts {
            rows += m.rows;
            data.extend_from_slice(&m.data);
        }
        Self { rows, data }
    }

    /// CSV with header `label,overlap,f00..f34`. Without labels both
    /// leading columns are written as `NA`.
    pub fn to_csv(&self, labels: Option<&SuperpixelLabels>) -> String {
        let mut out = String::from("label,overlap");
        for i in 0..FEATURE_COUNT {
            write!(out, ",f{i:02}").unwrap();
        }
        out.push('\n');
        for r in 0..self.rows {
            match labels {
                Some(l) => write!(out, "{},{}", l.labels[r], l.overlap[r]).unwrap(),
                None => out.push_str("NA,NA"),
            }
            for v in self.row(r) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Inverse of [`FeatureMatrix::to_csv`]; labels are returned when every
    /// row carries them.
    pub fn from_csv(text: &str) -> Result<(Self, Option<SuperpixelLabels>), FeatureError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| FeatureError::Malformed("empty".into()))?;
        if header.split(',').count() != FEATURE_COUNT + 2 || !header.starts_with("label,overlap,f00") {
            return Err(FeatureError::Malformed(format!("bad header: {header}")));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut overlap = Vec::new();
        let mut all_labeled = true;
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != FEATURE_COUNT + 2 {
                return Err(FeatureError::Malformed(format!("row {}: {} fields", n + 1, fields.len())));
            }
            let bad = |f: &str| FeatureError::Malformed(format!("row {}: bad value {f:?}", n + 1));
            if fields[0] == "NA" {
                all_labeled = false;
            } else {
                labels.push(fields[0].parse::<u8>().map_err(|_| bad(fields[0]))?);
                overlap.push(fields[1].parse::<f64>().map_err(|_| bad(fields[1]))?);
            }
            for f in &fields[2..] {
                data.push(f.parse::<f64>().map_err(|_| bad(f))?);
            }
        }
        let rows = data.len() / FEATURE_COUNT;
        let labels = (all_labeled && rows > 0).then_some(SuperpixelLabels { labels, overlap });
        Ok((Self { rows, data }, labels))
    }
}

/// 35 statistics per superpixel: the 5 moments of each of gray, LBP,
/// uniform LBP, hue, red, green and blue.
pub fn extract_features(
    frame: &Frame,
    map: &SuperpixelMap,
    lbp_params: &LbpParams,
) -> Result<FeatureMatrix, FeatureError> {
    if frame.width() != map.width() || frame.height() != map.height() {
        return Err(FeatureError::DimensionMismatch {
            expected: (map.width(), map.height()),
            got: (frame.width(), frame.height()),
        });
    }
    let ch = derive_channels(frame);
    let lbp = lbp_map(&ch.gray, lbp_params)?;
    let ulbp = lbp::to_uniform(&lbp, lbp_params.neighbors);

    let per_channel = [
        channel_moments(&ch.gray, 256, map)?,
        channel_moments(&lbp.as_plane(), lbp.levels, map)?,
        channel_moments(&ulbp.as_plane(), ulbp.levels, map)?,
        channel_moments(&ch.hue, 256, map)?,
        channel_moments(&ch.red, 256, map)?,
        channel_moments(&ch.green, 256, map)?,
        channel_moments(&ch.blue, 256, map)?,
    ];
    let k = map.count();
    let mut data = Vec::with_capacity(k * FEATURE_COUNT);
    for r in 0..k {
        for c in &per_channel {
            data.extend_from_slice(&c[r]);
        }
    }
    FeatureMatrix::new(k, data)
}

/// Ground-truth class of each superpixel, from its overlap with a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelLabels {
    /// 1 = abnormal.
    pub labels: Vec<u8>,
    pub overlap: Vec<f64>,
}

pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.5;

pub fn label_superpixels(
    map: &SuperpixelMap,
    mask: &Mask,
    threshold: f64,
) -> Result<SuperpixelLabels, FeatureError> {
    if mask.width() != map.width() || mask.height() != map.height() {
        return Err(FeatureError::DimensionMismatch {
            expected: (map.width(), map.height()),
            got: (mask.width(), mask.height()),
        });
    }
    let k = map.count();
    let mut inside = vec![0usize; k];
    let mut total = vec![0usize; k];
    for (&l, &m) in map.labels().iter().zip(mask.values()) {
        total[l as usize] += 1;
        inside[l as usize] += usize::from(m);
    }
    let overlap: Vec<f64> = inside
        .iter()
        .zip(&total)
        .map(|(&i, &t)| i as f64 / t as f64)
        .collect();
    let labels = overlap.iter().map(|&o| u8::from(o >= threshold)).collect();
    Ok(SuperpixelLabels { labels, overlap })
}
