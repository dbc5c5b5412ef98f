//! Superpixel partitions: SLIC clustering and Quick Shift mode seeking.

mod connectivity;
mod quickshift;
mod slic;

pub use connectivity::{enforce_connectivity, label_fragments};
pub use quickshift::{quickshift_forest, quickshift_segment, QsForest, QsParams};
pub use slic::{grid_interval, slic_init_centers, slic_segment, Center, SlicParams};

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuperpixelError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("label {label} is unused; labels must cover 0..{count}")]
    MissingLabel { label: u32, count: usize },
    #[error("label buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("{0} superpixels do not fit a 16-bit label image")]
    TooManyLabels(usize),
    #[error("corrupt label map: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-pixel labels in `0..count`; every label is used at least once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl SuperpixelMap {
    /// Validates that the labels form a dense range `0..K`.
    pub fn from_labels(
        width: usize,
        height: usize,
        labels: Vec<u32>,
    ) -> Result<Self, SuperpixelError> {
        if labels.len() != width * height {
            return Err(SuperpixelError::BufferSize {
                expected: width * height,
                got: labels.len(),
            });
        }
        let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut used = vec![false; count];
        for &l in &labels {
            used[l as usize] = true;
        }
        if let Some(missing) = used.iter().position(|&u| !u) {
            return Err(SuperpixelError::MissingLabel {
                label: missing as u32,
                count,
            });
        }
        Ok(Self {
            width,
            height,
            labels,
            count,
        })
    }

    /// Renumbers arbitrary labels to `0..K` in order of first appearance.
    pub fn compacted(width: usize, height: usize, labels: &[u32]) -> Self {
        assert_eq!(labels.len(), width * height);
        let mut remap = std::collections::HashMap::new();
        let out: Vec<u32> = labels
            .iter()
            .map(|&l| {
                let next = remap.len() as u32;
                *remap.entry(l).or_insert(next)
            })
            .collect();
        Self {
            width,
            height,
            labels: out,
            count: remap.len(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Number of superpixels, K.
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// True when every label's pixels form a single 4-connected component.
    pub fn is_connected(&self) -> bool {
        let (_, fragments) = label_fragments(self.width, self.height, &self.labels);
        fragments == self.count
    }

    /// Pixels with a 4-neighbor carrying a different label.
    pub fn boundaries(&self) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let l = self.labels[i];
                if x + 1 < w && self.labels[i + 1] != l {
                    out[i] = true;
                    out[i + 1] = true;
                }
                if y + 1 < h && self.labels[i + w] != l {
                    out[i] = true;
                    out[i + w] = true;
                }
            }
        }
        out
    }

    /// Sidecar path holding `K=<count>` next to a label PNG.
    pub fn sidecar_path(png: &Path) -> PathBuf {
        png.with_extension("txt")
    }

    /// Write labels as a 16-bit gray PNG plus the `K=` sidecar.
    pub fn save(&self, png: &Path) -> Result<(), SuperpixelError> {
        if self.count > u16::MAX as usize + 1 {
            return Err(SuperpixelError::TooManyLabels(self.count));
        }
        let raw: Vec<u16> = self.labels.iter().map(|&l| l as u16).collect();
        let buf: ImageBuffer<Luma<u16>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("label buffer size checked at construction");
        let mut bytes = Vec::new();
        buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| SuperpixelError::Corrupt(e.to_string()))?;
        crate::io_util::write_atomic(png, &bytes)?;
        crate::io_util::write_atomic(
            &Self::sidecar_path(png),
            format!("K={}\n", self.count).as_bytes(),
        )?;
        Ok(())
    }

    pub fn load(png: &Path) -> Result<Self, SuperpixelError> {
        let header = std::fs::read_to_string(Self::sidecar_path(png))?;
        let count: usize = header
            .trim()
            .strip_prefix("K=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| SuperpixelError::Corrupt(format!("bad sidecar `{}`", header.trim())))?;
        let img = image::open(png).map_err(|e| SuperpixelError::Corrupt(e.to_string()))?;
        let img = match img {
            image::DynamicImage::ImageLuma16(b) => b,
            other => {
                return Err(SuperpixelError::Corrupt(format!(
                    "expected 16-bit gray labels, found {:?}",
                    other.color()
                )))
            }
        };
        let (w, h) = (img.width() as usize, img.height() as usize);
        let labels: Vec<u32> = img.into_raw().into_iter().map(u32::from).collect();
        let map = Self::from_labels(w, h, labels)?;
        if map.count != count {
            return Err(SuperpixelError::Corrupt(format!(
                "sidecar says K={count}, labels use {}",
                map.count
            )));
        }
        Ok(map)
    }
}

/// Fraction of ground-truth edge pixels lying within `tolerance` pixels
/// (Euclidean) of a superpixel boundary. Returns 1.0 when the ground truth
/// has no edges.
pub fn boundary_recall(map: &SuperpixelMap, truth: &SuperpixelMap, tolerance: usize) -> f64 {
    assert_eq!((map.width, map.height), (truth.width, truth.height));
    let (w, h) = (map.width, map.height);
    let found = map.boundaries();
    let edges = truth.boundaries();
    let t = tolerance as isize;
    let mut total = 0usize;
    let mut hit = 0usize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            if !edges[(y as usize) * w + x as usize] {
                continue;
            }
            total += 1;
            let near = (-t..=t).any(|dy| {
                (-t..=t).any(|dx| {
                    let (nx, ny) = (x + dx, y + dy);
                    dx * dx + dy * dy <= t * t
                        && nx >= 0
                        && ny >= 0
                        && (nx as usize) < w
                        && (ny as usize) < h
                        && found[ny as usize * w + nx as usize]
                })
            });
            if near {
                hit += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}
