//! Quick shift: Parzen density in joint (x, y, ratio*RGB) space, then each
//! pixel links to its nearest higher-density pixel within `max_dist`.

use super::{SuperpixelError, SuperpixelMap};
use crate::frame::Frame;

/// Weight applied to color coordinates in the joint space.
pub const COLOR_RATIO: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsParams {
    /// Gaussian bandwidth sigma, in pixels.
    pub kernel_size: f64,
    /// Maximum joint distance tau of a link.
    pub max_dist: f64,
}

impl Default for QsParams {
    fn default() -> Self {
        Self {
            kernel_size: 5.0,
            max_dist: 10.0,
        }
    }
}

impl QsParams {
    pub fn validate(&self) -> Result<(), SuperpixelError> {
        if !(self.kernel_size > 0.0 && self.kernel_size.is_finite()) {
            return Err(SuperpixelError::InvalidParam(format!(
                "kernel_size must be positive, got {}",
                self.kernel_size
            )));
        }
        if !(self.max_dist > 0.0) || self.max_dist.is_nan() {
            return Err(SuperpixelError::InvalidParam(format!(
                "max_dist must be positive, got {}",
                self.max_dist
            )));
        }
        Ok(())
    }
}

/// Density estimate and link forest behind a quick shift segmentation.
#[derive(Debug, Clone)]
pub struct QsForest {
    pub density: Vec<f64>,
    /// Linear index of each pixel's parent; roots point at themselves.
    pub parent: Vec<u32>,
}

#[inline]
fn color_dist2(a: [u8; 3], b: [u8; 3]) -> usize {
    let d0 = a[0] as isize - b[0] as isize;
    let d1 = a[1] as isize - b[1] as isize;
    let d2 = a[2] as isize - b[2] as isize;
    (d0 * d0 + d1 * d1 + d2 * d2) as usize
}

fn density(frame: &Frame, sigma: f64) -> Vec<f64> {
    let (w, h) = (frame.width(), frame.height());
    let px = frame.pixels();
    let radius = (3.0 * sigma).ceil() as usize;
    let inv = -0.5 / (sigma * sigma);
    let ratio2 = COLOR_RATIO * COLOR_RATIO;
    let color: Vec<f64> = (0..=3 * 255 * 255)
        .map(|c2| (c2 as f64 * ratio2 * inv).exp())
        .collect();

    // The kernel is symmetric, so each unordered pair is visited once from
    // the half-window of offsets (dy > 0, or dy == 0 and dx > 0).
    let mut out = vec![1.0; w * h];
    for dy in 0..=radius.min(h - 1) {
        let lo = if dy == 0 { 1 } else { -(radius.min(w - 1) as isize) };
        for dx in lo..=radius.min(w - 1) as isize {
            let spatial = ((dx * dx) as f64 + (dy * dy) as f64) * inv;
            let spatial = spatial.exp();
            let (xa, xb) = if dx >= 0 {
                (0, w - dx as usize)
            } else {
                ((-dx) as usize, w)
            };
            for y in 0..h - dy {
                let row = y * w;
                let row_q = (y + dy) * w;
                for x in xa..xb {
                    let p = row + x;
                    let q = row_q + (x as isize + dx) as usize;
                    let k = spatial * color[color_dist2(px[p], px[q])];
                    out[p] += k;
                    out[q] += k;
                }
            }
        }
    }
    out
}

/// `q` ranks above `p`: higher density, ties to the lower linear index.
#[inline]
fn ranks_above(density: &[f64], q: usize, p: usize) -> bool {
    density[q] > density[p] || (density[q] == density[p] && q < p)
}

fn link(frame: &Frame, density: &[f64], tau: f64) -> Vec<u32> {
    let (w, h) = (frame.width() as isize, frame.height() as isize);
    let px = frame.pixels();
    let ratio2 = COLOR_RATIO * COLOR_RATIO;
    let tau2 = tau * tau;
    let reach = if tau.is_finite() {
        (tau.ceil() as isize).min(w.max(h))
    } else {
        w.max(h)
    };

    let mut parent = vec![0u32; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let p = (y * w + x) as usize;
            let cp = px[p];
            let mut best = (f64::INFINITY, p);
            let consider = |best: &mut (f64, usize), qx: isize, qy: isize| {
                if qx < 0 || qy < 0 || qx >= w || qy >= h {
                    return;
                }
                let q = (qy * w + qx) as usize;
                if !ranks_above(density, q, p) {
                    return;
                }
                let (dx, dy) = ((qx - x) as f64, (qy - y) as f64);
                let d2 = dx * dx + dy * dy + ratio2 * color_dist2(cp, px[q]) as f64;
                if d2 <= tau2 && (d2 < best.0 || (d2 == best.0 && q < best.1)) {
                    *best = (d2, q);
                }
            };
            // Rings of growing Chebyshev radius r hold pixels at spatial
            // distance >= r, so the scan can stop once r^2 exceeds the best
            // joint distance found.
            for r in 1..=reach {
                if (r * r) as f64 > best.0 {
                    break;
                }
                if x - r < 0 && y - r < 0 && x + r >= w && y + r >= h {
                    break;
                }
                for qx in x - r..=x + r {
                    consider(&mut best, qx, y - r);
                    consider(&mut best, qx, y + r);
                }
                for qy in y - r + 1..y + r {
                    consider(&mut best, x - r, qy);
                    consider(&mut best, x + r, qy);
                }
            }
            parent[p] = best.1 as u32;
        }
    }
    parent
}

pub fn quickshift_forest(frame: &Frame, params: &QsParams) -> Result<QsForest, SuperpixelError> {
    params.validate()?;
    let density = density(frame, params.kernel_size);
    let parent = link(frame, &density, params.max_dist);
    Ok(QsForest { density, parent })
}

impl QsForest {
    /// Root reached from every pixel.
    pub fn roots(&self) -> Vec<u32> {
        let n = self.parent.len();
        let mut root = vec![u32::MAX; n];
        let mut path = Vec::new();
        for start in 0..n {
            let mut cur = start;
            while root[cur] == u32::MAX && self.parent[cur] as usize != cur {
                path.push(cur);
                cur = self.parent[cur] as usize;
            }
            let r = if root[cur] == u32::MAX { cur as u32 } else { root[cur] };
            root[cur] = r;
            for &i in &path {
                root[i] = r;
            }
            path.clear();
        }
        root
    }
}

pub fn quickshift_segment(
    frame: &Frame,
    params: &QsParams,
) -> Result<SuperpixelMap, SuperpixelError> {
    let forest = quickshift_forest(frame, params)?;
    Ok(SuperpixelMap::compacted(
        frame.width(),
        frame.height(),
        &forest.roots(),
    ))
}
