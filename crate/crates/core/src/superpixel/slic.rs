//! Simple linear iterative clustering in joint (x, y, R, G, B) space.
//!
//! The distance between a pixel and a cluster center is
//!
//! ```text
//! D = sqrt((D_c / N_c)^2 + (D_p / N_p)^2)
//! ```
//!
//! with `D_c` the RGB Euclidean distance, `D_p` the spatial Euclidean
//! distance, `N_c` the compactness constant and `N_p` the grid interval `S`.

use super::{enforce_connectivity, SuperpixelError, SuperpixelMap};
use crate::frame::Frame;

#[derive(Debug, Clone, PartialEq)]
pub struct SlicParams {
    /// Requested number of superpixels, N.
    pub n_superpixels: usize,
    /// Color normalizer N_c.
    pub compactness: f64,
    pub iterations: usize,
    /// Merge fragments below half the target superpixel size.
    pub enforce_bounds: bool,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            n_superpixels: 100,
            compactness: 10.0,
            iterations: 10,
            enforce_bounds: true,
        }
    }
}

impl SlicParams {
    pub fn with_n(n_superpixels: usize) -> Self {
        Self {
            n_superpixels,
            ..Self::default()
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<(), SuperpixelError> {
        check_count(self.n_superpixels, width, height)?;
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(SuperpixelError::InvalidParam(format!(
                "compactness must be positive, got {}",
                self.compactness
            )));
        }
        if self.iterations == 0 {
            return Err(SuperpixelError::InvalidParam(
                "iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_count(n: usize, width: usize, height: usize) -> Result<(), SuperpixelError> {
    let max = width * height / 16;
    if n < 4 || n > max {
        return Err(SuperpixelError::InvalidParam(format!(
            "superpixel count {n} outside [4, {max}]"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Center {
    pub x: f64,
    pub y: f64,
    pub rgb: [f64; 3],
}

/// Grid interval `S = sqrt(W * H / N)`.
pub fn grid_interval(width: usize, height: usize, n: usize) -> f64 {
    ((width * height) as f64 / n as f64).sqrt()
}

fn gradient(frame: &Frame, x: usize, y: usize) -> i64 {
    let (w, h) = (frame.width() as isize, frame.height() as isize);
    let at = |x: isize, y: isize| frame.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize);
    let sq = |a: [u8; 3], b: [u8; 3]| -> i64 {
        (0..3)
            .map(|c| {
                let d = i64::from(a[c]) - i64::from(b[c]);
                d * d
            })
            .sum()
    };
    let (x, y) = (x as isize, y as isize);
    sq(at(x + 1, y), at(x - 1, y)) + sq(at(x, y + 1), at(x, y - 1))
}

/// Seed centers on a regular grid and move each to the lowest-gradient pixel
/// of its 3x3 neighborhood.
pub fn slic_init_centers(frame: &Frame, n: usize) -> Result<Vec<Center>, SuperpixelError> {
    let (w, h) = (frame.width(), frame.height());
    check_count(n, w, h)?;
    let s = grid_interval(w, h, n);
    let nx = ((w as f64 / s).round() as usize).max(1);
    let ny = ((h as f64 / s).round() as usize).max(1);
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let gx = ((i as f64 + 0.5) * w as f64 / nx as f64) as usize;
            let gy = ((j as f64 + 0.5) * h as f64 / ny as f64) as usize;
            let (mut bx, mut by) = (gx, gy);
            let mut best = gradient(frame, gx, gy);
            for y in gy.saturating_sub(1)..=(gy + 1).min(h - 1) {
                for x in gx.saturating_sub(1)..=(gx + 1).min(w - 1) {
                    let g = gradient(frame, x, y);
                    if g < best {
                        best = g;
                        bx = x;
                        by = y;
                    }
                }
            }
            let rgb = frame.get(bx, by).map(f64::from);
            centers.push(Center {
                x: bx as f64,
                y: by as f64,
                rgb,
            });
        }
    }
    Ok(centers)
}

pub fn slic_segment(frame: &Frame, params: &SlicParams) -> Result<SuperpixelMap, SuperpixelError> {
    let (w, h) = (frame.width(), frame.height());
    params.validate(w, h)?;
    let mut centers = slic_init_centers(frame, params.n_superpixels)?;
    let s = grid_interval(w, h, params.n_superpixels);
    let color_w = 1.0 / (params.compactness * params.compactness);
    let space_w = 1.0 / (s * s);
    let px = frame.pixels();

    let mut labels = vec![u32::MAX; w * h];
    let mut dist = vec![f64::INFINITY; w * h];
    for _ in 0..params.iterations {
        labels.fill(u32::MAX);
        dist.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let x0 = (c.x - s).floor().max(0.0) as usize;
            let x1 = ((c.x + s).ceil() as usize).min(w - 1);
            let y0 = (c.y - s).floor().max(0.0) as usize;
            let y1 = ((c.y + s).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                let dy = y as f64 - c.y;
                let row = y * w;
                for x in x0..=x1 {
                    let i = row + x;
                    let p = px[i];
                    let dr = f64::from(p[0]) - c.rgb[0];
                    let dg = f64::from(p[1]) - c.rgb[1];
                    let db = f64::from(p[2]) - c.rgb[2];
                    let dx = x as f64 - c.x;
                    let d = (dr * dr + dg * dg + db * db) * color_w + (dx * dx + dy * dy) * space_w;
                    // strict: earlier (lower-index) centers win ties
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k as u32;
                    }
                }
            }
        }
        update_centers(frame, &labels, &mut centers);
    }

    // Pixels no window reached go to their globally nearest center.
    for i in 0..w * h {
        if labels[i] != u32::MAX {
            continue;
        }
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let p = px[i].map(f64::from);
        let mut best = f64::INFINITY;
        for (k, c) in centers.iter().enumerate() {
            let dc: f64 = (0..3).map(|j| (p[j] - c.rgb[j]).powi(2)).sum();
            let d = dc * color_w + ((x - c.x).powi(2) + (y - c.y).powi(2)) * space_w;
            if d < best {
                best = d;
                labels[i] = k as u32;
            }
        }
    }

    let map = SuperpixelMap::compacted(w, h, &labels);
    if params.enforce_bounds {
        let target = (w * h) as f64 / params.n_superpixels as f64;
        Ok(enforce_connectivity(&map, target))
    } else {
        Ok(map)
    }
}

fn update_centers(frame: &Frame, labels: &[u32], centers: &mut [Center]) {
    let w = frame.width();
    let mut sums = vec![[0f64; 5]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (i, (&l, p)) in labels.iter().zip(frame.pixels()).enumerate() {
        if l == u32::MAX {
            continue;
        }
        let acc = &mut sums[l as usize];
        acc[0] += (i % w) as f64;
        acc[1] += (i / w) as f64;
        acc[2] += f64::from(p[0]);
        acc[3] += f64::from(p[1]);
        acc[4] += f64::from(p[2]);
        counts[l as usize] += 1;
    }
    for ((c, acc), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
        if n == 0 {
            continue;
        }
        let n = n as f64;
        c.x = acc[0] / n;
        c.y = acc[1] / n;
        c.rgb = [acc[2] / n, acc[3] / n, acc[4] / n];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_for_four_on_512() {
        assert_eq!(grid_interval(512, 512, 4), 256.0);
        let frame = Frame::filled(512, 512, [10, 20, 30]).unwrap();
        let centers = slic_init_centers(&frame, 4).unwrap();
        assert_eq!(centers.len(), 4);
        let pos: Vec<_> = centers.iter().map(|c| (c.x, c.y)).collect();
        assert_eq!(
            pos,
            vec![(128.0, 128.0), (384.0, 128.0), (128.0, 384.0), (384.0, 384.0)]
        );
    }

    #[test]
    fn constant_frame_keeps_grid_positions() {
        let frame = Frame::filled(100, 80, [90, 60, 50]).unwrap();
        let centers = slic_init_centers(&frame, 20).unwrap();
        let s = grid_interval(100, 80, 20);
        let nx = (100.0 / s).round() as usize;
        let ny = (80.0 / s).round() as usize;
        assert_eq!(centers.len(), nx * ny);
        for (k, c) in centers.iter().enumerate() {
            let (i, j) = (k % nx, k / nx);
            assert_eq!(c.x, ((i as f64 + 0.5) * 100.0 / nx as f64).floor());
            assert_eq!(c.y, ((j as f64 + 0.5) * 80.0 / ny as f64).floor());
        }
    }

    #[test]
    fn center_moves_away_from_bright_pixel() {
        // 4 centers on 64x64 sit at (16,16), (48,16), ...; brighten (17,16).
        let mut frame = Frame::filled(64, 64, [50, 50, 50]).unwrap();
        frame = Frame::from_fn(64, 64, |x, y| {
            if (x, y) == (17, 16) {
                [250, 250, 250]
            } else {
                frame.get(x, y)
            }
        })
        .unwrap();
        // Independent check of the gradient on the 3x3 window: only pixels
        // with (17,16) as a horizontal or vertical neighbor see it.
        let bumped = [(16, 16), (18, 16), (17, 15), (17, 17)];
        for y in 15..=17 {
            for x in 15..=17 {
                let expected = if bumped.contains(&(x, y)) { 3 * 200 * 200 } else { 0 };
                assert_eq!(gradient(&frame, x, y), expected, "at ({x},{y})");
            }
        }
        let centers = slic_init_centers(&frame, 4).unwrap();
        assert_eq!((centers[0].x, centers[0].y), (15.0, 15.0));
        assert_eq!((centers[1].x, centers[1].y), (48.0, 16.0));
    }

    #[test]
    fn zero_iterations_rejected() {
        let frame = Frame::filled(32, 32, [0, 0, 0]).unwrap();
        let params = SlicParams {
            iterations: 0,
            ..SlicParams::with_n(4)
        };
        assert!(matches!(
            slic_segment(&frame, &params),
            Err(SuperpixelError::InvalidParam(_))
        ));
    }

    #[test]
    fn count_bounds_rejected() {
        let frame = Frame::filled(32, 32, [0, 0, 0]).unwrap();
        assert!(slic_segment(&frame, &SlicParams::with_n(3)).is_err());
        assert!(slic_segment(&frame, &SlicParams::with_n(65)).is_err());
        assert!(slic_segment(&frame, &SlicParams::with_n(64)).is_ok());
        let bad = SlicParams {
            compactness: 0.0,
            ..SlicParams::with_n(8)
        };
        assert!(slic_segment(&frame, &bad).is_err());
    }

    #[test]
    fn constant_frame_gives_near_grid() {
        let frame = Frame::filled(512, 512, [120, 80, 70]).unwrap();
        let map = slic_segment(&frame, &SlicParams::with_n(100)).unwrap();
        let k = map.count() as f64;
        assert!((k - 100.0).abs() <= 20.0, "K = {k}");
        assert!(map.is_connected());
    }

    #[test]
    fn two_tone_edge_is_respected() {
        let frame =
            Frame::from_fn(128, 128, |x, _| if x < 64 { [0, 0, 0] } else { [255, 255, 255] })
                .unwrap();
        let map = slic_segment(&frame, &SlicParams::with_n(25)).unwrap();
        let mut left = vec![0usize; map.count()];
        let mut right = vec![0usize; map.count()];
        let mut min_x = vec![usize::MAX; map.count()];
        let mut max_x = vec![0usize; map.count()];
        for y in 0..128 {
            for x in 0..128 {
                let l = map.label(x, y) as usize;
                if x < 64 {
                    left[l] += 1;
                } else {
                    right[l] += 1;
                }
                min_x[l] = min_x[l].min(x);
                max_x[l] = max_x[l].max(x);
            }
        }
        for l in 0..map.count() {
            if left[l] > 0 && right[l] > 0 {
                // the minority side may reach at most one column past the edge
                if left[l] >= right[l] {
                    assert!(max_x[l] <= 64, "label {l} reaches x={}", max_x[l]);
                } else {
                    assert!(min_x[l] >= 63, "label {l} reaches x={}", min_x[l]);
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let frame = Frame::from_fn(96, 64, |x, y| {
            [(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x + y) * 3 % 256) as u8]
        })
        .unwrap();
        let a = slic_segment(&frame, &SlicParams::with_n(30)).unwrap();
        let b = slic_segment(&frame, &SlicParams::with_n(30)).unwrap();
        assert_eq!(a, b);
    }
}
