//! Local binary patterns on a circular neighborhood, and the uniform-pattern
//! bin mapping.

use std::f64::consts::PI;

use super::FeatureError;
use crate::frame::Plane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Sample off-grid neighbors bilinearly.
    #[default]
    Bilinear,
    /// Round neighbor coordinates to the nearest pixel.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbpParams {
    /// Number of circle samples, P.
    pub neighbors: usize,
    /// Circle radius R in pixels.
    pub radius: f64,
    pub interpolation: Interpolation,
}

impl Default for LbpParams {
    fn default() -> Self {
        Self {
            neighbors: 8,
            radius: 1.0,
            interpolation: Interpolation::Bilinear,
        }
    }
}

impl LbpParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(4..=24).contains(&self.neighbors) {
            return Err(FeatureError::InvalidParam(format!(
                "neighbors must be in [4, 24], got {}",
                self.neighbors
            )));
        }
        if !(self.radius >= 1.0 && self.radius.is_finite()) {
            return Err(FeatureError::InvalidParam(format!(
                "radius must be >= 1, got {}",
                self.radius
            )));
        }
        Ok(())
    }

    /// Offset of neighbor `p` relative to the center: `(R cos t, -R sin t)`
    /// with `t = 2 pi p / P`. Values within 1e-9 of an integer are snapped.
    pub fn offset(&self, p: usize) -> (f64, f64) {
        let t = 2.0 * PI * p as f64 / self.neighbors as f64;
        let snap = |v: f64| {
            let r = v.round();
            if (v - r).abs() < 1e-9 {
                r
            } else {
                v
            }
        };
        let (dx, dy) = (snap(self.radius * t.cos()), snap(-self.radius * t.sin()));
        match self.interpolation {
            Interpolation::Bilinear => (dx, dy),
            Interpolation::Nearest => (dx.round(), dy.round()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeKind {
    Lbp,
    UniformLbp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMap {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<u32>,
    pub kind: CodeKind,
    /// Number of distinct values a code can take.
    pub levels: u32,
}

impl CodeMap {
    pub fn as_plane(&self) -> Plane<u32> {
        Plane::new(self.width, self.height, self.codes.clone())
    }
}

struct Tap {
    ix: isize,
    iy: isize,
    fx: f64,
    fy: f64,
}

impl Tap {
    fn new((dx, dy): (f64, f64)) -> Self {
        let (ix, iy) = (dx.floor(), dy.floor());
        Self {
            ix: ix as isize,
            iy: iy as isize,
            fx: dx - ix,
            fy: dy - iy,
        }
    }

    #[inline]
    fn sample(&self, gray: &Plane<u8>, x: isize, y: isize) -> f64 {
        let (x0, y0) = (x + self.ix, y + self.iy);
        let v00 = f64::from(gray.get_clamped(x0, y0));
        if self.fx == 0.0 && self.fy == 0.0 {
            return v00;
        }
        let v10 = f64::from(gray.get_clamped(x0 + 1, y0));
        let v01 = f64::from(gray.get_clamped(x0, y0 + 1));
        let v11 = f64::from(gray.get_clamped(x0 + 1, y0 + 1));
        let (fx, fy) = (self.fx, self.fy);
        // lerp form: equal corners give back exactly that value
        let top = v00 + fx * (v10 - v00);
        let bottom = v01 + fx * (v11 - v01);
        top + fy * (bottom - top)
    }
}

/// Per-pixel LBP codes: bit `p` is set iff neighbor `p` is at least as
/// bright as the center. Borders use replicate padding.
pub fn lbp_map(gray: &Plane<u8>, params: &LbpParams) -> Result<CodeMap, FeatureError> {
    params.validate()?;
    let min_side = (2.0 * params.radius + 1.0).ceil() as usize;
    if gray.width < min_side || gray.height < min_side {
        return Err(FeatureError::ImageTooSmall {
            width: gray.width,
            height: gray.height,
            min_side,
        });
    }
    let taps: Vec<Tap> = (0..params.neighbors).map(|p| Tap::new(params.offset(p))).collect();
    let mut codes = Vec::with_capacity(gray.data.len());
    for y in 0..gray.height as isize {
        for x in 0..gray.width as isize {
            let center = f64::from(gray.get(x as usize, y as usize));
            let mut code = 0u32;
            for (p, tap) in taps.iter().enumerate() {
                if tap.sample(gray, x, y) - center >= 0.0 {
                    code |= 1 << p;
                }
            }
            codes.push(code);
        }
    }
    Ok(CodeMap {
        width: gray.width,
        height: gray.height,
        codes,
        kind: CodeKind::Lbp,
        levels: 1 << params.neighbors,
    })
}

/// Number of 0/1 changes walking once around a `bits`-bit circular code.
pub fn transitions(code: u32, bits: usize) -> u32 {
    let mask = if bits == 32 { u32::MAX } else { (1 << bits) - 1 };
    let code = code & mask;
    let rotated = (code >> 1) | ((code & 1) << (bits - 1));
    (code ^ rotated).count_ones()
}

/// Maps LBP codes to uniform-pattern bins. Codes with at most two circular
/// transitions get their own bin, numbered in ascending code order; all
/// other codes share the last bin.
#[derive(Debug, Clone)]
pub struct UniformMapping {
    bits: usize,
    uniform: Vec<u32>,
}

impl UniformMapping {
    pub fn new(bits: usize) -> Self {
        let full = if bits == 32 { u32::MAX } else { (1u32 << bits) - 1 };
        let mut uniform = vec![0, full];
        for run in 1..bits {
            let block = (1u32 << run) - 1;
            for start in 0..bits {
                let code = if start == 0 {
                    block
                } else {
                    ((block << start) | (block >> (bits - start))) & full
                };
                uniform.push(code);
            }
        }
        uniform.sort_unstable();
        uniform.dedup();
        Self { bits, uniform }
    }

    /// Number of uniform patterns, `P (P - 1) + 2`.
    pub fn uniform_count(&self) -> usize {
        self.uniform.len()
    }

    /// Total bins including the shared non-uniform bin.
    pub fn bins(&self) -> usize {
        self.uniform.len() + 1
    }

    pub fn bin(&self, code: u32) -> u32 {
        if transitions(code, self.bits) <= 2 {
            if let Ok(i) = self.uniform.binary_search(&code) {
                return i as u32;
            }
        }
        self.uniform.len() as u32
    }
}

pub fn uniform_lbp_map(gray: &Plane<u8>, params: &LbpParams) -> Result<CodeMap, FeatureError> {
    let lbp = lbp_map(gray, params)?;
    Ok(to_uniform(&lbp, params.neighbors))
}

pub(crate) fn to_uniform(lbp: &CodeMap, bits: usize) -> CodeMap {
    let mapping = UniformMapping::new(bits);
    CodeMap {
        width: lbp.width,
        height: lbp.height,
        codes: lbp.codes.iter().map(|&c| mapping.bin(c)).collect(),
        kind: CodeKind::UniformLbp,
        levels: mapping.bins() as u32,
    }
}
