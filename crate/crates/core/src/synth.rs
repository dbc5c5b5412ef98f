//! Synthetic endoscopy-like frames with known lesion masks.
//!
//! Background is a pink-brown mucosa texture built from value noise. Each
//! frame carries one or two elliptical lesions drawn from five color and
//! texture archetypes, one per abnormal class.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DatasetManifest, Disease, Record};
use crate::frame::{Frame, FrameError, Mask};
use crate::io_util::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthParams {
    pub patients: usize,
    pub frames_per_patient: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            patients: 10,
            frames_per_patient: 6,
            size: 256,
            seed: 0,
        }
    }
}

/// Smooth random field: random lattice values, bicubic-eased bilinear
/// interpolation.
struct ValueNoise {
    cell: f64,
    gw: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, width: usize, height: usize, cell: f64) -> Self {
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        let lattice = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self { cell, gw, lattice }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        let (fx, fy) = (x as f64 / self.cell, y as f64 / self.cell);
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let ease = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (ease(fx - ix as f64), ease(fy - iy as f64));
        let g = |i: usize, j: usize| self.lattice[j * self.gw + i];
        let top = g(ix, iy) + tx * (g(ix + 1, iy) - g(ix, iy));
        let bottom = g(ix, iy + 1) + tx * (g(ix + 1, iy + 1) - g(ix, iy + 1));
        top + ty * (bottom - top)
    }
}

#[derive(Debug, Clone, Copy)]
struct Archetype {
    base: [f64; 3],
    /// Value-noise cell size and amplitude of the lesion texture.
    cell: f64,
    amplitude: f64,
    /// Per-pixel grain amplitude.
    grain: f64,
    /// Period of a nodular sin-sin pattern, 0 for none.
    nodules: f64,
}

fn archetype(disease: Disease) -> Archetype {
    let a = |base, cell, amplitude, grain, nodules| Archetype {
        base,
        cell,
        amplitude,
        grain,
        nodules,
    };
    match disease {
        // dark fresh blood, smooth
        Disease::Bleeding => a([150.0, 22.0, 28.0], 20.0, 12.0, 3.0, 0.0),
        // pale fibrin-covered ulcer bed
        Disease::Crohn => a([228.0, 218.0, 170.0], 8.0, 16.0, 4.0, 0.0),
        // white speckled villi
        Disease::Lymphangiectasia => a([240.0, 236.0, 222.0], 3.0, 10.0, 22.0, 0.0),
        // yellow granular plaque
        Disease::Xanthoma => a([232.0, 186.0, 64.0], 3.0, 20.0, 8.0, 0.0),
        // pale nodular mucosa
        Disease::LymphoidHyperplasia => a([226.0, 178.0, 170.0], 12.0, 8.0, 4.0, 9.0),
        Disease::Normal => a([180.0, 100.0, 80.0], 16.0, 0.0, 0.0, 0.0),
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        u * u + v * v <= 1.0
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// One frame and its lesion mask. `tint` shifts the background color per
/// patient. Normal frames have an empty mask.
pub fn synth_frame(
    rng: &mut ChaCha8Rng,
    size: usize,
    disease: Disease,
    tint: [f64; 3],
) -> Result<(Frame, Mask), FrameError> {
    let s = size as f64;
    let coarse = ValueNoise::new(rng, size, size, s / 5.0);
    let fine = ValueNoise::new(rng, size, size, s / 20.0);
    let bg = archetype(Disease::Normal).base;

    let arch = archetype(disease);
    let lesion_tex = ValueNoise::new(rng, size, size, arch.cell);
    let lesions: Vec<Ellipse> = if disease == Disease::Normal {
        Vec::new()
    } else {
        (0..rng.gen_range(1..=2))
            .map(|_| {
                let a = rng.gen_range(0.12..0.22) * s;
                let b = rng.gen_range(0.6..1.0) * a;
                let margin = a + 0.04 * s;
                let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                Ellipse {
                    cx: rng.gen_range(margin..s - margin),
                    cy: rng.gen_range(margin..s - margin),
                    a,
                    b,
                    cos: t.cos(),
                    sin: t.sin(),
                }
            })
            .collect()
    };
    let phase: f64 = rng.gen_range(0.0..10.0);

    let mut pixels = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
            let inside = lesions.iter().any(|e| e.contains(xf, yf));
            let rgb = if inside {
                let mut t = arch.amplitude * lesion_tex.at(x, y)
                    + arch.grain * rng.gen_range(-1.0..1.0);
                if arch.nodules > 0.0 {
                    t += 14.0 * (xf / arch.nodules + phase).sin() * (yf / arch.nodules).sin();
                }
                [arch.base[0] + t, arch.base[1] + t, arch.base[2] + t]
            } else {
                let shade = 28.0 * coarse.at(x, y) + 10.0 * fine.at(x, y);
                let grain = 4.0 * rng.gen_range(-1.0..1.0);
                [
                    bg[0] + tint[0] + shade + grain,
                    bg[1] + tint[1] + 0.7 * shade + grain,
                    bg[2] + tint[2] + 0.6 * shade + grain,
                ]
            };
            pixels.push(rgb.map(clamp_u8));
            mask.push(inside);
        }
    }
    Ok((Frame::new(size, size, pixels)?, Mask::new(size, size, mask)?))
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Write `frames/`, `masks/` and `manifest.csv` under `out_dir`. Patient
/// `p` has disease `ABNORMAL[p % 5]`.
pub fn generate_dataset(out_dir: &Path, params: &SynthParams) -> Result<DatasetManifest, SynthError> {
    if params.patients == 0 || params.frames_per_patient == 0 {
        return Err(SynthError::InvalidParam("need at least one patient and frame".into()));
    }
    if params.size < 32 {
        return Err(SynthError::InvalidParam(format!(
            "frame size must be at least 32, got {}",
            params.size
        )));
    }
    std::fs::create_dir_all(out_dir.join("frames"))?;
    std::fs::create_dir_all(out_dir.join("masks"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut records = Vec::new();
    for p in 0..params.patients {
        let disease = Disease::ABNORMAL[p % Disease::ABNORMAL.len()];
        let tint = [
            rng.gen_range(-12.0..12.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        ];
        for f in 0..params.frames_per_patient {
            let (frame, mask) = synth_frame(&mut rng, params.size, disease, tint)?;
            let frame_rel = format!("frames/p{p:02}_f{f}.png");
            let mask_rel = format!("masks/p{p:02}_f{f}.png");
            frame.save_png(&out_dir.join(&frame_rel))?;
            mask.save_png(&out_dir.join(&mask_rel))?;
            records.push(Record {
                patient_id: format!("p{p:02}"),
                disease,
                frame_path: frame_rel,
                mask_path: Some(mask_rel),
            });
        }
    }
    let mut manifest = DatasetManifest::new(records)?;
    write_atomic(&out_dir.join("manifest.csv"), manifest.to_csv().as_bytes())?;
    manifest.base_dir = out_dir.to_path_buf();
    Ok(manifest)
}
