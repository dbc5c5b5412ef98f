//! Frames, masks and scalar planes, plus PNG/TIFF decoding.

use std::io;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageBuffer, Luma, Rgb};
use thiserror::Error;

/// Smallest accepted frame side, in pixels.
pub const MIN_SIDE: usize = 16;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("frame {width}x{height} is below the {MIN_SIDE}x{MIN_SIDE} minimum")]
    TooSmall { width: usize, height: usize },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("encode error: {0}")]
    Encode(String),
}

/// An 8-bit RGB raster stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, FrameError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(FrameError::TooSmall { width, height });
        }
        if pixels.len() != width * height {
            return Err(FrameError::BufferSize {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// A frame filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, FrameError> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, FrameError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn save_png(&self, path: &Path) -> Result<(), FrameError> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buf: ImageBuffer<Rgb<u8>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer length checked at construction");
        let mut bytes = Vec::new();
        buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| FrameError::Encode(e.to_string()))?;
        crate::io_util::write_atomic(path, &bytes)?;
        Ok(())
    }
}

/// Binary ground-truth raster: `true` marks abnormal tissue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, values: Vec<bool>) -> Result<Self, FrameError> {
        if values.len() != width * height {
            return Err(FrameError::BufferSize {
                expected: width * height,
                got: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn abnormal_count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn check_matches(&self, width: usize, height: usize) -> Result<(), FrameError> {
        if self.width != width || self.height != height {
            return Err(FrameError::DimensionMismatch(
                self.width,
                self.height,
                width,
                height,
            ));
        }
        Ok(())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), FrameError> {
        let raw: Vec<u8> = self.values.iter().map(|&v| if v { 255 } else { 0 }).collect();
        let buf: ImageBuffer<Luma<u8>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer length checked at construction");
        let mut bytes = Vec::new();
        buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| FrameError::Encode(e.to_string()))?;
        crate::io_util::write_atomic(path, &bytes)?;
        Ok(())
    }
}

/// A single-channel raster of scalar values, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer size");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Read with coordinates clamped to the raster (replicate padding).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }
}

fn open_image(path: &Path) -> Result<DynamicImage, FrameError> {
    if !path.exists() {
        return Err(FrameError::NotFound(path.display().to_string()));
    }
    let reader = image::ImageReader::open(path)?
        .with_guessed_format()
        .map_err(FrameError::Io)?;
    reader
        .decode()
        .map_err(|e| FrameError::UnsupportedFormat(format!("{}: {e}", path.display())))
}

fn is_eight_bit(color: ColorType) -> bool {
    matches!(
        color,
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8
    )
}

/// Decode an 8-bit image into a [`Frame`]. Gray inputs are replicated across
/// the three channels and alpha is dropped.
pub fn load_frame(path: &Path) -> Result<Frame, FrameError> {
    let img = open_image(path)?;
    if !is_eight_bit(img.color()) {
        return Err(FrameError::UnsupportedFormat(format!(
            "{}: {:?} is not 8 bits per channel",
            path.display(),
            img.color()
        )));
    }
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels = rgb.pixels().map(|p| p.0).collect();
    Frame::new(w, h, pixels)
}

/// Decode a mask. Any nonzero luma value is abnormal.
pub fn load_mask(path: &Path) -> Result<Mask, FrameError> {
    let img = open_image(path)?;
    if !is_eight_bit(img.color()) {
        return Err(FrameError::UnsupportedFormat(format!(
            "{}: {:?} is not 8 bits per channel",
            path.display(),
            img.color()
        )));
    }
    let luma = img.to_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let values = luma.pixels().map(|p| p.0[0] != 0).collect();
    Mask::new(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_png_decodes_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        let frame = Frame::from_fn(32, 20, |x, y| [x as u8, y as u8, (x * y) as u8]).unwrap();
        frame.save_png(&path).unwrap();
        let loaded = load_frame(&path).unwrap();
        assert_eq!(loaded, frame);
    }

    #[test]
    fn gray_input_replicates_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let buf: ImageBuffer<Luma<u8>, _> =
            ImageBuffer::from_fn(16, 16, |x, _| Luma([(x * 10) as u8]));
        buf.save(&path).unwrap();
        let frame = load_frame(&path).unwrap();
        assert_eq!(frame.get(3, 5), [30, 30, 30]);
    }

    #[test]
    fn sixteen_bit_tiff_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.tiff");
        let buf: ImageBuffer<Rgb<u16>, _> =
            ImageBuffer::from_fn(16, 16, |x, y| Rgb([x as u16 * 1000, y as u16, 7]));
        buf.save(&path).unwrap();
        assert!(matches!(
            load_frame(&path),
            Err(FrameError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn tiny_image_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.png");
        let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::new(8, 8);
        buf.save(&path).unwrap();
        assert!(matches!(
            load_frame(&path),
            Err(FrameError::TooSmall {
                width: 8,
                height: 8
            })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_frame(Path::new("/nonexistent/frame.png")),
            Err(FrameError::NotFound(_))
        ));
    }

    #[test]
    fn undecodable_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not an image at all").unwrap();
        assert!(matches!(
            load_frame(&path),
            Err(FrameError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn mask_nonzero_is_abnormal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let buf: ImageBuffer<Luma<u8>, _> =
            ImageBuffer::from_fn(16, 16, |x, _| Luma([if x < 4 { 0 } else { x as u8 }]));
        buf.save(&path).unwrap();
        let mask = load_mask(&path).unwrap();
        assert_eq!(mask.abnormal_count(), 12 * 16);
        assert!(!mask.values()[3]);
        assert!(mask.values()[4]);
    }
}
