//! Per-pixel color channel derivation: gray, hue and the raw RGB planes.

use crate::frame::{Frame, Plane};

/// The five scalar planes every feature is computed from. All values are on
/// a common 0..=255 scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelStack {
    pub gray: Plane<u8>,
    pub hue: Plane<u8>,
    pub red: Plane<u8>,
    pub green: Plane<u8>,
    pub blue: Plane<u8>,
}

/// BT.601 luma, rounded.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(f64::from);
    (0.299 * r + 0.587 * g + 0.114 * b).round().min(255.0) as u8
}

/// HSV hue in degrees, `[0, 360)`. Achromatic pixels return 0.
pub fn hue_degrees(rgb: [u8; 3]) -> f64 {
    let [r, g, b] = rgb.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta == 0.0 {
        return 0.0;
    }
    let h = if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// Hue rescaled so that `[0°, 360°)` spans `0..=255`.
#[inline]
pub fn hue_byte(rgb: [u8; 3]) -> u8 {
    (hue_degrees(rgb) / 360.0 * 255.0).round() as u8
}

pub fn derive_channels(frame: &Frame) -> ChannelStack {
    let (w, h) = (frame.width(), frame.height());
    let px = frame.pixels();
    let plane = |f: &dyn Fn([u8; 3]) -> u8| Plane::new(w, h, px.iter().map(|&p| f(p)).collect());
    ChannelStack {
        gray: plane(&luma),
        hue: plane(&hue_byte),
        red: plane(&|p| p[0]),
        green: plane(&|p| p[1]),
        blue: plane(&|p| p[2]),
    }
}
