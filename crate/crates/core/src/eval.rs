//! Pixel-level confusion counts, the four ratio measures, and pooled
//! per-disease reports.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::dataset::Disease;
use crate::frame::{Frame, Mask};
use crate::superpixel::SuperpixelMap;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{labels} labels for {regions} superpixels")]
    LabelCount { labels: usize, regions: usize },
    #[error("confusion has no pixels")]
    EmptyConfusion,
    #[error("no frame results to aggregate")]
    EmptyInput,
}

/// Pixel counts with abnormal as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PixelConfusion {
    pub tp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl PixelConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }
}

impl std::ops::Add for PixelConfusion {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
        }
    }
}

impl std::iter::Sum for PixelConfusion {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Broadcast per-superpixel labels (1 = abnormal) to pixels and count
/// against the mask.
pub fn pixel_confusion(
    labels: &[u8],
    map: &SuperpixelMap,
    mask: &Mask,
) -> Result<PixelConfusion, EvalError> {
    if mask.width() != map.width() || mask.height() != map.height() {
        return Err(EvalError::DimensionMismatch {
            expected: (map.width(), map.height()),
            got: (mask.width(), mask.height()),
        });
    }
    if labels.len() != map.count() {
        return Err(EvalError::LabelCount {
            labels: labels.len(),
            regions: map.count(),
        });
    }
    let mut c = PixelConfusion::default();
    for (&l, &truth) in map.labels().iter().zip(mask.values()) {
        match (labels[l as usize] == 1, truth) {
            (true, true) => c.tp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
        }
    }
    Ok(c)
}

/// An exact count ratio; undefined when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn value(&self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{v:.6}"),
            None => f.write_str("NA"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measures {
    pub sensitivity: Ratio,
    pub specificity: Ratio,
    pub accuracy: Ratio,
    pub precision: Ratio,
}

pub fn measures(c: &PixelConfusion) -> Result<Measures, EvalError> {
    if c.total() == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    let r = |num, den| Ratio { num, den };
    Ok(Measures {
        sensitivity: r(c.tp, c.tp + c.fn_),
        specificity: r(c.tn, c.tn + c.fp),
        accuracy: r(c.tp + c.tn, c.total()),
        precision: r(c.tp, c.tp + c.fp),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Total,
    Disease(Disease),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Total => f.write_str("total"),
            Scope::Disease(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameResult {
    pub disease: Disease,
    pub n: usize,
    pub confusion: PixelConfusion,
}

/// Pooled confusion per (scope, N). Every frame feeds the `total` cell of
/// its N; abnormal frames also feed their disease's cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub cells: BTreeMap<(Scope, usize), PixelConfusion>,
}

pub fn aggregate(results: &[FrameResult]) -> Result<Report, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cells: BTreeMap<(Scope, usize), PixelConfusion> = BTreeMap::new();
    for r in results {
        let total = cells.entry((Scope::Total, r.n)).or_default();
        *total = *total + r.confusion;
        if r.disease != Disease::Normal {
            let cell = cells.entry((Scope::Disease(r.disease), r.n)).or_default();
            *cell = *cell + r.confusion;
        }
    }
    Ok(Report { cells })
}

pub const REPORT_HEADER: &str = "scope,N,sensitivity,specificity,accuracy,precision";

impl Report {
    pub fn measures(&self, scope: Scope, n: usize) -> Option<Measures> {
        self.cells.get(&(scope, n)).and_then(|c| measures(c).ok())
    }

    /// Table rows ordered by scope (total first, then diseases) and N.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for (&(scope, n), c) in &self.cells {
            let Ok(m) = measures(c) else { continue };
            writeln!(
                out,
                "{scope},{n},{},{},{},{}",
                m.sensitivity, m.specificity, m.accuracy, m.precision
            )
            .unwrap();
        }
        out
    }

    /// Per-cell raw counts, for auditing the pooled measures.
    pub fn counts_csv(&self) -> String {
        let mut out = String::from("scope,N,tp,fn,tn,fp\n");
        for (&(scope, n), c) in &self.cells {
            writeln!(out, "{scope},{n},{},{},{},{}", c.tp, c.fn_, c.tn, c.fp).unwrap();
        }
        out
    }
}

/// Sidecar describing how a report was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub seed: u64,
    pub normal_frames_in_total: bool,
    pub params: Vec<(String, String)>,
    pub threads: usize,
    pub created_unix: u64,
}

impl ReportMeta {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "averaging=micro (confusion counts pooled per cell, then divided)").unwrap();
        writeln!(out, "normal_frames_in_total={}", self.normal_frames_in_total).unwrap();
        writeln!(out, "undefined_measures=NA").unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        writeln!(out, "threads={}", self.threads).unwrap();
        writeln!(out, "created_unix={}", self.created_unix).unwrap();
        for (k, v) in &self.params {
            writeln!(out, "{k}={v}").unwrap();
        }
        out
    }
}

/// Frame with predicted-abnormal superpixels tinted red, superpixel
/// boundaries in yellow and the mask outline in green.
pub fn overlay(frame: &Frame, map: &SuperpixelMap, labels: &[u8], mask: Option<&Mask>) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let edges = map.boundaries();
    let mask_edge = |x: usize, y: usize| -> bool {
        let Some(m) = mask else { return false };
        let v = m.values();
        let here = v[y * w + x];
        (x > 0 && v[y * w + x - 1] != here)
            || (x + 1 < w && v[y * w + x + 1] != here)
            || (y > 0 && v[(y - 1) * w + x] != here)
            || (y + 1 < h && v[(y + 1) * w + x] != here)
    };
    Frame::from_fn(w, h, |x, y| {
        let i = y * w + x;
        if mask_edge(x, y) {
            return [0, 255, 0];
        }
        if edges[i] {
            return [255, 255, 0];
        }
        let p = frame.pixels()[i];
        if labels[map.labels()[i] as usize] == 1 {
            [
                ((u16::from(p[0]) + 255) / 2) as u8,
                p[1] / 2,
                p[2] / 2,
            ]
        } else {
            p
        }
    })
    .expect("overlay has the frame's dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio as Exact;
    use proptest::prelude::*;

    fn conf(tp: u64, fn_: u64, tn: u64, fp: u64) -> PixelConfusion {
        PixelConfusion { tp, fn_, tn, fp }
    }

    #[test]
    fn worked_measures() {
        let m = measures(&conf(3, 1, 4, 2)).unwrap();
        assert_eq!(m.sensitivity.value(), Some(0.75));
        assert!((m.specificity.value().unwrap() - 0.6667).abs() < 1e-4);
        assert_eq!(m.accuracy.value(), Some(0.7));
        assert_eq!(m.precision.value(), Some(0.6));
        let perfect = measures(&conf(5, 0, 7, 0)).unwrap();
        for r in [perfect.sensitivity, perfect.specificity, perfect.accuracy, perfect.precision] {
            assert_eq!(r.value(), Some(1.0));
        }
        let none = measures(&conf(0, 4, 6, 0)).unwrap();
        assert_eq!(none.precision.value(), None);
        assert_eq!(none.precision.to_string(), "NA");
        assert_eq!(measures(&conf(0, 0, 0, 0)), Err(EvalError::EmptyConfusion));
    }

    proptest! {
        #[test]
        fn accuracy_identity(tp in 0u64..1_000_000, fn_ in 0u64..1_000_000,
                             tn in 0u64..1_000_000, fp in 0u64..1_000_000) {
            let c = conf(tp, fn_, tn, fp);
            prop_assume!(c.total() > 0);
            let m = measures(&c).unwrap();
            let q = |r: Ratio| Exact::new(i128::from(r.num), i128::from(r.den));
            if m.sensitivity.den > 0 && m.specificity.den > 0 {
                let lhs = q(m.accuracy);
                let rhs = (q(m.sensitivity) * i128::from(tp + fn_)
                    + q(m.specificity) * i128::from(tn + fp))
                    / i128::from(c.total());
                prop_assert_eq!(lhs, rhs);
            }
        }
    }

    fn two_region_map() -> SuperpixelMap {
        SuperpixelMap::from_labels(4, 2, vec![0, 0, 1, 1, 0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let map = two_region_map();
        let mask = Mask::new(4, 2, vec![true, true, false, false, true, true, false, false]).unwrap();
        let c = pixel_confusion(&[1, 0], &map, &mask).unwrap();
        assert_eq!(c, conf(4, 0, 4, 0));
        let inv = pixel_confusion(&[0, 1], &map, &mask).unwrap();
        assert_eq!((inv.tp, inv.fp, inv.tn, inv.fn_), (c.fp, c.tp, c.fn_, c.tn));

        // 512 x 512 with 1000 abnormal pixels, all predicted normal
        let map = SuperpixelMap::from_labels(512, 512, vec![0; 512 * 512]).unwrap();
        let mask = Mask::new(512, 512, (0..512 * 512).map(|i| i < 1000).collect()).unwrap();
        let c = pixel_confusion(&[0], &map, &mask).unwrap();
        assert_eq!(c, conf(0, 1000, 261_144, 0));

        assert!(matches!(
            pixel_confusion(&[0], &map, &Mask::empty(4, 4)),
            Err(EvalError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            pixel_confusion(&[0, 1], &map, &mask),
            Err(EvalError::LabelCount { .. })
        ));
    }

    #[test]
    fn pixel_order_does_not_matter() {
        let map = SuperpixelMap::from_labels(4, 2, vec![1, 0, 0, 1, 1, 0, 1, 0]).unwrap();
        let mask = Mask::new(4, 2, vec![true, false, true, true, false, false, true, false]).unwrap();
        let a = pixel_confusion(&[1, 0], &map, &mask).unwrap();
        let perm = [7, 3, 5, 0, 2, 6, 1, 4];
        let labels2: Vec<u32> = perm.iter().map(|&i| map.labels()[i]).collect();
        let mask2: Vec<bool> = perm.iter().map(|&i| mask.values()[i]).collect();
        let map2 = SuperpixelMap::from_labels(4, 2, labels2).unwrap();
        let b = pixel_confusion(&[1, 0], &map2, &Mask::new(4, 2, mask2).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    fn fr(disease: Disease, n: usize, c: PixelConfusion) -> FrameResult {
        FrameResult { disease, n, confusion: c }
    }

    #[test]
    fn aggregation_examples() {
        assert_eq!(aggregate(&[]), Err(EvalError::EmptyInput));
        let one = aggregate(&[fr(Disease::Bleeding, 100, conf(3, 1, 4, 2))]).unwrap();
        assert_eq!(one.measures(Scope::Total, 100), measures(&conf(3, 1, 4, 2)).ok());

        let twice = aggregate(&[
            fr(Disease::Bleeding, 100, conf(3, 1, 4, 2)),
            fr(Disease::Xanthoma, 100, conf(3, 1, 4, 2)),
        ])
        .unwrap();
        let (a, b) = (
            one.measures(Scope::Total, 100).unwrap(),
            twice.measures(Scope::Total, 100).unwrap(),
        );
        assert_eq!(a.accuracy.value(), b.accuracy.value());
        assert_eq!(a.precision.value(), b.precision.value());

        let pooled = aggregate(&[
            fr(Disease::Crohn, 50, conf(10, 0, 0, 0)),
            fr(Disease::Crohn, 50, conf(0, 10, 0, 0)),
        ])
        .unwrap();
        assert_eq!(pooled.measures(Scope::Total, 50).unwrap().sensitivity.value(), Some(0.5));
        assert_eq!(
            pooled.measures(Scope::Disease(Disease::Crohn), 50).unwrap().sensitivity.value(),
            Some(0.5)
        );
    }

    #[test]
    fn normal_frames_count_only_in_total() {
        let r = aggregate(&[
            fr(Disease::Normal, 25, conf(0, 0, 100, 0)),
            fr(Disease::Bleeding, 25, conf(5, 5, 5, 5)),
        ])
        .unwrap();
        assert_eq!(r.cells[&(Scope::Total, 25)], conf(5, 5, 105, 5));
        assert_eq!(r.cells.len(), 2);
    }

    proptest! {
        #[test]
        fn aggregation_is_associative(counts in proptest::collection::vec((0u64..50, 0u64..50, 0u64..50, 0u64..50, 0usize..3), 1..20),
                                      split in 0usize..20) {
            let results: Vec<FrameResult> = counts.iter().map(|&(a, b, c, d, k)| {
                fr(Disease::ABNORMAL[k], [25, 100][k % 2], conf(a, b, c, d))
            }).collect();
            let split = split.min(results.len());
            let whole = aggregate(&results).unwrap();
            let mut cells = BTreeMap::new();
            for part in [&results[..split], &results[split..]] {
                if part.is_empty() { continue; }
                for (k, v) in aggregate(part).unwrap().cells {
                    let e: &mut PixelConfusion = cells.entry(k).or_default();
                    *e = *e + v;
                }
            }
            prop_assert_eq!(whole.cells, cells);
        }
    }

    #[test]
    fn report_csv_layout() {
        let r = aggregate(&[
            fr(Disease::Bleeding, 100, conf(3, 1, 4, 2)),
            fr(Disease::Normal, 100, conf(0, 0, 10, 0)),
            fr(Disease::Bleeding, 25, conf(0, 2, 4, 0)),
        ])
        .unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines[1], "total,25,0.000000,1.000000,0.666667,NA");
        assert_eq!(lines[2], "total,100,0.750000,0.875000,0.850000,0.600000");
        assert_eq!(lines[3], "bleeding,25,0.000000,1.000000,0.666667,NA");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn overlay_marks() {
        let frame = Frame::filled(16, 16, [100, 100, 100]).unwrap();
        let map = SuperpixelMap::from_labels(16, 16, (0..256).map(|i| u32::from(i % 16 >= 8)).collect())
            .unwrap();
        let mask = Mask::new(16, 16, (0..256).map(|i| i / 16 >= 12).collect()).unwrap();
        let out = overlay(&frame, &map, &[0, 1], Some(&mask));
        assert_eq!(out.get(0, 0), [100, 100, 100]);
        assert_eq!(out.get(15, 0), [177, 50, 50]);
        assert_eq!(out.get(7, 0), [255, 255, 0]);
        assert_eq!(out.get(8, 0), [255, 255, 0]);
        assert_eq!(out.get(3, 11), [0, 255, 0]);
        assert_eq!(out.get(3, 12), [0, 255, 0]);
    }
}
