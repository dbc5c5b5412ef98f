use super::FeatureError;
use crate::frame::Plane;
use crate::superpixel::SuperpixelMap;

/// Number of histogram bins used for region entropy.
pub const ENTROPY_BINS: u64 = 256;

/// Mean, population variance, skewness, kurtosis (non-excess) and base-2
/// entropy of one region.
pub type Moments = [f64; 5];

#[inline]
fn entropy_bin(value: u32, levels: u32) -> u64 {
    if u64::from(levels) <= ENTROPY_BINS {
        u64::from(value)
    } else {
        u64::from(value) * ENTROPY_BINS / u64::from(levels)
    }
}

/// Per-superpixel statistics of one channel. `levels` is the number of
/// values the channel can take; channels with more than 256 levels are
/// binned uniformly for the entropy histogram.
///
/// Zero-variance regions report skewness and kurtosis of 0.
pub fn channel_moments<T>(
    channel: &Plane<T>,
    levels: u32,
    map: &SuperpixelMap,
) -> Result<Vec<Moments>, FeatureError>
where
    T: Copy + Into<u32>,
{
    if channel.width != map.width() || channel.height != map.height() {
        return Err(FeatureError::DimensionMismatch {
            expected: (map.width(), map.height()),
            got: (channel.width, channel.height),
        });
    }
    let k = map.count();
    let labels = map.labels();

    let mut count = vec![0usize; k];
    let mut sum = vec![0f64; k];
    for (&l, &v) in labels.iter().zip(&channel.data) {
        count[l as usize] += 1;
        sum[l as usize] += f64::from(v.into());
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();

    let mut central = vec![[0f64; 3]; k];
    for (&l, &v) in labels.iter().zip(&channel.data) {
        let d = f64::from(v.into()) - mean[l as usize];
        let d2 = d * d;
        let c = &mut central[l as usize];
        c[0] += d2;
        c[1] += d2 * d;
        c[2] += d2 * d2;
    }

    // (label, bin) keys sorted so each region's histogram is a run of keys
    let mut keys: Vec<u64> = labels
        .iter()
        .zip(&channel.data)
        .map(|(&l, &v)| (u64::from(l) << 32) | entropy_bin(v.into(), levels))
        .collect();
    keys.sort_unstable();
    let mut entropy = vec![0f64; k];
    let mut i = 0;
    while i < keys.len() {
        let mut j = i;
        while j < keys.len() && keys[j] == keys[i] {
            j += 1;
        }
        let l = (keys[i] >> 32) as usize;
        let p = (j - i) as f64 / count[l] as f64;
        entropy[l] -= p * p.log2();
        i = j;
    }

    Ok((0..k)
        .map(|r| {
            let n = count[r] as f64;
            let var = central[r][0] / n;
            let (skew, kurt) = if var > 0.0 {
                let m3 = central[r][1] / n;
                let m4 = central[r][2] / n;
                (m3 / var.powf(1.5), m4 / (var * var))
            } else {
                (0.0, 0.0)
            };
            // -0.0 from a single-bin histogram reads as 0
            [mean[r], var, skew, kurt, entropy[r] + 0.0]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_region(values: Vec<u8>) -> (Plane<u8>, SuperpixelMap) {
        let n = values.len();
        (
            Plane::new(n, 1, values),
            SuperpixelMap::from_labels(n, 1, vec![0; n]).unwrap(),
        )
    }

    #[test]
    fn constant_region() {
        let (plane, map) = single_region(vec![7; 20]);
        let m = channel_moments(&plane, 256, &map).unwrap();
        assert_eq!(m, vec![[7.0, 0.0, 0.0, 0.0, 0.0]]);
        assert!(m[0][4].is_sign_positive());
    }

    #[test]
    fn two_point_distribution() {
        let (plane, map) = single_region([0u8, 255].repeat(8));
        let m = channel_moments(&plane, 256, &map).unwrap()[0];
        assert_eq!(m[0], 127.5);
        assert_eq!(m[1], 16256.25);
        assert_eq!(m[2], 0.0);
        assert_eq!(m[3], 1.0);
        assert_eq!(m[4], 1.0);
    }

    #[test]
    fn regions_are_independent() {
        let plane = Plane::new(4, 1, vec![1u8, 1, 9, 200]);
        let map = SuperpixelMap::from_labels(4, 1, vec![0, 0, 1, 1]).unwrap();
        let m = channel_moments(&plane, 256, &map).unwrap();
        assert_eq!(m[0], [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(m[1][0], 104.5);
        assert_eq!(m[1][4], 1.0);
    }

    #[test]
    fn wide_codes_are_binned() {
        // 16-bit codes: 0 and 255 land in bin 0, 65535 in bin 255
        let plane = Plane::new(4, 1, vec![0u32, 255, 65535, 65535]);
        let map = SuperpixelMap::from_labels(4, 1, vec![0; 4]).unwrap();
        let m = channel_moments(&plane, 1 << 16, &map).unwrap()[0];
        assert_eq!(m[4], 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let plane = Plane::new(3, 1, vec![0u8; 3]);
        let map = SuperpixelMap::from_labels(4, 1, vec![0; 4]).unwrap();
        assert!(matches!(
            channel_moments(&plane, 256, &map),
            Err(FeatureError::DimensionMismatch { .. })
        ));
    }
}
