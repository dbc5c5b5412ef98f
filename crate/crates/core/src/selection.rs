//! Laplacian score feature ranking.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{got} samples; at least {need} are needed")]
    TooFewSamples { got: usize, need: usize },
    #[error("affinity graph has no positive weights")]
    DegenerateGraph,
}

/// Bandwidth of the heat-kernel edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatT {
    /// Mean squared distance over all k-NN pairs.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorerParams {
    pub k_neighbors: usize,
    pub heat_t: HeatT,
    pub keep: usize,
}

impl Default for ScorerParams {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            heat_t: HeatT::Auto,
            keep: 20,
        }
    }
}

impl ScorerParams {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.k_neighbors == 0 {
            return Err(SelectionError::InvalidParam("k_neighbors must be >= 1".into()));
        }
        if let HeatT::Fixed(t) = self.heat_t {
            if !(t > 0.0 && t.is_finite()) {
                return Err(SelectionError::InvalidParam(format!(
                    "heat_t must be positive, got {t}"
                )));
            }
        }
        if self.keep == 0 {
            return Err(SelectionError::InvalidParam("keep must be >= 1".into()));
        }
        Ok(())
    }
}

/// Standardize each column to zero mean and unit population variance.
/// Constant columns become all zeros and are flagged.
fn standardize(x: &[f64], cols: usize) -> (Vec<f64>, Vec<bool>) {
    let n = x.len() / cols;
    let mut out = x.to_vec();
    let mut constant = vec![false; cols];
    for c in 0..cols {
        let mean = (0..n).map(|r| x[r * cols + c]).sum::<f64>() / n as f64;
        let var = (0..n).map(|r| (x[r * cols + c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        constant[c] = !(sd > 1e-12 * mean.abs().max(1.0));
        for r in 0..n {
            out[r * cols + c] = if constant[c] {
                0.0
            } else {
                (x[r * cols + c] - mean) / sd
            };
        }
    }
    (out, constant)
}

/// Symmetric k-NN adjacency as (i, j, squared distance) with i < j.
/// Also returns the squared distances of every directed k-NN pair.
fn knn_edges(z: &[f64], cols: usize, k: usize) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let n = z.len() / cols;
    let dist2 = |i: usize, j: usize| -> f64 {
        z[i * cols..(i + 1) * cols]
            .iter()
            .zip(&z[j * cols..(j + 1) * cols])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let mut directed = Vec::with_capacity(n * k);
    let mut edges = std::collections::BTreeMap::new();
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist2(i, j), j)).collect();
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if cand.len() > k {
            cand.select_nth_unstable_by(k - 1, by_dist);
            cand.truncate(k);
        }
        cand.sort_by(by_dist);
        for &(d, j) in &cand {
            directed.push(d);
            edges.insert((i.min(j), i.max(j)), d);
        }
    }
    (edges.into_iter().map(|((i, j), d)| (i, j, d)).collect(), directed)
}

/// Laplacian score of every column of a row-major `rows x cols` matrix.
/// Lower scores mark features that vary smoothly over the sample graph.
/// Constant columns score `+inf`.
pub fn laplacian_scores(
    x: &[f64],
    cols: usize,
    params: &ScorerParams,
) -> Result<Vec<f64>, SelectionError> {
    params.validate()?;
    if cols == 0 || x.len() % cols != 0 {
        return Err(SelectionError::InvalidParam(format!(
            "{} values do not form rows of {cols}",
            x.len()
        )));
    }
    let n = x.len() / cols;
    if n < params.k_neighbors + 1 {
        return Err(SelectionError::TooFewSamples {
            got: n,
            need: params.k_neighbors + 1,
        });
    }
    let (z, constant) = standardize(x, cols);
    let (edges, directed) = knn_edges(&z, cols, params.k_neighbors);
    let t = match params.heat_t {
        HeatT::Auto => directed.iter().sum::<f64>() / directed.len() as f64,
        HeatT::Fixed(t) => t,
    };
    if !(t > 0.0) {
        return Err(SelectionError::DegenerateGraph);
    }
    let weighted: Vec<(usize, usize, f64)> = edges
        .iter()
        .map(|&(i, j, d)| (i, j, (-d / t).exp()))
        .filter(|e| e.2 > 0.0)
        .collect();
    if weighted.is_empty() {
        return Err(SelectionError::DegenerateGraph);
    }
    let mut degree = vec![0f64; n];
    for &(i, j, w) in &weighted {
        degree[i] += w;
        degree[j] += w;
    }
    let vol: f64 = degree.iter().sum();

    Ok((0..cols)
        .map(|c| {
            if constant[c] {
                return f64::INFINITY;
            }
            let f = |r: usize| z[r * cols + c];
            let shift = (0..n).map(|r| f(r) * degree[r]).sum::<f64>() / vol;
            // f~' L f~ = sum over edges of w (f_i - f_j)^2; the shift cancels
            let num: f64 = weighted.iter().map(|&(i, j, w)| w * (f(i) - f(j)).powi(2)).sum();
            let den: f64 = (0..n).map(|r| degree[r] * (f(r) - shift).powi(2)).sum();
            if den > 0.0 {
                num / den
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    pub scores: Vec<f64>,
    /// Indices of the kept features, ascending by (score, index).
    pub selected: Vec<usize>,
}

pub fn select_features(scores: &[f64], keep: usize) -> Result<FeatureRanking, SelectionError> {
    if keep == 0 || keep > scores.len() {
        return Err(SelectionError::InvalidParam(format!(
            "keep must be in 1..={}, got {keep}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(keep);
    Ok(FeatureRanking {
        scores: scores.to_vec(),
        selected: order,
    })
}

impl FeatureRanking {
    /// CSV `feature_index,score,selected`, one row per feature.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature_index,score,selected\n");
        for (i, s) in self.scores.iter().enumerate() {
            let sel = u8::from(self.selected.contains(&i));
            writeln!(out, "{i},{s},{sel}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense textbook formula on an explicit n x n weight matrix.
    fn dense_scores(x: &[f64], cols: usize, k: usize) -> Vec<f64> {
        let n = x.len() / cols;
        let mut z = vec![0.0; x.len()];
        let mut constant = vec![false; cols];
        for c in 0..cols {
            let col: Vec<f64> = (0..n).map(|r| x[r * cols + c]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
            constant[c] = sd < 1e-12;
            for r in 0..n {
                z[r * cols + c] = if constant[c] { 0.0 } else { (col[r] - m) / sd };
            }
        }
        let d2 = |i: usize, j: usize| {
            (0..cols).map(|c| (z[i * cols + c] - z[j * cols + c]).powi(2)).sum::<f64>()
        };
        let mut adj = vec![vec![false; n]; n];
        let mut total = 0.0;
        for i in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| d2(i, a).partial_cmp(&d2(i, b)).unwrap().then(a.cmp(&b)));
            for &j in &others[..k] {
                adj[i][j] = true;
                adj[j][i] = true;
                total += d2(i, j);
            }
        }
        let t = total / (n * k) as f64;
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if adj[i][j] {
                    w[i][j] = (-d2(i, j) / t).exp();
                }
            }
        }
        let d: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();
        (0..cols)
            .map(|c| {
                if constant[c] {
                    return f64::INFINITY;
                }
                let f: Vec<f64> = (0..n).map(|r| z[r * cols + c]).collect();
                let shift = f.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / d.iter().sum::<f64>();
                let ft: Vec<f64> = f.iter().map(|v| v - shift).collect();
                // L = D - W
                let mut num = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let l = if i == j { d[i] - w[i][j] } else { -w[i][j] };
                        num += ft[i] * l * ft[j];
                    }
                }
                let den: f64 = (0..n).map(|i| ft[i] * d[i] * ft[i]).sum();
                num / den
            })
            .collect()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        a == b || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    proptest! {
        #[test]
        fn matches_dense_oracle(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..20 * 5).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let got = laplacian_scores(&x, 5, &ScorerParams::default()).unwrap();
            let want = dense_scores(&x, 5, 5);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!(close(*g, *w, 1e-9), "{} vs {}", g, w);
            }
        }

        #[test]
        fn affine_invariance(seed in any::<u64>(), col in 0usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..30 * 5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut y = x.clone();
            for r in 0..30 {
                y[r * 5 + col] = 7.0 * y[r * 5 + col] + 3.0;
            }
            let a = laplacian_scores(&x, 5, &ScorerParams::default()).unwrap();
            let b = laplacian_scores(&y, 5, &ScorerParams::default()).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!(close(*p, *q, 1e-9));
            }
        }
    }

    const COLS: usize = 203;

    /// 12 clusters of 6 rows. Columns: cluster id, pure noise, constant,
    /// then 200 jittered cluster coordinates. The coordinates dominate every
    /// distance, so with k = 5 the neighbor sets are exactly the clusters
    /// and the noise column barely moves the edge weights.
    fn clusters(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = move || {
            let (u, v): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        };
        let centers: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..COLS - 3).map(|_| 3f64.sqrt() * normal()).collect())
            .collect();
        let mut x = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..6 {
                x.extend_from_slice(&[c as f64, normal(), 4.0]);
                x.extend(center.iter().map(|v| v + normal()));
            }
        }
        x
    }

    #[test]
    fn cluster_indicator_scores_lowest() {
        let x = clusters(11);
        let s = laplacian_scores(&x, COLS, &ScorerParams::default()).unwrap();
        assert!(s[0] < 0.05, "indicator {}", s[0]);
        assert!(s.iter().all(|&v| s[0] <= v));
        assert!(s[2].is_infinite());
        let r = select_features(&s, COLS).unwrap();
        assert_eq!(r.selected[0], 0);
        assert_eq!(r.selected[COLS - 1], 2);
    }

    #[test]
    fn noise_scores_near_one() {
        let mut mean = 0.0;
        for seed in 0..10 {
            let x = clusters(seed);
            mean += laplacian_scores(&x, COLS, &ScorerParams::default()).unwrap()[1] / 10.0;
        }
        assert!((0.7..1.3).contains(&mean), "noise mean score {mean}");
    }

    #[test]
    fn errors() {
        let x = vec![1.0; 5 * 3];
        assert_eq!(
            laplacian_scores(&x, 3, &ScorerParams::default()),
            Err(SelectionError::TooFewSamples { got: 5, need: 6 })
        );
        // all rows identical: every distance is zero
        let x = vec![1.0; 10 * 3];
        assert_eq!(
            laplacian_scores(&x, 3, &ScorerParams::default()),
            Err(SelectionError::DegenerateGraph)
        );
        let p = ScorerParams {
            k_neighbors: 0,
            ..ScorerParams::default()
        };
        assert!(matches!(
            laplacian_scores(&[0.0; 30], 3, &p),
            Err(SelectionError::InvalidParam(_))
        ));
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_features(&[3.0, 1.0, 2.0], 2).unwrap().selected, vec![1, 2]);
        let s: Vec<f64> = (0..35).map(|i| i as f64).collect();
        assert_eq!(
            select_features(&s, 35).unwrap().selected,
            (0..35).collect::<Vec<_>>()
        );
        assert!(matches!(select_features(&s, 0), Err(SelectionError::InvalidParam(_))));
        assert!(matches!(select_features(&s, 36), Err(SelectionError::InvalidParam(_))));
        // ties go to the lower index
        assert_eq!(
            select_features(&[1.0, 0.5, 0.5, f64::INFINITY, 0.5], 3).unwrap().selected,
            vec![1, 2, 4]
        );
    }

    #[test]
    fn ranking_csv() {
        let r = select_features(&[0.5, f64::INFINITY, 0.25], 2).unwrap();
        assert_eq!(r.to_csv(), "feature_index,score,selected\n0,0.5,1\n1,inf,0\n2,0.25,1\n");
    }
}
