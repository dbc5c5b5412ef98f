//! Dual SVM solver: SMO with second-order working-set selection and a
//! duality-gap stopping rule.

use super::Kernel;

/// Bytes of kernel rows kept in memory at once.
const CACHE_BYTES: usize = 256 << 20;
const TAU: f64 = 1e-12;

struct RowCache<'a> {
    x: &'a [f64],
    d: usize,
    n: usize,
    kernel: Kernel,
    rows: Vec<Option<Vec<f64>>>,
    stamp: Vec<u64>,
    clock: u64,
    resident: usize,
    capacity: usize,
    diag: Vec<f64>,
}

impl<'a> RowCache<'a> {
    fn new(x: &'a [f64], d: usize, kernel: Kernel) -> Self {
        let n = x.len() / d;
        let diag = (0..n)
            .map(|i| kernel.eval(&x[i * d..(i + 1) * d], &x[i * d..(i + 1) * d]))
            .collect();
        Self {
            x,
            d,
            n,
            kernel,
            rows: vec![None; n],
            stamp: vec![0; n],
            clock: 0,
            resident: 0,
            capacity: (CACHE_BYTES / (8 * n.max(1))).max(2),
            diag,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        self.stamp[i] = self.clock;
        if self.rows[i].is_none() {
            if self.resident >= self.capacity {
                let victim = (0..self.n)
                    .filter(|&r| r != i && self.rows[r].is_some())
                    .min_by_key(|&r| self.stamp[r])
                    .expect("cache holds at least one other row");
                self.rows[victim] = None;
                self.resident -= 1;
            }
            let d = self.d;
            let xi = &self.x[i * d..(i + 1) * d];
            let row = (0..self.n)
                .map(|j| self.kernel.eval(xi, &self.x[j * d..(j + 1) * d]))
                .collect();
            self.rows[i] = Some(row);
            self.resident += 1;
        }
        self.rows[i].as_deref().unwrap()
    }
}

pub(crate) struct Solution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize 1/2 a'Qa - e'a subject to y'a = 0 and 0 <= a <= c, where
/// Q_ij = y_i y_j K(x_i, x_j). Stops when the maximal KKT violation
/// `m - M` drops to `tol`, so every sample meets its KKT condition to
/// within `tol` at the returned bias.
pub(crate) fn solve(
    x: &[f64],
    d: usize,
    y: &[f64],
    kernel: Kernel,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Solution {
    let n = y.len();
    let mut cache = RowCache::new(x, d, kernel);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // i: maximal -y G over the up set
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let f = -y[t] * grad[t];
            if up(alpha[t], y[t]) && f > gmax {
                gmax = f;
                i = t;
            }
            if low(alpha[t], y[t]) && f < gmin {
                gmin = f;
            }
        }
        if i == usize::MAX || gmax - gmin <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        // j: largest second-order decrease among violating low-set samples
        let ki = cache.row(i).to_vec();
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > 0.0 {
                let a = (cache.diag[i] + cache.diag[t] - 2.0 * ki[t]).max(TAU);
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            converged = true;
            break;
        }
        let kj = cache.row(j).to_vec();

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let a = (cache.diag[i] + cache.diag[j] - 2.0 * ki[j]).max(TAU);
        // move along y_i a_i + y_j a_j = const
        let delta = (-y[i] * grad[i] + y[j] * grad[j]) / a;
        let (ai, aj) = {
            let sum = y[i] * ai_old + y[j] * aj_old;
            let mut ai = ai_old + y[i] * delta;
            // clip a_i to its box, then a_j follows; clip a_j and refit a_i
            ai = ai.clamp(0.0, c);
            let mut aj = y[j] * (sum - y[i] * ai);
            if aj < 0.0 || aj > c {
                aj = aj.clamp(0.0, c);
                ai = (y[i] * (sum - y[j] * aj)).clamp(0.0, c);
            }
            (ai, aj)
        };
        let (di, dj) = (ai - ai_old, aj - aj_old);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
        alpha[i] = ai;
        alpha[j] = aj;
    }

    // bias: mean over free vectors, else midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let f = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += f;
            free_n += 1;
        } else if up(alpha[t], y[t]) {
            lb = lb.max(f);
        } else {
            ub = ub.min(f);
        }
    }
    let bias = if free_n > 0 {
        free_sum / free_n as f64
    } else if lb.is_finite() && ub.is_finite() {
        (lb + ub) / 2.0
    } else if lb.is_finite() {
        lb
    } else {
        ub
    };

    Solution {
        alpha,
        bias,
        iterations,
        converged,
    }
}
