//! Binary SVM over superpixel features.

mod model_io;
mod smo;

pub use model_io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("expected {expected} feature columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model file not found: {0}")]
    NotFound(String),
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("model version {found:?} is not supported (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
    Rbf,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = ClassifyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(KernelKind::Linear),
            "rbf" => Ok(KernelKind::Rbf),
            _ => Err(ClassifyError::InvalidParam(format!("unknown kernel {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// 1 / d for d selected features.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub kernel: KernelKind,
    pub c: f64,
    pub gamma: Gamma,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            c: 1.0,
            gamma: Gamma::Auto,
            tol: 1e-3,
            max_passes: 5,
            seed: 0,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: String| Err(ClassifyError::InvalidParam(m));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("C must be positive, got {}", self.c));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if let Gamma::Fixed(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        if self.max_passes == 0 {
            return bad("max_passes must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Kernel {
    Linear,
    Rbf(f64),
}

impl Kernel {
    #[inline]
    pub(crate) fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(p, q)| p * q).sum(),
            Kernel::Rbf(g) => {
                let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
                (-g * d2).exp()
            }
        }
    }
}

/// Trained classifier. Inputs are full feature rows; the model picks its
/// `selected` columns and standardizes them before applying the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: KernelKind,
    pub c: f64,
    /// Resolved RBF bandwidth (unused by the linear kernel).
    pub gamma: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
    /// Column count of the rows passed to [`svm_predict`].
    pub inputs: usize,
    pub selected: Vec<usize>,
    pub scaler_mean: Vec<f64>,
    pub scaler_std: Vec<f64>,
    /// Row-major M x d, already standardized.
    pub support_vectors: Vec<f64>,
    /// alpha_i * y_i per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    /// Superpixel count the model was trained for (0 if unspecified).
    pub trained_for: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainReport {
    pub iterations: usize,
    /// False when the iteration cap stopped the solver first.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Training {
    pub model: SvmModel,
    pub report: TrainReport,
    /// Dual variables of every training row, in input order.
    pub alpha: Vec<f64>,
}

impl SvmModel {
    pub fn dims(&self) -> usize {
        self.selected.len()
    }

    pub fn support_count(&self) -> usize {
        self.dual_coefs.len()
    }

    fn kernel_fn(&self) -> Kernel {
        match self.kernel {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Rbf => Kernel::Rbf(self.gamma),
        }
    }

    /// Selected, standardized copy of one input row.
    fn project(&self, row: &[f64], out: &mut [f64]) {
        for (k, &c) in self.selected.iter().enumerate() {
            out[k] = (row[c] - self.scaler_mean[k]) / self.scaler_std[k];
        }
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        let d = self.dims();
        let mut z = vec![0.0; d];
        self.project(row, &mut z);
        let kernel = self.kernel_fn();
        let mut f = self.bias;
        for (m, coef) in self.dual_coefs.iter().enumerate() {
            f += coef * kernel.eval(&self.support_vectors[m * d..(m + 1) * d], &z);
        }
        f
    }
}

/// Train on a row-major matrix with `cols` columns, using the columns in
/// `selected`. Labels are 1 (abnormal, positive class) or 0.
pub fn svm_train(
    x: &[f64],
    cols: usize,
    y: &[u8],
    selected: &[usize],
    params: &SvmParams,
) -> Result<Training, ClassifyError> {
    params.validate()?;
    if cols == 0 || x.len() != y.len() * cols {
        return Err(ClassifyError::DimensionMismatch {
            expected: y.len() * cols,
            got: x.len(),
        });
    }
    if selected.is_empty() {
        return Err(ClassifyError::InvalidParam("no features selected".into()));
    }
    if let Some(&c) = selected.iter().find(|&&c| c >= cols) {
        return Err(ClassifyError::InvalidParam(format!(
            "selected column {c} out of range 0..{cols}"
        )));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(ClassifyError::InvalidParam("labels must be 0 or 1".into()));
    }
    let n = y.len();
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == n {
        return Err(ClassifyError::SingleClass);
    }

    let d = selected.len();
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for (k, &c) in selected.iter().enumerate() {
        let m = (0..n).map(|r| x[r * cols + c]).sum::<f64>() / n as f64;
        let v = (0..n).map(|r| (x[r * cols + c] - m).powi(2)).sum::<f64>() / n as f64;
        mean[k] = m;
        // constant columns pass through centered but unscaled
        std[k] = if v.sqrt() > 0.0 { v.sqrt() } else { 1.0 };
    }
    let gamma = match params.gamma {
        Gamma::Auto => 1.0 / d as f64,
        Gamma::Fixed(g) => g,
    };

    // the seed fixes the solver's visiting order, which decides ties
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));
    let mut z = vec![0.0; n * d];
    let mut ys = vec![0.0; n];
    for (s, &r) in order.iter().enumerate() {
        for (k, &c) in selected.iter().enumerate() {
            z[s * d + k] = (x[r * cols + c] - mean[k]) / std[k];
        }
        ys[s] = if y[r] == 1 { 1.0 } else { -1.0 };
    }

    let mut model = SvmModel {
        kernel: params.kernel,
        c: params.c,
        gamma,
        tol: params.tol,
        max_passes: params.max_passes,
        seed: params.seed,
        inputs: cols,
        selected: selected.to_vec(),
        scaler_mean: mean,
        scaler_std: std,
        support_vectors: Vec::new(),
        dual_coefs: Vec::new(),
        bias: 0.0,
        trained_for: 0,
    };
    let max_iter = params.max_passes.saturating_mul(1000).saturating_mul(n);
    let sol = smo::solve(&z, d, &ys, model.kernel_fn(), params.c, params.tol, max_iter);

    let mut alpha = vec![0.0; n];
    let mut slot = vec![0; n];
    for (s, &r) in order.iter().enumerate() {
        alpha[r] = sol.alpha[s];
        slot[r] = s;
    }
    // support vectors in input order
    for r in 0..n {
        if alpha[r] > 0.0 {
            let s = slot[r];
            model.support_vectors.extend_from_slice(&z[s * d..(s + 1) * d]);
            model.dual_coefs.push(alpha[r] * ys[s]);
        }
    }
    model.bias = sol.bias;
    Ok(Training {
        model,
        report: TrainReport {
            iterations: sol.iterations,
            converged: sol.converged,
        },
        alpha,
    })
}

/// Labels (1 iff decision >= 0) and decision values for each row.
pub fn svm_predict(model: &SvmModel, x: &[f64], cols: usize) -> Result<(Vec<u8>, Vec<f64>), ClassifyError> {
    if cols != model.inputs || (cols > 0 && x.len() % cols != 0) {
        return Err(ClassifyError::DimensionMismatch {
            expected: model.inputs,
            got: cols,
        });
    }
    let decisions: Vec<f64> = x.chunks_exact(cols).map(|row| model.decision(row)).collect();
    let labels = decisions.iter().map(|&f| u8::from(f >= 0.0)).collect();
    Ok((labels, decisions))
}

#[cfg(test)]
mod tests;
