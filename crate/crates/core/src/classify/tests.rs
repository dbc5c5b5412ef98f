use super::model_io::{model_from_str, model_to_string};
use super::*;
use rand::Rng;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let (u, v): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// 100 points in the plane, split by the line x + y = 0 with a gap of
/// width 2 around it.
pub(crate) fn blobs(seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    while y.len() < 100 {
        let (a, b) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let dist = (a + b) / 2f64.sqrt();
        if dist.abs() < 1.0 {
            continue;
        }
        x.extend_from_slice(&[a, b]);
        y.push(u8::from(dist > 0.0));
    }
    (x, y)
}

/// Four Gaussian clusters at (+-1, +-1); the label is 1 where the signs agree.
pub(crate) fn xor(seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..200 {
        let (sa, sb) = ([-1.0, 1.0][i % 2], [-1.0, 1.0][(i / 2) % 2]);
        x.push(sa + 0.3 * normal(&mut rng));
        x.push(sb + 0.3 * normal(&mut rng));
        y.push(u8::from(sa * sb > 0.0));
    }
    (x, y)
}

pub(crate) fn accuracy(model: &SvmModel, x: &[f64], cols: usize, y: &[u8]) -> f64 {
    let (pred, _) = svm_predict(model, x, cols).unwrap();
    pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64
}

/// Largest KKT violation over the training rows.
pub(crate) fn kkt_residual(t: &Training, x: &[f64], cols: usize, y: &[u8]) -> f64 {
    let c = t.model.c;
    x.chunks_exact(cols)
        .zip(y)
        .zip(&t.alpha)
        .map(|((row, &label), &a)| {
            let yf = if label == 1 { 1.0 } else { -1.0 } * t.model.decision(row);
            if a == 0.0 {
                (1.0 - yf).max(0.0)
            } else if a == c {
                (yf - 1.0).max(0.0)
            } else {
                (yf - 1.0).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn params(kernel: KernelKind, c: f64) -> SvmParams {
    SvmParams {
        kernel,
        c,
        ..SvmParams::default()
    }
}

#[test]
fn separable_blobs() {
    let (x, y) = blobs(1);
    let t = svm_train(&x, 2, &y, &[0, 1], &params(KernelKind::Linear, 1.0)).unwrap();
    assert!(t.report.converged);
    assert_eq!(accuracy(&t.model, &x, 2, &y), 1.0);
    assert!(kkt_residual(&t, &x, 2, &y) <= 2.0 * t.model.tol);
}

#[test]
fn xor_with_rbf() {
    let (x, y) = xor(2);
    let t = svm_train(&x, 2, &y, &[0, 1], &params(KernelKind::Rbf, 10.0)).unwrap();
    assert_eq!(t.model.gamma, 0.5);
    assert!(accuracy(&t.model, &x, 2, &y) >= 0.95);
    assert!(kkt_residual(&t, &x, 2, &y) <= 2.0 * t.model.tol);
}

#[test]
fn kkt_and_dual_constraint_on_noisy_data() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..150 * 4).map(|_| normal(&mut rng)).collect();
        let y: Vec<u8> = x
            .chunks_exact(4)
            .map(|r| u8::from(r[0] + 0.5 * r[1] + 0.8 * normal(&mut rng) > 0.0))
            .collect();
        for kernel in [KernelKind::Linear, KernelKind::Rbf] {
            let t = svm_train(&x, 4, &y, &[0, 1, 2, 3], &params(kernel, 1.0)).unwrap();
            assert!(t.report.converged);
            assert!(kkt_residual(&t, &x, 4, &y) <= 2.0 * t.model.tol);
            let sum: f64 = t.model.dual_coefs.iter().sum();
            assert!(sum.abs() <= 1e-8, "sum alpha y = {sum}");
            assert!(t
                .model
                .dual_coefs
                .iter()
                .all(|a| a.abs() > 0.0 && a.abs() <= t.model.c));
            // some samples sit at the upper bound on overlapping classes
            assert!(t.alpha.iter().any(|&a| a == t.model.c));
        }
    }
}

#[test]
fn single_class_rejected() {
    let x = vec![0.0, 1.0, 2.0, 3.0];
    assert!(matches!(
        svm_train(&x, 1, &[1, 1, 1, 1], &[0], &SvmParams::default()),
        Err(ClassifyError::SingleClass)
    ));
}

#[test]
fn invalid_params() {
    let (x, y) = blobs(3);
    for p in [
        SvmParams { c: 0.0, ..SvmParams::default() },
        SvmParams { tol: -1.0, ..SvmParams::default() },
        SvmParams { gamma: Gamma::Fixed(0.0), ..SvmParams::default() },
    ] {
        assert!(matches!(svm_train(&x, 2, &y, &[0, 1], &p), Err(ClassifyError::InvalidParam(_))));
    }
    assert!(matches!(
        svm_train(&x, 2, &y, &[2], &SvmParams::default()),
        Err(ClassifyError::InvalidParam(_))
    ));
}

#[test]
fn predict_support_vector_own_label() {
    let (x, y) = xor(4);
    let t = svm_train(&x, 2, &y, &[0, 1], &params(KernelKind::Rbf, 10.0)).unwrap();
    let free: Vec<usize> = (0..y.len())
        .filter(|&i| t.alpha[i] > 0.0 && t.alpha[i] < t.model.c)
        .collect();
    assert!(!free.is_empty());
    for i in free {
        let (pred, _) = svm_predict(&t.model, &x[i * 2..i * 2 + 2], 2).unwrap();
        assert_eq!(pred[0], y[i]);
    }
}

#[test]
fn predict_edge_cases() {
    let (x, y) = blobs(5);
    let t = svm_train(&x, 2, &y, &[0, 1], &params(KernelKind::Linear, 1.0)).unwrap();
    let (l, d) = svm_predict(&t.model, &[], 2).unwrap();
    assert!(l.is_empty() && d.is_empty());
    assert!(matches!(
        svm_predict(&t.model, &[0.0; 3], 3),
        Err(ClassifyError::DimensionMismatch { expected: 2, got: 3 })
    ));
    // order of query rows does not matter
    let (_, fwd) = svm_predict(&t.model, &x, 2).unwrap();
    let rev: Vec<f64> = x.chunks_exact(2).rev().flatten().copied().collect();
    let (_, back) = svm_predict(&t.model, &rev, 2).unwrap();
    assert!(fwd.iter().eq(back.iter().rev()));
}

#[test]
fn selection_and_scaling_inside_model() {
    // the model reads columns 1 and 3 of 4-wide rows
    let (x2, y) = blobs(6);
    let x4: Vec<f64> = x2
        .chunks_exact(2)
        .flat_map(|r| [99.0, 1000.0 * r[0] + 5.0, -7.0, r[1]])
        .collect();
    let t = svm_train(&x4, 4, &y, &[1, 3], &params(KernelKind::Linear, 1.0)).unwrap();
    assert_eq!(t.model.inputs, 4);
    assert_eq!(accuracy(&t.model, &x4, 4, &y), 1.0);
}

#[test]
fn deterministic_per_seed() {
    let (x, y) = xor(7);
    let run = |seed| {
        let p = SvmParams { seed, c: 10.0, ..SvmParams::default() };
        model_to_string(&svm_train(&x, 2, &y, &[0, 1], &p).unwrap().model)
    };
    assert_eq!(run(3), run(3));
}

#[test]
fn model_round_trip_is_bit_exact() {
    let (x, y) = xor(8);
    let mut model = svm_train(&x, 2, &y, &[0, 1], &params(KernelKind::Rbf, 10.0))
        .unwrap()
        .model;
    model.trained_for = 100;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.svm");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(model_to_string(&back), std::fs::read_to_string(&path).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q: Vec<f64> = (0..200).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let (_, a) = svm_predict(&model, &q, 2).unwrap();
    let (_, b) = svm_predict(&back, &q, 2).unwrap();
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn model_load_errors() {
    let (x, y) = blobs(10);
    let model = svm_train(&x, 2, &y, &[0, 1], &params(KernelKind::Linear, 1.0))
        .unwrap()
        .model;
    let text = model_to_string(&model);

    let truncated = &text[..text.len() - 20];
    assert!(matches!(model_from_str(truncated), Err(ClassifyError::CorruptModel(_))));
    let header_only = text.split("data\n").next().unwrap();
    assert!(matches!(model_from_str(header_only), Err(ClassifyError::CorruptModel(_))));
    assert!(matches!(model_from_str(""), Err(ClassifyError::CorruptModel(_))));

    let v9 = text.replacen("capseg-svm v1", "capseg-svm v9", 1);
    assert!(matches!(
        model_from_str(&v9),
        Err(ClassifyError::VersionMismatch { found, .. }) if found == "v9"
    ));

    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_model(&dir.path().join("missing.svm")),
        Err(ClassifyError::NotFound(_))
    ));
}
