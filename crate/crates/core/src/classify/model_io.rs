//! Text model format: a `capseg-svm v1` line, `key=value` header lines, a
//! `data` line, then one line of hex-encoded little-endian f64 values per
//! array (scaler mean, scaler std, dual coefficients, bias, support vectors).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ClassifyError, KernelKind, SvmModel};
use crate::io_util::write_atomic;

pub const MODEL_MAGIC: &str = "capseg-svm";
pub const MODEL_VERSION: &str = "v1";

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    hex::encode(bytes)
}

fn decode(line: &str, expected: usize, what: &str) -> Result<Vec<f64>, ClassifyError> {
    let corrupt = |m: String| ClassifyError::CorruptModel(format!("{what}: {m}"));
    let bytes = hex::decode(line.trim()).map_err(|e| corrupt(e.to_string()))?;
    if bytes.len() != expected * 8 {
        return Err(corrupt(format!(
            "{} bytes, expected {}",
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn model_to_string(model: &SvmModel) -> String {
    let mut out = format!("{MODEL_MAGIC} {MODEL_VERSION}\n");
    let selected: Vec<String> = model.selected.iter().map(|c| c.to_string()).collect();
    // f64 Display is the shortest string that parses back to the same bits
    writeln!(out, "kernel={}", model.kernel.as_str()).unwrap();
    writeln!(out, "C={}", model.c).unwrap();
    writeln!(out, "gamma={}", model.gamma).unwrap();
    writeln!(out, "tol={}", model.tol).unwrap();
    writeln!(out, "max_passes={}", model.max_passes).unwrap();
    writeln!(out, "seed={}", model.seed).unwrap();
    writeln!(out, "inputs={}", model.inputs).unwrap();
    writeln!(out, "d={}", model.dims()).unwrap();
    writeln!(out, "M={}", model.support_count()).unwrap();
    writeln!(out, "N={}", model.trained_for).unwrap();
    writeln!(out, "selected={}", selected.join(",")).unwrap();
    out.push_str("data\n");
    for values in [
        &model.scaler_mean[..],
        &model.scaler_std,
        &model.dual_coefs,
        &[model.bias],
        &model.support_vectors,
    ] {
        out.push_str(&encode(values));
        out.push('\n');
    }
    out
}

pub fn model_from_str(text: &str) -> Result<SvmModel, ClassifyError> {
    let corrupt = |m: &str| ClassifyError::CorruptModel(m.to_string());
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| corrupt("empty file"))?;
    let version = first
        .strip_prefix(MODEL_MAGIC)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| corrupt("missing model tag"))?;
    if version != MODEL_VERSION {
        return Err(ClassifyError::VersionMismatch {
            found: version.to_string(),
            expected: MODEL_VERSION.to_string(),
        });
    }

    let mut header = HashMap::new();
    loop {
        let line = lines.next().ok_or_else(|| corrupt("header is not terminated"))?;
        if line == "data" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ClassifyError::CorruptModel(format!("bad header line {line:?}")))?;
        header.insert(k, v);
    }
    fn field<T: std::str::FromStr>(h: &HashMap<&str, &str>, key: &str) -> Result<T, ClassifyError> {
        h.get(key)
            .ok_or_else(|| ClassifyError::CorruptModel(format!("missing {key}")))?
            .parse()
            .map_err(|_| ClassifyError::CorruptModel(format!("bad value for {key}")))
    }

    let kernel: KernelKind = field::<String>(&header, "kernel")?
        .parse()
        .map_err(|_| corrupt("unknown kernel"))?;
    let d: usize = field(&header, "d")?;
    let m: usize = field(&header, "M")?;
    let inputs: usize = field(&header, "inputs")?;
    let selected_text: String = field(&header, "selected")?;
    let selected: Vec<usize> = if selected_text.is_empty() {
        Vec::new()
    } else {
        selected_text
            .split(',')
            .map(|s| s.parse().map_err(|_| corrupt("bad selected list")))
            .collect::<Result<_, _>>()?
    };
    if selected.len() != d || d == 0 || selected.iter().any(|&c| c >= inputs) {
        return Err(corrupt("selected columns disagree with d or inputs"));
    }

    let mut next = |what: &str| lines.next().ok_or_else(|| ClassifyError::CorruptModel(format!("missing {what}")));
    let scaler_mean = decode(next("scaler mean")?, d, "scaler mean")?;
    let scaler_std = decode(next("scaler std")?, d, "scaler std")?;
    let dual_coefs = decode(next("dual coefficients")?, m, "dual coefficients")?;
    let bias = decode(next("bias")?, 1, "bias")?[0];
    let support_vectors = decode(next("support vectors")?, m * d, "support vectors")?;
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(corrupt("trailing data"));
    }

    Ok(SvmModel {
        kernel,
        c: field(&header, "C")?,
        gamma: field(&header, "gamma")?,
        tol: field(&header, "tol")?,
        max_passes: field(&header, "max_passes")?,
        seed: field(&header, "seed")?,
        inputs,
        selected,
        scaler_mean,
        scaler_std,
        support_vectors,
        dual_coefs,
        bias,
        trained_for: field(&header, "N")?,
    })
}

pub fn save_model(model: &SvmModel, path: &Path) -> Result<(), ClassifyError> {
    write_atomic(path, model_to_string(model).as_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SvmModel, ClassifyError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ClassifyError::NotFound(path.display().to_string()))
        }
        Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
            return Err(ClassifyError::CorruptModel("not UTF-8 text".into()))
        }
        Err(e) => return Err(e.into()),
    };
    model_from_str(&text)
}
