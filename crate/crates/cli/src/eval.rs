//! Per-class intersection over union.

use qcrf::Labeling;

use crate::error::{CliError, Result};

/// Ground-truth value excluded from scoring.
pub const IGNORE_LABEL: usize = 255;

#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    /// `None` for classes absent from both maps.
    pub per_class: Vec<Option<f64>>,
    /// Mean over present classes; `None` if no class is present.
    pub mean: Option<f64>,
}

/// Pixels whose ground truth equals `ignore` count toward neither
/// intersection nor union. Labels `>= k` elsewhere are rejected.
pub fn eval_iou(
    prediction: &Labeling,
    ground_truth: &Labeling,
    k: usize,
    ignore: Option<usize>,
) -> Result<IouReport> {
    if prediction.len() != ground_truth.len() {
        return Err(CliError::Config(format!(
            "prediction has {} pixels, ground truth {}",
            prediction.len(),
            ground_truth.len()
        )));
    }
    let mut inter = vec![0u64; k];
    let mut union = vec![0u64; k];
    for (&p, &g) in prediction.as_slice().iter().zip(ground_truth.as_slice()) {
        if Some(g) == ignore {
            continue;
        }
        if p >= k || g >= k {
            return Err(CliError::Config(format!("label {} outside 0..{k}", p.max(g))));
        }
        if p == g {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[g] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = inter
        .iter()
        .zip(&union)
        .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(IouReport { per_class, mean })
}
