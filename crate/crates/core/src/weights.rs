//! Quantized edge weights and the pixel-level Gaussian reference model.

use crate::energy::{EnergyParams, GridImage, Labeling, SuperpixelPartition};
use crate::error::{input_err, Error, Result};

/// Largest image accepted by [`gaussian_pairwise_energy`].
pub const GAUSSIAN_PIXEL_LIMIT: usize = 10_000;

/// Symmetric `m × m` table of edge weights. The diagonal holds the weight of
/// every pixel pair inside one superpixel, off-diagonal entries the weight of
/// every pair straddling two superpixels.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    m: usize,
    w: Vec<f64>,
}

impl WeightTable {
    /// Fills the table from `f(s, t)` evaluated for `s ≤ t` and mirrored.
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut w = vec![0.0; m * m];
        for s in 0..m {
            for t in s..m {
                let v = f(s, t);
                w[s * m + t] = v;
                w[t * m + s] = v;
            }
        }
        Self { m, w }
    }

    /// Number of superpixels covered.
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.w[s * self.m + t]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.w[s * self.m..(s + 1) * self.m]
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { m: self.m, w: self.w.iter().map(|v| v * factor).collect() }
    }

    /// Rows `(s, t, w)` for `s ≤ t`.
    pub fn upper_triangle(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.m).flat_map(move |s| (s..self.m).map(move |t| (s, t, self.get(s, t))))
    }
}

#[inline]
fn internal_weight(variance: f64, params: &EnergyParams) -> f64 {
    params.smoothness * params.lambda1 * (-variance / (2.0 * params.beta1 * params.beta1)).exp()
}

#[inline]
fn external_weight(dist2: f64, mean_diff: f64, params: &EnergyParams) -> f64 {
    let spatial = params.lambda1 * (-dist2 / (2.0 * params.beta2 * params.beta2)).exp();
    let color =
        params.lambda2 * (-(mean_diff * mean_diff) / (2.0 * params.beta3 * params.beta3)).exp();
    params.smoothness * (spatial + color)
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Internal weights from superpixel variance, external weights from centroid
/// distance and mean intensity difference.
pub fn build_weights(partition: &SuperpixelPartition, params: &EnergyParams) -> Result<WeightTable> {
    params.validate()?;
    let (means, vars, centers) = (partition.means(), partition.variances(), partition.centroids());
    Ok(WeightTable::from_fn(partition.num_superpixels(), |s, t| {
        if s == t {
            internal_weight(vars[s], params)
        } else {
            external_weight(dist2(centers[s], centers[t]), means[s] - means[t], params)
        }
    }))
}

/// Potts pairwise energy of `labeling` under per-pixel Gaussian edge weights
/// (each pixel acting as its own superpixel). O(n²); refuses images larger
/// than [`GAUSSIAN_PIXEL_LIMIT`].
pub fn gaussian_pairwise_energy(
    image: &GridImage,
    labeling: &Labeling,
    params: &EnergyParams,
) -> Result<f64> {
    params.validate()?;
    let n = image.len();
    if n > GAUSSIAN_PIXEL_LIMIT {
        return Err(Error::SizeGuard { what: "pixels", actual: n, limit: GAUSSIAN_PIXEL_LIMIT });
    }
    if labeling.len() != n {
        return input_err(format!("labeling has {} pixels, image has {n}", labeling.len()));
    }
    let pos: Vec<[f64; 2]> = (0..n)
        .map(|p| {
            let (x, y) = image.coords(p);
            [x as f64, y as f64]
        })
        .collect();
    let labels = labeling.as_slice();
    let mut total = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            if labels[p] != labels[q] {
                total += external_weight(dist2(pos[p], pos[q]), image.at(p) - image.at(q), params);
            }
        }
    }
    Ok(total)
}

/// Percent relative difference `100·|e_quant − e_gauss| / e_gauss`.
pub fn relative_difference(e_quant: f64, e_gauss: f64) -> Result<f64> {
    if e_gauss == 0.0 {
        return Err(Error::Undefined("reference energy is zero".into()));
    }
    Ok(100.0 * (e_quant - e_gauss).abs() / e_gauss)
}
