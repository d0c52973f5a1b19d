//! Seeded synthetic instances, so benchmarks need no external data.
//!
//! 1. A planted label map: `regions` Voronoi seeds, each with a uniformly
//!    drawn label; every pixel takes the label of its nearest seed.
//! 2. An image: each region's gray level blends a per-label level (evenly
//!    spaced over `[40, 215]`) with a uniform random level, weighted by
//!    `label_contrast`, plus Gaussian pixel noise, clamped to `[0, 255]`.
//!    Below full contrast, color marks region boundaries but only partly
//!    predicts labels.
//! 3. Unaries: per-pixel scores `margin·[l = truth] + N(0, noise²)`, turned
//!    into costs `−ln softmax(scores)`.
//! 4. A SLIC partition of the image.
//!
//! Everything is drawn from one ChaCha8 stream, so a seed fixes the instance.

use qcrf::{slic_partition, GridImage, Labeling, SuperpixelPartition, UnaryCosts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub num_labels: usize,
    /// Voronoi seeds in the planted label map.
    pub regions: usize,
    /// Score bonus of the planted label.
    pub margin: f64,
    /// Standard deviation of the score noise.
    pub noise: f64,
    /// Standard deviation of the image noise, in gray levels.
    pub image_noise: f64,
    /// Share of a region's gray level determined by its label, in `[0, 1]`.
    pub label_contrast: f64,
    pub superpixel_count: usize,
    pub compactness: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 48,
            height: 48,
            num_labels: 2,
            regions: 10,
            margin: 3.0,
            noise: 1.0,
            image_noise: 10.0,
            label_contrast: 1.0,
            superpixel_count: 20,
            compactness: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub image: GridImage,
    pub ground_truth: Labeling,
    pub unary: UnaryCosts,
    pub partition: SuperpixelPartition,
}

pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthInstance> {
    let (w, h, k) = (spec.width, spec.height, spec.num_labels);
    if w == 0 || h == 0 || k < 2 || spec.regions == 0 || !(0.0..=1.0).contains(&spec.label_contrast) {
        return Err(CliError::Config(format!("degenerate synthetic spec {spec:?}")));
    }
    let normal = |sd: f64| {
        Normal::new(0.0, sd).map_err(|e| CliError::Config(format!("noise {sd}: {e}")))
    };
    let score_noise = normal(spec.noise)?;
    let pixel_noise = normal(spec.image_noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let seeds: Vec<[f64; 3]> = (0..spec.regions)
        .map(|_| {
            let x = rng.random::<f64>() * w as f64;
            let y = rng.random::<f64>() * h as f64;
            [x, y, rng.random::<f64>() * 255.0]
        })
        .collect();
    let labels: Vec<usize> = (0..spec.regions).map(|_| rng.random_range(0..k)).collect();
    let gray: Vec<f64> = seeds
        .iter()
        .zip(&labels)
        .map(|(seed, &l)| {
            let level = 40.0 + 175.0 * l as f64 / (k - 1) as f64;
            spec.label_contrast * level + (1.0 - spec.label_contrast) * seed[2]
        })
        .collect();
    let n = w * h;
    let region: Vec<usize> = (0..n)
        .map(|p| {
            let (px, py) = ((p % w) as f64 + 0.5, (p / w) as f64 + 0.5);
            let mut best = (f64::INFINITY, 0);
            for (r, &[sx, sy, _]) in seeds.iter().enumerate() {
                let d = (px - sx).powi(2) + (py - sy).powi(2);
                if d < best.0 {
                    best = (d, r);
                }
            }
            best.1
        })
        .collect();
    let truth: Vec<usize> = region.iter().map(|&r| labels[r]).collect();

    let intensities: Vec<f64> = region
        .iter()
        .map(|&r| (gray[r] + pixel_noise.sample(&mut rng)).clamp(0.0, 255.0))
        .collect();
    let image = GridImage::new(w, h, intensities)?;

    let mut costs = Vec::with_capacity(n * k);
    let mut scores = vec![0.0; k];
    for &t in &truth {
        for (l, s) in scores.iter_mut().enumerate() {
            *s = if l == t { spec.margin } else { 0.0 } + score_noise.sample(&mut rng);
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        costs.extend(scores.iter().map(|s| log_z - s));
    }
    let unary = UnaryCosts::new(w, h, k, costs)?;
    let partition = slic_partition(&image, spec.superpixel_count.min(n), spec.compactness)?;
    Ok(SynthInstance { image, ground_truth: Labeling::new(truth), unary, partition })
}
