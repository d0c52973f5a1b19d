//! Pixel ICM, superpixel ICM and mean-field inference for the quantized
//! model. All three exploit the fact that a pixel sees every member of a
//! superpixel through the same weight, so per-superpixel label histograms
//! (or per-superpixel belief sums) replace pixel-pair loops.

use crate::binary::improves;
use crate::energy::{
    check_dimensions, count_labels, total_energy, Labeling, SuperpixelPartition, UnaryCosts,
};
use crate::error::{input_err, Result};
use crate::weights::WeightTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IcmConfig {
    /// Upper bound on full passes.
    pub max_iters: usize,
}

impl Default for IcmConfig {
    fn default() -> Self {
        Self { max_iters: 100 }
    }
}

/// One accepted switch; `site` is a pixel (pixel ICM) or a superpixel
/// (superpixel ICM). `from` is the pixel's previous label, or for
/// superpixel moves the label of its first pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcmMove {
    pub site: usize,
    pub from: usize,
    pub to: usize,
    /// Predicted energy change.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcmResult {
    pub labeling: Labeling,
    pub energy: f64,
    /// Initial energy followed by the running energy after each move.
    pub trace: Vec<f64>,
    pub moves: Vec<IcmMove>,
    pub iterations: usize,
}

fn check_init(init: &Labeling, unary: &UnaryCosts) -> Result<()> {
    if let Some(&l) = init.as_slice().iter().find(|&&l| l >= unary.num_labels()) {
        return input_err(format!("initial label {l} out of range"));
    }
    Ok(())
}

/// Energy change of moving pixel `p` (in superpixel `sp`) from `l` to `a != l`:
///
/// `f_p(a) − f_p(l) + Σ_{s≠sp} w^{sp,s}(n_s^l − n_s^a) + w^{sp,sp}(n_sp^l − 1 − n_sp^a)`.
pub fn pixel_delta(
    unary: &UnaryCosts,
    weights: &WeightTable,
    counts: &crate::energy::LabelCountTable,
    p: usize,
    sp: usize,
    l: usize,
    a: usize,
) -> f64 {
    let mut d = unary.cost(p, a) - unary.cost(p, l);
    let row = weights.row(sp);
    for (s, &w) in row.iter().enumerate() {
        let (nl, na) = (counts.get(s, l) as f64, counts.get(s, a) as f64);
        if s == sp {
            d += w * (nl - 1.0 - na);
        } else {
            d += w * (nl - na);
        }
    }
    d
}

/// Raster-order single-pixel ICM.
pub fn icm_pixel(
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
    init: &Labeling,
    config: &IcmConfig,
) -> Result<IcmResult> {
    check_dimensions(Some(init), unary, partition, weights)?;
    check_init(init, unary)?;
    let k = unary.num_labels();
    let m = partition.num_superpixels();
    let mut x = init.clone();
    let mut counts = count_labels(&x, partition, k)?;
    let mut energy = total_energy(&x, unary, partition, weights)?;
    let mut trace = vec![energy];
    let mut moves = Vec::new();
    // weighted[l] = Σ_s w^{sp,s}·n_s^l, refreshed per pixel
    let mut weighted = vec![0.0; k];
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let mut changed = false;
        for p in 0..x.len() {
            let sp = partition.superpixel_of(p);
            let l = x.get(p);
            weighted.fill(0.0);
            let row = weights.row(sp);
            for s in 0..m {
                let w = row[s];
                for (acc, &c) in weighted.iter_mut().zip(counts.row(s)) {
                    *acc += w * c as f64;
                }
            }
            let w_self = row[sp];
            let mut best: Option<(usize, f64)> = None;
            for a in 0..k {
                if a == l {
                    continue;
                }
                let d = unary.cost(p, a) - unary.cost(p, l) + weighted[l] - weighted[a] - w_self;
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((a, d));
                }
            }
            if let Some((a, d)) = best {
                if improves(energy + d, energy) {
                    x.set(p, a);
                    counts.shift(sp, l, a);
                    energy += d;
                    trace.push(energy);
                    moves.push(IcmMove { site: p, from: l, to: a, delta: d });
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let energy = total_energy(&x, unary, partition, weights)?;
    Ok(IcmResult { labeling: x, energy, trace, moves, iterations })
}

/// ICM over moves that set a whole superpixel to one label, in ascending
/// superpixel order. Superpixels may hold mixed labels; the delta accounts
/// for their current internal and cross disagreement.
pub fn icm_superpixel(
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
    init: &Labeling,
    config: &IcmConfig,
) -> Result<IcmResult> {
    check_dimensions(Some(init), unary, partition, weights)?;
    check_init(init, unary)?;
    let k = unary.num_labels();
    let m = partition.num_superpixels();
    let members = partition.members();
    let sizes = partition.sizes();

    // label_sum[s][a] = Σ_{p∈s} f_p(a)
    let label_sum: Vec<Vec<f64>> = members
        .iter()
        .map(|ps| (0..k).map(|a| ps.iter().map(|&p| unary.cost(p, a)).sum()).collect())
        .collect();

    let mut x = init.clone();
    let mut counts = count_labels(&x, partition, k)?;
    let mut energy = total_energy(&x, unary, partition, weights)?;
    let mut trace = vec![energy];
    let mut moves = Vec::new();
    let mut b = vec![0.0; k];
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let mut changed = false;
        for s in 0..m {
            let current_unary: f64 = members[s].iter().map(|&p| unary.cost(p, x.get(p))).sum();
            // b[a] = Σ_{t≠s} w^{st}·n_t^a
            b.fill(0.0);
            let row = weights.row(s);
            for t in 0..m {
                if t == s {
                    continue;
                }
                for (acc, &c) in b.iter_mut().zip(counts.row(t)) {
                    *acc += row[t] * c as f64;
                }
            }
            let ns = sizes[s] as f64;
            let own = counts.row(s);
            let old_cross: f64 = own.iter().zip(&b).map(|(&c, &bl)| c as f64 * bl).sum();
            let internal = weights.get(s, s) * (counts.internal_disagreement_x2(s) / 2) as f64;
            let mut best: Option<(usize, f64)> = None;
            for a in 0..k {
                if own[a] == sizes[s] as u64 {
                    continue;
                }
                let d = label_sum[s][a] - current_unary - ns * b[a] + old_cross - internal;
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((a, d));
                }
            }
            if let Some((a, d)) = best {
                if improves(energy + d, energy) {
                    let from = x.get(members[s][0]);
                    for &p in &members[s] {
                        x.set(p, a);
                    }
                    counts.collapse(s, a);
                    energy += d;
                    trace.push(energy);
                    moves.push(IcmMove { site: s, from, to: a, delta: d });
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let energy = total_energy(&x, unary, partition, weights)?;
    Ok(IcmResult { labeling: x, energy, trace, moves, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldConfig {
    pub max_iters: usize,
    /// Stop once `max |ΔQ|` falls below this.
    pub tol: f64,
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-5 }
    }
}

/// Per-pixel marginals `Q_p(l)`, row-major `n × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub q: Vec<f64>,
    pub num_labels: usize,
    pub iteration: usize,
}

impl MeanFieldState {
    /// `Q_p ∝ exp(−f_p)`.
    pub fn from_unary(unary: &UnaryCosts) -> Self {
        let k = unary.num_labels();
        let mut q = vec![0.0; unary.num_pixels() * k];
        for p in 0..unary.num_pixels() {
            softmin_into(unary.row(p), &mut q[p * k..(p + 1) * k]);
        }
        Self { q, num_labels: k, iteration: 0 }
    }

    #[inline]
    pub fn row(&self, p: usize) -> &[f64] {
        &self.q[p * self.num_labels..(p + 1) * self.num_labels]
    }

    /// Per-pixel argmax, ties to the lowest label.
    pub fn argmax(&self) -> Labeling {
        let n = self.q.len() / self.num_labels;
        Labeling::new(
            (0..n)
                .map(|p| {
                    let row = self.row(p);
                    let mut best = 0;
                    for l in 1..row.len() {
                        if row[l] > row[best] {
                            best = l;
                        }
                    }
                    best
                })
                .collect(),
        )
    }
}

/// `out_l = exp(−c_l) / Σ exp(−c)`, shifted by `min c` for stability.
fn softmin_into(costs: &[f64], out: &mut [f64]) {
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for (o, &c) in out.iter_mut().zip(costs) {
        *o = (lo - c).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// Message passing `Q̃_p(l) = Σ_{q≠p} w_pq·Q_q(l)` via per-superpixel sums:
/// `sum_e(s,l) + sum_i(s,l) − w^{ss}·Q_p(l)`.
pub fn message_passing(
    state: &MeanFieldState,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
) -> Vec<f64> {
    let k = state.num_labels;
    let m = partition.num_superpixels();
    let mut mass = vec![0.0; m * k];
    for p in 0..partition.num_pixels() {
        let s = partition.superpixel_of(p);
        for (acc, &v) in mass[s * k..(s + 1) * k].iter_mut().zip(state.row(p)) {
            *acc += v;
        }
    }
    // shared[s][l] = sum_e(s,l) + sum_i(s,l)
    let mut shared = vec![0.0; m * k];
    for s in 0..m {
        let row = weights.row(s);
        let out = &mut shared[s * k..(s + 1) * k];
        for t in 0..m {
            if t == s {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(&mass[t * k..(t + 1) * k]) {
                *o += row[t] * v;
            }
        }
        for (o, &v) in out.iter_mut().zip(&mass[s * k..(s + 1) * k]) {
            *o += row[s] * v;
        }
    }
    let mut messages = vec![0.0; state.q.len()];
    for p in 0..partition.num_pixels() {
        let s = partition.superpixel_of(p);
        let w_self = weights.get(s, s);
        for l in 0..k {
            messages[p * k + l] = shared[s * k + l] - w_self * state.q[p * k + l];
        }
    }
    messages
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldResult {
    pub state: MeanFieldState,
    pub labeling: Labeling,
    pub energy: f64,
    pub converged: bool,
}

/// Synchronous mean-field updates from `Q ∝ exp(−f)`; labels by argmax.
pub fn mean_field(
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
    config: &MeanFieldConfig,
) -> Result<MeanFieldResult> {
    check_dimensions(None, unary, partition, weights)?;
    let k = unary.num_labels();
    let mut state = MeanFieldState::from_unary(unary);
    let mut converged = false;
    let mut exponent = vec![0.0; k];
    let mut next = vec![0.0; k];
    while state.iteration < config.max_iters {
        let messages = message_passing(&state, partition, weights);
        let mut change: f64 = 0.0;
        let mut q = vec![0.0; state.q.len()];
        for p in 0..unary.num_pixels() {
            let msg = &messages[p * k..(p + 1) * k];
            let total: f64 = msg.iter().sum();
            for l in 0..k {
                // compatibility transform: Σ_{l'≠l} Q̃(l')
                exponent[l] = unary.cost(p, l) + (total - msg[l]);
            }
            softmin_into(&exponent, &mut next);
            for l in 0..k {
                change = change.max((next[l] - state.q[p * k + l]).abs());
            }
            q[p * k..(p + 1) * k].copy_from_slice(&next);
        }
        state.q = q;
        state.iteration += 1;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let labeling = state.argmax();
    let energy = total_energy(&labeling, unary, partition, weights)?;
    Ok(MeanFieldResult { state, labeling, energy, converged })
}
