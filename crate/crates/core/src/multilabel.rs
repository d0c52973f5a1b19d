//! Multi-label inference by nested expansion.
//!
//! Each outer α-expansion is a binary problem in `z` (`z_p = 1`: switch to α,
//! `z_p = 0`: keep `x_p`). Its pair terms are not of the plain Potts form,
//! because two pixels that both keep different labels still pay `w_pq`. After
//! splitting superpixels so every piece is label-homogeneous, the energy is
//! rewritten exactly as a Potts energy on the pieces:
//!
//! * pair weight `v = w` between pieces with the same current label, `w/2`
//!   between two different labels that are both not α, and 0 when one side
//!   is already α;
//! * `d_p(0) = f_p(x_p) + Σ_{q: x_q ≠ x_p} c_pq·w_pq` with `c_pq = 1` if
//!   `x_q = α` and `½` otherwise (no correction for pixels already at α);
//! * `d_p(1) = f_p(α)`, forbidden when `x_p = α`.
//!
//! Pixels at α can never switch, so splitting their cross pairs in halves
//! would charge `w/2` even after the partner joins α.
//!
//! That energy is handed to the two-label superpixel solver.

use crate::binary::{improves, BinaryConfig, SuperpixelProblem};
use crate::energy::{check_dimensions, total_energy, Labeling, SuperpixelPartition, UnaryCosts};
use crate::error::{input_err, Result};
use crate::maxflow::{is_inf, INF};
use crate::superpix::{split_with_parents, Split};
use crate::weights::WeightTable;

/// Binary Potts energy equivalent to one α-expansion.
#[derive(Debug, Clone)]
pub struct ExpansionEnergy {
    /// `(d_p(0), d_p(1))`; `d_p(1)` is [`INF`] where `x_p = α`.
    pub unary: UnaryCosts,
    pub split: Split,
    pub weights: WeightTable,
    /// Added to the binary energy to recover the expansion energy. The
    /// construction is exact, so this is zero.
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultilabelConfig {
    pub max_outer_sweeps: usize,
    pub inner: BinaryConfig,
}

impl Default for MultilabelConfig {
    fn default() -> Self {
        Self { max_outer_sweeps: 5, inner: BinaryConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultilabelSolution {
    pub labeling: Labeling,
    pub energy: f64,
    /// Initial energy, then the energy after each accepted outer move.
    pub trace: Vec<f64>,
    pub sweeps: usize,
}

pub fn build_expansion_energy(
    current: &Labeling,
    alpha: usize,
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
) -> Result<ExpansionEnergy> {
    check_dimensions(Some(current), unary, partition, weights)?;
    let k = unary.num_labels();
    if alpha >= k {
        return input_err(format!("alpha {alpha} out of range for {k} labels"));
    }
    if let Some(&l) = current.as_slice().iter().find(|&&l| l >= k) {
        return input_err(format!("current labeling uses label {l} of {k}"));
    }
    let split = split_with_parents(partition, current)?;
    let m = split.parent.len();
    let sizes = split.partition.sizes();
    let (parent, label) = (&split.parent, &split.label);

    // Pieces already at α never move, so a cross pair touching one is paid in
    // full by the other side's d(0) and gets no pairwise term.
    let v = WeightTable::from_fn(m, |a, b| {
        let w = weights.get(parent[a], parent[b]);
        if label[a] == label[b] {
            w
        } else if label[a] == alpha || label[b] == alpha {
            0.0
        } else {
            0.5 * w
        }
    });

    // Per piece: ½·Σ w·n_t over other-label pieces, or the full w·n_t when the
    // other piece sits at α.
    let correction: Vec<f64> = (0..m)
        .map(|a| {
            if label[a] == alpha {
                return 0.0;
            }
            let mut sum = 0.0;
            for b in 0..m {
                if label[b] == label[a] {
                    continue;
                }
                let share = if label[b] == alpha { 1.0 } else { 0.5 };
                sum += share * weights.get(parent[a], parent[b]) * sizes[b] as f64;
            }
            sum
        })
        .collect();

    let n = unary.num_pixels();
    let mut costs = Vec::with_capacity(2 * n);
    for p in 0..n {
        let xp = current.get(p);
        costs.push(unary.cost(p, xp) + correction[split.partition.superpixel_of(p)]);
        costs.push(if xp == alpha { INF } else { unary.cost(p, alpha) });
    }
    Ok(ExpansionEnergy {
        unary: UnaryCosts::new(unary.width(), unary.height(), 2, costs)?,
        split,
        weights: v,
        offset: 0.0,
    })
}

impl ExpansionEnergy {
    /// `d(z) + offset`, evaluated in aggregated form.
    pub fn energy(&self, z: &Labeling) -> Result<f64> {
        Ok(total_energy(z, &self.unary, &self.split.partition, &self.weights)? + self.offset)
    }

    /// Best binary move found by the superpixel-domain solver.
    pub fn solve(&self, config: &BinaryConfig) -> Result<Labeling> {
        let n = self.unary.num_pixels();
        let label1: Vec<f64> = (0..n)
            .map(|p| {
                let (d0, d1) = (self.unary.cost(p, 0), self.unary.cost(p, 1));
                if is_inf(d1) {
                    INF
                } else {
                    d1 - d0
                }
            })
            .collect();
        let problem =
            SuperpixelProblem::from_label1_costs(&label1, &self.split.partition, &self.weights)?;
        let (y, _, _, _) = problem.solve(config)?;
        problem.reconstruct(&y)
    }
}

/// Outer expansion over all labels from the per-pixel unary argmin.
pub fn solve_multilabel(
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
    config: &MultilabelConfig,
) -> Result<MultilabelSolution> {
    solve_multilabel_from(unary.argmin_labeling(), unary, partition, weights, config)
}

pub fn solve_multilabel_from(
    init: Labeling,
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
    config: &MultilabelConfig,
) -> Result<MultilabelSolution> {
    let mut x = init;
    let mut energy = total_energy(&x, unary, partition, weights)?;
    let mut trace = vec![energy];
    let mut sweeps = 0;
    while sweeps < config.max_outer_sweeps {
        sweeps += 1;
        let mut improved = false;
        for alpha in 0..unary.num_labels() {
            let expansion = build_expansion_energy(&x, alpha, unary, partition, weights)?;
            let z = expansion.solve(&config.inner)?;
            if !z.as_slice().contains(&1) {
                continue;
            }
            let mut next = x.clone();
            for (p, &zp) in z.as_slice().iter().enumerate() {
                if zp == 1 {
                    next.set(p, alpha);
                }
            }
            let e = total_energy(&next, unary, partition, weights)?;
            if improves(e, energy) {
                x = next;
                energy = e;
                trace.push(e);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(MultilabelSolution { labeling: x, energy, trace, sweeps })
}
