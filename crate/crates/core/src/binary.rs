//! Two-label inference in the superpixel domain.
//!
//! With `f_p(0) = 0`, the pairwise cost of a binary labeling depends only on
//! how many pixels of each superpixel take label 1, and for a fixed count the
//! cheapest choice is always the pixels with the smallest `f_p(1)`. The pixel
//! problem therefore collapses to one integer variable `y_s ∈ 0..=n_s` per
//! superpixel:
//!
//! ```text
//! g_s(y)        = w_ss·y·(n_s − y) + Σ_{k ≤ y} sorted f(1)
//! V_st(y_s,y_t) = w_st·(y_s·(n_t − y_t) + y_t·(n_s − y_s))
//! ```
//!
//! `g = Σ g_s + Σ_{s<t} V_st` is minimized with expansion moves over the
//! union of label ranges, alternating forward sweeps (`y_s → α`) with
//! reverse sweeps (`y_s → n_s − α`). Non-submodular pair terms are truncated
//! by lowering the joint-move cost `θ11`, which leaves the current state and
//! every single-superpixel move exact; a move is kept only if it lowers the
//! true `g`.

use crate::energy::{check_dimensions, total_energy, Labeling, SuperpixelPartition, UnaryCosts};
use crate::error::{input_err, Result};
use crate::maxflow::{is_inf, min_cut, BinaryPairwiseProblem, INF};
use crate::weights::WeightTable;

/// Relative slack a move must beat to count as an improvement.
pub(crate) const IMPROVEMENT_EPS: f64 = 1e-12;

#[inline]
pub(crate) fn improves(new: f64, old: f64) -> bool {
    new < old - IMPROVEMENT_EPS * old.abs().max(1.0)
}

/// Per-superpixel count of label-1 pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SuperLabeling(pub Vec<usize>);

impl SuperLabeling {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryConfig {
    /// Upper bound on forward + reverse sweep pairs.
    pub max_sweeps: usize,
    /// Run the reverse sweep after every forward sweep.
    pub reverse: bool,
}

impl Default for BinaryConfig {
    fn default() -> Self {
        Self { max_sweeps: 4, reverse: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub labeling: Labeling,
    pub energy: f64,
    /// Energy of the initial labeling followed by the energy after every
    /// accepted move.
    pub trace: Vec<f64>,
    /// Completed sweeps.
    pub sweeps: usize,
}

/// Shifts every pixel's costs so that `f_p(0) = 0`; the returned offset is
/// `Σ_p f_p(0)`, so `E_original = E_normalized + offset`.
pub fn normalize_unaries(unary: &UnaryCosts) -> Result<(UnaryCosts, f64)> {
    if unary.num_labels() != 2 {
        return input_err(format!("binary normalization needs 2 labels, got {}", unary.num_labels()));
    }
    let n = unary.num_pixels();
    let mut costs = Vec::with_capacity(2 * n);
    let mut offset = 0.0;
    for p in 0..n {
        let (c0, c1) = (unary.cost(p, 0), unary.cost(p, 1));
        offset += c0;
        costs.push(0.0);
        costs.push(c1 - c0);
    }
    Ok((UnaryCosts::new(unary.width(), unary.height(), 2, costs)?, offset))
}

/// The collapsed problem: sorted pixel orders and prefix sums per superpixel.
#[derive(Debug, Clone)]
pub struct SuperpixelProblem<'w> {
    num_pixels: usize,
    sizes: Vec<usize>,
    /// Largest feasible `y_s`: pixels whose label-1 cost is finite.
    caps: Vec<usize>,
    sorted: Vec<Vec<usize>>,
    prefix: Vec<Vec<f64>>,
    weights: &'w WeightTable,
}

impl<'w> SuperpixelProblem<'w> {
    /// Builds from normalized binary unaries (`f_p(0) = 0`).
    pub fn new(
        unary: &UnaryCosts,
        partition: &SuperpixelPartition,
        weights: &'w WeightTable,
    ) -> Result<Self> {
        check_dimensions(None, unary, partition, weights)?;
        if unary.num_labels() != 2 {
            return input_err("superpixel problem needs 2 labels");
        }
        if let Some(p) = (0..unary.num_pixels()).find(|&p| unary.cost(p, 0) != 0.0) {
            return input_err(format!("unaries are not normalized at pixel {p}"));
        }
        let label1: Vec<f64> = (0..unary.num_pixels()).map(|p| unary.cost(p, 1)).collect();
        Self::from_label1_costs(&label1, partition, weights)
    }

    /// Builds from per-pixel label-1 costs; values at or above [`INF`] forbid
    /// label 1 for that pixel.
    pub fn from_label1_costs(
        label1: &[f64],
        partition: &SuperpixelPartition,
        weights: &'w WeightTable,
    ) -> Result<Self> {
        if label1.len() != partition.num_pixels() {
            return input_err("label-1 costs do not match the partition");
        }
        if weights.len() != partition.num_superpixels() {
            return input_err("weight table does not match the partition");
        }
        let mut sorted = partition.members();
        let mut caps = Vec::with_capacity(sorted.len());
        let mut prefix = Vec::with_capacity(sorted.len());
        for members in &mut sorted {
            // stable: equal costs keep raster order
            members.sort_by(|&a, &b| label1[a].total_cmp(&label1[b]));
            let cap = members.iter().take_while(|&&p| !is_inf(label1[p])).count();
            let mut sums = Vec::with_capacity(members.len() + 1);
            sums.push(0.0);
            let mut acc = 0.0;
            for (k, &p) in members.iter().enumerate() {
                if k < cap {
                    acc += label1[p];
                    sums.push(acc);
                } else {
                    sums.push(INF);
                }
            }
            caps.push(cap);
            prefix.push(sums);
        }
        Ok(Self {
            num_pixels: partition.num_pixels(),
            sizes: partition.sizes().to_vec(),
            caps,
            sorted,
            prefix,
            weights,
        })
    }

    pub fn num_superpixels(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn caps(&self) -> &[usize] {
        &self.caps
    }

    /// Pixels of `s` by ascending label-1 cost.
    pub fn sorted_order(&self, s: usize) -> &[usize] {
        &self.sorted[s]
    }

    /// Sum of the `k` smallest label-1 costs in `s`.
    pub fn prefix_sum(&self, s: usize, k: usize) -> f64 {
        self.prefix[s][k]
    }

    fn check_label(&self, s: usize, y: usize) -> Result<()> {
        if s >= self.sizes.len() {
            return input_err(format!("superpixel {s} out of range"));
        }
        if y > self.sizes[s] {
            return input_err(format!("label {y} exceeds superpixel {s} size {}", self.sizes[s]));
        }
        Ok(())
    }

    #[inline]
    fn g_raw(&self, s: usize, y: usize) -> f64 {
        let n = self.sizes[s];
        self.weights.get(s, s) * (y * (n - y)) as f64 + self.prefix[s][y]
    }

    #[inline]
    fn v_raw(&self, s: usize, t: usize, ys: usize, yt: usize) -> f64 {
        let (ns, nt) = (self.sizes[s], self.sizes[t]);
        self.weights.get(s, t) * (ys * (nt - yt) + yt * (ns - ys)) as f64
    }

    /// Unary cost of putting `y` label-1 pixels in `s`.
    pub fn g_unary(&self, s: usize, y: usize) -> Result<f64> {
        self.check_label(s, y)?;
        Ok(self.g_raw(s, y))
    }

    /// Pair cost between superpixels `s ≠ t`.
    pub fn v_pairwise(&self, s: usize, t: usize, ys: usize, yt: usize) -> Result<f64> {
        if s == t {
            return input_err("pairwise cost needs distinct superpixels");
        }
        self.check_label(s, ys)?;
        self.check_label(t, yt)?;
        Ok(self.v_raw(s, t, ys, yt))
    }

    fn check(&self, y: &SuperLabeling) -> Result<()> {
        if y.0.len() != self.sizes.len() {
            return input_err("super labeling length differs from superpixel count");
        }
        for (s, &ys) in y.0.iter().enumerate() {
            self.check_label(s, ys)?;
        }
        Ok(())
    }

    /// `g(y) = Σ_s g_s(y_s) + Σ_{s<t} V_st(y_s, y_t)`.
    pub fn energy(&self, y: &SuperLabeling) -> Result<f64> {
        self.check(y)?;
        Ok(self.energy_raw(&y.0))
    }

    fn energy_raw(&self, y: &[usize]) -> f64 {
        let m = self.sizes.len();
        let mut e = 0.0;
        for s in 0..m {
            e += self.g_raw(s, y[s]);
            for t in s + 1..m {
                e += self.v_raw(s, t, y[s], y[t]);
            }
        }
        e
    }

    /// Label 1 on the `y_s` cheapest pixels of every superpixel.
    pub fn reconstruct(&self, y: &SuperLabeling) -> Result<Labeling> {
        self.check(y)?;
        let mut labels = vec![0; self.num_pixels];
        for (order, &ys) in self.sorted.iter().zip(&y.0) {
            for &p in &order[..ys] {
                labels[p] = 1;
            }
        }
        Ok(Labeling::new(labels))
    }

    /// Per-superpixel argmin start: `y_s` = number of pixels with negative
    /// label-1 cost.
    pub fn initial_labeling(&self) -> SuperLabeling {
        SuperLabeling(
            self.sorted
                .iter()
                .zip(&self.prefix)
                .map(|(order, sums)| (1..=order.len()).take_while(|&k| sums[k] - sums[k - 1] < 0.0).count())
                .collect(),
        )
    }

    fn max_cap(&self) -> usize {
        self.caps.iter().copied().max().unwrap_or(0)
    }

    /// Best move letting each superpixel either keep `y_s` or jump to
    /// `target(s)`; returns the candidate labeling (not yet checked against
    /// the true energy).
    fn expansion_move(
        &self,
        y: &[usize],
        target: impl Fn(usize) -> Option<usize>,
    ) -> Result<Option<Vec<usize>>> {
        let m = self.sizes.len();
        let movable: Vec<Option<usize>> = (0..m)
            .map(|s| target(s).filter(|&a| a <= self.caps[s] && a != y[s]))
            .collect();
        if movable.iter().all(Option::is_none) {
            return Ok(None);
        }
        let mut unary: Vec<[f64; 2]> = (0..m)
            .map(|s| match movable[s] {
                Some(a) => [self.g_raw(s, y[s]), self.g_raw(s, a)],
                None => [self.g_raw(s, y[s]), INF],
            })
            .collect();
        let mut problem = BinaryPairwiseProblem::new(m);
        let mut pairs = Vec::new();
        for s in 0..m {
            for t in s + 1..m {
                match (movable[s], movable[t]) {
                    (None, None) => {}
                    (Some(a), None) => {
                        unary[s][0] += self.v_raw(s, t, y[s], y[t]);
                        unary[s][1] += self.v_raw(s, t, a, y[t]);
                    }
                    (None, Some(b)) => {
                        unary[t][0] += self.v_raw(s, t, y[s], y[t]);
                        unary[t][1] += self.v_raw(s, t, y[s], b);
                    }
                    (Some(a), Some(b)) => {
                        let t01 = self.v_raw(s, t, y[s], b);
                        let t10 = self.v_raw(s, t, a, y[t]);
                        let t00 = self.v_raw(s, t, y[s], y[t]);
                        let mut t11 = self.v_raw(s, t, a, b);
                        if t00 + t11 > t01 + t10 {
                            t11 = t01 + t10 - t00;
                        }
                        pairs.push((s, t, [[t00, t01], [t10, t11]]));
                    }
                }
            }
        }
        for (s, u) in unary.iter().enumerate() {
            let c1 = if movable[s].is_some() { u[1] } else { INF };
            problem.set_unary(s, u[0], c1);
        }
        for (s, t, theta) in pairs {
            problem.add_pairwise(s, t, theta)?;
        }
        let (z, _) = min_cut(&problem)?;
        if !z.iter().any(|&b| b) {
            return Ok(None);
        }
        Ok(Some(
            (0..m).map(|s| if z[s] { movable[s].expect("moved only if movable") } else { y[s] }).collect(),
        ))
    }

    /// Expansion from [`initial_labeling`](Self::initial_labeling). Returns
    /// the final labeling, its `g`, the `g` trace and the sweep count.
    pub fn solve(&self, config: &BinaryConfig) -> Result<(SuperLabeling, f64, Vec<f64>, usize)> {
        self.solve_from(self.initial_labeling(), config)
    }

    pub fn solve_from(
        &self,
        init: SuperLabeling,
        config: &BinaryConfig,
    ) -> Result<(SuperLabeling, f64, Vec<f64>, usize)> {
        self.check(&init)?;
        let mut y = init.0;
        let mut energy = self.energy_raw(&y);
        let mut trace = vec![energy];
        let labels: Vec<usize> = (0..=self.max_cap()).collect();
        let mut sweeps = 0;
        while sweeps < config.max_sweeps {
            sweeps += 1;
            let mut improved = false;
            let directions: &[bool] = if config.reverse { &[false, true] } else { &[false] };
            for &reverse in directions {
                for &alpha in &labels {
                    let candidate = if reverse {
                        self.expansion_move(&y, |s| self.sizes[s].checked_sub(alpha))?
                    } else {
                        self.expansion_move(&y, |_| Some(alpha))?
                    };
                    if let Some(next) = candidate {
                        let e = self.energy_raw(&next);
                        if improves(e, energy) {
                            y = next;
                            energy = e;
                            trace.push(e);
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        Ok((SuperLabeling(y), energy, trace, sweeps))
    }
}

/// Binary Potts inference: normalizes, collapses to the superpixel domain,
/// runs expansion and maps back to pixels. Reported energies include the
/// normalization offset.
pub fn solve_binary(
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
    config: &BinaryConfig,
) -> Result<BinarySolution> {
    check_dimensions(None, unary, partition, weights)?;
    let (normalized, offset) = normalize_unaries(unary)?;
    let problem = SuperpixelProblem::new(&normalized, partition, weights)?;
    let (y, _, g_trace, sweeps) = problem.solve(config)?;
    let labeling = problem.reconstruct(&y)?;
    let energy = total_energy(&labeling, unary, partition, weights)?;
    let trace = g_trace.into_iter().map(|g| g + offset).collect();
    Ok(BinarySolution { labeling, energy, trace, sweeps })
}
