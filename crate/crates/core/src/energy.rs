//! Domain types for the quantized-edge Potts model and the aggregated energy
//! evaluator.
//!
//! The pairwise part of the energy is never computed by enumerating pixel
//! pairs. Because every pair of pixels drawn from superpixels `(s, t)` shares
//! one weight, the number of disagreeing pairs is recovered from per-superpixel
//! label histograms:
//!
//! * across `s ≠ t`: `n_s·n_t − Σ_l n_s^l·n_t^l`
//! * inside `s`: `(n_s² − Σ_l (n_s^l)²) / 2`

use crate::error::{input_err, Error, Result};
use crate::weights::WeightTable;

/// Single-channel image on a regular grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    width: usize,
    height: usize,
    intensities: Vec<f64>,
}

impl GridImage {
    pub fn new(width: usize, height: usize, intensities: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return input_err(format!("degenerate image {width}x{height}"));
        }
        if intensities.len() != width * height {
            return input_err(format!(
                "image has {} intensities, expected {}",
                intensities.len(),
                width * height
            ));
        }
        if let Some(v) = intensities.iter().find(|v| !v.is_finite()) {
            return input_err(format!("non-finite intensity {v}"));
        }
        Ok(Self { width, height, intensities })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    #[inline]
    pub fn at(&self, pixel: usize) -> f64 {
        self.intensities[pixel]
    }

    /// `(x, y)` = `(column, row)` of a raster index.
    #[inline]
    pub fn coords(&self, pixel: usize) -> (usize, usize) {
        (pixel % self.width, pixel / self.width)
    }
}

/// Pixel-to-superpixel map with the per-superpixel statistics the edge
/// weights are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelPartition {
    width: usize,
    height: usize,
    assignment: Vec<usize>,
    sizes: Vec<usize>,
    means: Vec<f64>,
    variances: Vec<f64>,
    centroids: Vec<[f64; 2]>,
}

impl SuperpixelPartition {
    /// Builds a partition from a per-pixel superpixel index and computes the
    /// sample statistics of every superpixel over `image`.
    ///
    /// Indices must cover `0..m` with no empty superpixel.
    pub fn from_assignment(image: &GridImage, assignment: Vec<usize>) -> Result<Self> {
        if assignment.len() != image.len() {
            return input_err(format!(
                "assignment has {} entries, image has {} pixels",
                assignment.len(),
                image.len()
            ));
        }
        let sizes = Self::count_sizes(&assignment)?;
        let m = sizes.len();
        let mut sum = vec![0.0; m];
        let mut cx = vec![0.0; m];
        let mut cy = vec![0.0; m];
        for (p, &s) in assignment.iter().enumerate() {
            let (x, y) = image.coords(p);
            sum[s] += image.at(p);
            cx[s] += x as f64;
            cy[s] += y as f64;
        }
        let means: Vec<f64> = (0..m).map(|s| sum[s] / sizes[s] as f64).collect();
        let mut sq = vec![0.0; m];
        for (p, &s) in assignment.iter().enumerate() {
            let d = image.at(p) - means[s];
            sq[s] += d * d;
        }
        let variances = (0..m).map(|s| sq[s] / sizes[s] as f64).collect();
        let centroids = (0..m)
            .map(|s| [cx[s] / sizes[s] as f64, cy[s] / sizes[s] as f64])
            .collect();
        Ok(Self {
            width: image.width(),
            height: image.height(),
            assignment,
            sizes,
            means,
            variances,
            centroids,
        })
    }

    /// One superpixel per pixel, indexed in raster order.
    pub fn singletons(image: &GridImage) -> Self {
        Self::from_assignment(image, (0..image.len()).collect())
            .expect("identity assignment is always valid")
    }

    /// Builds a partition with caller-supplied statistics. Sizes are still
    /// derived from the assignment.
    pub fn with_statistics(
        width: usize,
        height: usize,
        assignment: Vec<usize>,
        means: Vec<f64>,
        variances: Vec<f64>,
        centroids: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if assignment.len() != width * height || width == 0 || height == 0 {
            return input_err("assignment does not match the grid");
        }
        let sizes = Self::count_sizes(&assignment)?;
        let m = sizes.len();
        if means.len() != m || variances.len() != m || centroids.len() != m {
            return input_err(format!("statistics must have {m} entries"));
        }
        Ok(Self { width, height, assignment, sizes, means, variances, centroids })
    }

    fn count_sizes(assignment: &[usize]) -> Result<Vec<usize>> {
        let m = match assignment.iter().max() {
            Some(&max) => max + 1,
            None => return input_err("empty assignment"),
        };
        let mut sizes = vec![0usize; m];
        for &s in assignment {
            sizes[s] += 1;
        }
        if let Some(s) = sizes.iter().position(|&n| n == 0) {
            return input_err(format!("superpixel {s} is empty"));
        }
        Ok(sizes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_superpixels(&self) -> usize {
        self.sizes.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    #[inline]
    pub fn superpixel_of(&self, pixel: usize) -> usize {
        self.assignment[pixel]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroids
    }

    /// Pixels of every superpixel, each list in ascending raster order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members: Vec<Vec<usize>> =
            self.sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (p, &s) in self.assignment.iter().enumerate() {
            members[s].push(p);
        }
        members
    }
}

/// Parameters of the quantized edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// Global multiplier on every pairwise weight.
    pub smoothness: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self { lambda1: 1.0, lambda2: 1.0, beta1: 10.0, beta2: 50.0, beta3: 13.0, smoothness: 1.0 }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta3", self.beta3)] {
            if !(b > 0.0) || !b.is_finite() {
                return input_err(format!("{name} must be positive, got {b}"));
            }
        }
        for (name, v) in
            [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("smoothness", self.smoothness)]
        {
            if !(v >= 0.0) || !v.is_finite() {
                return input_err(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn with_smoothness(mut self, smoothness: f64) -> Self {
        self.smoothness = smoothness;
        self
    }
}

/// Per-pixel, per-label costs, row-major with the label as fastest axis.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryCosts {
    width: usize,
    height: usize,
    num_labels: usize,
    costs: Vec<f64>,
}

impl UnaryCosts {
    pub fn new(width: usize, height: usize, num_labels: usize, costs: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return input_err(format!("degenerate unary grid {width}x{height}"));
        }
        if num_labels < 2 {
            return input_err(format!("need at least 2 labels, got {num_labels}"));
        }
        if costs.len() != width * height * num_labels {
            return input_err(format!(
                "unary tensor has {} entries, expected {}",
                costs.len(),
                width * height * num_labels
            ));
        }
        if let Some(c) = costs.iter().find(|c| !c.is_finite()) {
            return input_err(format!("non-finite unary cost {c}"));
        }
        Ok(Self { width, height, num_labels, costs })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }

    #[inline]
    pub fn cost(&self, pixel: usize, label: usize) -> f64 {
        self.costs[pixel * self.num_labels + label]
    }

    #[inline]
    pub fn row(&self, pixel: usize) -> &[f64] {
        &self.costs[pixel * self.num_labels..(pixel + 1) * self.num_labels]
    }

    /// Per-pixel argmin, ties to the lowest label.
    pub fn argmin_labeling(&self) -> Labeling {
        let labels = (0..self.num_pixels())
            .map(|p| {
                let row = self.row(p);
                let mut best = 0;
                for l in 1..row.len() {
                    if row[l] < row[best] {
                        best = l;
                    }
                }
                best
            })
            .collect();
        Labeling::new(labels)
    }
}

/// Per-pixel label assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling {
    labels: Vec<usize>,
}

impl Labeling {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn constant(n: usize, label: usize) -> Self {
        Self { labels: vec![label; n] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn as_mut_slice(&mut self) -> &mut [usize] {
        &mut self.labels
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.labels
    }

    #[inline]
    pub fn get(&self, pixel: usize) -> usize {
        self.labels[pixel]
    }

    #[inline]
    pub fn set(&mut self, pixel: usize, label: usize) {
        self.labels[pixel] = label;
    }
}

/// `counts[s][l]`: pixels of superpixel `s` that currently carry label `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCountTable {
    num_superpixels: usize,
    num_labels: usize,
    counts: Vec<u64>,
}

impl LabelCountTable {
    pub fn num_superpixels(&self) -> usize {
        self.num_superpixels
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn get(&self, s: usize, l: usize) -> u64 {
        self.counts[s * self.num_labels + l]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[u64] {
        &self.counts[s * self.num_labels..(s + 1) * self.num_labels]
    }

    /// Moves one pixel of `s` from label `from` to label `to`.
    #[inline]
    pub fn shift(&mut self, s: usize, from: usize, to: usize) {
        self.counts[s * self.num_labels + from] -= 1;
        self.counts[s * self.num_labels + to] += 1;
    }

    /// Moves all pixels of `s` to label `to`.
    pub fn collapse(&mut self, s: usize, to: usize) {
        let row = &mut self.counts[s * self.num_labels..(s + 1) * self.num_labels];
        let total: u64 = row.iter().sum();
        row.fill(0);
        row[to] = total;
    }

    /// `n_s² − Σ_l (n_s^l)²`, twice the number of disagreeing pairs inside `s`.
    pub fn internal_disagreement_x2(&self, s: usize) -> u64 {
        let row = self.row(s);
        let n: u64 = row.iter().sum();
        n * n - row.iter().map(|c| c * c).sum::<u64>()
    }

    /// `n_s·n_t − Σ_l n_s^l·n_t^l`, the number of disagreeing pairs between
    /// `s` and `t`.
    pub fn cross_disagreement(&self, s: usize, t: usize) -> u64 {
        let (a, b) = (self.row(s), self.row(t));
        let ns: u64 = a.iter().sum();
        let nt: u64 = b.iter().sum();
        ns * nt - a.iter().zip(b).map(|(x, y)| x * y).sum::<u64>()
    }
}

fn check_labeling(labeling: &Labeling, partition: &SuperpixelPartition) -> Result<()> {
    if labeling.len() != partition.num_pixels() {
        return input_err(format!(
            "labeling has {} pixels, partition has {}",
            labeling.len(),
            partition.num_pixels()
        ));
    }
    Ok(())
}

/// Tallies `counts[s][l]` for `num_labels` labels.
pub fn count_labels(
    labeling: &Labeling,
    partition: &SuperpixelPartition,
    num_labels: usize,
) -> Result<LabelCountTable> {
    check_labeling(labeling, partition)?;
    let m = partition.num_superpixels();
    let mut counts = vec![0u64; m * num_labels];
    for (p, &l) in labeling.as_slice().iter().enumerate() {
        if l >= num_labels {
            return input_err(format!("pixel {p} has label {l}, only {num_labels} labels"));
        }
        counts[partition.superpixel_of(p) * num_labels + l] += 1;
    }
    Ok(LabelCountTable { num_superpixels: m, num_labels, counts })
}

fn check_weights(partition: &SuperpixelPartition, weights: &WeightTable) -> Result<()> {
    if weights.len() != partition.num_superpixels() {
        return input_err(format!(
            "weight table covers {} superpixels, partition has {}",
            weights.len(),
            partition.num_superpixels()
        ));
    }
    Ok(())
}

fn check_unary(unary: &UnaryCosts, partition: &SuperpixelPartition) -> Result<()> {
    if unary.width() != partition.width() || unary.height() != partition.height() {
        return input_err(format!(
            "unary grid {}x{} does not match partition {}x{}",
            unary.width(),
            unary.height(),
            partition.width(),
            partition.height()
        ));
    }
    Ok(())
}

/// Validates that all four inputs describe the same grid.
pub fn check_dimensions(
    labeling: Option<&Labeling>,
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
) -> Result<()> {
    check_unary(unary, partition)?;
    check_weights(partition, weights)?;
    if let Some(labeling) = labeling {
        check_labeling(labeling, partition)?;
    }
    Ok(())
}

/// Pairwise part of the energy from a label histogram.
///
/// Superpixels are visited in ascending order, internal term first, then
/// every `t > s`.
pub fn pairwise_from_counts(counts: &LabelCountTable, weights: &WeightTable) -> f64 {
    let m = counts.num_superpixels();
    let mut total = 0.0;
    for s in 0..m {
        let internal = counts.internal_disagreement_x2(s);
        total += weights.get(s, s) * (internal / 2) as f64;
        for t in s + 1..m {
            total += weights.get(s, t) * counts.cross_disagreement(s, t) as f64;
        }
    }
    total
}

/// Σ_{p<q} w_pq·[x_p ≠ x_q] over every unordered pixel pair.
pub fn pairwise_energy(
    labeling: &Labeling,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
) -> Result<f64> {
    check_weights(partition, weights)?;
    let k = labeling.as_slice().iter().max().map_or(1, |&l| l + 1);
    let counts = count_labels(labeling, partition, k)?;
    Ok(pairwise_from_counts(&counts, weights))
}

/// Σ_p f_p(x_p).
pub fn unary_energy(labeling: &Labeling, unary: &UnaryCosts) -> Result<f64> {
    if labeling.len() != unary.num_pixels() {
        return input_err("labeling and unary sizes differ");
    }
    let k = unary.num_labels();
    labeling.as_slice().iter().enumerate().try_fold(0.0, |acc, (p, &l)| {
        if l >= k {
            Err(Error::Input(format!("pixel {p} has label {l}, only {k} labels")))
        } else {
            Ok(acc + unary.cost(p, l))
        }
    })
}

/// Full Potts energy `Σ_p f_p(x_p) + Σ_{p<q} w_pq·[x_p ≠ x_q]`.
pub fn total_energy(
    labeling: &Labeling,
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
) -> Result<f64> {
    check_dimensions(Some(labeling), unary, partition, weights)?;
    let counts = count_labels(labeling, partition, unary.num_labels())?;
    Ok(unary_energy(labeling, unary)? + pairwise_from_counts(&counts, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_image(w: usize, h: usize) -> GridImage {
        GridImage::new(w, h, vec![0.0; w * h]).unwrap()
    }

    #[test]
    fn partition_statistics_are_population_moments() {
        let img = GridImage::new(3, 1, vec![1.0, 3.0, 10.0]).unwrap();
        let part = SuperpixelPartition::from_assignment(&img, vec![0, 0, 1]).unwrap();
        assert_eq!(part.sizes(), &[2, 1]);
        assert_eq!(part.means(), &[2.0, 10.0]);
        assert_eq!(part.variances(), &[1.0, 0.0]);
        assert_eq!(part.centroids(), &[[0.5, 0.0], [2.0, 0.0]]);
    }

    #[test]
    fn empty_superpixel_is_rejected() {
        let img = flat_image(2, 1);
        assert!(SuperpixelPartition::from_assignment(&img, vec![0, 2]).is_err());
    }

    #[test]
    fn constant_labeling_has_zero_energy() {
        let img = flat_image(3, 2);
        let part = SuperpixelPartition::from_assignment(&img, vec![0, 0, 1, 1, 2, 2]).unwrap();
        let weights = WeightTable::from_fn(3, |s, t| 1.0 + (s + t) as f64);
        let unary = UnaryCosts::new(3, 2, 2, vec![0.0; 12]).unwrap();
        let e = total_energy(&Labeling::constant(6, 1), &unary, &part, &weights).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn two_blocks_of_two_disagree_on_four_pairs() {
        let img = flat_image(4, 1);
        let part = SuperpixelPartition::from_assignment(&img, vec![0, 0, 1, 1]).unwrap();
        let weights = WeightTable::from_fn(2, |s, t| if s == t { 0.0 } else { 1.0 });
        let unary = UnaryCosts::new(4, 1, 2, vec![0.0; 8]).unwrap();
        let labels = Labeling::new(vec![0, 0, 1, 1]);
        assert_eq!(total_energy(&labels, &unary, &part, &weights).unwrap(), 4.0);
    }

    #[test]
    fn count_labels_constant_and_singletons() {
        let img = flat_image(2, 2);
        let part = SuperpixelPartition::from_assignment(&img, vec![0, 0, 1, 1]).unwrap();
        let c = count_labels(&Labeling::constant(4, 0), &part, 3).unwrap();
        assert_eq!(c.row(0), &[2, 0, 0]);
        assert_eq!(c.row(1), &[2, 0, 0]);

        let single = SuperpixelPartition::singletons(&img);
        let c = count_labels(&Labeling::new(vec![2, 0, 1, 2]), &single, 3).unwrap();
        for (s, l) in [(0, 2), (1, 0), (2, 1), (3, 2)] {
            let mut row = [0u64; 3];
            row[l] = 1;
            assert_eq!(c.row(s), &row);
        }
    }

    #[test]
    fn mismatched_dimensions_are_input_errors() {
        let img = flat_image(2, 2);
        let part = SuperpixelPartition::singletons(&img);
        let weights = WeightTable::from_fn(4, |_, _| 1.0);
        let unary = UnaryCosts::new(2, 2, 2, vec![0.0; 8]).unwrap();
        let short = Labeling::new(vec![0, 1, 0]);
        assert!(matches!(total_energy(&short, &unary, &part, &weights), Err(Error::Input(_))));
        let small = WeightTable::from_fn(3, |_, _| 1.0);
        let ok = Labeling::constant(4, 0);
        assert!(total_energy(&ok, &unary, &part, &small).is_err());
        let bad_label = Labeling::new(vec![0, 1, 2, 0]);
        assert!(total_energy(&bad_label, &unary, &part, &weights).is_err());
    }

    #[test]
    fn non_finite_unaries_are_rejected() {
        assert!(UnaryCosts::new(1, 1, 2, vec![0.0, f64::INFINITY]).is_err());
        assert!(UnaryCosts::new(1, 1, 1, vec![0.0]).is_err());
    }

    #[test]
    fn argmin_prefers_lowest_label_on_ties() {
        let unary = UnaryCosts::new(2, 1, 3, vec![1.0, 1.0, 2.0, 3.0, 0.5, 0.5]).unwrap();
        assert_eq!(unary.argmin_labeling().as_slice(), &[0, 1]);
    }
}
