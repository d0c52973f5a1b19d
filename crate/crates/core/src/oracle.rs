//! Exact reference solvers: pixel-level graph cut for two labels and
//! exhaustive enumeration for tiny instances.

use crate::energy::{
    check_dimensions, count_labels, pairwise_from_counts, total_energy, Labeling,
    SuperpixelPartition, UnaryCosts,
};
use crate::error::{input_err, Error, Result};
use crate::maxflow::FlowGraph;
use crate::weights::WeightTable;

/// Largest pixel count [`exact_binary`] builds a dense graph for.
pub const EXACT_PIXEL_LIMIT: usize = 6000;

/// Largest `k^n` [`enumerate_optimum`] will visit.
pub const ENUMERATION_LIMIT: usize = 1 << 24;

/// Global optimum of a two-label instance by min-cut on the full pixel
/// graph, one Potts edge per unordered pixel pair.
pub fn exact_binary(
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
) -> Result<(Labeling, f64)> {
    check_dimensions(None, unary, partition, weights)?;
    if unary.num_labels() != 2 {
        return input_err(format!("exact_binary needs 2 labels, got {}", unary.num_labels()));
    }
    let n = unary.num_pixels();
    if n > EXACT_PIXEL_LIMIT {
        return Err(Error::SizeGuard { what: "pixels", actual: n, limit: EXACT_PIXEL_LIMIT });
    }
    let mut graph = FlowGraph::with_capacity(n, n * (n - 1) / 2);
    for p in 0..n {
        let (c0, c1) = (unary.cost(p, 0), unary.cost(p, 1));
        if c1 > c0 {
            graph.add_tweights(p, c1 - c0, 0.0);
        } else {
            graph.add_tweights(p, 0.0, c0 - c1);
        }
    }
    let sp = partition.assignment();
    for p in 0..n {
        let row = weights.row(sp[p]);
        for q in p + 1..n {
            let w = row[sp[q]];
            if w > 0.0 {
                graph.add_edge(p, q, w, w);
            }
        }
    }
    graph.maxflow();
    let labeling = Labeling::new(graph.sink_side().into_iter().map(usize::from).collect());
    let energy = total_energy(&labeling, unary, partition, weights)?;
    Ok((labeling, energy))
}

/// Exhaustive minimum over all `k^n` labelings. Ties go to the
/// lexicographically smallest labeling (pixel 0 most significant).
pub fn enumerate_optimum(
    unary: &UnaryCosts,
    partition: &SuperpixelPartition,
    weights: &WeightTable,
) -> Result<(Labeling, f64)> {
    check_dimensions(None, unary, partition, weights)?;
    let n = unary.num_pixels();
    let k = unary.num_labels();
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(k).filter(|&v| v <= ENUMERATION_LIMIT));
    if total.is_none() {
        return Err(Error::SizeGuard {
            what: "labelings",
            actual: usize::MAX,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut x = Labeling::constant(n, 0);
    let mut counts = count_labels(&x, partition, k)?;
    let mut best = (x.clone(), f64::INFINITY);
    loop {
        let unary_part: f64 = x.as_slice().iter().enumerate().map(|(p, &l)| unary.cost(p, l)).sum();
        let e = unary_part + pairwise_from_counts(&counts, weights);
        if e < best.1 {
            best = (x.clone(), e);
        }
        // odometer, last pixel fastest
        let mut p = n;
        loop {
            if p == 0 {
                return Ok(best);
            }
            p -= 1;
            let s = partition.superpixel_of(p);
            let l = x.get(p);
            if l + 1 < k {
                x.set(p, l + 1);
                counts.shift(s, l, l + 1);
                break;
            }
            x.set(p, 0);
            counts.shift(s, l, 0);
        }
    }
}
