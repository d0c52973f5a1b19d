//! Random small instances and brute-force references shared by the
//! integration tests.
#![allow(dead_code)]

use proptest::prelude::*;
use qcrf::{GridImage, Labeling, SuperpixelPartition, UnaryCosts, WeightTable};

#[derive(Debug, Clone)]
pub struct Instance {
    pub unary: UnaryCosts,
    pub partition: SuperpixelPartition,
    pub weights: WeightTable,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.unary.num_pixels()
    }

    pub fn k(&self) -> usize {
        self.unary.num_labels()
    }
}

/// Grid shape with `min_n..=max_n` pixels.
fn shape(min_n: usize, max_n: usize) -> impl Strategy<Value = (usize, usize)> {
    (1usize..=4, 1usize..=4)
        .prop_filter("pixel count in range", move |&(w, h)| (min_n..=max_n).contains(&(w * h)))
}

/// Assignment covering `0..m` with every superpixel non-empty.
fn assignment(n: usize, m: usize) -> impl Strategy<Value = Vec<usize>> {
    (Just((0..n).collect::<Vec<usize>>()).prop_shuffle(), proptest::collection::vec(0..m, n))
        .prop_map(move |(order, free)| {
            let mut a = vec![0; n];
            for (i, &p) in order.iter().enumerate() {
                a[p] = if i < m { i } else { free[i] };
            }
            a
        })
}

pub fn instance(
    max_n: usize,
    m_range: std::ops::RangeInclusive<usize>,
    k_range: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Instance> {
    let (m_lo, m_hi) = (*m_range.start(), *m_range.end());
    (shape(m_lo.max(1), max_n), k_range).prop_flat_map(move |((w, h), k)| {
        let n = w * h;
        let m_top = m_hi.min(n);
        (m_lo.min(m_top)..=m_top).prop_flat_map(move |m| {
            (
                assignment(n, m),
                proptest::collection::vec(-5.0f64..5.0, n * k),
                proptest::collection::vec(0.0f64..3.0, m * m),
                proptest::collection::vec(0.0f64..255.0, n),
            )
                .prop_map(move |(assign, costs, wraw, pixels)| {
                    let image = GridImage::new(w, h, pixels).unwrap();
                    let partition = SuperpixelPartition::from_assignment(&image, assign).unwrap();
                    let weights = WeightTable::from_fn(m, |s, t| wraw[s.min(t) * m + s.max(t)]);
                    let unary = UnaryCosts::new(w, h, k, costs).unwrap();
                    Instance { unary, partition, weights }
                })
        })
    })
}

/// Σ_p f_p(x_p) + Σ_{p<q} w_pq [x_p ≠ x_q] by a direct double loop.
pub fn naive_energy(inst: &Instance, x: &[usize]) -> f64 {
    let sp = inst.partition.assignment();
    let mut e = 0.0;
    for p in 0..x.len() {
        e += inst.unary.cost(p, x[p]);
    }
    for p in 0..x.len() {
        for q in p + 1..x.len() {
            if x[p] != x[q] {
                e += inst.weights.get(sp[p], sp[q]);
            }
        }
    }
    e
}

/// Every labeling in `0..k` over `n` pixels, pixel 0 most significant.
pub fn all_labelings(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = k.pow(n as u32);
    (0..total).map(move |mut code| {
        let mut x = vec![0; n];
        for p in (0..n).rev() {
            x[p] = code % k;
            code /= k;
        }
        x
    })
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

pub fn labeling(x: &[usize]) -> Labeling {
    Labeling::new(x.to_vec())
}
