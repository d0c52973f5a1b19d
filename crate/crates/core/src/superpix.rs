//! Superpixel generation (grayscale SLIC) and label-driven splitting.

use crate::energy::{GridImage, Labeling, SuperpixelPartition};
use crate::error::{input_err, Result};

/// k-means iterations run by [`slic_partition`].
pub const SLIC_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy)]
struct Center {
    x: f64,
    y: f64,
    intensity: f64,
}

/// Grid dimensions `(columns, rows)` whose product is close to `target`.
fn seed_grid(width: usize, height: usize, target: usize) -> (usize, usize) {
    let aspect = width as f64 / height as f64;
    let nx = ((target as f64 * aspect).sqrt().round() as usize).clamp(1, width);
    let ny = ((target as f64 / nx as f64).round() as usize).clamp(1, height);
    (nx, ny)
}

/// SLIC superpixels on a single-channel image.
///
/// Seeds sit at the centers of a regular `nx × ny` grid, followed by
/// [`SLIC_ITERATIONS`] rounds of windowed k-means on
/// `ΔI² + (compactness / S)²·Δxy²`. Disconnected fragments are then merged
/// into their largest 4-adjacent neighbor so every superpixel is connected.
/// Indices are renumbered in raster order of each superpixel's first pixel.
pub fn slic_partition(
    image: &GridImage,
    target_count: usize,
    compactness: f64,
) -> Result<SuperpixelPartition> {
    let (w, h) = (image.width(), image.height());
    let n = image.len();
    if target_count == 0 || target_count > n {
        return input_err(format!("target_count {target_count} must lie in 1..={n}"));
    }
    if !(compactness > 0.0) || !compactness.is_finite() {
        return input_err(format!("compactness must be positive, got {compactness}"));
    }

    let (nx, ny) = seed_grid(w, h, target_count);
    let cell_w = w as f64 / nx as f64;
    let cell_h = h as f64 / ny as f64;
    let step = cell_w.max(cell_h);
    let spatial = (compactness / step).powi(2);

    // Initial assignment: grid cell of each pixel.
    let mut labels: Vec<usize> = (0..n)
        .map(|p| {
            let (x, y) = image.coords(p);
            let cx = ((x as f64 / cell_w) as usize).min(nx - 1);
            let cy = ((y as f64 / cell_h) as usize).min(ny - 1);
            cy * nx + cx
        })
        .collect();
    let mut centers: Vec<Center> = (0..nx * ny)
        .map(|c| {
            let (gx, gy) = (c % nx, c / nx);
            let x = (gx as f64 + 0.5) * cell_w - 0.5;
            let y = (gy as f64 + 0.5) * cell_h - 0.5;
            let px = (x.round() as usize).min(w - 1);
            let py = (y.round() as usize).min(h - 1);
            Center { x, y, intensity: image.at(py * w + px) }
        })
        .collect();

    let radius = step.ceil() as isize;
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..SLIC_ITERATIONS {
        dist.fill(f64::INFINITY);
        for (c, center) in centers.iter().enumerate() {
            let x0 = (center.x.round() as isize - radius).max(0) as usize;
            let x1 = ((center.x.round() as isize + radius).max(0) as usize).min(w - 1);
            let y0 = (center.y.round() as isize - radius).max(0) as usize;
            let y1 = ((center.y.round() as isize + radius).max(0) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let di = image.at(p) - center.intensity;
                    let dx = x as f64 - center.x;
                    let dy = y as f64 - center.y;
                    let d = di * di + spatial * (dx * dx + dy * dy);
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = c;
                    }
                }
            }
        }
        let mut acc = vec![(0.0, 0.0, 0.0, 0usize); centers.len()];
        for (p, &c) in labels.iter().enumerate() {
            let (x, y) = image.coords(p);
            let a = &mut acc[c];
            a.0 += x as f64;
            a.1 += y as f64;
            a.2 += image.at(p);
            a.3 += 1;
        }
        for (center, a) in centers.iter_mut().zip(&acc) {
            if a.3 > 0 {
                let k = a.3 as f64;
                *center = Center { x: a.0 / k, y: a.1 / k, intensity: a.2 / k };
            }
        }
    }

    let assignment = enforce_connectivity(w, h, &labels);
    SuperpixelPartition::from_assignment(image, assignment)
}

/// Labels 4-connected components of `labels`, keeps the largest component of
/// every cluster and merges the remaining fragments, in raster order, into the
/// largest adjacent segment (ties to the lowest segment id).
fn enforce_connectivity(w: usize, h: usize, labels: &[usize]) -> Vec<usize> {
    let n = w * h;
    let neighbors = |p: usize| {
        let (x, y) = (p % w, p / w);
        let mut out = [usize::MAX; 4];
        if x > 0 {
            out[0] = p - 1;
        }
        if x + 1 < w {
            out[1] = p + 1;
        }
        if y > 0 {
            out[2] = p - w;
        }
        if y + 1 < h {
            out[3] = p + w;
        }
        out
    };

    // Connected components, numbered in raster order of their first pixel.
    let mut comp = vec![usize::MAX; n];
    let mut comp_size = Vec::new();
    let mut comp_cluster = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_size.len();
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            for q in neighbors(p) {
                if q != usize::MAX && comp[q] == usize::MAX && labels[q] == labels[start] {
                    comp[q] = id;
                    stack.push(q);
                }
            }
        }
        comp_size.push(size);
        comp_cluster.push(labels[start]);
    }

    // Main component per cluster: largest, ties to the earliest.
    let clusters = comp_cluster.iter().max().map_or(0, |&c| c + 1);
    let mut main = vec![usize::MAX; clusters];
    for (id, &c) in comp_cluster.iter().enumerate() {
        if main[c] == usize::MAX || comp_size[id] > comp_size[main[c]] {
            main[c] = id;
        }
    }

    // Component adjacency.
    let ncomp = comp_size.len();
    let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for p in 0..n {
        for q in neighbors(p) {
            if q != usize::MAX && comp[q] != comp[p] {
                adjacent[comp[p]].push(comp[q]);
            }
        }
    }
    for a in &mut adjacent {
        a.sort_unstable();
        a.dedup();
    }

    let mut parent: Vec<usize> = (0..ncomp).collect();
    let mut size = comp_size.clone();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for id in 0..ncomp {
        if main[comp_cluster[id]] == id {
            continue;
        }
        let me = find(&mut parent, id);
        let mut best: Option<usize> = None;
        for &other in &adjacent[id] {
            let r = find(&mut parent, other);
            if r == me {
                continue;
            }
            best = match best {
                Some(b) if size[b] > size[r] || (size[b] == size[r] && b < r) => Some(b),
                _ => Some(r),
            };
        }
        if let Some(target) = best {
            parent[me] = target;
            size[target] += size[me];
        }
    }

    // Renumber roots in raster order.
    let mut remap = vec![usize::MAX; ncomp];
    let mut next = 0;
    let mut out = vec![0; n];
    for p in 0..n {
        let r = find(&mut parent, comp[p]);
        if remap[r] == usize::MAX {
            remap[r] = next;
            next += 1;
        }
        out[p] = remap[r];
    }
    out
}

/// Result of refining a partition by a labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub partition: SuperpixelPartition,
    /// Superpixel of the input partition each child came from.
    pub parent: Vec<usize>,
    /// Label shared by all pixels of each child.
    pub label: Vec<usize>,
}

/// Refines `partition` so that each new superpixel holds pixels with one
/// (old superpixel, label) pair. Children are numbered by parent, then label.
///
/// Children keep their parent's mean, variance and centroid, so any weight
/// derived from those statistics is unchanged for every pixel pair. Sizes
/// are recounted.
pub fn split_with_parents(partition: &SuperpixelPartition, labeling: &Labeling) -> Result<Split> {
    let n = partition.num_pixels();
    if labeling.len() != n {
        return input_err(format!("labeling has {} pixels, partition has {n}", labeling.len()));
    }
    let m = partition.num_superpixels();
    let k = labeling.as_slice().iter().max().map_or(1, |&l| l + 1);
    let mut class = vec![usize::MAX; m * k];
    for (p, &l) in labeling.as_slice().iter().enumerate() {
        class[partition.superpixel_of(p) * k + l] = 0;
    }
    let mut parent = Vec::new();
    let mut label = Vec::new();
    for (key, slot) in class.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = parent.len();
            parent.push(key / k);
            label.push(key % k);
        }
    }
    let assignment: Vec<usize> = labeling
        .as_slice()
        .iter()
        .enumerate()
        .map(|(p, &l)| class[partition.superpixel_of(p) * k + l])
        .collect();
    let means = parent.iter().map(|&s| partition.means()[s]).collect();
    let variances = parent.iter().map(|&s| partition.variances()[s]).collect();
    let centroids = parent.iter().map(|&s| partition.centroids()[s]).collect();
    let partition = SuperpixelPartition::with_statistics(
        partition.width(),
        partition.height(),
        assignment,
        means,
        variances,
        centroids,
    )?;
    Ok(Split { partition, parent, label })
}

/// [`split_with_parents`] without the provenance.
pub fn split_by_labeling(
    partition: &SuperpixelPartition,
    labeling: &Labeling,
) -> Result<SuperpixelPartition> {
    split_with_parents(partition, labeling).map(|s| s.partition)
}
