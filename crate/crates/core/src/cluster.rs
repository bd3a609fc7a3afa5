//! Clustering of suitability maps.
//!
//! Maps are plain vectors over the valid pixels of a stack. They are read in
//! pixel blocks through [`MapSource`] so the same code runs on in-memory maps
//! and on a file-backed store. Every accumulation runs pixel by pixel in a
//! fixed order, so results do not depend on the block size.

use alloc::vec::Vec;
use core::convert::Infallible;
use core::fmt;

use crate::strategy::DecisionPoint;

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterError<E = Infallible> {
    Source(E),
    TooFewMaps(usize),
    MaskMismatch,
    BadK { k: usize, maps: usize },
    LabelMismatch { labels: usize, maps: usize },
    EmptyCluster(usize),
}

impl<E: fmt::Display> fmt::Display for ClusterError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterError::Source(e) => write!(f, "reading maps: {e}"),
            ClusterError::TooFewMaps(m) => write!(f, "need at least 2 maps, got {m}"),
            ClusterError::MaskMismatch => write!(f, "maps do not share a common pixel mask"),
            ClusterError::BadK { k, maps } => {
                write!(f, "cluster count {k} must lie in 1..={maps}")
            }
            ClusterError::LabelMismatch { labels, maps } => {
                write!(f, "{labels} labels for {maps} maps")
            }
            ClusterError::EmptyCluster(c) => write!(f, "cluster {c} has no members"),
        }
    }
}

impl<E: fmt::Debug + fmt::Display> core::error::Error for ClusterError<E> {}

impl ClusterError<Infallible> {
    fn widen<E>(self) -> ClusterError<E> {
        match self {
            ClusterError::Source(never) => match never {},
            ClusterError::TooFewMaps(m) => ClusterError::TooFewMaps(m),
            ClusterError::MaskMismatch => ClusterError::MaskMismatch,
            ClusterError::BadK { k, maps } => ClusterError::BadK { k, maps },
            ClusterError::LabelMismatch { labels, maps } => {
                ClusterError::LabelMismatch { labels, maps }
            }
            ClusterError::EmptyCluster(c) => ClusterError::EmptyCluster(c),
        }
    }
}

/// Random access to `map_count` maps of `pixel_count` values each.
pub trait MapSource {
    type Error;

    fn map_count(&self) -> usize;

    fn pixel_count(&self) -> usize;

    /// Reads pixels `start..start + out.len()` of map `map`.
    fn read_block(&self, map: usize, start: usize, out: &mut [f64]) -> Result<(), Self::Error>;
}

/// Maps held in memory, one vector per map.
#[derive(Debug, Clone, Copy)]
pub struct InMemoryMaps<'a> {
    maps: &'a [Vec<f64>],
    pixels: usize,
}

impl<'a> InMemoryMaps<'a> {
    pub fn new(maps: &'a [Vec<f64>]) -> Result<Self, ClusterError> {
        let pixels = maps.first().map_or(0, Vec::len);
        if maps.iter().any(|m| m.len() != pixels) {
            return Err(ClusterError::MaskMismatch);
        }
        Ok(InMemoryMaps { maps, pixels })
    }
}

impl MapSource for InMemoryMaps<'_> {
    type Error = Infallible;

    fn map_count(&self) -> usize {
        self.maps.len()
    }

    fn pixel_count(&self) -> usize {
        self.pixels
    }

    fn read_block(&self, map: usize, start: usize, out: &mut [f64]) -> Result<(), Infallible> {
        out.copy_from_slice(&self.maps[map][start..start + out.len()]);
        Ok(())
    }
}

/// Pixels per block such that one block of every map fits in `budget_bytes`.
pub fn block_pixels_for_budget(maps: usize, budget_bytes: usize) -> usize {
    (budget_bytes / (8 * maps.max(1))).max(1)
}

/// Loads pixels `start..start + len` of every map into `buf`, map-major.
pub fn load_block<S: MapSource>(
    source: &S,
    start: usize,
    len: usize,
    buf: &mut Vec<f64>,
) -> Result<(), S::Error> {
    let m = source.map_count();
    buf.clear();
    buf.resize(m * len, 0.0);
    for (map, chunk) in buf.chunks_exact_mut(len).enumerate() {
        source.read_block(map, start, chunk)?;
    }
    Ok(())
}

fn block_ranges(pixels: usize, block: usize) -> impl Iterator<Item = (usize, usize)> {
    let block = block.max(1);
    (0..pixels.div_ceil(block)).map(move |i| {
        let start = i * block;
        (start, block.min(pixels - start))
    })
}

/// Symmetric matrix of Euclidean distances between maps, stored as the strict
/// lower triangle in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    m: usize,
    lower: Vec<f64>,
}

#[inline]
fn tri_index(a: usize, b: usize) -> usize {
    debug_assert!(a > b);
    a * (a - 1) / 2 + b
}

impl DissimilarityMatrix {
    /// From strict-lower-triangle values (row `a` holds `d(a, 0..a)`).
    pub fn from_lower(m: usize, lower: Vec<f64>) -> Self {
        assert_eq!(
            lower.len(),
            m * m.saturating_sub(1) / 2,
            "lower triangle length"
        );
        DissimilarityMatrix { m, lower }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        match a.cmp(&b) {
            core::cmp::Ordering::Equal => 0.0,
            core::cmp::Ordering::Greater => self.lower[tri_index(a, b)],
            core::cmp::Ordering::Less => self.lower[tri_index(b, a)],
        }
    }

    pub fn lower_triangle(&self) -> &[f64] {
        &self.lower
    }
}

/// Accumulator of squared distances, one row per map (row `a` covers `b < a`).
#[derive(Debug, Clone)]
pub struct SquaredDistanceSums {
    m: usize,
    lower: Vec<f64>,
}

impl SquaredDistanceSums {
    pub fn new(m: usize) -> Self {
        SquaredDistanceSums {
            m,
            lower: alloc::vec![0.0; m * m.saturating_sub(1) / 2],
        }
    }

    /// Disjoint mutable rows, for drivers that fill rows concurrently.
    pub fn rows_mut(&mut self) -> Vec<&mut [f64]> {
        let mut rows = Vec::with_capacity(self.m);
        let mut rest = self.lower.as_mut_slice();
        for a in 0..self.m {
            let (row, tail) = rest.split_at_mut(a);
            rows.push(row);
            rest = tail;
        }
        rows
    }

    pub fn finish(self) -> DissimilarityMatrix {
        DissimilarityMatrix {
            m: self.m,
            lower: self.lower.into_iter().map(libm::sqrt).collect(),
        }
    }
}

/// Adds the squared differences between map `a` and every map `b < a` of a
/// map-major block of `len` pixels to `row`.
pub fn accumulate_squared_row(block: &[f64], len: usize, a: usize, row: &mut [f64]) {
    let xa = &block[a * len..(a + 1) * len];
    for (b, acc) in row.iter_mut().enumerate() {
        let xb = &block[b * len..(b + 1) * len];
        let mut sum = *acc;
        for (p, q) in xa.iter().zip(xb) {
            let d = p - q;
            sum += d * d;
        }
        *acc = sum;
    }
}

/// Euclidean distance between every pair of maps.
pub fn pairwise_euclidean<S: MapSource>(
    source: &S,
    block_pixels: usize,
) -> Result<DissimilarityMatrix, ClusterError<S::Error>> {
    let m = source.map_count();
    if m < 2 {
        return Err(ClusterError::TooFewMaps(m));
    }
    let mut sums = SquaredDistanceSums::new(m);
    let mut buf = Vec::new();
    for (start, len) in block_ranges(source.pixel_count(), block_pixels) {
        load_block(source, start, len, &mut buf).map_err(ClusterError::Source)?;
        for (a, row) in sums.rows_mut().into_iter().enumerate() {
            accumulate_squared_row(&buf, len, a, row);
        }
    }
    Ok(sums.finish())
}

/// One agglomeration step. Leaves are `0..m`; the cluster created at step `s`
/// is `m + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Ward distance (square root of the Lance–Williams value).
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeTree {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

/// Ward agglomeration on squared Euclidean distances (Ward.D2).
///
/// Runs the Lance–Williams update
/// `d²(k, i∪j) = ((n_i+n_k) d²(k,i) + (n_j+n_k) d²(k,j) - n_k d²(i,j)) / (n_i+n_j+n_k)`.
/// Equal minima go to the lexicographically smallest pair of cluster ids.
pub fn ward_linkage(d: &DissimilarityMatrix) -> MergeTree {
    let m = d.len();
    let mut d2: Vec<f64> = d.lower.iter().map(|x| x * x).collect();
    let mut id: Vec<usize> = (0..m).collect();
    let mut size: Vec<usize> = alloc::vec![1; m];
    let mut active: Vec<usize> = (0..m).collect();
    let mut merges = Vec::with_capacity(m.saturating_sub(1));

    for step in 0..m.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, (usize, usize))> = None;
        for (pos, &i) in active.iter().enumerate() {
            for &j in &active[..pos] {
                // j < i as slots stay sorted
                let dist = d2[tri_index(i, j)];
                let key = (id[i].min(id[j]), id[i].max(id[j]));
                let better = match best {
                    None => true,
                    Some((bd, _, _, bkey)) => dist < bd || (dist == bd && key < bkey),
                };
                if better {
                    best = Some((dist, j, i, key));
                }
            }
        }
        let (dist, keep, gone, (a, b)) = best.expect("at least two active clusters");
        let (ni, nj) = (size[keep] as f64, size[gone] as f64);
        for &k in &active {
            if k == keep || k == gone {
                continue;
            }
            let nk = size[k] as f64;
            let dki = d2[tri_index(k.max(keep), k.min(keep))];
            let dkj = d2[tri_index(k.max(gone), k.min(gone))];
            let updated = ((ni + nk) * dki + (nj + nk) * dkj - nk * dist) / (ni + nj + nk);
            d2[tri_index(k.max(keep), k.min(keep))] = updated;
        }
        size[keep] += size[gone];
        id[keep] = m + step;
        active.retain(|&s| s != gone);
        merges.push(Merge {
            a,
            b,
            height: libm::sqrt(dist.max(0.0)),
            size: size[keep],
        });
    }
    MergeTree { leaves: m, merges }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Labels for `k` clusters: the first `m - k` merges are applied. Labels are
/// `0..k`, numbered by ascending smallest member index.
pub fn cut(tree: &MergeTree, k: usize) -> Result<Vec<usize>, ClusterError> {
    let m = tree.leaves;
    if k == 0 || k > m {
        return Err(ClusterError::BadK { k, maps: m });
    }
    // union-find over leaves and internal nodes
    let mut parent: Vec<usize> = (0..m + tree.merges.len()).collect();
    for (step, merge) in tree.merges.iter().take(m - k).enumerate() {
        let node = m + step;
        let ra = find(&mut parent, merge.a);
        let rb = find(&mut parent, merge.b);
        parent[ra] = node;
        parent[rb] = node;
    }
    let mut label_of_root: Vec<Option<usize>> = alloc::vec![None; parent.len()];
    let mut next = 0;
    let mut labels = Vec::with_capacity(m);
    for leaf in 0..m {
        let root = find(&mut parent, leaf);
        let label = *label_of_root[root].get_or_insert_with(|| {
            next += 1;
            next - 1
        });
        labels.push(label);
    }
    Ok(labels)
}

fn check_labels(labels: &[usize], maps: usize) -> Result<usize, ClusterError> {
    if labels.len() != maps {
        return Err(ClusterError::LabelMismatch {
            labels: labels.len(),
            maps,
        });
    }
    let k = labels.iter().max().map_or(0, |l| l + 1);
    let mut counts = alloc::vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(ClusterError::EmptyCluster(empty));
    }
    Ok(k)
}

/// One point of the within / total variance curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRatio {
    pub k: usize,
    /// `W(k) = Σ_c Σ_{x∈c} ‖x - mean_c‖²`.
    pub within: f64,
    /// `T - B(k)` with `B(k) = Σ_c n_c ‖mean_c - mean‖²`; equals `within` up to rounding.
    pub within_from_between: f64,
    /// `T = Σ_x ‖x - mean‖²`.
    pub total: f64,
    pub ratio: f64,
}

/// Adds, for one block, `Σ ‖x - mean_c‖²` and `Σ n_c ‖mean_c - global‖²` for
/// the clustering `labels` with `k` clusters. `global` is the block's grand mean.
fn block_dispersion(
    block: &[f64],
    len: usize,
    labels: &[usize],
    k: usize,
    counts: &[usize],
    global: Option<&[f64]>,
    means: &mut Vec<f64>,
) -> (f64, f64) {
    means.clear();
    means.resize(k * len, 0.0);
    for (map, x) in block.chunks_exact(len).enumerate() {
        let acc = &mut means[labels[map] * len..(labels[map] + 1) * len];
        for (s, v) in acc.iter_mut().zip(x) {
            *s += v;
        }
    }
    for (c, acc) in means.chunks_exact_mut(len).enumerate() {
        let n = counts[c] as f64;
        for s in acc.iter_mut() {
            *s /= n;
        }
    }
    let mut within = 0.0;
    for (map, x) in block.chunks_exact(len).enumerate() {
        let mean = &means[labels[map] * len..(labels[map] + 1) * len];
        for (v, mu) in x.iter().zip(mean) {
            let d = v - mu;
            within += d * d;
        }
    }
    let mut between = 0.0;
    if let Some(global) = global {
        for (c, mean) in means.chunks_exact(len).enumerate() {
            let n = counts[c] as f64;
            for (mu, g) in mean.iter().zip(global) {
                let d = mu - g;
                between += n * d * d;
            }
        }
    }
    (within, between)
}

/// `W(k) / T` for `k = 1..=k_max`, cutting `tree` at each `k`.
///
/// Both `W(k)` (direct) and `T - B(k)` are accumulated in one pass over the
/// maps. `k = 1` uses the same arithmetic as `T`, so its ratio is exactly 1.
pub fn variance_ratio_curve<S: MapSource>(
    source: &S,
    tree: &MergeTree,
    k_max: usize,
    block_pixels: usize,
) -> Result<Vec<VarianceRatio>, ClusterError<S::Error>> {
    let m = source.map_count();
    if tree.leaves != m {
        return Err(ClusterError::LabelMismatch {
            labels: tree.leaves,
            maps: m,
        });
    }
    if k_max == 0 || k_max > m {
        return Err(ClusterError::BadK { k: k_max, maps: m });
    }
    let cuts: Vec<Vec<usize>> = (1..=k_max)
        .map(|k| cut(tree, k))
        .collect::<Result<_, _>>()
        .map_err(ClusterError::widen)?;
    let counts: Vec<Vec<usize>> = cuts
        .iter()
        .enumerate()
        .map(|(i, labels)| {
            let mut c = alloc::vec![0usize; i + 1];
            for &l in labels {
                c[l] += 1;
            }
            c
        })
        .collect();

    let mut total = 0.0;
    let mut within = alloc::vec![0.0; k_max];
    let mut between = alloc::vec![0.0; k_max];
    let mut buf = Vec::new();
    let mut means = Vec::new();
    let mut global = Vec::new();
    for (start, len) in block_ranges(source.pixel_count(), block_pixels) {
        load_block(source, start, len, &mut buf).map_err(ClusterError::Source)?;
        // k = 1 is the grand mean itself.
        let (t, _) = block_dispersion(&buf, len, &cuts[0], 1, &counts[0], None, &mut means);
        total += t;
        global.clear();
        global.extend_from_slice(&means[..len]);
        for (i, labels) in cuts.iter().enumerate() {
            let (w, b) = block_dispersion(
                &buf,
                len,
                labels,
                i + 1,
                &counts[i],
                Some(&global),
                &mut means,
            );
            within[i] += w;
            between[i] += b;
        }
    }
    Ok((0..k_max)
        .map(|i| {
            let k = i + 1;
            let ratio = if total > 0.0 {
                within[i] / total
            } else if k == 1 {
                1.0
            } else {
                0.0
            };
            VarianceRatio {
                k,
                within: within[i],
                within_from_between: total - between[i],
                total,
                ratio,
            }
        })
        .collect())
}

/// Suggested `k`: the largest drop `ratio(k-1) - ratio(k)`, smallest `k` on ties.
pub fn suggest_k(curve: &[VarianceRatio]) -> Option<usize> {
    curve
        .windows(2)
        .map(|w| (w[1].k, w[0].ratio - w[1].ratio))
        .fold(None, |best: Option<(usize, f64)>, (k, drop)| match best {
            Some((_, d)) if d >= drop => best,
            _ => Some((k, drop)),
        })
        .map(|(k, _)| k)
}

/// Per-cluster aggregate of member maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub id: usize,
    pub members: Vec<usize>,
    /// Mean (r, t) of the members' decision points.
    pub centroid: DecisionPoint,
    /// Cellwise mean over valid pixels.
    pub mean: Vec<f64>,
    /// Cellwise population standard deviation over valid pixels.
    pub std: Vec<f64>,
}

impl ClusterStats {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Average of the mean map over all valid pixels.
    pub fn global_mean(&self) -> f64 {
        if self.mean.is_empty() {
            return 0.0;
        }
        self.mean.iter().sum::<f64>() / self.mean.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub k: usize,
    pub labels: Vec<usize>,
    pub clusters: Vec<ClusterStats>,
}

/// Mean and population standard deviation maps per cluster, plus centroids.
pub fn cluster_summaries<S: MapSource>(
    source: &S,
    points: &[DecisionPoint],
    labels: &[usize],
    block_pixels: usize,
) -> Result<ClusterSummary, ClusterError<S::Error>> {
    let m = source.map_count();
    let k = check_labels(labels, m).map_err(ClusterError::widen)?;
    if points.len() != m {
        return Err(ClusterError::LabelMismatch {
            labels: points.len(),
            maps: m,
        });
    }
    let pixels = source.pixel_count();
    let mut clusters: Vec<ClusterStats> = (0..k)
        .map(|id| {
            let members: Vec<usize> = (0..m).filter(|&i| labels[i] == id).collect();
            let n = members.len() as f64;
            let (sr, st) = members
                .iter()
                .fold((0.0, 0.0), |(r, t), &i| (r + points[i].r, t + points[i].t));
            ClusterStats {
                id,
                centroid: DecisionPoint::new(sr / n, st / n),
                members,
                mean: alloc::vec![0.0; pixels],
                std: alloc::vec![0.0; pixels],
            }
        })
        .collect();

    let mut buf = Vec::new();
    for (start, len) in block_ranges(pixels, block_pixels) {
        load_block(source, start, len, &mut buf).map_err(ClusterError::Source)?;
        for cluster in clusters.iter_mut() {
            let n = cluster.members.len() as f64;
            let mean = &mut cluster.mean[start..start + len];
            for &i in &cluster.members {
                for (s, v) in mean.iter_mut().zip(&buf[i * len..(i + 1) * len]) {
                    *s += v;
                }
            }
            for s in mean.iter_mut() {
                *s /= n;
            }
            let std = &mut cluster.std[start..start + len];
            for &i in &cluster.members {
                for ((s, v), mu) in std.iter_mut().zip(&buf[i * len..(i + 1) * len]).zip(&*mean) {
                    let d = v - mu;
                    *s += d * d;
                }
            }
            for s in std.iter_mut() {
                *s = libm::sqrt(*s / n);
            }
        }
    }
    Ok(ClusterSummary {
        k,
        labels: labels.to_vec(),
        clusters,
    })
}

/// A row of the decision-space segmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRow {
    pub index: usize,
    pub r: f64,
    pub t: f64,
    pub label: usize,
}

pub fn segmentation(
    points: &[DecisionPoint],
    labels: &[usize],
) -> Result<Vec<SegmentRow>, ClusterError> {
    if points.len() != labels.len() {
        return Err(ClusterError::LabelMismatch {
            labels: labels.len(),
            maps: points.len(),
        });
    }
    Ok(points
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(index, (p, &label))| SegmentRow {
            index,
            r: p.r,
            t: p.t,
            label,
        })
        .collect())
}
