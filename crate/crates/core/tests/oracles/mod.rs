//! Independent reference computations for tests. Nothing here calls into the
//! code paths it is used to check.
#![allow(dead_code)]

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Quadrature over `[lo, hi]` split around the bulk of a normal density.
fn normal_quad<F: Fn(f64) -> f64>(f: &F, mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let mut cuts = vec![lo];
    for k in -8..=8 {
        let x = mu + k as f64 * sigma;
        if x > lo && x < hi {
            cuts.push(x);
        }
    }
    cuts.push(hi);
    cuts.windows(2).map(|w| simpson(f, w[0], w[1], 1e-16)).sum()
}

/// Unnormalized density scaled to peak at 1 on [0, 1].
fn scaled_density(mu: f64, sigma: f64) -> impl Fn(f64) -> f64 {
    let nearest = mu.clamp(0.0, 1.0);
    let d0 = (nearest - mu) * (nearest - mu);
    move |x: f64| (-((x - mu) * (x - mu) - d0) / (2.0 * sigma * sigma)).exp()
}

/// Mean and standard deviation of N(mu, sigma²) truncated to [0, 1], by quadrature.
pub fn truncnorm_moments_quad(mu: f64, sigma: f64) -> (f64, f64) {
    let density = scaled_density(mu, sigma);
    let z = normal_quad(&density, mu, sigma, 0.0, 1.0);
    let mean = normal_quad(&|x| x * density(x), mu, sigma, 0.0, 1.0) / z;
    let var = normal_quad(
        &|x| (x - mean) * (x - mean) * density(x),
        mu,
        sigma,
        0.0,
        1.0,
    ) / z;
    (mean, var.sqrt())
}

/// Bin masses of the truncated density over `n` equal bins, by quadrature.
pub fn truncnorm_bins_quad(mu: f64, sigma: f64, n: usize) -> Vec<f64> {
    let density = scaled_density(mu, sigma);
    let masses: Vec<f64> = (0..n)
        .map(|j| {
            normal_quad(
                &density,
                mu,
                sigma,
                j as f64 / n as f64,
                (j + 1) as f64 / n as f64,
            )
        })
        .collect();
    let total: f64 = masses.iter().sum();
    masses.into_iter().map(|m| m / total).collect()
}

/// One brute-force merge: the member sets joined and the Ward height
/// `sqrt(2 ΔESS)`.
#[derive(Debug, Clone)]
pub struct BruteMerge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub height: f64,
}

#[allow(clippy::needless_range_loop)]
fn ess(points: &[Vec<f64>], members: &[usize]) -> f64 {
    let dim = points[0].len();
    let n = members.len() as f64;
    let mut total = 0.0;
    for axis in 0..dim {
        let coord = |i: usize| points[i][axis];
        let mean = members.iter().map(|&i| coord(i)).sum::<f64>() / n;
        total += members
            .iter()
            .map(|&i| (coord(i) - mean).powi(2))
            .sum::<f64>();
    }
    total
}

/// Greedy agglomeration by the smallest increase of the within-cluster sum of
/// squares, computed from the explicit vectors.
pub fn brute_force_ward(points: &[Vec<f64>]) -> Vec<BruteMerge> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let mut joined = clusters[i].clone();
                joined.extend(&clusters[j]);
                let increase =
                    ess(points, &joined) - ess(points, &clusters[i]) - ess(points, &clusters[j]);
                if increase < best.0 {
                    best = (increase, i, j);
                }
            }
        }
        let (increase, i, j) = best;
        let right = clusters.remove(j);
        let left = clusters[i].clone();
        clusters[i].extend(&right);
        merges.push(BruteMerge {
            left,
            right,
            height: (2.0 * increase.max(0.0)).sqrt(),
        });
    }
    merges
}

/// Direct pairwise Euclidean distance.
pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Sorted member sets of each node of a merge list given as (a, b) node ids.
pub fn node_members(leaves: usize, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut nodes: Vec<Vec<usize>> = (0..leaves).map(|i| vec![i]).collect();
    for &(a, b) in pairs {
        let mut joined = nodes[a].clone();
        joined.extend(&nodes[b]);
        joined.sort_unstable();
        nodes.push(joined);
    }
    nodes
}
