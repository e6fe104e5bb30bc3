//! Lloyd's algorithm on scalar samples.
//!
//! Optimal 1-D k-means partitions are contiguous in sorted order, which makes
//! an exact seeding available through dynamic programming over split points.
//! Lloyd iterations then run from that seeding (a fixed point in the exact
//! case) or from k-means++ style random seeds.

use crate::error::{Error, Result};
use crate::math::Rng;

/// How the initial centers are chosen.
pub enum Seeding<'a> {
    /// Exact optimum over contiguous partitions of the sorted samples.
    Optimal,
    /// k-means++ sampling over distinct values.
    PlusPlus(&'a mut Rng),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Strictly increasing.
    pub centers: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after seeding, then after every Lloyd iteration.
    pub objective_trace: Vec<f64>,
}

/// Sum of squared distances from each sample to its nearest center.
pub fn kmeans_objective(samples: &[f64], centers: &[f64]) -> f64 {
    samples
        .iter()
        .map(|&x| centers.iter().map(|&c| (x - c) * (x - c)).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Clusters scalar samples into `k` groups and returns the sorted centers.
///
/// Stops after `max_iter` Lloyd iterations or when no center moves by `tol`
/// or more. An empty cluster is re-seeded at the sample farthest from its
/// assigned center.
pub fn fit_centers_kmeans_1d(
    samples: &[f64],
    k: usize,
    max_iter: usize,
    tol: f64,
    seeding: Seeding<'_>,
) -> Result<KMeansFit> {
    if samples.is_empty() {
        return Err(Error::arg("k-means needs at least one sample"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg("k-means samples must be finite"));
    }
    if k == 0 {
        return Err(Error::arg("k-means needs K >= 1"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if k > distinct.len() {
        return Err(Error::arg(format!(
            "K = {k} exceeds the {} distinct sample values",
            distinct.len()
        )));
    }

    let mut centers = match seeding {
        Seeding::Optimal => optimal_contiguous_centers(&sorted, k),
        Seeding::PlusPlus(rng) => plus_plus_seeds(&distinct, k, rng),
    };
    centers.sort_by(f64::total_cmp);

    let mut objective = kmeans_objective(&sorted, &centers);
    let mut trace = vec![objective];
    let mut assignment = vec![0usize; sorted.len()];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        assign(&sorted, &centers, &mut assignment);
        reseed_empty(&sorted, &centers, &mut assignment, k);

        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&x, &a) in sorted.iter().zip(&assignment) {
            sums[a] += x;
            counts[a] += 1;
        }
        let updated: Vec<f64> = sums.iter().zip(&counts).map(|(&s, &n)| s / n as f64).collect();
        let movement = updated
            .iter()
            .zip(&centers)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        centers = updated;

        let next = kmeans_objective(&sorted, &centers);
        let slack = 1e-12 * objective.abs().max(1.0);
        if next > objective + slack {
            return Err(Error::Invariant(format!(
                "k-means objective increased from {objective} to {next}"
            )));
        }
        objective = next;
        trace.push(objective);
        if movement < tol {
            break;
        }
    }

    centers.sort_by(f64::total_cmp);
    if centers.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Invariant("k-means produced coincident centers".into()));
    }
    Ok(KMeansFit {
        centers,
        objective,
        iterations,
        objective_trace: trace,
    })
}

/// Nearest center, ties to the lower index.
fn assign(samples: &[f64], centers: &[f64], out: &mut [usize]) {
    for (x, slot) in samples.iter().zip(out.iter_mut()) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centers.iter().enumerate() {
            let d = (x - c).abs();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        *slot = best;
    }
}

fn reseed_empty(samples: &[f64], centers: &[f64], assignment: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        // Farthest sample whose cluster can spare it.
        let donor = (0..samples.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&i, &j| {
                let di = (samples[i] - centers[assignment[i]]).abs();
                let dj = (samples[j] - centers[assignment[j]]).abs();
                di.total_cmp(&dj).then(j.cmp(&i))
            });
        match donor {
            Some(i) => assignment[i] = empty,
            None => return,
        }
    }
}

fn plus_plus_seeds(distinct: &[f64], k: usize, rng: &mut Rng) -> Vec<f64> {
    let mut chosen = vec![distinct[rng.index(distinct.len())]];
    while chosen.len() < k {
        let weights: Vec<f64> = distinct
            .iter()
            .map(|&x| chosen.iter().map(|&c| (x - c) * (x - c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut target = rng.uniform(0.0, total);
        let mut pick = None;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 && target < w {
                pick = Some(i);
                break;
            }
            target -= w;
        }
        let i = pick.unwrap_or_else(|| weights.iter().rposition(|&w| w > 0.0).unwrap());
        chosen.push(distinct[i]);
    }
    chosen
}

/// Segment cost from prefix sums over values shifted by their mean.
struct SegmentCost {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl SegmentCost {
    fn new(sorted: &[f64]) -> Self {
        let shift = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let mut sum = vec![0.0];
        let mut sum_sq = vec![0.0];
        for &x in sorted {
            let y = x - shift;
            sum.push(sum.last().unwrap() + y);
            sum_sq.push(sum_sq.last().unwrap() + y * y);
        }
        SegmentCost { sum, sum_sq }
    }

    /// Within-cluster squared error of `sorted[i..j]`.
    fn cost(&self, i: usize, j: usize) -> f64 {
        let n = (j - i) as f64;
        let s = self.sum[j] - self.sum[i];
        (self.sum_sq[j] - self.sum_sq[i] - s * s / n).max(0.0)
    }
}

/// Means of the optimal contiguous `k`-partition of sorted samples.
///
/// Divide-and-conquer DP: the optimal last split point is monotone in the
/// prefix length, giving O(k n log n).
fn optimal_contiguous_centers(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    let seg = SegmentCost::new(sorted);
    // best[m][j]: optimal cost of the first j samples in m+1 clusters.
    let mut best = vec![vec![f64::INFINITY; n + 1]; k];
    let mut split = vec![vec![0usize; n + 1]; k];
    for j in 1..=n {
        best[0][j] = seg.cost(0, j);
    }
    for m in 1..k {
        let (prev_rows, cur_rows) = best.split_at_mut(m);
        let prev = &prev_rows[m - 1];
        let cur = &mut cur_rows[0];
        fill_layer(&seg, prev, cur, &mut split[m], m + 1, n, m, n);
    }

    let mut centers = vec![0.0; k];
    let mut end = n;
    for m in (0..k).rev() {
        let start = if m == 0 { 0 } else { split[m][end] };
        let slice = &sorted[start..end];
        centers[m] = slice.iter().sum::<f64>() / slice.len() as f64;
        end = start;
    }
    centers
}

/// Fills `cur[j]` for `j in lo..=hi`, searching split points in `opt_lo..=opt_hi`.
#[allow(clippy::too_many_arguments)]
fn fill_layer(
    seg: &SegmentCost,
    prev: &[f64],
    cur: &mut [f64],
    split: &mut [usize],
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = f64::INFINITY;
    let mut best_s = opt_lo;
    // Last cluster is sorted[s..mid], so s <= mid - 1.
    for s in opt_lo..=opt_hi.min(mid - 1) {
        let v = prev[s] + seg.cost(s, mid);
        if v < best {
            best = v;
            best_s = s;
        }
    }
    cur[mid] = best;
    split[mid] = best_s;
    if mid > lo {
        fill_layer(seg, prev, cur, split, lo, mid - 1, opt_lo, best_s);
    }
    fill_layer(seg, prev, cur, split, mid + 1, hi, best_s, opt_hi);
}
