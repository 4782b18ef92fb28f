//! Slow, obviously-correct reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voltisland::clustering::Linkage;
use voltisland::matrix::Matrix;
use voltisland::systolic_sim::{voltage_delay_factor, DelayModel};

/// True when two labelings induce the same partition of the indices.
pub fn same_partition<A, B>(a: &[A], b: &[B]) -> bool
where
    A: Copy + Eq + std::hash::Hash,
    B: Copy + Eq + std::hash::Hash,
{
    if a.len() != b.len() {
        return false;
    }
    let mut fwd: HashMap<A, B> = HashMap::new();
    let mut back: HashMap<B, A> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Agglomerative clustering recomputing every linkage from the raw members at every step.
/// Returns the merge distances and the labels after each possible cut, indexed by cluster count.
pub fn brute_force_agglomerate(x: &[f64], linkage: Linkage) -> (Vec<f64>, Vec<Vec<usize>>) {
    let n = x.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut distances = Vec::new();
    let mut cuts = vec![Vec::new(); n + 1];
    let labels_of = |clusters: &Vec<Vec<usize>>| {
        let mut l = vec![0; n];
        for (c, members) in clusters.iter().enumerate() {
            for &m in members {
                l[m] = c;
            }
        }
        l
    };
    cuts[n] = labels_of(&clusters);
    while clusters.len() > 1 {
        // clusters stay sorted by their smallest member, so (a, b) order is slot order
        let mut best = (0, 0, f64::INFINITY);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut pair = Vec::new();
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        pair.push((x[i] - x[j]).abs());
                    }
                }
                let d = match linkage {
                    Linkage::Single => pair.iter().cloned().fold(f64::INFINITY, f64::min),
                    Linkage::Complete => pair.iter().cloned().fold(0.0, f64::max),
                    Linkage::Average => pair.iter().sum::<f64>() / pair.len() as f64,
                };
                if d < best.2 - 1e-12 {
                    best = (a, b, d);
                }
            }
        }
        let (a, b, d) = best;
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort();
        distances.push(d);
        cuts[clusters.len()] = labels_of(&clusters);
    }
    (distances, cuts)
}

/// Exact 1-D k-means by dynamic programming over sorted values. Returns labels and the SSE.
pub fn kmeans_dp(x: &[f64], k: usize) -> (Vec<usize>, f64) {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let s: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let mut p1 = vec![0.0; n + 1];
    let mut p2 = vec![0.0; n + 1];
    for i in 0..n {
        p1[i + 1] = p1[i] + s[i];
        p2[i + 1] = p2[i] + s[i] * s[i];
    }
    // SSE of s[i..j]
    let cost = |i: usize, j: usize| {
        let m = (j - i) as f64;
        let sum = p1[j] - p1[i];
        (p2[j] - p2[i] - sum * sum / m).max(0.0)
    };
    let inf = f64::INFINITY;
    let mut dp = vec![vec![inf; n + 1]; k + 1];
    let mut cut = vec![vec![0usize; n + 1]; k + 1];
    dp[0][0] = 0.0;
    for c in 1..=k {
        for j in c..=n {
            for i in c - 1..j {
                let v = dp[c - 1][i] + cost(i, j);
                if v < dp[c][j] {
                    dp[c][j] = v;
                    cut[c][j] = i;
                }
            }
        }
    }
    let mut labels = vec![0; n];
    let mut j = n;
    for c in (1..=k).rev() {
        let i = cut[c][j];
        for pos in i..j {
            labels[order[pos]] = c - 1;
        }
        j = i;
    }
    (labels, dp[k][n])
}

/// Smallest sum of squares over every assignment of the points to exactly `k` non-empty labels.
pub fn exhaustive_kmeans_sse(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut used = vec![false; k];
        for &l in &labels {
            used[l] = true;
        }
        if used.iter().all(|u| *u) {
            best = best.min(sse(x, &labels));
        }
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

pub fn sse(x: &[f64], labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sum = vec![0.0; k];
    let mut cnt = vec![0.0; k];
    for (&v, &l) in x.iter().zip(labels) {
        sum[l] += v;
        cnt[l] += 1.0;
    }
    x.iter()
        .zip(labels)
        .map(|(&v, &l)| (v - sum[l] / cnt[l]).powi(2))
        .sum()
}

/// Textbook DBSCAN: visit points in index order, grow each new cluster breadth-first from
/// an unvisited core point. Neighbourhoods are found by scanning every point.
pub fn dbscan_reference(x: &[f64], eps: f64, minpts: usize) -> Vec<Option<usize>> {
    let n = x.len();
    let neighbours = |i: usize| -> Vec<usize> { (0..n).filter(|&j| (x[i] - x[j]).abs() <= eps).collect() };
    let core: Vec<bool> = (0..n).map(|i| neighbours(i).len() >= minpts).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if !core[i] || label[i].is_some() {
            continue;
        }
        let c = next;
        next += 1;
        label[i] = Some(c);
        let mut queue = std::collections::VecDeque::from([i]);
        while let Some(p) = queue.pop_front() {
            for q in neighbours(p) {
                if label[q].is_none() {
                    label[q] = Some(c);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    label
}

/// Flat-kernel mean shift run independently from every point with an all-pairs window scan.
pub fn meanshift_reference(x: &[f64], radius: f64) -> Vec<f64> {
    x.iter()
        .map(|&start| {
            let mut y = start;
            for _ in 0..10_000 {
                let (mut sum, mut cnt) = (0.0, 0.0);
                for &v in x {
                    if (v - y).abs() <= radius {
                        sum += v;
                        cnt += 1.0;
                    }
                }
                let next = sum / cnt;
                let shift = (next - y).abs();
                y = next;
                if shift < 1e-9 {
                    break;
                }
            }
            y
        })
        .collect()
}

/// Schoolbook product in 64-bit, truncated to the 32-bit accumulator.
pub fn matmul_oracle(a: &Matrix<i8>, b: &Matrix<i8>) -> Vec<i32> {
    let mut out = Vec::with_capacity(a.rows() * b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc: i64 = 0;
            for k in 0..a.cols() {
                acc += a.get(i, k) as i64 * b.get(k, j) as i64;
            }
            out.push(acc as i32);
        }
    }
    out
}

pub fn random_i8(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<i8> {
    Matrix::from_fn(rows, cols, |_, _| rng.random::<i8>())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Values drawn around a few well-separated centres, shuffled.
pub fn blobs(n: usize, centres: &[f64], spread: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| centres[i % centres.len()] + spread * (r.random::<f64>() - 0.5))
        .collect()
}

/// Lowest voltage at which `base * factor(v) * (1 + kappa * h) <= t_clk`, by bisection on
/// the closed-form arrival time. `None` when even `v_hi` fails.
pub fn min_safe_voltage(base: f64, h: f64, model: &DelayModel, v_hi: f64) -> Option<f64> {
    let ok = |v: f64| base * voltage_delay_factor(v, model).unwrap() * (1.0 + model.kappa * h) <= model.t_clk;
    if !ok(v_hi) {
        return None;
    }
    let (mut lo, mut hi) = (model.v_threshold + 1e-12, v_hi);
    if ok(lo) {
        return Some(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}
