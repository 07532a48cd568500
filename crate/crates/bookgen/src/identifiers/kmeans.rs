//! Recursive (hierarchical) k-means for semantic structured numbers.
//!
//! Every item receives the digit path of its root-to-leaf cluster chain:
//! the input is clustered into at most `k` groups, each group whose size
//! exceeds `leaf_threshold` is re-clustered, and each level contributes
//! one digit. The digit assignment is fully deterministic for a fixed
//! seed; downstream oracles depend on the exact policy, which is:
//!
//! - Lloyd's algorithm with k-means++ seeding from `ChaCha8Rng::seed_from_u64`:
//!   first centroid uniform (`gen_range(0..n)`), then D^2 sampling via
//!   `gen_range(0.0..total)` over the running cumulative sum.
//! - `N_INIT` restarts seeded with `restart_seed(seed, r)`; the run with
//!   the lowest final inertia wins, earliest run on ties.
//! - Point assignment ties break toward the lowest cluster index.
//! - Empty clusters are repaired by stealing the point farthest from its
//!   centroid out of the largest cluster.
//! - Convergence: assignments stable, or relative inertia change below
//!   1e-6, or 100 iterations.
//! - A sub-cluster recursion reseeds with `child_seed(seed, cluster_index)`.
//! - A group whose vectors are all identical cannot be split: it becomes
//!   a leaf and its members are disambiguated by their within-group index
//!   written in base `k` at a fixed width.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERS: usize = 100;
pub const INERTIA_TOL: f64 = 1e-6;
pub const N_INIT: usize = 10;

/// Digit path assigned by the recursive clustering, rendered as a
/// zero-padded concatenated decimal string. `digit_width` is the number
/// of decimal digits of `k - 1`, so the rendering is unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemanticNumber {
    pub digits: Vec<usize>,
    pub digit_width: usize,
}

impl SemanticNumber {
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.digits.len() * self.digit_width);
        for &d in &self.digits {
            out.push_str(&format!("{d:0width$}", width = self.digit_width));
        }
        out
    }
}

pub fn digit_width_for(k: usize) -> usize {
    (k - 1).max(1).to_string().len()
}

pub fn child_seed(seed: u64, cluster: usize) -> u64 {
    seed.wrapping_mul(6364136223846793005)
        .wrapping_add(cluster as u64 + 1)
}

pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    child_seed(seed ^ 0x9e3779b97f4a7c15, restart)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn all_identical(items: &[Vec<f64>], indices: &[usize]) -> bool {
    let first = &items[indices[0]];
    indices[1..].iter().all(|&i| items[i] == *first)
}

/// One level of clustering: the best of `N_INIT` seeded Lloyd runs by
/// final inertia. Returns the cluster index per item.
fn lloyd(items: &[Vec<f64>], indices: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..N_INIT {
        let (assignment, inertia) = lloyd_once(items, indices, k, restart_seed(seed, r));
        if best.as_ref().is_none_or(|(_, bi)| inertia < *bi) {
            best = Some((assignment, inertia));
        }
    }
    best.expect("at least one restart").0
}

/// A single Lloyd run; returns the assignment and its final inertia.
fn lloyd_once(items: &[Vec<f64>], indices: &[usize], k: usize, seed: u64) -> (Vec<usize>, f64) {
    let n = indices.len();
    let dim = items[indices[0]].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(items[indices[rng.gen_range(0..n)]].clone());
    while centroids.len() < k {
        let weights: Vec<f64> = indices
            .iter()
            .map(|&i| {
                centroids
                    .iter()
                    .map(|c| sq_dist(&items[i], c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.gen_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (j, w) in weights.iter().enumerate() {
                acc += w;
                if acc > r {
                    chosen = j;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(items[indices[pick]].clone());
    }

    let mut assignment = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        // assign, ties to the lowest cluster index
        let mut changed = false;
        for (j, &i) in indices.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = sq_dist(&items[i], &centroids[0]);
            for (c, centroid) in centroids.iter().enumerate().skip(1) {
                let d = sq_dist(&items[i], centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[j] != best {
                assignment[j] = best;
                changed = true;
            }
        }

        // repair empty clusters by stealing the farthest point from the
        // largest cluster
        loop {
            let mut sizes = vec![0usize; k];
            for &a in &assignment {
                sizes[a] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let largest = sizes
                .iter()
                .enumerate()
                .max_by_key(|&(_, s)| *s)
                .map(|(c, _)| c)
                .unwrap();
            let victim = (0..n)
                .filter(|&j| assignment[j] == largest)
                .max_by(|&a, &b| {
                    let da = sq_dist(&items[indices[a]], &centroids[largest]);
                    let db = sq_dist(&items[indices[b]], &centroids[largest]);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assignment[victim] = empty;
            changed = true;
        }

        // recompute centroids
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (j, &i) in indices.iter().enumerate() {
            let c = assignment[j];
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(&items[i]) {
                *s += x;
            }
        }
        for (c, sum) in sums.into_iter().enumerate() {
            if counts[c] > 0 {
                centroids[c] = sum.into_iter().map(|s| s / counts[c] as f64).collect();
            }
        }

        let inertia: f64 = indices
            .iter()
            .enumerate()
            .map(|(j, &i)| sq_dist(&items[i], &centroids[assignment[j]]))
            .sum();
        if !changed {
            prev_inertia = inertia;
            break;
        }
        if prev_inertia.is_finite() {
            let denom = prev_inertia.max(1e-12);
            if ((prev_inertia - inertia).abs() / denom) < INERTIA_TOL {
                prev_inertia = inertia;
                break;
            }
        }
        prev_inertia = inertia;
    }
    (assignment, prev_inertia)
}

fn recurse(
    items: &[Vec<f64>],
    indices: &[usize],
    k: usize,
    leaf_threshold: usize,
    seed: u64,
    paths: &mut [Vec<usize>],
) {
    let n = indices.len();
    if n == 1 {
        paths[indices[0]].push(0);
        return;
    }
    if all_identical(items, indices) {
        // unsplittable: leaf with fixed-width base-k index digits
        let mut width = 1;
        let mut cap = k;
        while cap < n {
            width += 1;
            cap *= k;
        }
        for (pos, &i) in indices.iter().enumerate() {
            let mut digits = vec![0usize; width];
            let mut rem = pos;
            for d in (0..width).rev() {
                digits[d] = rem % k;
                rem /= k;
            }
            paths[i].extend(digits);
        }
        return;
    }

    let k_eff = k.min(n);
    let assignment = lloyd(items, indices, k_eff, seed);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k_eff];
    for (j, &i) in indices.iter().enumerate() {
        groups[assignment[j]].push(i);
    }
    for (c, group) in groups.into_iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        for &i in &group {
            paths[i].push(c);
        }
        if group.len() > leaf_threshold {
            recurse(items, &group, k, leaf_threshold, child_seed(seed, c), paths);
        }
    }
}

/// Cluster `items` recursively and return one [`SemanticNumber`] per
/// item, index-aligned with the input.
pub fn hierarchical_kmeans(
    items: &[Vec<f64>],
    k: usize,
    leaf_threshold: usize,
    seed: u64,
) -> Result<Vec<SemanticNumber>> {
    if items.is_empty() {
        return Err(Error::BadArgument("hierarchical_kmeans: no items".into()));
    }
    if k < 2 {
        return Err(Error::BadArgument(format!(
            "hierarchical_kmeans: k must be at least 2, got {k}"
        )));
    }
    if leaf_threshold < 1 {
        return Err(Error::BadArgument(
            "hierarchical_kmeans: leaf_threshold must be at least 1".into(),
        ));
    }
    let indices: Vec<usize> = (0..items.len()).collect();
    let mut paths = vec![Vec::new(); items.len()];
    recurse(items, &indices, k, leaf_threshold, seed, &mut paths);
    let width = digit_width_for(k);
    Ok(paths
        .into_iter()
        .map(|digits| SemanticNumber {
            digits,
            digit_width: width,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points_1d(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn single_item_gets_digit_zero() {
        let numbers = hierarchical_kmeans(&points_1d(&[4.2]), 10, 100, 1).unwrap();
        assert_eq!(numbers.len(), 1);
        assert_eq!(numbers[0].digits, vec![0]);
        assert_eq!(numbers[0].render(), "0");
    }

    #[test]
    fn below_threshold_means_single_digit() {
        let xs: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let numbers = hierarchical_kmeans(&points_1d(&xs), 10, 100, 3).unwrap();
        for n in &numbers {
            assert_eq!(n.digits.len(), 1);
        }
    }

    #[test]
    fn rendering_pads_per_digit_width() {
        let n = SemanticNumber {
            digits: vec![0, 7, 12],
            digit_width: 2,
        };
        assert_eq!(n.render(), "000712");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 1.37).sin() * 5.0).collect();
        let a = hierarchical_kmeans(&points_1d(&xs), 4, 6, 99).unwrap();
        let b = hierarchical_kmeans(&points_1d(&xs), 4, 6, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fanout_and_leaf_size_invariants() {
        // group paths by prefix and check every node has <= k children and
        // every leaf group is within the threshold (vectors here are
        // distinct, so no unsplittable groups arise)
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 0.83).collect();
        let k = 3;
        let threshold = 5;
        let numbers = hierarchical_kmeans(&points_1d(&xs), k, threshold, 17).unwrap();
        use std::collections::HashMap;
        let mut children: HashMap<Vec<usize>, std::collections::HashSet<usize>> = HashMap::new();
        let mut leaf_sizes: HashMap<Vec<usize>, usize> = HashMap::new();
        for n in &numbers {
            for depth in 0..n.digits.len() {
                let prefix = n.digits[..depth].to_vec();
                children.entry(prefix).or_default().insert(n.digits[depth]);
            }
            *leaf_sizes.entry(n.digits.clone()).or_default() += 1;
        }
        for (prefix, kids) in &children {
            assert!(kids.len() <= k, "node {prefix:?} has {} children", kids.len());
            for &d in kids {
                assert!(d < k);
            }
        }
        for (path, size) in &leaf_sizes {
            // a full path that is also a prefix of longer paths is not a leaf
            let is_leaf = !children.contains_key(path);
            if is_leaf {
                assert!(size <= &threshold, "leaf {path:?} has {size} members");
            }
        }
    }

    #[test]
    fn identical_vectors_are_disambiguated() {
        let items = vec![vec![1.0, 2.0]; 5];
        let numbers = hierarchical_kmeans(&items, 10, 2, 7).unwrap();
        let rendered: std::collections::HashSet<String> =
            numbers.iter().map(|n| n.render()).collect();
        assert_eq!(rendered.len(), 5, "numbers must be unique: {numbers:?}");
    }

    #[test]
    fn identical_vectors_wide_group_uses_base_k_digits() {
        let items = vec![vec![0.5]; 12];
        let numbers = hierarchical_kmeans(&items, 3, 2, 7).unwrap();
        // 12 members in base 3 need 3 digits (3^2 = 9 < 12 <= 27)
        for n in &numbers {
            assert_eq!(n.digits.len(), 3);
            assert!(n.digits.iter().all(|&d| d < 3));
        }
        let distinct: std::collections::HashSet<_> = numbers.iter().collect();
        assert_eq!(distinct.len(), 12);
    }

    // ------------------------------------------------------------------
    // Oracle: an independent Lloyd's-iteration implementation run to
    // convergence with the same seed policy (k-means++, N_INIT restarts,
    // best inertia wins), applied recursively. The 12-point line fixture
    // must produce top-level clusters {1..6} and {7..12} and recursion
    // depth 2.
    // ------------------------------------------------------------------

    fn oracle_lloyd(points: &[Vec<f64>], idx: &[usize], k: usize, seed: u64) -> Vec<usize> {
        let mut best: Option<(Vec<usize>, f64)> = None;
        for r in 0..N_INIT {
            let assign = oracle_lloyd_once(points, idx, k, restart_seed(seed, r));
            // final inertia under the converged assignment's means
            let dim = points[idx[0]].len();
            let mut sums = vec![vec![0.0f64; dim]; k];
            let mut counts = vec![0usize; k];
            for (j, &i) in idx.iter().enumerate() {
                counts[assign[j]] += 1;
                for (s, x) in sums[assign[j]].iter_mut().zip(&points[i]) {
                    *s += x;
                }
            }
            let cents: Vec<Vec<f64>> = sums
                .iter()
                .zip(&counts)
                .map(|(s, &c)| s.iter().map(|v| v / c.max(1) as f64).collect())
                .collect();
            let inertia: f64 = idx
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    points[i]
                        .iter()
                        .zip(&cents[assign[j]])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                })
                .sum();
            if best.as_ref().is_none_or(|(_, bi)| inertia < *bi) {
                best = Some((assign, inertia));
            }
        }
        best.unwrap().0
    }

    fn oracle_lloyd_once(points: &[Vec<f64>], idx: &[usize], k: usize, seed: u64) -> Vec<usize> {
        use rand::{Rng, SeedableRng};
        let n = idx.len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d2 = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        };
        let mut cents: Vec<Vec<f64>> = vec![points[idx[rng.gen_range(0..n)]].clone()];
        while cents.len() < k {
            let w: Vec<f64> = idx
                .iter()
                .map(|&i| {
                    cents
                        .iter()
                        .map(|c| d2(&points[i], c))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let total: f64 = w.iter().sum();
            let pick = if total > 0.0 {
                let r = rng.gen_range(0.0..total);
                let mut acc = 0.0;
                let mut chosen = n - 1;
                for (j, wj) in w.iter().enumerate() {
                    acc += wj;
                    if acc > r {
                        chosen = j;
                        break;
                    }
                }
                chosen
            } else {
                rng.gen_range(0..n)
            };
            cents.push(points[idx[pick]].clone());
        }
        let dim = points[idx[0]].len();
        let mut assign = vec![0usize; n];
        for _ in 0..MAX_ITERS {
            let mut changed = false;
            for (j, &i) in idx.iter().enumerate() {
                let mut best = 0;
                let mut bd = d2(&points[i], &cents[0]);
                for c in 1..k {
                    let dd = d2(&points[i], &cents[c]);
                    if dd < bd {
                        bd = dd;
                        best = c;
                    }
                }
                if assign[j] != best {
                    assign[j] = best;
                    changed = true;
                }
            }
            loop {
                let mut sizes = vec![0usize; k];
                for &a in &assign {
                    sizes[a] += 1;
                }
                let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                    break;
                };
                let largest = sizes.iter().enumerate().max_by_key(|&(_, s)| *s).unwrap().0;
                let victim = (0..n)
                    .filter(|&j| assign[j] == largest)
                    .max_by(|&a, &b| {
                        d2(&points[idx[a]], &cents[largest])
                            .partial_cmp(&d2(&points[idx[b]], &cents[largest]))
                            .unwrap()
                    })
                    .unwrap();
                assign[victim] = empty;
                changed = true;
            }
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (j, &i) in idx.iter().enumerate() {
                counts[assign[j]] += 1;
                for (s, x) in sums[assign[j]].iter_mut().zip(&points[i]) {
                    *s += x;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    cents[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
            if !changed {
                break;
            }
        }
        assign
    }

    fn oracle_paths(
        points: &[Vec<f64>],
        idx: &[usize],
        k: usize,
        threshold: usize,
        seed: u64,
        paths: &mut [Vec<usize>],
    ) {
        if idx.len() == 1 {
            paths[idx[0]].push(0);
            return;
        }
        let k_eff = k.min(idx.len());
        let assign = oracle_lloyd(points, idx, k_eff, seed);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k_eff];
        for (j, &i) in idx.iter().enumerate() {
            groups[assign[j]].push(i);
        }
        for (c, g) in groups.into_iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            for &i in &g {
                paths[i].push(c);
            }
            if g.len() > threshold {
                oracle_paths(points, &g, k, threshold, child_seed(seed, c), paths);
            }
        }
    }

    #[test]
    fn twelve_point_line_matches_lloyd_oracle() {
        let points = points_1d(&[
            1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0,
        ]);
        let seed = 5;
        let numbers = hierarchical_kmeans(&points, 2, 3, seed).unwrap();

        // top-level split must be {1..6} vs {7..12}
        let first_digit: Vec<usize> = numbers.iter().map(|n| n.digits[0]).collect();
        let left = first_digit[0];
        assert!(first_digit[..6].iter().all(|&d| d == left));
        assert!(first_digit[6..].iter().all(|&d| d != left));

        // recursion depth is exactly 2 everywhere
        for n in &numbers {
            assert_eq!(n.digits.len(), 2, "{numbers:?}");
        }

        // full digit paths agree with the independent oracle
        let idx: Vec<usize> = (0..12).collect();
        let mut expect = vec![Vec::new(); 12];
        oracle_paths(&points, &idx, 2, 3, seed, &mut expect);
        for (n, e) in numbers.iter().zip(&expect) {
            assert_eq!(&n.digits, e);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(hierarchical_kmeans(&[], 10, 100, 1).is_err());
        assert!(hierarchical_kmeans(&points_1d(&[1.0]), 1, 100, 1).is_err());
        assert!(hierarchical_kmeans(&points_1d(&[1.0]), 10, 0, 1).is_err());
    }
}
