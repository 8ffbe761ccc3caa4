//! Deterministic 1-D Lloyd clustering shared by the k-means codebook
//! initializer and the k-means baseline quantizer.

const LLOYD_ITERS: usize = 25;

/// Lloyd's algorithm on a scalar sample with `k` centroids.
///
/// Centroids start on the uniform grid spanning [min, max]; assignment ties
/// go to the smaller centroid index; an emptied centroid is relocated to the
/// sample point farthest from its current centroid. Fully deterministic.
/// Returns centroids sorted ascending.
pub fn lloyd_1d(values: &[f64], k: usize) -> Vec<f64> {
    assert!(k >= 1, "need at least one centroid");
    assert!(!values.is_empty(), "need at least one sample");
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return vec![min; k];
    }
    let mut centroids = uniform_grid(min, max, k);
    let mut assign = vec![0usize; values.len()];
    for _ in 0..LLOYD_ITERS {
        let mut moved = false;
        for (a, &v) in assign.iter_mut().zip(values) {
            let idx = nearest_index(&centroids, v);
            if *a != idx {
                *a = idx;
                moved = true;
            }
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &v) in assign.iter().zip(values) {
            sums[a] += v;
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c] / counts[c] as f64;
            } else {
                // relocate to the worst-represented sample
                let (mut best_v, mut best_d) = (values[0], -1.0);
                for (&a, &v) in assign.iter().zip(values) {
                    let d = (v - centroids[a]).abs();
                    if d > best_d {
                        best_d = d;
                        best_v = v;
                    }
                }
                centroids[c] = best_v;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());
    centroids
}

/// `k` equally spaced values spanning [lo, hi] inclusive.
pub fn uniform_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (k - 1) as f64;
    (0..k).map(|i| lo + step * i as f64).collect()
}

/// Index of the level nearest to `v`; ties break toward the smaller index.
pub fn nearest_index(levels: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = (v - levels[0]).abs();
    for (i, &l) in levels.iter().enumerate().skip(1) {
        let d = (v - l).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

pub fn within_cluster_sse(values: &[f64], centroids: &[f64]) -> f64 {
    values
        .iter()
        .map(|&v| {
            let d = v - centroids[nearest_index(centroids, v)];
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Optimal 1-D k-clustering by dynamic programming over sorted values.
    /// Optimal clusters of a scalar sample are contiguous in sorted order,
    /// so an O(k·n²) DP over split points is exact.
    fn optimal_sse_dp(values: &[f64], k: usize) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let mut prefix = vec![0.0; n + 1];
        let mut prefix_sq = vec![0.0; n + 1];
        for (i, &v) in sorted.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
            prefix_sq[i + 1] = prefix_sq[i] + v * v;
        }
        // SSE of the contiguous segment [a, b)
        let seg = |a: usize, b: usize| -> f64 {
            let cnt = (b - a) as f64;
            let s = prefix[b] - prefix[a];
            (prefix_sq[b] - prefix_sq[a]) - s * s / cnt
        };
        let inf = f64::INFINITY;
        let mut dp = vec![vec![inf; n + 1]; k + 1];
        dp[0][0] = 0.0;
        for c in 1..=k {
            for b in 1..=n {
                for a in 0..b {
                    if dp[c - 1][a] < inf {
                        let cand = dp[c - 1][a] + seg(a, b);
                        if cand < dp[c][b] {
                            dp[c][b] = cand;
                        }
                    }
                }
            }
        }
        (1..=k).map(|c| dp[c][n]).fold(inf, f64::min)
    }

    #[test]
    fn separates_two_exact_clusters() {
        let got = lloyd_1d(&[0.0, 3.0, 3.0, 3.0], 2);
        assert_eq!(got, vec![0.0, 3.0]);
    }

    #[test]
    fn constant_input_collapses_all_centroids() {
        assert_eq!(lloyd_1d(&[5.0, 5.0], 4), vec![5.0; 4]);
    }

    #[test]
    fn near_optimal_against_dp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut gaps = Vec::new();
        for _ in 0..100 {
            let row: Vec<f64> = (0..48).map(|_| rng.random_range(-2.0..2.0)).collect();
            let centroids = lloyd_1d(&row, 4);
            let sse = within_cluster_sse(&row, &centroids);
            let opt = optimal_sse_dp(&row, 4);
            assert!(sse >= opt - 1e-9, "lloyd beat the DP optimum: {sse} < {opt}");
            gaps.push(if opt > 0.0 { sse / opt - 1.0 } else { 0.0 });
        }
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = gaps[gaps.len() / 2];
        assert!(median <= 0.05, "median SSE gap {median} above 5%");
    }

    #[test]
    fn nearest_index_breaks_ties_low() {
        let levels = [0.0, 2.0];
        assert_eq!(nearest_index(&levels, 1.0), 0);
        assert_eq!(nearest_index(&levels, 1.1), 1);
    }
}
