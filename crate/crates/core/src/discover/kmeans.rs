//! Seeded k-means with k-means++ initialization and Lloyd iterations.

use rand::Rng;

use crate::data::synthetic::stream;
use crate::error::{Error, Result};
use crate::numcore::matrix::euclidean;
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = euclidean(point, c);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    (best, best_d)
}

fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| nearest(p, &centroids).1.powi(2))
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random_range(0.0..total);
            let mut running = 0.0;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                running += w;
                if running > u {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
    }
    centroids
}

/// Clusters `points` into `k` groups. Same inputs and seed give the
/// same result; assignment ties go to the lowest cluster index and
/// empty clusters keep their previous centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::Input("no points to cluster".into()));
    }
    if k < 1 {
        return Err(Error::Config("cluster count must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::Config(format!(
            "cluster count {k} exceeds {} points",
            points.len()
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("points have mixed dimensions".into()));
    }

    let mut rng = stream(seed, 20);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        assignments = par::map(points, |p| nearest(p, &centroids).0);

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, a) in points.iter().zip(&assignments) {
            counts[*a] += 1;
            for (s, v) in sums[*a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut movement = 0.0f64;
        for (k_i, (sum, count)) in sums.into_iter().zip(&counts).enumerate() {
            if *count == 0 {
                continue;
            }
            let mean: Vec<f64> = sum.into_iter().map(|s| s / *count as f64).collect();
            movement = movement.max(euclidean(&centroids[k_i], &mean));
            centroids[k_i] = mean;
        }
        if movement <= tol {
            break;
        }
    }
    Ok(KMeansResult {
        centroids,
        assignments,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_centroid_is_the_mean() {
        let points = vec![vec![1.0, 0.0], vec![3.0, 2.0], vec![2.0, 4.0]];
        let r = kmeans(&points, 1, 0, 50, 1e-6).unwrap();
        assert_eq!(r.centroids, vec![vec![2.0, 2.0]]);
        assert_eq!(r.assignments, vec![0, 0, 0]);
    }

    #[test]
    fn two_separated_blobs_are_recovered() {
        let mut points = Vec::new();
        for i in 0..5 {
            points.push(vec![0.0 + 0.01 * i as f64, 0.0]);
        }
        for i in 0..5 {
            points.push(vec![10.0 + 0.01 * i as f64, 10.0]);
        }
        let r = kmeans(&points, 2, 3, 50, 1e-6).unwrap();
        let first = r.assignments[0];
        assert!(r.assignments[..5].iter().all(|a| *a == first));
        assert!(r.assignments[5..].iter().all(|a| *a != first));
    }

    #[test]
    fn same_seed_twice_gives_identical_results() {
        let points: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i * 7 % 13) as f64, (i * 3 % 5) as f64])
            .collect();
        let a = kmeans(&points, 4, 9, 50, 1e-6).unwrap();
        let b = kmeans(&points, 4, 9, 50, 1e-6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            kmeans(&[], 1, 0, 50, 1e-6),
            Err(Error::Input(_))
        ));
        let points = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            kmeans(&points, 3, 0, 50, 1e-6),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            kmeans(&points, 0, 0, 50, 1e-6),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identical_points_are_handled() {
        let points = vec![vec![1.0, 1.0]; 6];
        let r = kmeans(&points, 2, 1, 50, 1e-6).unwrap();
        assert_eq!(r.assignments, vec![0; 6]);
    }
}
