//! Lloyd's algorithm with k-means++ seeding.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::restart_rng;

const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    /// One center per row.
    pub centers: DMatrix<f64>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, k: usize) -> f64 {
    (0..points.ncols()).map(|c| (points[(i, c)] - centers[(k, c)]).powi(2)).sum()
}

/// Picks `k` rows of `points` by D² sampling.
pub fn kmeanspp_seeds(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centers = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centers.set_row(0, &points.row(first));
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &b) in best.iter().enumerate() {
                acc += b;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points, i, &centers, c));
        }
    }
    centers
}

/// Nearest center for each point, ties to the lowest index.
pub fn assign(points: &DMatrix<f64>, centers: &DMatrix<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = (0..points.nrows())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for k in 0..centers.nrows() {
                let d = sq_dist(points, i, centers, k);
                if d < best.1 {
                    best = (k, d);
                }
            }
            inertia += best.1;
            best.0
        })
        .collect();
    (labels, inertia)
}

fn lloyd(points: &DMatrix<f64>, mut centers: DMatrix<f64>) -> KMeansFit {
    let (n, d) = points.shape();
    let k = centers.nrows();
    let (mut labels, mut inertia) = assign(points, &centers);
    for _ in 0..MAX_ITER {
        let mut sums = DMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for c in 0..d {
                sums[(labels[i], c)] += points[(i, c)];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers.set_row(j, &(sums.row(j) / counts[j] as f64));
            } else {
                // reseed at the point farthest from its own center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points, a, &centers, labels[a])
                            .total_cmp(&sq_dist(points, b, &centers, labels[b]))
                            .then(b.cmp(&a))
                    })
                    .expect("nonempty");
                centers.set_row(j, &points.row(far));
                labels[far] = j;
            }
        }
        let (next, next_inertia) = assign(points, &centers);
        let stable = next == labels;
        labels = next;
        inertia = next_inertia;
        if stable {
            break;
        }
    }
    KMeansFit { labels, centers, inertia }
}

/// Best of `restarts` k-means++ initialised Lloyd runs by inertia.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    if k == 0 || k > points.nrows() {
        return Err(Error::InvalidInput(format!("cannot form {k} clusters from {} points", points.nrows())));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) {
        let mut rng = restart_rng(seed, r);
        let fit = lloyd(points, kmeanspp_seeds(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// K-means with the default ten restarts.
pub fn kmeans_baseline(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    kmeans(points, k, seed, super::DEFAULT_RESTARTS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_mean() {
        let p = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 3.0, 2.0, 1.0]);
        let fit = kmeans_baseline(&p, 1, 0).unwrap();
        assert!((fit.centers[(0, 0)] - 0.75).abs() < 1e-15);
        assert!((fit.centers[(0, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separated_point_masses() {
        let mut rows = vec![];
        for i in 0..20 {
            rows.extend_from_slice(if i % 2 == 0 { &[0.0, 0.0] } else { &[10.0, 10.0] });
        }
        let p = DMatrix::from_row_slice(20, 2, &rows);
        let fit = kmeans_baseline(&p, 2, 3).unwrap();
        assert_eq!(fit.inertia, 0.0);
        for i in 0..20 {
            assert_eq!(fit.labels[i], fit.labels[i % 2]);
        }
        assert_ne!(fit.labels[0], fit.labels[1]);
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let p = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 5.0]);
        let centers = DMatrix::from_row_slice(2, 1, &[0.5, 100.0]);
        let fit = lloyd(&p, centers);
        assert_eq!(fit.labels, vec![0, 0, 1]);
        assert!((fit.centers[(1, 0)] - 5.0).abs() < 1e-15);
    }
}
