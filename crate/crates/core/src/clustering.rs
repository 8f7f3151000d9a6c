//! Conventional k-means over feature vectors and label projection.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagegrid::{LabelMap, TissueMask, UNLABELED};
use crate::scalar::{from_f64, to_f64, Scalar};

/// Fitted k-means model: C centers (one per row) and the final inertia.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel<T> {
    centers: Array2<T>,
    inertia: T,
    /// Within-cluster sum of squares after each assignment step.
    trace: Vec<f64>,
}

impl<T: Scalar> KMeansModel<T> {
    pub fn from_centers(centers: Array2<T>, inertia: T) -> Result<Self> {
        if centers.nrows() < 2 {
            return Err(Error::Config(format!(
                "k-means needs c ≥ 2 clusters, got {}",
                centers.nrows()
            )));
        }
        Ok(Self {
            centers,
            inertia,
            trace: Vec::new(),
        })
    }

    pub fn c(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn centers(&self) -> &Array2<T> {
        &self.centers
    }

    pub fn inertia(&self) -> T {
        self.inertia
    }

    pub fn inertia_trace(&self) -> &[f64] {
        &self.trace
    }
}

/// Lloyd's algorithm with k-means++ seeding; deterministic for a fixed seed.
///
/// `points` holds one feature vector per row. Empty clusters are repaired by
/// re-seeding from the point farthest from its assigned center.
pub fn kmeans_fit<T: Scalar>(
    points: &ArrayView2<'_, T>,
    c: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansModel<T>> {
    let n = points.nrows();
    if c < 2 {
        return Err(Error::Config(format!("c must be ≥ 2, got {c}")));
    }
    if n < c {
        return Err(Error::Data(format!(
            "cannot split {n} vectors into {c} clusters"
        )));
    }
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be ≥ 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeds(points, c, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut trace = Vec::new();
    let tol_sq = tol * tol;

    for _ in 0..max_iters {
        // assignment
        let pairs: Vec<(usize, T)> = (0..n)
            .into_par_iter()
            .map(|i| nearest_center(&points.row(i), &centers.view()))
            .collect();
        let mut inertia = T::zero();
        for (i, &(j, d2)) in pairs.iter().enumerate() {
            assignments[i] = j;
            inertia += d2;
        }

        // repair empty clusters before the mean update
        let mut counts = vec![0usize; c];
        for &a in &assignments {
            counts[a] += 1;
        }
        for j in 0..c {
            if counts[j] > 0 {
                continue;
            }
            let (far_idx, _) = (0..n)
                .map(|i| {
                    let d2 = sq_dist(&points.row(i), &centers.row(assignments[i]));
                    (i, d2)
                })
                .fold((0usize, T::neg_infinity()), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                });
            counts[assignments[far_idx]] -= 1;
            // moving the point to its own cluster only decreases inertia
            inertia -= sq_dist(&points.row(far_idx), &centers.row(assignments[far_idx]));
            assignments[far_idx] = j;
            counts[j] = 1;
            centers.row_mut(j).assign(&points.row(far_idx));
        }
        trace.push(to_f64(inertia));

        // mean update (sequential accumulation keeps runs bit-identical)
        let mut sums = Array2::<T>::zeros((c, points.ncols()));
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += &points.row(i);
        }
        let mut movement_sq = T::zero();
        for j in 0..c {
            let inv = T::one() / from_f64::<T>(counts[j] as f64);
            let mut moved = T::zero();
            for (t, s) in sums.row(j).iter().enumerate() {
                let new = *s * inv;
                let delta = new - centers[[j, t]];
                moved += delta * delta;
                centers[[j, t]] = new;
            }
            movement_sq = movement_sq.max(moved);
        }
        if to_f64(movement_sq) < tol_sq {
            break;
        }
    }

    // final inertia under the converged centers
    let inertia: T = (0..n)
        .into_par_iter()
        .map(|i| nearest_center(&points.row(i), &centers.view()).1)
        .collect::<Vec<T>>()
        .into_iter()
        .sum();
    trace.push(to_f64(inertia));

    let mut model = KMeansModel::from_centers(centers, inertia)?;
    model.trace = trace;
    Ok(model)
}

/// k-means++: first seed uniform, the rest sampled ∝ squared distance to the
/// nearest already-chosen seed.
fn plus_plus_seeds<T: Scalar>(
    points: &ArrayView2<'_, T>,
    c: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<T> {
    let n = points.nrows();
    let mut centers = Array2::<T>::zeros((c, points.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&points.row(first));

    let mut d2 = vec![T::zero(); n];
    for i in 0..n {
        d2[i] = sq_dist(&points.row(i), &centers.row(0));
    }

    for j in 1..c {
        let total: f64 = d2.iter().map(|&v| to_f64(v)).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                target -= to_f64(v);
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // fewer distinct points than clusters; any point will do
            rng.random_range(0..n)
        };
        centers.row_mut(j).assign(&points.row(pick));
        for i in 0..n {
            let d = sq_dist(&points.row(i), &centers.row(j));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

/// Nearest center index (Euclidean, ties to the lowest index) and the
/// squared distance to it.
fn nearest_center<T: Scalar>(point: &ArrayView1<'_, T>, centers: &ArrayView2<'_, T>) -> (usize, T) {
    let mut best = (0usize, T::infinity());
    for (j, center) in centers.rows().into_iter().enumerate() {
        let d2 = sq_dist(point, &center);
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    best
}

fn sq_dist<T: Scalar>(a: &ArrayView1<'_, T>, b: &ArrayView1<'_, T>) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Label each vector with its nearest center.
pub fn kmeans_assign<T: Scalar>(
    points: &ArrayView2<'_, T>,
    model: &KMeansModel<T>,
) -> Result<Vec<usize>> {
    if points.ncols() != model.dim() {
        return Err(Error::shape(
            format!("feature dim {}", model.dim()),
            format!("{}", points.ncols()),
        ));
    }
    Ok((0..points.nrows())
        .into_par_iter()
        .map(|i| nearest_center(&points.row(i), &model.centers.view()).0)
        .collect())
}

/// Project per-window labels onto pixels: each window writes its label to the
/// s×s block centered in it. Uncovered borders and background pixels stay
/// UNLABELED.
pub fn project_labels(
    window_labels: &[usize],
    positions: &[(u32, u32)],
    spec: &crate::features::WindowSpec,
    width: usize,
    height: usize,
    mask: &TissueMask,
    num_classes: usize,
) -> Result<LabelMap> {
    if window_labels.len() != positions.len() {
        return Err(Error::shape(
            format!("{} labels", positions.len()),
            format!("{}", window_labels.len()),
        ));
    }
    let (w, s) = (spec.window_size(), spec.window_stride());
    let offset = (w - s) / 2;
    let mut lm = LabelMap::unlabeled(width, height, num_classes);
    for (&label, &(row, col)) in window_labels.iter().zip(positions) {
        if label >= num_classes {
            return Err(Error::Data(format!(
                "window label {label} exceeds {num_classes} classes"
            )));
        }
        let y0 = row as usize * s + offset;
        let x0 = col as usize * s + offset;
        for y in y0..(y0 + s).min(height) {
            for x in x0..(x0 + s).min(width) {
                debug_assert!(
                    lm.get(x, y) == UNLABELED,
                    "projection blocks must not overlap"
                );
                lm.set(x, y, label as i32);
            }
        }
    }
    for y in 0..height {
        for x in 0..width {
            if !mask.is_foreground(x, y) {
                lm.set(x, y, UNLABELED);
            }
        }
    }
    Ok(lm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::WindowSpec;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs_12() -> Array2<f64> {
        // 3 tight blobs of 4 points each
        arr2(&[
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [0.1, 0.1],
            [5.0, 5.0],
            [5.1, 5.0],
            [5.0, 5.1],
            [5.1, 5.1],
            [10.0, 0.0],
            [10.1, 0.0],
            [10.0, 0.1],
            [10.1, 0.1],
        ])
    }

    #[test]
    fn fit_recovers_blob_means() {
        let pts = blobs_12();
        let model = kmeans_fit(&pts.view(), 3, 1, 100, 1e-12).unwrap();
        let mut centers: Vec<(f64, f64)> = (0..3)
            .map(|j| (model.centers()[[j, 0]], model.centers()[[j, 1]]))
            .collect();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = [(0.05, 0.05), (5.05, 5.05), (10.05, 0.05)];
        for (got, want) in centers.iter().zip(expected) {
            assert_abs_diff_eq!(got.0, want.0, epsilon = 1e-6);
            assert_abs_diff_eq!(got.1, want.1, epsilon = 1e-6);
        }
    }

    #[test]
    fn fit_matches_brute_force_global_optimum() {
        let pts = blobs_12();
        let model = kmeans_fit(&pts.view(), 3, 7, 100, 1e-12).unwrap();
        let best = brute_force_optimum(&pts, 3);
        assert_abs_diff_eq!(model.inertia(), best, epsilon = 1e-9);
    }

    /// Exhaustive minimum WCSS over every 3-partition of the points.
    fn brute_force_optimum(pts: &Array2<f64>, c: usize) -> f64 {
        let n = pts.nrows();
        let mut best = f64::INFINITY;
        let total = c.pow(n as u32);
        for code in 0..total {
            let mut assign = vec![0usize; n];
            let mut v = code;
            for a in assign.iter_mut() {
                *a = v % c;
                v /= c;
            }
            let mut counts = vec![0usize; c];
            for &a in &assign {
                counts[a] += 1;
            }
            if counts.iter().any(|&k| k == 0) {
                continue;
            }
            let mut means = vec![[0.0_f64; 2]; c];
            for (i, &a) in assign.iter().enumerate() {
                means[a][0] += pts[[i, 0]];
                means[a][1] += pts[[i, 1]];
            }
            for (m, &k) in means.iter_mut().zip(&counts) {
                m[0] /= k as f64;
                m[1] /= k as f64;
            }
            let wcss: f64 = assign
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    (pts[[i, 0]] - means[a][0]).powi(2) + (pts[[i, 1]] - means[a][1]).powi(2)
                })
                .sum();
            best = best.min(wcss);
        }
        best
    }

    #[test]
    fn perfect_fit_when_clusters_equal_points() {
        let pts = arr2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let model = kmeans_fit(&pts.view(), 3, 0, 50, 1e-12).unwrap();
        assert_abs_diff_eq!(model.inertia(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_rejects_too_few_points() {
        let pts = arr2(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(kmeans_fit(&pts.view(), 3, 0, 10, 1e-9).is_err());
    }

    #[test]
    fn inertia_trace_is_non_increasing() {
        let pts = blobs_12();
        let model = kmeans_fit(&pts.view(), 3, 11, 100, 0.0).unwrap();
        for pair in model.inertia_trace().windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{} → {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn assign_nearest_and_tie_rule() {
        let centers = arr2(&[[0.0, 0.0], [2.0, 0.0]]);
        let model = KMeansModel::from_centers(centers, 0.0).unwrap();
        let pts = arr2(&[
            [2.0, 0.0],  // exactly center 1
            [1.0, 0.0],  // equidistant → lowest index
            [-1.0, 0.0], // nearest center 0
        ]);
        let labels = kmeans_assign(&pts.view(), &model).unwrap();
        assert_eq!(labels, vec![1, 0, 0]);
    }

    #[test]
    fn assign_matches_linear_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let centers = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let model = KMeansModel::from_centers(centers.clone(), 0.0).unwrap();
        let pts = Array2::from_shape_fn((200, 4), |_| rng.random_range(-1.0..1.0f64));
        let labels = kmeans_assign(&pts.view(), &model).unwrap();
        for i in 0..200 {
            let mut best = (0usize, f64::INFINITY);
            for j in 0..5 {
                let d2: f64 = (0..4)
                    .map(|t| (pts[[i, t]] - centers[[j, t]]).powi(2))
                    .sum();
                if d2 < best.1 {
                    best = (j, d2);
                }
            }
            assert_eq!(labels[i], best.0);
        }
    }

    #[test]
    fn assign_is_idempotent_after_convergence() {
        let pts = blobs_12();
        let model = kmeans_fit(&pts.view(), 3, 5, 100, 0.0).unwrap();
        let first = kmeans_assign(&pts.view(), &model).unwrap();
        let second = kmeans_assign(&pts.view(), &model).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn assign_rejects_dim_mismatch() {
        let model = KMeansModel::from_centers(arr2(&[[0.0], [1.0]]), 0.0).unwrap();
        let pts = arr2(&[[0.0, 1.0]]);
        assert!(kmeans_assign(&pts.view(), &model).is_err());
    }

    #[test]
    fn projection_fills_central_blocks() {
        // single window covering the whole image with s = w: one label everywhere
        let spec = WindowSpec::new(6, 6, 2, 2).unwrap();
        let mask = TissueMask::full(6, 6);
        let lm = project_labels(&[2], &[(0, 0)], &spec, 6, 6, &mask, 3).unwrap();
        assert!(lm.labels().iter().all(|&l| l == 2));
    }

    #[test]
    fn projection_borders_stay_unlabeled() {
        // w=5, s=1 → 1×1 blocks at offset 2: a 2-pixel border stays unlabeled
        let spec = WindowSpec::new(5, 1, 3, 2).unwrap();
        let (width, height) = (9usize, 7usize);
        let rows = (height - 5) / 1 + 1;
        let cols = (width - 5) / 1 + 1;
        let mut labels = Vec::new();
        let mut positions = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                positions.push((r as u32, c as u32));
                labels.push((r + c) % 2);
            }
        }
        let mask = TissueMask::full(width, height);
        let lm = project_labels(&labels, &positions, &spec, width, height, &mask, 2).unwrap();
        for y in 0..height {
            for x in 0..width {
                let interior = (2..width - 2).contains(&x) && (2..height - 2).contains(&y);
                if interior {
                    // adjacent windows with different labels differ exactly at
                    // the window boundary
                    assert_eq!(lm.get(x, y), (((y - 2) + (x - 2)) % 2) as i32);
                } else {
                    assert_eq!(lm.get(x, y), UNLABELED);
                }
            }
        }
    }

    #[test]
    fn projection_respects_mask() {
        let spec = WindowSpec::new(4, 4, 2, 2).unwrap();
        let mut bits = vec![true; 16];
        bits[5] = false;
        let mask = TissueMask::new(4, 4, bits).unwrap();
        let lm = project_labels(&[1], &[(0, 0)], &spec, 4, 4, &mask, 2).unwrap();
        assert_eq!(lm.get(1, 1), UNLABELED);
        assert_eq!(lm.get(0, 0), 1);
    }
}
