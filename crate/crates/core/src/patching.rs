//! Training-patch sampling, global-statistics normalization, and ZCA whitening.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imagegrid::{integral_count, ImageGrid, TissueMask};
use crate::linalg::symmetric_eigen;
use crate::scalar::{from_f64, Scalar};

/// Fraction of a training patch that must be foreground for it to be sampled.
pub const DEFAULT_MIN_FOREGROUND: f64 = 0.5;

/// Column-major collection of flattened p×p×c patches (one column per patch).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix<T> {
    data: Array2<T>,
}

impl<T: Scalar> PatchMatrix<T> {
    pub fn from_array(data: Array2<T>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Data("patch matrix must be non-empty".into()));
        }
        Ok(Self { data })
    }

    /// Flattened patch length p·p·c.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of patches.
    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn columns(&self) -> &Array2<T> {
        &self.data
    }

    pub fn column(&self, i: usize) -> ndarray::ArrayView1<'_, T> {
        self.data.column(i)
    }
}

/// Scalar mean/std computed over every entry of the dataset pooled together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats<T> {
    pub mean: T,
    pub std: T,
}

/// ZCA whitening transform with the per-feature mean captured at fit time.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform<T> {
    dim: usize,
    epsilon: T,
    matrix: Array2<T>,
    feature_mean: Array1<T>,
}

impl<T: Scalar> WhiteningTransform<T> {
    pub fn from_parts(epsilon: T, matrix: Array2<T>, feature_mean: Array1<T>) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim || feature_mean.len() != dim {
            return Err(Error::shape(
                format!("{dim}×{dim} matrix with {dim} means"),
                format!(
                    "{}×{} matrix with {} means",
                    matrix.nrows(),
                    matrix.ncols(),
                    feature_mean.len()
                ),
            ));
        }
        Ok(Self {
            dim,
            epsilon,
            matrix,
            feature_mean,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    pub fn feature_mean(&self) -> &Array1<T> {
        &self.feature_mean
    }
}

/// Randomly sample `n` training patches of `p`×`p` pixels whose foreground
/// fraction under `mask` is at least `min_foreground`.
///
/// Sampling is uniform (with replacement) over admissible top-left corners
/// and deterministic for a fixed seed.
pub fn sample_training_patches<T: Scalar>(
    img: &ImageGrid<T>,
    mask: &TissueMask,
    n: usize,
    p: usize,
    seed: u64,
    min_foreground: f64,
) -> Result<PatchMatrix<T>> {
    if n == 0 {
        return Err(Error::Config("cannot sample zero patches".into()));
    }
    if p == 0 || p > img.width().min(img.height()) {
        return Err(Error::Config(format!(
            "patch size {p} does not fit a {}×{} image",
            img.width(),
            img.height()
        )));
    }
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Error::shape(
            format!("{}×{} mask", img.width(), img.height()),
            format!("{}×{}", mask.width(), mask.height()),
        ));
    }

    let corners = admissible_corners(mask, p, min_foreground);
    if corners.is_empty() {
        return Err(Error::Data(
            "no admissible patch location (mask too sparse for the requested patch size)".into(),
        ));
    }

    let dim = p * p * img.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array2::<T>::zeros((dim, n));
    let mut buf = vec![T::zero(); dim];
    for i in 0..n {
        let (x0, y0) = corners[rng.random_range(0..corners.len())];
        img.copy_patch_into(x0, y0, p, &mut buf);
        data.column_mut(i)
            .iter_mut()
            .zip(&buf)
            .for_each(|(dst, &src)| *dst = src);
    }
    PatchMatrix::from_array(data)
}

/// Top-left corners whose p×p patch lies inside the image and meets the
/// foreground fraction, in row-major order.
pub fn admissible_corners(mask: &TissueMask, p: usize, min_foreground: f64) -> Vec<(usize, usize)> {
    let table = mask.integral();
    let needed = min_foreground * (p * p) as f64;
    let mut corners = Vec::new();
    for y0 in 0..=(mask.height() - p) {
        for x0 in 0..=(mask.width() - p) {
            if f64::from(integral_count(&table, mask.width(), x0, y0, p)) >= needed {
                corners.push((x0, y0));
            }
        }
    }
    corners
}

/// Mean and standard deviation pooled over all dim×count entries.
///
/// This is the dataset-global normalization (not per patch): it preserves
/// relative intensities between patches from the same image.
pub fn fit_norm_stats<T: Scalar>(x: &PatchMatrix<T>) -> Result<NormStats<T>> {
    let n_entries = x.dim() * x.count();
    if x.count() < 2 {
        return Err(Error::Data("need at least 2 patches to fit statistics".into()));
    }
    let n = from_f64::<T>(n_entries as f64);
    let mean = x.columns().iter().copied().sum::<T>() / n;
    let var = x
        .columns()
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>()
        / n;
    if var <= T::zero() {
        return Err(Error::Data(
            "zero variance: constant dataset cannot be normalized".into(),
        ));
    }
    Ok(NormStats {
        mean,
        std: var.sqrt(),
    })
}

/// Map every entry to (v − mean)/std.
pub fn apply_norm<T: Scalar>(x: &PatchMatrix<T>, s: &NormStats<T>) -> PatchMatrix<T> {
    let data = x.columns().mapv(|v| (v - s.mean) / s.std);
    PatchMatrix { data }
}

/// Fit the ZCA whitening transform W = V(Λ+εI)^(−1/2)Vᵀ on the covariance of
/// `x` (population covariance of the fit-time-centered columns).
pub fn fit_zca<T: Scalar>(x: &PatchMatrix<T>, epsilon: T) -> Result<WhiteningTransform<T>> {
    if epsilon < T::zero() {
        return Err(Error::Config(format!("epsilon must be ≥ 0, got {epsilon}")));
    }
    let dim = x.dim();
    let count = x.count();
    if count <= dim {
        log::warn!(
            "fitting ZCA with {count} patches for dimension {dim}; covariance may be rank-deficient"
        );
    }

    let feature_mean = x
        .columns()
        .mean_axis(Axis(1))
        .expect("non-empty patch matrix");
    let mut centered = x.columns().clone();
    for mut col in centered.axis_iter_mut(Axis(1)) {
        col -= &feature_mean;
    }
    let scale = T::one() / from_f64::<T>(count as f64);
    let cov = centered.dot(&centered.t()) * scale;

    let (values, vectors) = symmetric_eigen(&cov)?;
    let mut scaled = Array2::<T>::zeros((dim, dim));
    for (j, &lambda) in values.iter().enumerate() {
        let shifted = lambda + epsilon;
        if !shifted.is_finite() || shifted <= T::zero() {
            return Err(Error::Numerical(format!(
                "eigenvalue {lambda} makes Λ+εI non-positive (ε = {epsilon}); \
                 increase epsilon or provide richer data"
            )));
        }
        let inv_sqrt = T::one() / shifted.sqrt();
        let src = vectors.column(j);
        scaled
            .column_mut(j)
            .iter_mut()
            .zip(src)
            .for_each(|(dst, &v)| *dst = v * inv_sqrt);
    }
    let w = scaled.dot(&vectors.t());
    // pin exact symmetry; the product above is symmetric only to roundoff
    let w = (&w + &w.t()) * from_f64::<T>(0.5);
    WhiteningTransform::from_parts(epsilon, w, feature_mean)
}

/// Whiten each column: W·(column − fit-time feature mean).
pub fn apply_zca<T: Scalar>(
    x: &PatchMatrix<T>,
    w: &WhiteningTransform<T>,
) -> Result<PatchMatrix<T>> {
    if x.dim() != w.dim() {
        return Err(Error::shape(
            format!("patch dim {}", w.dim()),
            format!("{}", x.dim()),
        ));
    }
    let mut centered = x.columns().clone();
    for mut col in centered.axis_iter_mut(Axis(1)) {
        col -= &w.feature_mean;
    }
    Ok(PatchMatrix {
        data: w.matrix.dot(&centered),
    })
}
