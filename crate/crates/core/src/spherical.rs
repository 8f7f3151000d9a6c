//! Spherical k-means dictionary learning.
//!
//! Alternates two steps over whitened training patches X:
//! code assignment (each patch projects onto the single centroid with the
//! largest absolute response) and a damped dictionary update
//! 𝒟′ = XZᵀ + 𝒟 followed by column renormalization. The resulting unit-norm
//! centroid columns act as convolution filters downstream.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::patching::PatchMatrix;
use crate::scalar::{from_f64, to_f64, Scalar};

/// K unit-norm centroid columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T> {
    columns: Array2<T>,
}

impl<T: Scalar> Dictionary<T> {
    pub fn from_columns(columns: Array2<T>) -> Result<Self> {
        if columns.ncols() < 2 {
            return Err(Error::Config(format!(
                "dictionary needs k ≥ 2 centroids, got {}",
                columns.ncols()
            )));
        }
        if columns.nrows() == 0 {
            return Err(Error::Config("dictionary dimension must be ≥ 1".into()));
        }
        Ok(Self { columns })
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn k(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &Array2<T> {
        &self.columns
    }

    pub fn column(&self, j: usize) -> ndarray::ArrayView1<'_, T> {
        self.columns.column(j)
    }

    /// Max deviation of any column norm from 1.
    pub fn max_norm_error(&self) -> T {
        (0..self.k())
            .map(|j| (column_norm(&self.columns, j) - T::one()).abs())
            .fold(T::zero(), T::max)
    }
}

/// One (index, value) pair per patch; a value of zero encodes the all-zero
/// code vector, so ‖z‖₀ ≤ 1 always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix<T> {
    k: usize,
    entries: Vec<(u32, T)>,
}

impl<T: Scalar> CodeMatrix<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self) -> usize {
        self.entries.len()
    }

    /// (centroid index, signed projection) for patch `i`.
    pub fn entry(&self, i: usize) -> (usize, T) {
        let (j, v) = self.entries[i];
        (j as usize, v)
    }
}

/// One training iteration as logged by [`train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainIteration {
    pub iteration: usize,
    /// Reconstruction objective Σᵢ‖𝒟zᵢ − xᵢ‖² under the pre-update dictionary.
    pub objective: f64,
    /// max over columns of (1 − old·new) after the update.
    pub max_movement: f64,
}

pub type TrainingLog = Vec<TrainIteration>;

/// Gaussian-initialized dictionary with unit-norm columns; deterministic for
/// a fixed seed.
pub fn init_dictionary<T: Scalar>(dim: usize, k: usize, seed: u64) -> Result<Dictionary<T>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be ≥ 2, got {k}")));
    }
    if dim == 0 {
        return Err(Error::Config("dimension must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Array2::<T>::zeros((dim, k));
    for j in 0..k {
        loop {
            for v in columns.column_mut(j).iter_mut() {
                *v = from_f64(rng.sample::<f64, _>(rand_distr::StandardNormal));
            }
            let norm = column_norm(&columns, j);
            if norm > T::zero() {
                let inv = T::one() / norm;
                columns.column_mut(j).iter_mut().for_each(|v| *v *= inv);
                break;
            }
        }
    }
    Dictionary::from_columns(columns)
}

/// Assign each patch its optimal single-entry code: the non-zero sits at
/// j* = argmax_l |𝒟ₗᵀxᵢ| (ties to the lowest index) with value 𝒟ⱼ*ᵀxᵢ.
pub fn assign_codes<T: Scalar>(x: &PatchMatrix<T>, d: &Dictionary<T>) -> Result<CodeMatrix<T>> {
    if x.dim() != d.dim() {
        return Err(Error::shape(
            format!("patch dim {}", d.dim()),
            format!("{}", x.dim()),
        ));
    }
    let cols = x.columns();
    let dict = d.columns();
    let (dim, k) = (d.dim(), d.k());

    let entries: Vec<(u32, T)> = (0..x.count())
        .into_par_iter()
        .map(|i| {
            let xi = cols.column(i);
            let mut best_j = 0usize;
            let mut best_abs = T::neg_infinity();
            let mut best_val = T::zero();
            for j in 0..k {
                let dj = dict.column(j);
                let mut dot = T::zero();
                for t in 0..dim {
                    dot += dj[t] * xi[t];
                }
                if dot.abs() > best_abs {
                    best_abs = dot.abs();
                    best_val = dot;
                    best_j = j;
                }
            }
            (best_j as u32, best_val)
        })
        .collect();

    Ok(CodeMatrix {
        k: d.k(),
        entries,
    })
}

/// Damped dictionary update 𝒟′ = XZᵀ + 𝒟 with column renormalization.
///
/// Z's one-nonzero-per-column sparsity turns XZᵀ into per-centroid
/// accumulation of value·xᵢ. A column whose updated norm is exactly zero is
/// re-seeded from a random training patch.
pub fn update_dictionary<T: Scalar>(
    x: &PatchMatrix<T>,
    z: &CodeMatrix<T>,
    d: &Dictionary<T>,
    rng: &mut ChaCha8Rng,
) -> Result<Dictionary<T>> {
    if x.dim() != d.dim() || z.k() != d.k() || z.count() != x.count() {
        return Err(Error::shape(
            format!("X {}×{}, Z {}×{}", d.dim(), z.count(), d.k(), z.count()),
            format!("X {}×{}, Z {}×{}", x.dim(), x.count(), z.k(), z.count()),
        ));
    }
    let mut updated = d.columns().clone();
    let mut touched = vec![false; d.k()];
    for i in 0..x.count() {
        let (j, v) = z.entry(i);
        if v != T::zero() {
            let xi = x.column(i);
            updated
                .column_mut(j)
                .iter_mut()
                .zip(xi)
                .for_each(|(dst, &src)| *dst += v * src);
            touched[j] = true;
        }
    }

    for j in 0..d.k() {
        if !touched[j] {
            // 𝒟′ⱼ = 𝒟ⱼ, already unit length
            continue;
        }
        let norm = column_norm(&updated, j);
        if norm == T::zero() {
            reseed_column(&mut updated, j, x, rng)?;
        } else {
            let inv = T::one() / norm;
            updated.column_mut(j).iter_mut().for_each(|v| *v *= inv);
        }
    }
    Dictionary::from_columns(updated)
}

fn reseed_column<T: Scalar>(
    columns: &mut Array2<T>,
    j: usize,
    x: &PatchMatrix<T>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for _ in 0..x.count().max(16) {
        let pick = rng.random_range(0..x.count());
        let candidate = x.column(pick);
        let norm = candidate.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm > T::zero() {
            let inv = T::one() / norm;
            columns
                .column_mut(j)
                .iter_mut()
                .zip(candidate)
                .for_each(|(dst, &src)| *dst = src * inv);
            return Ok(());
        }
    }
    Err(Error::Numerical(
        "cannot re-seed dead centroid: training patches are all zero".into(),
    ))
}

/// Full alternating optimization: init → (assign, update)* until the maximum
/// centroid movement drops below `tol` or `max_iters` is reached.
pub fn train<T: Scalar>(
    x: &PatchMatrix<T>,
    k: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<(Dictionary<T>, TrainingLog)> {
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut dict = init_dictionary::<T>(x.dim(), k, seed)?;
    let mut log = TrainingLog::with_capacity(max_iters);

    // ‖xᵢ‖² is constant across iterations
    let norms_sq: Vec<T> = (0..x.count())
        .into_par_iter()
        .map(|i| x.column(i).iter().map(|&v| v * v).sum::<T>())
        .collect();

    for iteration in 1..=max_iters {
        let codes = assign_codes(x, &dict)?;
        // ‖v·𝒟ⱼ − x‖² = ‖x‖² − v² for unit 𝒟ⱼ and v = 𝒟ⱼᵀx
        let objective: f64 = (0..x.count())
            .map(|i| {
                let (_, v) = codes.entry(i);
                to_f64(norms_sq[i] - v * v)
            })
            .sum();

        let updated = update_dictionary(x, &codes, &dict, &mut rng)?;
        let mut max_movement = 0.0_f64;
        for j in 0..k {
            let dot: T = dict
                .column(j)
                .iter()
                .zip(updated.column(j))
                .map(|(&a, &b)| a * b)
                .sum();
            max_movement = max_movement.max(1.0 - to_f64(dot));
        }
        log.push(TrainIteration {
            iteration,
            objective,
            max_movement,
        });
        dict = updated;
        if max_movement < tol {
            break;
        }
    }
    Ok((dict, log))
}

fn column_norm<T: Scalar>(m: &Array2<T>, j: usize) -> T {
    m.column(j).iter().map(|&v| v * v).sum::<T>().sqrt()
}
