//! Window featurization: rectified filter responses over a sub-patch grid,
//! quadrant sum pooling, and concatenation into one 4K-dimensional vector
//! per window.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagegrid::{ImageGrid, TissueMask};
use crate::model::PipelineModel;
use crate::scalar::{to_f64, Scalar};

/// Window/filter geometry: windows of `w`×`w` pixels at stride `s`, filters
/// of `p`×`p` pixels applied at stride `h` inside each window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    w: usize,
    s: usize,
    p: usize,
    h: usize,
}

impl WindowSpec {
    pub fn new(w: usize, s: usize, p: usize, h: usize) -> Result<Self> {
        if p == 0 || h == 0 || s == 0 {
            return Err(Error::Config("window spec values must be positive".into()));
        }
        if p > w {
            return Err(Error::Config(format!("filter size {p} exceeds window size {w}")));
        }
        if s > w {
            return Err(Error::Config(format!(
                "stride {s} larger than window size {w} would leave gaps"
            )));
        }
        if (w - p) % h != 0 {
            return Err(Error::Config(format!(
                "filters must tile the window exactly: (w−p) = {} is not divisible by h = {h}",
                w - p
            )));
        }
        let spec = Self { w, s, p, h };
        if spec.grid_side() < 2 {
            return Err(Error::Config(
                "activation grid must be at least 2×2 for quadrant pooling".into(),
            ));
        }
        Ok(spec)
    }

    pub fn window_size(&self) -> usize {
        self.w
    }

    pub fn window_stride(&self) -> usize {
        self.s
    }

    pub fn patch_size(&self) -> usize {
        self.p
    }

    pub fn filter_stride(&self) -> usize {
        self.h
    }

    /// Activation grid side g = (w − p)/h + 1.
    pub fn grid_side(&self) -> usize {
        (self.w - self.p) / self.h + 1
    }

    /// Window-grid shape for an image, before masking.
    pub fn grid_shape(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        if self.w > width || self.w > height {
            return Err(Error::Data(format!(
                "image {width}×{height} is smaller than the {0}×{0} window",
                self.w
            )));
        }
        Ok(((height - self.w) / self.s + 1, (width - self.w) / self.s + 1))
    }
}

/// A grid-aligned window and its pixel origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridWindow {
    pub row: u32,
    pub col: u32,
    pub x0: usize,
    pub y0: usize,
}

/// Every grid-aligned window whose central s×s block contains at least one
/// foreground pixel, in row-major order.
pub fn extract_windows<T: Scalar>(
    img: &ImageGrid<T>,
    mask: &TissueMask,
    spec: &WindowSpec,
) -> Result<Vec<GridWindow>> {
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Error::shape(
            format!("{}×{} mask", img.width(), img.height()),
            format!("{}×{}", mask.width(), mask.height()),
        ));
    }
    let (rows, cols) = spec.grid_shape(img.width(), img.height())?;
    let offset = (spec.w - spec.s) / 2;
    let table = mask.integral();
    let mut windows = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let y0 = row * spec.s;
            let x0 = col * spec.s;
            let fg = crate::imagegrid::integral_count(
                &table,
                mask.width(),
                x0 + offset,
                y0 + offset,
                spec.s,
            );
            if fg > 0 {
                windows.push(GridWindow {
                    row: row as u32,
                    col: col as u32,
                    x0,
                    y0,
                });
            }
        }
    }
    Ok(windows)
}

/// K rectified activation maps of g×g entries each, filter-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations<T> {
    k: usize,
    g: usize,
    data: Vec<T>,
}

impl<T: Scalar> Activations<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid_side(&self) -> usize {
        self.g
    }

    /// Row-major g×g map for filter `j`.
    pub fn map(&self, j: usize) -> &[T] {
        let len = self.g * self.g;
        &self.data[j * len..(j + 1) * len]
    }
}

/// Filters folded together with the model's preprocessing.
///
/// Since normalization, centering, and whitening are affine, the rectified
/// response max{0, 𝒟ⱼᵀ·zca(norm(x))} equals max{0, uⱼᵀx − bⱼ} with
/// uⱼ = W𝒟ⱼ/σ and bⱼ = (W𝒟ⱼ)ᵀ(μ/σ·1 + m), which turns featurization into a
/// plain convolution. Tests pin this against the explicit preprocessing path.
struct EffectiveFilters<T> {
    /// k×dim; row j is uⱼ.
    weights: Array2<T>,
    bias: Array1<T>,
}

fn effective_filters<T: Scalar>(model: &PipelineModel<T>) -> EffectiveFilters<T> {
    let w = model.whitening().matrix();
    let whitened = w.dot(model.dictionary().columns()); // dim×k
    let mean = model.norm().mean;
    let inv_std = T::one() / model.norm().std;
    let feat_mean = model.whitening().feature_mean();

    let k = model.dictionary().k();
    let dim = model.dictionary().dim();
    let mut weights = Array2::<T>::zeros((k, dim));
    let mut bias = Array1::<T>::zeros(k);
    for j in 0..k {
        let uj = whitened.column(j);
        let mut b = T::zero();
        for t in 0..dim {
            weights[[j, t]] = uj[t] * inv_std;
            b += uj[t] * (mean * inv_std + feat_mean[t]);
        }
        bias[j] = b;
    }
    EffectiveFilters { weights, bias }
}

/// Rectified filter responses over the sub-patch grid of one w×w window.
///
/// Each p×p sub-patch is preprocessed with the model's training-time
/// statistics (never refit), then projected on every filter:
/// activation = max{0, 𝒟ⱼᵀx̃}.
pub fn apply_filters<T: Scalar>(
    window: &ImageGrid<T>,
    model: &PipelineModel<T>,
    spec: &WindowSpec,
) -> Result<Activations<T>> {
    check_provenance(model, spec, window.channels())?;
    if window.width() != spec.w || window.height() != spec.w {
        return Err(Error::shape(
            format!("{0}×{0} window", spec.w),
            format!("{}×{}", window.width(), window.height()),
        ));
    }
    let eff = effective_filters(model);
    let g = spec.grid_side();
    let mut scratch = Array2::<T>::zeros((model.dictionary().dim(), g * g));
    let mut data = vec![T::zero(); model.dictionary().k() * g * g];
    window_activations(window, 0, 0, &eff, spec, &mut scratch, &mut data);
    Ok(Activations {
        k: model.dictionary().k(),
        g,
        data,
    })
}

fn check_provenance<T: Scalar>(
    model: &PipelineModel<T>,
    spec: &WindowSpec,
    channels: usize,
) -> Result<()> {
    if model.patch_size() != spec.p {
        return Err(Error::Config(format!(
            "dictionary was trained with p = {} but the window spec uses p = {}",
            model.patch_size(),
            spec.p
        )));
    }
    if model.channels() != channels {
        return Err(Error::Config(format!(
            "dictionary was trained on {}-channel images but the input has {}",
            model.channels(),
            channels
        )));
    }
    Ok(())
}

/// Compute all K rectified activation maps for the window at (x0, y0),
/// writing filter-major g×g maps into `out`.
fn window_activations<T: Scalar>(
    img: &ImageGrid<T>,
    x0: usize,
    y0: usize,
    eff: &EffectiveFilters<T>,
    spec: &WindowSpec,
    scratch: &mut Array2<T>,
    out: &mut [T],
) {
    let g = spec.grid_side();
    let dim = scratch.nrows();
    debug_assert_eq!(scratch.ncols(), g * g);

    // gather raw sub-patches as columns, grid row-major
    {
        let flat = scratch.as_slice_memory_order_mut().expect("standard layout");
        let mut buf = vec![T::zero(); dim];
        for gy in 0..g {
            for gx in 0..g {
                let pos = gy * g + gx;
                img.copy_patch_into(x0 + gx * spec.h, y0 + gy * spec.h, spec.p, &mut buf);
                for (t, &v) in buf.iter().enumerate() {
                    // scratch is row-major dim×g²
                    flat[t * g * g + pos] = v;
                }
            }
        }
    }

    let responses = eff.weights.dot(scratch); // k×g²
    let cells = g * g;
    for j in 0..eff.bias.len() {
        let b = eff.bias[j];
        for pos in 0..cells {
            out[j * cells + pos] = (responses[[j, pos]] - b).max(T::zero());
        }
    }
}

/// Sum the four quadrants of a row-major g×g map, in TL, TR, BL, BR order.
///
/// For odd g the top/left quadrants take ⌊g/2⌋ rows/columns and the
/// bottom/right ones the rest, so the four sums always partition the map.
pub fn sum_pool_quadrants<T: Scalar>(map: &[T], g: usize) -> Result<[T; 4]> {
    if map.len() != g * g {
        return Err(Error::shape(format!("{g}×{g} map"), format!("{} entries", map.len())));
    }
    let half = g / 2;
    let mut sums = [T::zero(); 4];
    for y in 0..g {
        let row_high = y >= half;
        for x in 0..g {
            let quadrant = match (row_high, x >= half) {
                (false, false) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (true, true) => 3,
            };
            sums[quadrant] += map[y * g + x];
        }
    }
    Ok(sums)
}

/// Pooled feature vectors for every admissible window of an image.
///
/// Vector layout is filter-major: filter 0's TL,TR,BL,BR sums, then
/// filter 1's, and so on — 4·K values per window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField<T> {
    rows: usize,
    cols: usize,
    dim: usize,
    spec: WindowSpec,
    positions: Vec<(u32, u32)>,
    values: Vec<T>,
}

impl<T: Scalar> FeatureField<T> {
    /// Window grid height (before masking).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Window grid width (before masking).
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Feature dimensionality 4·K.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of featurized (admissible) windows.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    /// Grid coordinates of each featurized window, row-major.
    pub fn positions(&self) -> &[(u32, u32)] {
        &self.positions
    }

    pub fn vector(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// All vectors as an n×dim matrix view (row per window).
    pub fn points(&self) -> ArrayView2<'_, T> {
        ArrayView2::from_shape((self.len(), self.dim), &self.values)
            .expect("contiguous feature storage")
    }

    /// Binary dump: ASCII `rows cols dim` header line, then little-endian
    /// f32 values row-major over (rows, cols, dim). Windows skipped by the
    /// mask rule are written as zeros.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.rows * self.cols * self.dim * 4 + 32);
        buf.extend_from_slice(format!("{} {} {}\n", self.rows, self.cols, self.dim).as_bytes());
        let zeros = vec![0.0_f32; self.dim];
        let mut cursor = 0usize;
        for row in 0..self.rows {
            for col in 0..self.cols {
                let present = cursor < self.positions.len()
                    && self.positions[cursor] == (row as u32, col as u32);
                if present {
                    for v in self.vector(cursor) {
                        buf.extend_from_slice(&(to_f64(*v) as f32).to_le_bytes());
                    }
                    cursor += 1;
                } else {
                    for z in &zeros {
                        buf.extend_from_slice(&z.to_le_bytes());
                    }
                }
            }
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Featurize every admissible window: filters → rectification → quadrant
/// pooling → concatenation. Pure in all inputs.
pub fn featurize<T: Scalar>(
    img: &ImageGrid<T>,
    mask: &TissueMask,
    model: &PipelineModel<T>,
    spec: &WindowSpec,
) -> Result<FeatureField<T>> {
    check_provenance(model, spec, img.channels())?;
    let (rows, cols) = spec.grid_shape(img.width(), img.height())?;
    let windows = extract_windows(img, mask, spec)?;
    let eff = effective_filters(model);
    let g = spec.grid_side();
    let k = model.dictionary().k();
    let dim = 4 * k;
    let patch_dim = model.dictionary().dim();

    let mut values = vec![T::zero(); windows.len() * dim];
    values
        .par_chunks_mut(dim)
        .zip(windows.par_iter())
        .for_each(|(out, win)| {
            let mut scratch = Array2::<T>::zeros((patch_dim, g * g));
            let mut maps = vec![T::zero(); k * g * g];
            window_activations(img, win.x0, win.y0, &eff, spec, &mut scratch, &mut maps);
            for j in 0..k {
                let sums =
                    sum_pool_quadrants(&maps[j * g * g..(j + 1) * g * g], g).expect("sized map");
                out[4 * j..4 * j + 4].copy_from_slice(&sums);
            }
        });

    Ok(FeatureField {
        rows,
        cols,
        dim,
        spec: *spec,
        positions: windows.iter().map(|w| (w.row, w.col)).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::kmeans_fit;
    use crate::imagegrid::ImageGrid;
    use crate::patching::{
        apply_norm, apply_zca, fit_norm_stats, fit_zca, sample_training_patches,
    };
    use crate::spherical;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_image(width: usize, height: usize, channels: usize, seed: u64) -> ImageGrid<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..width * height * channels)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        ImageGrid::new(width, height, channels, data).unwrap()
    }

    fn toy_model(img: &ImageGrid<f64>, p: usize, k: usize, seed: u64) -> PipelineModel<f64> {
        let mask = TissueMask::full(img.width(), img.height());
        let x = sample_training_patches(img, &mask, 400, p, seed, 0.5).unwrap();
        let norm = fit_norm_stats(&x).unwrap();
        let normed = apply_norm(&x, &norm);
        let zca = fit_zca(&normed, 0.1).unwrap();
        let white = apply_zca(&normed, &zca).unwrap();
        let (dict, _) = spherical::train(&white, k, 8, 1e-4, seed + 1).unwrap();
        PipelineModel::new(norm, zca, p, img.channels(), dict, None).unwrap()
    }

    #[test]
    fn window_spec_validation() {
        assert!(WindowSpec::new(99, 1, 5, 2).is_ok());
        assert!(WindowSpec::new(33, 4, 5, 2).is_ok());
        // (w−p) not divisible by h
        assert!(WindowSpec::new(100, 1, 5, 2).is_err());
        // stride larger than window
        assert!(WindowSpec::new(9, 10, 5, 2).is_err());
        // degenerate 1×1 grid
        assert!(WindowSpec::new(5, 1, 5, 2).is_err());
    }

    #[test]
    fn grid_side_matches_formula() {
        let spec = WindowSpec::new(99, 1, 5, 2).unwrap();
        assert_eq!(spec.grid_side(), 48);
        let spec = WindowSpec::new(33, 4, 5, 2).unwrap();
        assert_eq!(spec.grid_side(), 15);
    }

    #[test]
    fn extract_windows_counts_and_masking() {
        let img = noise_image(40, 30, 1, 1);
        let spec = WindowSpec::new(9, 3, 3, 2).unwrap();
        let all = extract_windows(&img, &TissueMask::full(40, 30), &spec).unwrap();
        assert_eq!(all.len(), ((30 - 9) / 3 + 1) * ((40 - 9) / 3 + 1));

        let none = TissueMask::new(40, 30, vec![false; 1200]).unwrap();
        assert!(extract_windows(&img, &none, &spec).unwrap().is_empty());

        // window equal to the whole image → exactly one window
        let spec_full = WindowSpec::new(29, 2, 5, 2).unwrap();
        let img_sq = noise_image(29, 29, 1, 2);
        let one = extract_windows(&img_sq, &TissueMask::full(29, 29), &spec_full).unwrap();
        assert_eq!(one.len(), 1);

        // image smaller than the window → error
        assert!(extract_windows(&img_sq, &TissueMask::full(29, 29), &WindowSpec::new(33, 1, 5, 2).unwrap()).is_err());
    }

    #[test]
    fn apply_filters_matches_explicit_preprocessing_oracle() {
        // scalar oracle: normalize → center → whiten → dot, per filter
        let img = noise_image(9, 9, 1, 3);
        let model = toy_model(&img, 3, 3, 4);
        let spec = WindowSpec::new(9, 1, 3, 2).unwrap();
        let acts = apply_filters(&img, &model, &spec).unwrap();
        let g = spec.grid_side();
        assert_eq!(g, 4);

        let wmat = model.whitening().matrix();
        let fmean = model.whitening().feature_mean();
        let (mean, std) = (model.norm().mean, model.norm().std);
        for gy in 0..g {
            for gx in 0..g {
                // raw sub-patch, flattened the same way as training patches
                let mut raw = vec![0.0_f64; 9];
                for dy in 0..3 {
                    for dx in 0..3 {
                        raw[dy * 3 + dx] = img.at(gx * 2 + dx, gy * 2 + dy, 0);
                    }
                }
                let centered: Vec<f64> = raw
                    .iter()
                    .enumerate()
                    .map(|(t, &v)| (v - mean) / std - fmean[t])
                    .collect();
                let whitened: Vec<f64> = (0..9)
                    .map(|r| (0..9).map(|t| wmat[[r, t]] * centered[t]).sum())
                    .collect();
                for j in 0..3 {
                    let dot: f64 = model
                        .dictionary()
                        .column(j)
                        .iter()
                        .zip(&whitened)
                        .map(|(&d, &x)| d * x)
                        .sum();
                    let expected = dot.max(0.0);
                    let got = acts.map(j)[gy * g + gx];
                    assert_abs_diff_eq!(got, expected, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn activations_are_rectified() {
        let img = noise_image(11, 11, 1, 9);
        let model = toy_model(&img, 3, 4, 10);
        let spec = WindowSpec::new(11, 1, 3, 2).unwrap();
        let acts = apply_filters(&img, &model, &spec).unwrap();
        for j in 0..4 {
            assert!(acts.map(j).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn apply_filters_rejects_provenance_mismatch() {
        let img = noise_image(9, 9, 1, 5);
        let model = toy_model(&img, 3, 3, 6);
        // spec with different p
        let spec = WindowSpec::new(9, 1, 5, 2).unwrap();
        assert!(apply_filters(&img, &model, &spec).is_err());
        // RGB input on a grayscale model
        let rgb = noise_image(9, 9, 3, 7);
        let spec_ok = WindowSpec::new(9, 1, 3, 2).unwrap();
        assert!(apply_filters(&rgb, &model, &spec_ok).is_err());
    }

    #[test]
    fn quadrant_sums_on_known_maps() {
        let ones = vec![1.0_f64; 48 * 48];
        let sums = sum_pool_quadrants(&ones, 48).unwrap();
        assert_eq!(sums, [576.0, 576.0, 576.0, 576.0]);

        let mut single = vec![0.0_f64; 16];
        single[0] = 1.0;
        assert_eq!(sum_pool_quadrants(&single, 4).unwrap(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn quadrant_sums_match_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let map: Vec<f64> = (0..36).map(|_| rng.random_range(0.0..1.0)).collect();
        let sums = sum_pool_quadrants(&map, 6).unwrap();
        let mut expect = [0.0_f64; 4];
        for y in 0..6 {
            for x in 0..6 {
                let q = match (y < 3, x < 3) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                expect[q] += map[y * 6 + x];
            }
        }
        for q in 0..4 {
            assert_abs_diff_eq!(sums[q], expect[q], epsilon = 1e-12);
        }
    }

    #[test]
    fn quadrant_sums_partition_odd_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let map: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..1.0)).collect();
        let sums = sum_pool_quadrants(&map, 5).unwrap();
        let total: f64 = map.iter().sum();
        assert_abs_diff_eq!(sums.iter().sum::<f64>(), total, epsilon = 1e-12);
    }

    #[test]
    fn featurize_shapes_and_conservation() {
        let img = noise_image(21, 17, 1, 20);
        let model = toy_model(&img, 3, 5, 21);
        let spec = WindowSpec::new(9, 2, 3, 2).unwrap();
        let mask = TissueMask::full(21, 17);
        let field = featurize(&img, &mask, &model, &spec).unwrap();

        assert_eq!(field.dim(), 20);
        assert_eq!(field.rows(), (17 - 9) / 2 + 1);
        assert_eq!(field.cols(), (21 - 9) / 2 + 1);
        assert_eq!(field.len(), field.rows() * field.cols());

        // non-negativity
        assert!(field.points().iter().all(|&v| v >= 0.0));

        // pooling partitions each filter's map: 4 sums == total mass
        let win = extract_windows(&img, &mask, &spec).unwrap()[3];
        let crop = crop(&img, win.x0, win.y0, 9);
        let acts = apply_filters(&crop, &model, &spec).unwrap();
        let vec3 = field.vector(3);
        for j in 0..5 {
            let mass: f64 = acts.map(j).iter().sum();
            let pooled: f64 = vec3[4 * j..4 * j + 4].iter().sum();
            let tol = 1e-9 * mass.max(1.0);
            assert!((mass - pooled).abs() <= tol, "filter {j}: {mass} vs {pooled}");
        }
    }

    fn crop(img: &ImageGrid<f64>, x0: usize, y0: usize, w: usize) -> ImageGrid<f64> {
        let mut data = Vec::with_capacity(w * w * img.channels());
        for y in y0..y0 + w {
            for x in x0..x0 + w {
                for ch in 0..img.channels() {
                    data.push(img.at(x, y, ch));
                }
            }
        }
        ImageGrid::new(w, w, img.channels(), data).unwrap()
    }

    #[test]
    fn featurize_is_pure_and_deterministic() {
        let img = noise_image(15, 15, 1, 30);
        let model = toy_model(&img, 3, 3, 31);
        let spec = WindowSpec::new(7, 2, 3, 2).unwrap();
        let mask = TissueMask::full(15, 15);
        let a = featurize(&img, &mask, &model, &spec).unwrap();
        let b = featurize(&img, &mask, &model, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_content_gives_identical_vectors() {
        // periodic horizontal pattern with period equal to the stride:
        // every window along a row sees identical pixels
        let (width, height) = (20usize, 8usize);
        let period = 4usize;
        let data: Vec<f64> = (0..height)
            .flat_map(|y| (0..width).map(move |x| ((x % period) as f64 + y as f64) / 12.0))
            .collect();
        let img = ImageGrid::new(width, height, 1, data).unwrap();
        let model = toy_model(&img, 3, 3, 40);
        let spec = WindowSpec::new(7, 4, 3, 2).unwrap();
        let mask = TissueMask::full(width, height);
        let field = featurize(&img, &mask, &model, &spec).unwrap();

        assert!(field.cols() >= 2);
        for row in 0..field.rows() {
            let base = row * field.cols();
            for col in 1..field.cols() {
                assert_eq!(field.vector(base), field.vector(base + col), "row {row} col {col}");
            }
        }
    }

    #[test]
    fn translation_by_stride_shifts_the_field() {
        // periodic texture; shifting content by s pixels shifts the feature
        // grid by one cell (interior windows)
        let (width, height, s) = (26usize, 14usize, 3usize);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let row_pattern: Vec<f64> = (0..width).map(|_| rng.random_range(0.0..1.0)).collect();
        let value = |x: usize, y: usize| row_pattern[(x + 3 * y) % width];

        let img_a = ImageGrid::new(
            width,
            height,
            1,
            (0..height)
                .flat_map(|y| (0..width).map(move |x| value(x, y)))
                .collect(),
        )
        .unwrap();
        // content shifted right by s (with wraparound to keep it total)
        let img_b = ImageGrid::new(
            width,
            height,
            1,
            (0..height)
                .flat_map(|y| (0..width).map(move |x| value((x + width - s) % width, y)))
                .collect(),
        )
        .unwrap();

        let model = toy_model(&img_a, 3, 4, 51);
        let spec = WindowSpec::new(7, s, 3, 2).unwrap();
        let mask = TissueMask::full(width, height);
        let fa = featurize(&img_a, &mask, &model, &spec).unwrap();
        let fb = featurize(&img_b, &mask, &model, &spec).unwrap();

        // window (r, c) of the shifted image sees window (r, c−1) of the original
        for row in 0..fa.rows() {
            for col in 1..fa.cols() {
                let a = fa.vector(row * fa.cols() + (col - 1));
                let b = fb.vector(row * fb.cols() + col);
                assert_eq!(a, b, "row {row} col {col}");
            }
        }
    }

    #[test]
    fn feature_dump_layout() {
        let img = noise_image(12, 10, 1, 60);
        let model = toy_model(&img, 3, 3, 61);
        let spec = WindowSpec::new(7, 3, 3, 2).unwrap();
        // knock out one window's central block so the dump has a zero row
        let mut bits = vec![true; 120];
        let offset = (7 - 3) / 2;
        for dy in 0..3 {
            for dx in 0..3 {
                bits[(offset + dy) * 12 + (offset + dx)] = false;
            }
        }
        let mask = TissueMask::new(12, 10, bits).unwrap();
        let field = featurize(&img, &mask, &model, &spec).unwrap();
        assert_eq!(field.len(), field.rows() * field.cols() - 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        field.write_dump(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = std::str::from_utf8(&bytes[..header_end]).unwrap();
        assert_eq!(
            header,
            format!("{} {} {}", field.rows(), field.cols(), field.dim())
        );
        let payload = &bytes[header_end + 1..];
        assert_eq!(payload.len(), field.rows() * field.cols() * field.dim() * 4);

        // first window was masked out → its row is all zeros
        let first: Vec<f32> = payload[..field.dim() * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert!(first.iter().all(|&v| v == 0.0));
        // second window is present and non-trivial
        let second: Vec<f32> = payload[field.dim() * 4..2 * field.dim() * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let expect: Vec<f32> = field.vector(0).iter().map(|&v| v as f32).collect();
        assert_eq!(second, expect);
    }

    #[test]
    fn kmeans_over_features_runs() {
        let img = noise_image(15, 15, 1, 70);
        let model = toy_model(&img, 3, 3, 71);
        let spec = WindowSpec::new(7, 2, 3, 2).unwrap();
        let field = featurize(&img, &TissueMask::full(15, 15), &model, &spec).unwrap();
        let km = kmeans_fit(&field.points(), 2, 0, 20, 1e-9).unwrap();
        assert_eq!(km.dim(), field.dim());
    }
}
