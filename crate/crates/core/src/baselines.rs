//! Comparison methods: multithreshold Otsu and per-pixel k-means.

use ndarray::Array2;

use crate::clustering::{kmeans_assign, kmeans_fit};
use crate::error::{Error, Result};
use crate::imagegrid::{ImageGrid, LabelMap, TissueMask};
use crate::scalar::{to_f64, Scalar};

/// 256-bin histogram of grayscale intensities (bin = ⌊v·255⌋, v = 1 → 255).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    bins: [u64; 256],
}

impl Histogram256 {
    /// Histogram over foreground pixels only.
    pub fn from_image<T: Scalar>(img: &ImageGrid<T>, mask: &TissueMask) -> Result<Self> {
        if mask.width() != img.width() || mask.height() != img.height() {
            return Err(Error::shape(
                format!("{}×{} mask", img.width(), img.height()),
                format!("{}×{}", mask.width(), mask.height()),
            ));
        }
        let mut bins = [0u64; 256];
        for y in 0..img.height() {
            for x in 0..img.width() {
                if mask.is_foreground(x, y) {
                    bins[bin_of(img.gray_at(x, y))] += 1;
                }
            }
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn distinct_bins(&self) -> usize {
        self.bins.iter().filter(|&&b| b > 0).count()
    }
}

#[inline]
pub fn bin_of<T: Scalar>(v: T) -> usize {
    ((to_f64(v) * 255.0).floor() as usize).min(255)
}

/// Between-class variance Σₖ ωₖ(μₖ − μ_T)² of the classes induced by the
/// ordered thresholds (class k covers bins (tₖ₋₁, tₖ]).
pub fn between_class_variance(hist: &Histogram256, thresholds: &[usize]) -> f64 {
    let total = hist.total() as f64;
    if total == 0.0 {
        return 0.0;
    }
    let mut weighted_sum = 0.0;
    for (b, &count) in hist.bins.iter().enumerate() {
        weighted_sum += b as f64 * count as f64;
    }
    let global_mean = weighted_sum / total;

    let mut variance = 0.0;
    let mut lo = 0usize; // inclusive bin start of the current class
    for k in 0..=thresholds.len() {
        let hi = if k < thresholds.len() { thresholds[k] } else { 255 };
        let mut weight = 0.0;
        let mut sum = 0.0;
        for b in lo..=hi {
            weight += hist.bins[b] as f64;
            sum += b as f64 * hist.bins[b] as f64;
        }
        if weight > 0.0 {
            let mean = sum / weight;
            let omega = weight / total;
            variance += omega * (mean - global_mean) * (mean - global_mean);
        }
        lo = hi + 1;
    }
    variance
}

/// Thresholds (classes − 1 of them, each the inclusive upper bin of a class)
/// maximizing the between-class variance by exhaustive search; ties go to the
/// lexicographically smallest tuple.
pub fn otsu_thresholds(hist: &Histogram256, classes: usize) -> Result<Vec<usize>> {
    if !(2..=4).contains(&classes) {
        return Err(Error::Config(format!(
            "multithreshold Otsu supports 2–4 classes, got {classes}"
        )));
    }
    if hist.distinct_bins() < classes {
        return Err(Error::Data(format!(
            "only {} distinct foreground intensities for {classes} classes",
            hist.distinct_bins()
        )));
    }

    // prefix sums make each candidate tuple O(classes)
    let mut cum_weight = [0.0_f64; 257];
    let mut cum_sum = [0.0_f64; 257];
    for b in 0..256 {
        cum_weight[b + 1] = cum_weight[b] + hist.bins[b] as f64;
        cum_sum[b + 1] = cum_sum[b] + (b as f64) * hist.bins[b] as f64;
    }
    let total = cum_weight[256];
    let global_mean = cum_sum[256] / total;

    let class_term = |lo: usize, hi: usize| -> f64 {
        // class over bins [lo, hi]
        let weight = cum_weight[hi + 1] - cum_weight[lo];
        if weight <= 0.0 {
            return 0.0;
        }
        let mean = (cum_sum[hi + 1] - cum_sum[lo]) / weight;
        (weight / total) * (mean - global_mean) * (mean - global_mean)
    };

    let mut best_variance = f64::NEG_INFINITY;
    let mut best: Vec<usize> = Vec::new();
    let mut current = vec![0usize; classes - 1];

    // lexicographic enumeration of ordered tuples t₁ < t₂ < … < 255
    fn recurse(
        depth: usize,
        start: usize,
        current: &mut Vec<usize>,
        acc: f64,
        class_term: &dyn Fn(usize, usize) -> f64,
        best_variance: &mut f64,
        best: &mut Vec<usize>,
    ) {
        if depth == current.len() {
            let variance = acc + class_term(current[depth - 1] + 1, 255);
            if variance > *best_variance {
                *best_variance = variance;
                best.clone_from(current);
            }
            return;
        }
        // leave room for the remaining thresholds below 255
        let remaining = current.len() - depth - 1;
        for t in start..(255 - remaining) {
            current[depth] = t;
            let lo = if depth == 0 { 0 } else { current[depth - 1] + 1 };
            let acc = acc + class_term(lo, t);
            recurse(depth + 1, t + 1, current, acc, class_term, best_variance, best);
        }
    }

    recurse(
        0,
        0,
        &mut current,
        0.0,
        &class_term,
        &mut best_variance,
        &mut best,
    );
    Ok(best)
}

/// Label foreground pixels by Otsu threshold interval; background stays
/// unlabeled.
pub fn otsu_multithreshold<T: Scalar>(
    img: &ImageGrid<T>,
    mask: &TissueMask,
    classes: usize,
) -> Result<LabelMap> {
    let hist = Histogram256::from_image(img, mask)?;
    let thresholds = otsu_thresholds(&hist, classes)?;
    let mut lm = LabelMap::unlabeled(img.width(), img.height(), classes);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if !mask.is_foreground(x, y) {
                continue;
            }
            let b = bin_of(img.gray_at(x, y));
            let class = thresholds.iter().take_while(|&&t| b > t).count();
            lm.set(x, y, class as i32);
        }
    }
    Ok(lm)
}

/// Conventional k-means over per-pixel color vectors (no spatial features).
pub fn pixel_kmeans_segment<T: Scalar>(
    img: &ImageGrid<T>,
    mask: &TissueMask,
    c: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<LabelMap> {
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Error::shape(
            format!("{}×{} mask", img.width(), img.height()),
            format!("{}×{}", mask.width(), mask.height()),
        ));
    }
    let mut coords = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.is_foreground(x, y) {
                coords.push((x, y));
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::Data("no foreground pixels to cluster".into()));
    }
    let channels = img.channels();
    let mut points = Array2::<T>::zeros((coords.len(), channels));
    for (i, &(x, y)) in coords.iter().enumerate() {
        for ch in 0..channels {
            points[[i, ch]] = img.at(x, y, ch);
        }
    }
    let model = kmeans_fit(&points.view(), c, seed, max_iters, tol)?;
    let labels = kmeans_assign(&points.view(), &model)?;

    let mut lm = LabelMap::unlabeled(img.width(), img.height(), c);
    for (&(x, y), &label) in coords.iter().zip(&labels) {
        lm.set(x, y, label as i32);
    }
    Ok(lm)
}
