//! Raster input, grayscale conversion, tissue masking, and label-map output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageReader, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::{from_f64, to_f64, Scalar};

/// Sentinel for pixels that carry no class label (background, borders).
pub const UNLABELED: i32 = -1;

/// Luma weights for RGB → grayscale conversion.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// A 2D raster with 1 or 3 channels and intensities in [0, 1].
///
/// Data is row-major with interleaved channels:
/// `data[(y * width + x) * channels + ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageGrid<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Data("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Data(format!(
                "unsupported channel count {channels} (expected 1 or 3)"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(
                format!("{} samples", width * height * channels),
                format!("{}", data.len()),
            ));
        }
        if data
            .iter()
            .any(|&v| !v.is_finite() || v < T::zero() || v > T::one())
        {
            return Err(Error::Data("intensities must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Sample at (x, y, ch). Callers guarantee bounds.
    #[inline]
    pub fn at(&self, x: usize, y: usize, ch: usize) -> T {
        self.data[(y * self.width + x) * self.channels + ch]
    }

    /// Grayscale intensity at (x, y); luma-weighted for RGB.
    #[inline]
    pub fn gray_at(&self, x: usize, y: usize) -> T {
        if self.channels == 1 {
            self.at(x, y, 0)
        } else {
            let r = to_f64(self.at(x, y, 0));
            let g = to_f64(self.at(x, y, 1));
            let b = to_f64(self.at(x, y, 2));
            from_f64((LUMA[0] * r + LUMA[1] * g + LUMA[2] * b).clamp(0.0, 1.0))
        }
    }

    /// Collapse to a single channel; already-grayscale images are returned as-is.
    pub fn to_grayscale(&self) -> ImageGrid<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                data.push(self.gray_at(x, y));
            }
        }
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Foreground mask: a pixel is tissue iff its grayscale intensity falls
    /// below `white_threshold` (slide background is near-white).
    pub fn tissue_mask(&self, white_threshold: T) -> Result<TissueMask> {
        if white_threshold <= T::zero() || white_threshold > T::one() {
            return Err(Error::Config(format!(
                "white_threshold must lie in (0, 1], got {white_threshold}"
            )));
        }
        let mut bits = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                bits.push(self.gray_at(x, y) < white_threshold);
            }
        }
        Ok(TissueMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    /// Flatten the p×p patch with top-left corner (x0, y0) into `out`,
    /// ordered (row, column, channel). This order is the contract between
    /// training-patch sampling and window featurization.
    pub(crate) fn copy_patch_into(&self, x0: usize, y0: usize, p: usize, out: &mut [T]) {
        debug_assert!(x0 + p <= self.width && y0 + p <= self.height);
        debug_assert_eq!(out.len(), p * p * self.channels);
        let mut i = 0;
        for dy in 0..p {
            let row = ((y0 + dy) * self.width + x0) * self.channels;
            let src = &self.data[row..row + p * self.channels];
            out[i..i + src.len()].copy_from_slice(src);
            i += src.len();
        }
    }
}

/// Per-pixel foreground flags, same dimensions as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl TissueMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::shape(
                format!("{} mask bits", width * height),
                format!("{}", bits.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// All-foreground mask.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Summed-area table over the mask; entry (y, x) holds the count of
    /// foreground pixels in the rectangle [0, y) × [0, x).
    pub(crate) fn integral(&self) -> Vec<u32> {
        let (w, h) = (self.width, self.height);
        let mut table = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0u32;
            for x in 0..w {
                row_sum += u32::from(self.bits[y * w + x]);
                table[(y + 1) * (w + 1) + (x + 1)] = table[y * (w + 1) + (x + 1)] + row_sum;
            }
        }
        table
    }
}

/// Count of foreground pixels in the p×p square at (x0, y0) using a
/// table produced by [`TissueMask::integral`].
pub(crate) fn integral_count(table: &[u32], width: usize, x0: usize, y0: usize, p: usize) -> u32 {
    let w1 = width + 1;
    table[(y0 + p) * w1 + (x0 + p)] + table[y0 * w1 + x0]
        - table[y0 * w1 + (x0 + p)]
        - table[(y0 + p) * w1 + x0]
}

/// Per-pixel integer labels in {UNLABELED} ∪ {0..num_classes−1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    num_classes: usize,
    labels: Vec<i32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, num_classes: usize, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::shape(
                format!("{} labels", width * height),
                format!("{}", labels.len()),
            ));
        }
        if num_classes == 0 {
            return Err(Error::Data("num_classes must be positive".into()));
        }
        if labels
            .iter()
            .any(|&l| l != UNLABELED && (l < 0 || l as usize >= num_classes))
        {
            return Err(Error::Data(format!(
                "labels must lie in {{-1}} ∪ {{0..{}}}",
                num_classes - 1
            )));
        }
        Ok(Self {
            width,
            height,
            num_classes,
            labels,
        })
    }

    /// All-unlabeled map.
    pub fn unlabeled(width: usize, height: usize, num_classes: usize) -> Self {
        Self {
            width,
            height,
            num_classes,
            labels: vec![UNLABELED; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: i32) {
        debug_assert!(label == UNLABELED || (label >= 0 && (label as usize) < self.num_classes));
        self.labels[y * self.width + x] = label;
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }

    /// Serialize as the plain-text sidecar: a `width height num_classes`
    /// header line, then one row of space-separated labels per image row
    /// (−1 marks unlabeled pixels).
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let mut text = format!("{} {} {}\n", self.width, self.height, self.num_classes);
        for y in 0..self.height {
            for x in 0..self.width {
                if x > 0 {
                    text.push(' ');
                }
                write!(text, "{}", self.get(x, y)).expect("write to string");
            }
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_sidecar(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = text.split_ascii_whitespace();
        let mut next_usize = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Data(format!("{}: missing {what}", path.display())))?
                .parse::<usize>()
                .map_err(|_| Error::Data(format!("{}: malformed {what}", path.display())))
        };
        let width = next_usize("width")?;
        let height = next_usize("height")?;
        let num_classes = next_usize("num_classes")?;
        let mut labels = Vec::with_capacity(width * height);
        for _ in 0..width * height {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Data(format!("{}: truncated label data", path.display())))?;
            let v: i32 = tok
                .parse()
                .map_err(|_| Error::Data(format!("{}: malformed label {tok:?}", path.display())))?;
            labels.push(v);
        }
        if tokens.next().is_some() {
            return Err(Error::Data(format!(
                "{}: trailing data after {} labels",
                path.display(),
                width * height
            )));
        }
        Self::new(width, height, num_classes, labels)
    }
}

/// Decode a PNG (8- or 16-bit, grayscale or RGB; alpha is dropped) into
/// intensities rescaled to [0, 1].
pub fn load_image<T: Scalar>(path: &Path) -> Result<ImageGrid<T>> {
    let decoded = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::image(path, format!("cannot decode: {e}")))?;

    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, data): (usize, Vec<T>) = match decoded {
        DynamicImage::ImageLuma8(img) => (1, rescale_u8::<T>(img.as_raw())),
        DynamicImage::ImageLuma16(img) => (1, rescale_u16::<T>(img.as_raw())),
        DynamicImage::ImageLumaA8(img) => (1, rescale_u8_strided::<T>(img.as_raw(), 2, 1)),
        DynamicImage::ImageLumaA16(img) => (1, rescale_u16_strided::<T>(img.as_raw(), 2, 1)),
        DynamicImage::ImageRgb8(img) => (3, rescale_u8::<T>(img.as_raw())),
        DynamicImage::ImageRgb16(img) => (3, rescale_u16::<T>(img.as_raw())),
        DynamicImage::ImageRgba8(img) => (3, rescale_u8_strided::<T>(img.as_raw(), 4, 3)),
        DynamicImage::ImageRgba16(img) => (3, rescale_u16_strided::<T>(img.as_raw(), 4, 3)),
        other => {
            return Err(Error::image(
                path,
                format!("unsupported pixel format {:?}", other.color()),
            ))
        }
    };
    ImageGrid::new(width, height, channels, data)
}

fn rescale_u8<T: Scalar>(raw: &[u8]) -> Vec<T> {
    raw.iter()
        .map(|&v| from_f64(f64::from(v) / 255.0))
        .collect()
}

fn rescale_u16<T: Scalar>(raw: &[u16]) -> Vec<T> {
    raw.iter()
        .map(|&v| from_f64(f64::from(v) / 65535.0))
        .collect()
}

fn rescale_u8_strided<T: Scalar>(raw: &[u8], stride: usize, keep: usize) -> Vec<T> {
    raw.chunks_exact(stride)
        .flat_map(|px| px[..keep].iter())
        .map(|&v| from_f64(f64::from(v) / 255.0))
        .collect()
}

fn rescale_u16_strided<T: Scalar>(raw: &[u16], stride: usize, keep: usize) -> Vec<T> {
    raw.chunks_exact(stride)
        .flat_map(|px| px[..keep].iter())
        .map(|&v| from_f64(f64::from(v) / 65535.0))
        .collect()
}

/// Write an image as an 8-bit PNG (grayscale images are expanded to RGB).
pub fn save_image<T: Scalar>(img: &ImageGrid<T>, path: &Path) -> Result<()> {
    let mut out = RgbImage::new(img.width() as u32, img.height() as u32);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let px = if img.channels() == 1 {
                let v = quantize(img.at(x, y, 0));
                [v, v, v]
            } else {
                [
                    quantize(img.at(x, y, 0)),
                    quantize(img.at(x, y, 1)),
                    quantize(img.at(x, y, 2)),
                ]
            };
            out.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    out.save(path)
        .map_err(|e| Error::image(path, format!("cannot write: {e}")))
}

fn quantize<T: Scalar>(v: T) -> u8 {
    (to_f64(v) * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Palette used by the CLI when none is given: distinct saturated colors,
/// class 0 first (red/green/blue echo the usual ground-truth coloring).
pub fn default_palette() -> Vec<[u8; 3]> {
    vec![
        [230, 25, 25],
        [25, 160, 25],
        [25, 60, 230],
        [230, 200, 25],
        [160, 25, 200],
        [25, 200, 200],
        [240, 130, 30],
        [130, 90, 40],
    ]
}

/// Render a label map as a color PNG at `path` (UNLABELED pixels are black)
/// and write the machine-readable sidecar next to it.
///
/// The sidecar path replaces the PNG extension with `.labels.txt`.
pub fn render_label_map(lm: &LabelMap, palette: &[[u8; 3]], path: &Path) -> Result<()> {
    if palette.len() < lm.num_classes() {
        return Err(Error::Config(format!(
            "palette has {} colors but the map has {} classes",
            palette.len(),
            lm.num_classes()
        )));
    }
    let mut out = RgbImage::new(lm.width() as u32, lm.height() as u32);
    for y in 0..lm.height() {
        for x in 0..lm.width() {
            let color = match lm.get(x, y) {
                UNLABELED => [0, 0, 0],
                l => palette[l as usize],
            };
            out.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }
    out.save(path)
        .map_err(|e| Error::image(path, format!("cannot write: {e}")))?;
    lm.write_sidecar(&sidecar_path(path))
}

/// `out/slice.png` → `out/slice.labels.txt`.
pub fn sidecar_path(png_path: &Path) -> std::path::PathBuf {
    png_path.with_extension("labels.txt")
}
