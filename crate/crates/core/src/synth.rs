//! Procedural multi-texture scenes with exact ground truth.
//!
//! Stands in for unavailable annotated tissue: regions share their mean
//! intensity but differ in local texture statistics, so methods that only
//! look at pixel values cannot separate them while texture-aware
//! featurization can.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::imagegrid::{ImageGrid, LabelMap};
use crate::scalar::{from_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripeOrientation {
    Horizontal,
    Vertical,
    Diagonal,
}

/// Per-class texture: a deterministic pattern around a base intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TextureKind {
    /// Square-wave stripes with the given full period.
    Stripes {
        period: usize,
        amplitude: f64,
        orientation: StripeOrientation,
    },
    /// Checkerboard with square cells.
    Checks { cell: usize, amplitude: f64 },
    /// No pattern, just the base intensity.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureParams {
    pub base: f64,
    pub noise_sigma: f64,
    pub kind: TextureKind,
}

impl TextureParams {
    fn value_at(&self, x: usize, y: usize) -> f64 {
        let pattern = match self.kind {
            TextureKind::Stripes {
                period,
                amplitude,
                orientation,
            } => {
                let coord = match orientation {
                    StripeOrientation::Horizontal => y,
                    StripeOrientation::Vertical => x,
                    StripeOrientation::Diagonal => x + y,
                };
                if (coord % period) < period / 2 {
                    amplitude
                } else {
                    -amplitude
                }
            }
            TextureKind::Checks { cell, amplitude } => {
                if (x / cell + y / cell) % 2 == 0 {
                    amplitude
                } else {
                    -amplitude
                }
            }
            TextureKind::Flat => 0.0,
        };
        self.base + pattern
    }
}

/// A scene: a per-pixel region map plus texture parameters per class.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureScene {
    width: usize,
    height: usize,
    region_map: Vec<u8>,
    classes: Vec<TextureParams>,
    noise_seed: u64,
}

impl TextureScene {
    pub fn new(
        width: usize,
        height: usize,
        region_map: Vec<u8>,
        classes: Vec<TextureParams>,
        noise_seed: u64,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("scene needs at least one class".into()));
        }
        if region_map.len() != width * height {
            return Err(Error::shape(
                format!("{} region entries", width * height),
                format!("{}", region_map.len()),
            ));
        }
        if region_map.iter().any(|&c| c as usize >= classes.len()) {
            return Err(Error::Config("region map references missing class".into()));
        }
        // every class needs enough mass for meaningful evaluation
        let mut counts = vec![0usize; classes.len()];
        for &c in &region_map {
            counts[c as usize] += 1;
        }
        let min_share = (width * height) / 20;
        if let Some(starved) = counts.iter().position(|&n| n < min_share) {
            return Err(Error::Config(format!(
                "class {starved} covers fewer than 5% of pixels"
            )));
        }
        Ok(Self {
            width,
            height,
            region_map,
            classes,
            noise_seed,
        })
    }

    /// The frozen default: three vertical bands whose textures share one
    /// bimodal intensity histogram (fine vertical stripes, coarse checks,
    /// fine diagonal stripes), so they are indistinguishable by pixel value
    /// but separate cleanly by local structure.
    pub fn default_scene(width: usize, height: usize, noise_seed: u64) -> Result<Self> {
        let classes = vec![
            TextureParams {
                base: 0.5,
                noise_sigma: 0.02,
                kind: TextureKind::Stripes {
                    period: 4,
                    amplitude: 0.25,
                    orientation: StripeOrientation::Vertical,
                },
            },
            TextureParams {
                base: 0.5,
                noise_sigma: 0.02,
                kind: TextureKind::Checks {
                    cell: 24,
                    amplitude: 0.25,
                },
            },
            TextureParams {
                base: 0.5,
                noise_sigma: 0.02,
                kind: TextureKind::Stripes {
                    period: 4,
                    amplitude: 0.25,
                    orientation: StripeOrientation::Diagonal,
                },
            },
        ];
        let band = width / 3;
        let region_map = (0..height)
            .flat_map(|_| (0..width).map(move |x| ((x / band) as u8).min(2)))
            .collect();
        Self::new(width, height, region_map, classes, noise_seed)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    /// Same scene with a different noise seed (a "sibling slice": identical
    /// regions and textures, fresh noise).
    pub fn sibling(&self, noise_seed: u64) -> Self {
        Self {
            noise_seed,
            ..self.clone()
        }
    }

    /// Deterministic grayscale image plus exact ground truth.
    pub fn generate<T: Scalar>(&self) -> (ImageGrid<T>, LabelMap) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        let normal = rand_distr::StandardNormal;
        let mut data = Vec::with_capacity(self.width * self.height);
        let mut labels = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let class = self.region_map[y * self.width + x] as usize;
                let params = &self.classes[class];
                let noise: f64 = normal.sample(&mut rng);
                let v = (params.value_at(x, y) + params.noise_sigma * noise).clamp(0.0, 1.0);
                data.push(from_f64::<T>(v));
                labels.push(class as i32);
            }
        }
        let img = ImageGrid::new(self.width, self.height, 1, data)
            .expect("generated intensities are clamped to [0,1]");
        let truth = LabelMap::new(self.width, self.height, self.classes.len(), labels)
            .expect("region map entries validated at construction");
        (img, truth)
    }
}
