//! Versioned binary container for the trained pipeline model.
//!
//! The model bundles everything needed to reuse centroids on further slices:
//! global normalization statistics, the ZCA transform with its fit-time mean,
//! the patch geometry, the filter dictionary, and (optionally) the fitted
//! k-means clusterer over pooled features.
//!
//! On disk: an ASCII magic/version line, a geometry line, then named
//! little-endian f64 arrays with explicit shape headers, terminated by `end`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::clustering::KMeansModel;
use crate::error::{Error, Result};
use crate::patching::{NormStats, WhiteningTransform};
use crate::scalar::{from_f64, to_f64, Scalar};
use crate::spherical::Dictionary;

const MAGIC: &str = "texseg-model";
const VERSION: u32 = 1;

/// Self-describing trained model: dictionary plus the preprocessing it was
/// fitted with, and optionally a clusterer for cross-slice label reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel<T> {
    norm: NormStats<T>,
    whitening: WhiteningTransform<T>,
    patch_size: usize,
    channels: usize,
    dictionary: Dictionary<T>,
    kmeans: Option<KMeansModel<T>>,
}

impl<T: Scalar> PipelineModel<T> {
    pub fn new(
        norm: NormStats<T>,
        whitening: WhiteningTransform<T>,
        patch_size: usize,
        channels: usize,
        dictionary: Dictionary<T>,
        kmeans: Option<KMeansModel<T>>,
    ) -> Result<Self> {
        let dim = patch_size * patch_size * channels;
        if channels != 1 && channels != 3 {
            return Err(Error::Config(format!("channels must be 1 or 3, got {channels}")));
        }
        if whitening.dim() != dim || dictionary.dim() != dim {
            return Err(Error::shape(
                format!("patch dim {dim} (p={patch_size}, c={channels})"),
                format!(
                    "whitening dim {}, dictionary dim {}",
                    whitening.dim(),
                    dictionary.dim()
                ),
            ));
        }
        if norm.std <= T::zero() {
            return Err(Error::Data("normalization std must be positive".into()));
        }
        if let Some(km) = &kmeans {
            if km.dim() != 4 * dictionary.k() {
                return Err(Error::shape(
                    format!("feature dim {} (4·K)", 4 * dictionary.k()),
                    format!("k-means dim {}", km.dim()),
                ));
            }
        }
        Ok(Self {
            norm,
            whitening,
            patch_size,
            channels,
            dictionary,
            kmeans,
        })
    }

    pub fn norm(&self) -> &NormStats<T> {
        &self.norm
    }

    pub fn whitening(&self) -> &WhiteningTransform<T> {
        &self.whitening
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dictionary(&self) -> &Dictionary<T> {
        &self.dictionary
    }

    pub fn kmeans(&self) -> Option<&KMeansModel<T>> {
        self.kmeans.as_ref()
    }

    /// Pooled feature dimensionality, 4·K.
    pub fn feature_dim(&self) -> usize {
        4 * self.dictionary.k()
    }

    /// Replace the stored clusterer.
    pub fn with_kmeans(mut self, km: KMeansModel<T>) -> Result<Self> {
        if km.dim() != self.feature_dim() {
            return Err(Error::shape(
                format!("feature dim {}", self.feature_dim()),
                format!("k-means dim {}", km.dim()),
            ));
        }
        self.kmeans = Some(km);
        Ok(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(format!("{MAGIC} {VERSION}\n").as_bytes());
        buf.extend_from_slice(
            format!("geometry {} {}\n", self.patch_size, self.channels).as_bytes(),
        );
        write_array(
            &mut buf,
            "norm",
            1,
            2,
            [self.norm.mean, self.norm.std].iter().copied(),
        );
        write_array(
            &mut buf,
            "zca_epsilon",
            1,
            1,
            std::iter::once(self.whitening.epsilon()),
        );
        write_array(
            &mut buf,
            "zca_mean",
            1,
            self.whitening.dim(),
            self.whitening.feature_mean().iter().copied(),
        );
        write_array(
            &mut buf,
            "zca_matrix",
            self.whitening.dim(),
            self.whitening.dim(),
            self.whitening.matrix().iter().copied(),
        );
        write_array(
            &mut buf,
            "dictionary",
            self.dictionary.dim(),
            self.dictionary.k(),
            self.dictionary.columns().iter().copied(),
        );
        if let Some(km) = &self.kmeans {
            write_array(
                &mut buf,
                "kmeans_centers",
                km.c(),
                km.dim(),
                km.centers().iter().copied(),
            );
            write_array(&mut buf, "kmeans_inertia", 1, 1, std::iter::once(km.inertia()));
        }
        buf.extend_from_slice(b"end\n");
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
            path,
        };

        let header = r.line()?;
        let mut it = header.split_ascii_whitespace();
        if it.next() != Some(MAGIC) {
            return Err(r.malformed("not a texseg model file"));
        }
        let version: u32 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| r.malformed("missing format version"))?;
        if version != VERSION {
            return Err(r.malformed(&format!("unsupported format version {version}")));
        }

        let geom = r.line()?;
        let mut it = geom.split_ascii_whitespace();
        if it.next() != Some("geometry") {
            return Err(r.malformed("expected geometry line"));
        }
        let patch_size: usize = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| r.malformed("malformed patch size"))?;
        let channels: usize = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| r.malformed("malformed channel count"))?;

        let (_, norm_vals) = r.array_expect("norm", Some((1, 2)))?;
        let norm = NormStats {
            mean: from_f64::<T>(norm_vals[0]),
            std: from_f64::<T>(norm_vals[1]),
        };
        let (_, eps) = r.array_expect("zca_epsilon", Some((1, 1)))?;
        let ((_, dim), mean_vals) = r.array_named("zca_mean")?;
        let ((mr, mc), matrix_vals) = r.array_named("zca_matrix")?;
        if mr != dim || mc != dim {
            return Err(r.malformed("zca_matrix shape disagrees with zca_mean"));
        }
        let whitening = WhiteningTransform::from_parts(
            from_f64::<T>(eps[0]),
            to_array2::<T>(&matrix_vals, dim, dim),
            Array1::from_iter(mean_vals.iter().map(|&v| from_f64::<T>(v))),
        )?;

        let ((ddim, k), dict_vals) = r.array_named("dictionary")?;
        if ddim != dim {
            return Err(r.malformed("dictionary dim disagrees with whitening dim"));
        }
        let dictionary = Dictionary::from_columns(to_array2::<T>(&dict_vals, ddim, k))?;

        let kmeans = if r.peek_header()?.starts_with("array kmeans_centers ") {
            let ((c, fdim), center_vals) = r.array_named("kmeans_centers")?;
            let (_, inertia) = r.array_expect("kmeans_inertia", Some((1, 1)))?;
            Some(KMeansModel::from_centers(
                to_array2::<T>(&center_vals, c, fdim),
                from_f64::<T>(inertia[0]),
            )?)
        } else {
            None
        };

        let tail = r.line()?;
        if tail != "end" {
            return Err(r.malformed("missing end marker"));
        }
        Self::new(norm, whitening, patch_size, channels, dictionary, kmeans)
    }
}

fn to_array2<T: Scalar>(vals: &[f64], rows: usize, cols: usize) -> Array2<T> {
    Array2::from_shape_vec((rows, cols), vals.iter().map(|&v| from_f64::<T>(v)).collect())
        .expect("shape checked by reader")
}

fn write_array<T: Scalar>(
    buf: &mut Vec<u8>,
    name: &str,
    rows: usize,
    cols: usize,
    values: impl Iterator<Item = T>,
) {
    buf.extend_from_slice(format!("array {name} {rows} {cols}\n").as_bytes());
    let mut n = 0usize;
    for v in values {
        buf.extend_from_slice(&to_f64(v).to_le_bytes());
        n += 1;
    }
    debug_assert_eq!(n, rows * cols);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn malformed(&self, msg: &str) -> Error {
        Error::Data(format!("{}: {msg}", self.path.display()))
    }

    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| self.malformed("unexpected end of file"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| self.malformed("non-UTF-8 header line"))?;
        self.pos += end + 1;
        Ok(line)
    }

    /// Header of the next section without consuming it.
    fn peek_header(&self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| self.malformed("unexpected end of file"))?;
        std::str::from_utf8(&rest[..end]).map_err(|_| self.malformed("non-UTF-8 header line"))
    }

    fn array_named(&mut self, name: &str) -> Result<((usize, usize), Vec<f64>)> {
        let header = self.line()?;
        let mut it = header.split_ascii_whitespace();
        if it.next() != Some("array") || it.next() != Some(name) {
            return Err(self.malformed(&format!("expected array {name:?}, found {header:?}")));
        }
        let rows: usize = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| self.malformed("malformed row count"))?;
        let cols: usize = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| self.malformed("malformed column count"))?;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| self.malformed("array too large"))?;
        if self.bytes.len() - self.pos < len {
            return Err(self.malformed(&format!("truncated array {name:?}")));
        }
        let vals = self.bytes[self.pos..self.pos + len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        self.pos += len;
        Ok(((rows, cols), vals))
    }

    fn array_expect(
        &mut self,
        name: &str,
        shape: Option<(usize, usize)>,
    ) -> Result<((usize, usize), Vec<f64>)> {
        let (got, vals) = self.array_named(name)?;
        if let Some(want) = shape {
            if got != want {
                return Err(self.malformed(&format!(
                    "array {name:?} has shape {got:?}, expected {want:?}"
                )));
            }
        }
        Ok((got, vals))
    }
}
