//! Weighted RGB to single-channel conversion.
//!
//! [`convert`] is the optimized path (per-channel product tables, optional
//! row parallelism). [`convert_reference`] is the plain per-pixel loop kept
//! as its oracle. Both evaluate `w_r*R + w_g*G + w_b*B` in `f64` with the same
//! operation order, then round half away from zero and clamp to `[0, 255]`,
//! so their outputs are bit-identical.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::num::round_to_u8;
use crate::raster::{self, GrayImage, RasterFormat, RgbImage};
use crate::weights::{WeightTriple, DEFAULT_TRIPLE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ConversionMode {
    /// Fixed published coefficients (0.3, 0.1, 0.5), sum 0.9.
    Default,
    /// The default coefficients divided by 0.9.
    NormalizedDefault,
    Weighted { weights: WeightTriple<f64> },
}

/// Only one rounding policy exists; it is carried so that records state it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    HalfAwayFromZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversionSpec {
    #[serde(flatten)]
    pub mode: ConversionMode,
    #[serde(default)]
    pub rounding: Rounding,
}

impl ConversionSpec {
    pub const DEFAULT: Self = Self { mode: ConversionMode::Default, rounding: Rounding::HalfAwayFromZero };
    pub const NORMALIZED_DEFAULT: Self =
        Self { mode: ConversionMode::NormalizedDefault, rounding: Rounding::HalfAwayFromZero };

    pub fn weighted(weights: WeightTriple<f64>) -> Self {
        Self { mode: ConversionMode::Weighted { weights }, rounding: Rounding::HalfAwayFromZero }
    }

    /// `(w_r, w_g, w_b)` as applied to pixels.
    pub fn coefficients(&self) -> [f64; 3] {
        match self.mode {
            ConversionMode::Default => [DEFAULT_TRIPLE.w_r, DEFAULT_TRIPLE.w_g, DEFAULT_TRIPLE.w_b],
            ConversionMode::NormalizedDefault => DEFAULT_TRIPLE.normalized().as_array(),
            ConversionMode::Weighted { weights } => weights.as_array(),
        }
    }
}

/// Per-channel product tables: `lut[c][v] == w_c * v` exactly as the
/// reference loop computes it.
struct ProductTables([[f64; 256]; 3]);

impl ProductTables {
    fn new(w: [f64; 3]) -> Self {
        let mut t = [[0.0; 256]; 3];
        for (c, table) in t.iter_mut().enumerate() {
            for (v, slot) in table.iter_mut().enumerate() {
                *slot = w[c] * v as f64;
            }
        }
        Self(t)
    }

    #[inline]
    fn apply_row(&self, src: &[raster::Rgb], dst: &mut [u8]) {
        let [lr, lg, lb] = &self.0;
        for (p, out) in src.iter().zip(dst.iter_mut()) {
            *out = round_to_u8(lr[p.r as usize] + lg[p.g as usize] + lb[p.b as usize]);
        }
    }
}

/// Converts on the calling thread.
pub fn convert(img: &RgbImage, spec: &ConversionSpec) -> GrayImage {
    let tables = ProductTables::new(spec.coefficients());
    let mut out = vec![0u8; img.len()];
    tables.apply_row(img.pixels(), &mut out);
    GrayImage::new(img.width(), img.height(), out).expect("dimensions preserved")
}

/// Row-parallel variant of [`convert`] on the current rayon pool.
pub fn convert_parallel(img: &RgbImage, spec: &ConversionSpec) -> GrayImage {
    let tables = ProductTables::new(spec.coefficients());
    let w = img.width() as usize;
    let mut out = vec![0u8; img.len()];
    // Blocks of rows keep per-task overhead low on tall narrow images.
    let rows_per_task = (1 << 16) / w.max(1) + 1;
    out.par_chunks_mut(w * rows_per_task)
        .zip(img.pixels().par_chunks(w * rows_per_task))
        .for_each(|(dst, src)| tables.apply_row(src, dst));
    GrayImage::new(img.width(), img.height(), out).expect("dimensions preserved")
}

/// Straight per-pixel evaluation, no tables and no batching.
pub fn convert_reference(img: &RgbImage, spec: &ConversionSpec) -> GrayImage {
    let [wr, wg, wb] = spec.coefficients();
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let p = img.get(x, y).expect("in bounds");
        let raw = wr * p.r as f64 + wg * p.g as f64 + wb * p.b as f64;
        let rounded = raw.round();
        if rounded < 0.0 {
            0
        } else if rounded > 255.0 {
            255
        } else {
            rounded as u8
        }
    })
    .expect("dimensions preserved")
}

/// Output encodings for converted images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Pgm,
    Png,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Pgm => "pgm",
            OutputFormat::Png => "png",
        }
    }

    pub fn raster_format(self) -> RasterFormat {
        match self {
            OutputFormat::Pgm => RasterFormat::Pnm,
            OutputFormat::Png => RasterFormat::Png,
        }
    }

    pub fn output_path(self, out_dir: &Path, source: &Path) -> PathBuf {
        let mut name = source.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(".");
        name.push(self.extension());
        out_dir.join(name)
    }
}

/// Runs `f` over `items` on `workers` threads and returns results in input
/// order. `workers == 1` stays on the calling thread.
pub fn run_ordered<I, R, F>(items: &[I], workers: usize, f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> R + Sync + Send,
{
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Marks later inputs whose output path collides with an earlier one.
pub fn duplicate_outputs(paths: &[PathBuf], format: OutputFormat, out_dir: &Path) -> Vec<bool> {
    let mut seen = HashMap::new();
    paths
        .iter()
        .map(|p| seen.insert(format.output_path(out_dir, p), ()).is_some())
        .collect()
}

/// Result for one input of [`convert_batch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub source: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<ConversionSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BatchOutcome {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("serializable outcome")
    }
}

/// Converts every file independently; one failure never aborts the batch.
/// `spec_for` picks the conversion for each loaded image.
pub fn convert_batch<F>(
    paths: &[PathBuf],
    spec_for: F,
    out_dir: &Path,
    format: OutputFormat,
    workers: usize,
) -> Vec<BatchOutcome>
where
    F: Fn(&Path, &RgbImage) -> Result<ConversionSpec, String> + Sync + Send,
{
    let dup = duplicate_outputs(paths, format, out_dir);
    let jobs: Vec<(&PathBuf, bool)> = paths.iter().zip(dup).collect();
    run_ordered(&jobs, workers, |&(src, is_dup)| {
        let fail = |error: String| BatchOutcome { source: src.clone(), output: None, spec: None, error: Some(error) };
        if is_dup {
            return fail("output name collides with an earlier input".into());
        }
        let img = match raster::load_rgb(src) {
            Ok(img) => img,
            Err(e) => return fail(e.to_string()),
        };
        let spec = match spec_for(src, &img) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let out_path = format.output_path(out_dir, src);
        match raster::save_gray(&convert(&img, &spec), &out_path) {
            Ok(()) => BatchOutcome { source: src.clone(), output: Some(out_path), spec: Some(spec), error: None },
            Err(e) => fail(e.to_string()),
        }
    })
}
