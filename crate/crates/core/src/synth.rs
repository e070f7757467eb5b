//! Synthetic scenes and multiplicative channel tints standing in for
//! wavelength-dependent atmospheric scattering, plus the measured
//! compensation report for the weight rules.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convert::{convert, ConversionSpec};
use crate::dataset::AnnotationRecord;
use crate::histogram::{dn_mean_std, gray_histogram, pooled_histogram, stats_of, ChannelStats};
use crate::num::round_to_u8;
use crate::raster::{GrayImage, Rgb, RgbImage};
use crate::rng::SplitMix64;
use crate::select::{selection_for_mode, FilterMode};
use crate::weights::WeightTriple;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("tint gains must be finite and non-negative: {0:?}")]
    InvalidTint([f64; 3]),
    #[error("scene must be at least 16x16, got {0}x{1}")]
    SceneTooSmall(u32, u32),
    #[error("invalid gray range {0}..={1}")]
    InvalidRange(u8, u8),
    #[error("could not place {0} non-overlapping targets")]
    TargetsDontFit(usize),
}

/// Per-channel multiplicative gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TintSpec {
    pub f_r: f64,
    pub f_g: f64,
    pub f_b: f64,
}

impl TintSpec {
    pub const IDENTITY: Self = Self { f_r: 1.0, f_g: 1.0, f_b: 1.0 };
    /// Blue haze under a high sun.
    pub const DAYTIME: Self = Self { f_r: 0.9, f_g: 1.0, f_b: 1.25 };
    /// Long-path reddening at low sun.
    pub const SUNSET: Self = Self { f_r: 1.25, f_g: 1.0, f_b: 0.9 };

    pub fn new(f_r: f64, f_g: f64, f_b: f64) -> Result<Self, SynthError> {
        let gains = [f_r, f_g, f_b];
        if gains.iter().all(|g| g.is_finite() && *g >= 0.0) {
            Ok(Self { f_r, f_g, f_b })
        } else {
            Err(SynthError::InvalidTint(gains))
        }
    }
}

impl fmt::Display for TintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.f_r, self.f_g, self.f_b)
    }
}

/// `c' = clamp(round(f_c * c), 0, 255)` per channel.
pub fn apply_tint(img: &RgbImage, t: &TintSpec) -> RgbImage {
    let lut = |f: f64| -> [u8; 256] { std::array::from_fn(|v| round_to_u8(f * v as f64)) };
    let (lr, lg, lb) = (lut(t.f_r), lut(t.f_g), lut(t.f_b));
    let pixels = img
        .pixels()
        .iter()
        .map(|p| Rgb::new(lr[p.r as usize], lg[p.g as usize], lb[p.b as usize]))
        .collect();
    RgbImage::new(img.width(), img.height(), pixels).expect("dimensions preserved")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub target_count: usize,
    /// Inclusive gray range for terrain.
    pub ground: (u8, u8),
    /// Inclusive gray range for targets.
    pub target: (u8, u8),
    pub num_classes: u32,
}

impl SceneSpec {
    pub fn new(width: u32, height: u32, seed: u64, target_count: usize) -> Self {
        Self { width, height, seed, target_count, ground: (60, 160), target: (170, 235), num_classes: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: RgbImage,
    pub annotations: Vec<AnnotationRecord>,
}

#[derive(Clone, Copy)]
struct Rect {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

impl Rect {
    /// Overlap test with a one-pixel margin.
    fn touches(&self, o: &Rect) -> bool {
        self.x <= o.x + o.w && o.x <= self.x + self.w && self.y <= o.y + o.h && o.y <= self.y + self.h
    }
}

const PLACEMENT_ATTEMPTS: usize = 200;
const TERRAIN_BLOCK: u32 = 8;

/// Neutral-gray terrain (8x8 blocks with per-pixel jitter) with
/// non-overlapping rectangular targets.
pub fn gen_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    let (w, h) = (spec.width, spec.height);
    if w < 16 || h < 16 {
        return Err(SynthError::SceneTooSmall(w, h));
    }
    for (lo, hi) in [spec.ground, spec.target] {
        if lo > hi {
            return Err(SynthError::InvalidRange(lo, hi));
        }
    }
    let mut rng = SplitMix64::new(spec.seed);
    let (glo, ghi) = (u32::from(spec.ground.0), u32::from(spec.ground.1));

    let bw = w.div_ceil(TERRAIN_BLOCK);
    let bh = h.div_ceil(TERRAIN_BLOCK);
    let blocks: Vec<u32> = (0..bw * bh).map(|_| rng.range_inclusive(glo, ghi)).collect();
    let mut image = RgbImage::from_fn(w, h, |x, y| {
        let base = blocks[((y / TERRAIN_BLOCK) * bw + x / TERRAIN_BLOCK) as usize] as i64;
        let jitter = rng.range_inclusive(0, 8) as i64 - 4;
        Rgb::gray((base + jitter).clamp(glo as i64, ghi as i64) as u8)
    })
    .expect("valid dimensions");

    let mut placed: Vec<Rect> = Vec::with_capacity(spec.target_count);
    let mut annotations = Vec::with_capacity(spec.target_count);
    let (min_w, max_w) = ((w / 16).max(2), (w / 4).max(3));
    let (min_h, max_h) = ((h / 16).max(2), (h / 4).max(3));
    for _ in 0..spec.target_count {
        let rect = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let rw = rng.range_inclusive(min_w, max_w);
            let rh = rng.range_inclusive(min_h, max_h);
            let r = Rect { x: rng.range_inclusive(0, w - rw), y: rng.range_inclusive(0, h - rh), w: rw, h: rh };
            (!placed.iter().any(|p| p.touches(&r))).then_some(r)
        });
        let Some(r) = rect else {
            return Err(SynthError::TargetsDontFit(spec.target_count));
        };
        let level = rng.range_inclusive(u32::from(spec.target.0), u32::from(spec.target.1)) as u8;
        let class_id = rng.below(u64::from(spec.num_classes.max(1))) as u32;
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                image.put(x, y, Rgb::gray(level));
            }
        }
        annotations.push(AnnotationRecord {
            class_id,
            cx: (f64::from(r.x) + f64::from(r.w) / 2.0) / f64::from(w),
            cy: (f64::from(r.y) + f64::from(r.h) / 2.0) / f64::from(h),
            w: f64::from(r.w) / f64::from(w),
            h: f64::from(r.h) / f64::from(h),
        });
        placed.push(r);
    }
    Ok(Scene { image, annotations })
}

/// How far each conversion of a tinted scene drifts from the default
/// conversion of the untinted scene, in DN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationRecord {
    pub tint: TintSpec,
    pub mode: FilterMode,
    pub stats: ChannelStats<f64>,
    pub weights: Option<WeightTriple<f64>>,
    pub fallback: bool,
    pub baseline_mean: f64,
    pub candidate_mean: f64,
    pub naive_mean: f64,
    pub delta_candidate: f64,
    pub delta_naive: f64,
}

fn gray_mean(img: &GrayImage) -> f64 {
    dn_mean_std(&gray_histogram(img)).expect("non-empty image").0
}

pub fn compensation_report(base: &RgbImage, tint: &TintSpec, mode: FilterMode) -> CompensationRecord {
    let baseline_mean = gray_mean(&convert(base, &ConversionSpec::DEFAULT));
    let tinted = apply_tint(base, tint);
    let stats: ChannelStats<f64> = stats_of(&pooled_histogram(&tinted)).expect("non-empty image");
    let selection = selection_for_mode(mode, &stats);
    let candidate_mean = gray_mean(&convert(&tinted, &selection.spec));
    let naive_mean = gray_mean(&convert(&tinted, &ConversionSpec::DEFAULT));
    CompensationRecord {
        tint: *tint,
        mode,
        stats,
        weights: selection.weights(),
        fallback: selection.fallback,
        baseline_mean,
        candidate_mean,
        naive_mean,
        delta_candidate: (candidate_mean - baseline_mean).abs(),
        delta_naive: (naive_mean - baseline_mean).abs(),
    }
}

pub const REPORT_CSV_HEADER: &str = "scene_seed,tint,mode,w_r,w_g,w_b,clamped,delta_candidate,delta_naive";

/// One CSV row. Floats use shortest round-trip formatting so rows can be
/// compared exactly.
pub fn report_csv_row(scene_seed: u64, r: &CompensationRecord) -> String {
    let (w_r, w_g, w_b, clamped) = match r.weights {
        Some(w) => (w.w_r.to_string(), w.w_g.to_string(), w.w_b.to_string(), w.clamped),
        None => ("default".into(), "default".into(), "default".into(), false),
    };
    format!(
        "{scene_seed},{},{},{w_r},{w_g},{w_b},{clamped},{},{}",
        r.tint,
        r.mode.name(),
        r.delta_candidate,
        r.delta_naive
    )
}

/// Parameters of a seeded corpus run.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub first_seed: u64,
    pub count: u64,
    pub width: u32,
    pub height: u32,
    pub target_count: usize,
    pub tint: TintSpec,
    pub mode: FilterMode,
}

impl CorpusSpec {
    /// 200 daytime-tinted 64x64 scenes with three targets each, red filter.
    pub fn daytime_regression() -> Self {
        Self {
            first_seed: 0,
            count: 200,
            width: 64,
            height: 64,
            target_count: 3,
            tint: TintSpec::DAYTIME,
            mode: FilterMode::Red,
        }
    }

    pub fn scene_spec(&self, seed: u64) -> SceneSpec {
        SceneSpec::new(self.width, self.height, seed, self.target_count)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.first_seed..self.first_seed + self.count
    }
}

/// Runs the corpus and returns the CSV report (header included).
pub fn corpus_report(spec: &CorpusSpec) -> Result<String, SynthError> {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for seed in spec.seeds() {
        let scene = gen_scene(&spec.scene_spec(seed))?;
        let rec = compensation_report(&scene.image, &spec.tint, spec.mode);
        out.push_str(&report_csv_row(seed, &rec));
        out.push('\n');
    }
    Ok(out)
}
