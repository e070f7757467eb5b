#![allow(dead_code)]

use lumiprep::rng::SplitMix64;
use lumiprep::{Rgb, RgbImage};

pub fn random_image(seed: u64, width: u32, height: u32) -> RgbImage {
    let mut rng = SplitMix64::new(seed);
    RgbImage::from_fn(width, height, |_, _| {
        let v = rng.next_u64();
        Rgb::new(v as u8, (v >> 8) as u8, (v >> 16) as u8)
    })
    .unwrap()
}

/// Two-pass mean / population std over every R, G, B sample, on the DN scale.
pub fn naive_pooled_mean_std(img: &RgbImage) -> (f64, f64) {
    let samples: Vec<f64> = img.pixels().iter().flat_map(|p| [p.r, p.g, p.b]).map(f64::from).collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Modal relative frequency by direct tally.
pub fn naive_perc(img: &RgbImage) -> f64 {
    let mut tally = std::collections::HashMap::new();
    for p in img.pixels() {
        for v in [p.r, p.g, p.b] {
            *tally.entry(v).or_insert(0u64) += 1;
        }
    }
    *tally.values().max().unwrap() as f64 / (3 * img.len()) as f64
}
