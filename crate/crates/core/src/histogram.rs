//! Pooled RGB histograms, the DN / Npix / Perc / CumNpix / CumPerc table,
//! and the normalized statistics that feed the weight rules.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::raster::{GrayImage, RgbImage};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("histogram is empty")]
    EmptyHistogram,
}

/// 256-bin histogram of 8-bit digital numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: [u64; 256],
    total: u64,
}

impl Default for Histogram {
    fn default() -> Self {
        Self { counts: [0; 256], total: 0 }
    }
}

impl Histogram {
    pub fn from_counts(counts: [u64; 256]) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn add(&mut self, dn: u8) {
        self.counts[dn as usize] += 1;
        self.total += 1;
    }

    /// Number of distinct DN values with a non-zero count.
    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Histogram over the R, G and B samples of every pixel combined.
pub fn pooled_histogram(img: &RgbImage) -> Histogram {
    // Three banks break the store-to-load dependency on repeated values.
    let mut banks = [[0u64; 256]; 3];
    for p in img.pixels() {
        banks[0][p.r as usize] += 1;
        banks[1][p.g as usize] += 1;
        banks[2][p.b as usize] += 1;
    }
    let mut counts = [0u64; 256];
    for (i, c) in counts.iter_mut().enumerate() {
        *c = banks[0][i] + banks[1][i] + banks[2][i];
    }
    Histogram::from_counts(counts)
}

pub fn gray_histogram(img: &GrayImage) -> Histogram {
    let mut counts = [0u64; 256];
    for &v in img.pixels() {
        counts[v as usize] += 1;
    }
    Histogram::from_counts(counts)
}

/// A percentage held as an integer number of hundredths, so two-decimal
/// values compare exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent2(u64);

impl Percent2 {
    /// `100 * part / whole` rounded half away from zero to two decimals.
    pub fn of(part: u64, whole: u64) -> Self {
        assert!(whole > 0);
        let num = 20_000u128 * part as u128 + whole as u128;
        Self((num / (2 * whole as u128)) as u64)
    }

    pub fn from_hundredths(h: u64) -> Self {
        Self(h)
    }

    pub fn hundredths(self) -> u64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Percent2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = format!("{}.{:02}", self.0 / 100, self.0 % 100);
        f.pad(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableRow {
    pub dn: u8,
    pub npix: u64,
    pub perc: Percent2,
    pub cum_npix: u64,
    pub cum_perc: Percent2,
}

/// One row per DN (0..=255), in increasing DN order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramTable {
    rows: Vec<TableRow>,
    total: u64,
}

pub const TABLE_CSV_HEADER: &str = "DN,Npix,Perc,CumNpix,CumPerc";

impl HistogramTable {
    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn row(&self, dn: u8) -> &TableRow {
        &self.rows[dn as usize]
    }

    /// Rows with a non-zero count, plus the first and last rows.
    pub fn occupied_rows(&self) -> impl Iterator<Item = &TableRow> {
        let last = self.rows.len() - 1;
        self.rows
            .iter()
            .enumerate()
            .filter(move |(i, r)| r.npix > 0 || *i == 0 || *i == last)
            .map(|(_, r)| r)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TABLE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.dn, r.npix, r.perc, r.cum_npix, r.cum_perc));
        }
        out
    }

    /// Aligned plain-text layout. With `compact`, empty interior rows are
    /// omitted.
    pub fn to_text(&self, compact: bool) -> String {
        let mut out = format!("{:>4} {:>10} {:>7} {:>10} {:>8}\n", "DN", "Npix", "Perc", "CumNpix", "CumPerc");
        let rows: Vec<&TableRow> =
            if compact { self.occupied_rows().collect() } else { self.rows.iter().collect() };
        for r in rows {
            out.push_str(&format!(
                "{:>4} {:>10} {:>7} {:>10} {:>8}\n",
                r.dn, r.npix, r.perc, r.cum_npix, r.cum_perc
            ));
        }
        out
    }
}

pub fn tabulate(h: &Histogram) -> Result<HistogramTable, StatsError> {
    if h.total == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let mut cum = 0u64;
    let rows = h
        .counts
        .iter()
        .enumerate()
        .map(|(dn, &npix)| {
            cum += npix;
            TableRow {
                dn: dn as u8,
                npix,
                perc: Percent2::of(npix, h.total),
                cum_npix: cum,
                cum_perc: Percent2::of(cum, h.total),
            }
        })
        .collect();
    Ok(HistogramTable { rows, total: h.total })
}

/// Normalized histogram statistics.
///
/// `mean` and `std_dev` are the DN-scale mean and population standard
/// deviation divided by 255. `perc` is the relative frequency of the modal
/// DN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats<T> {
    pub perc: T,
    pub mean: T,
    pub std_dev: T,
}

impl<T: Scalar> ChannelStats<T> {
    pub fn new(perc: T, mean: T, std_dev: T) -> Self {
        Self { perc, mean, std_dev }
    }

    /// True when every field lies in its documented range.
    pub fn is_valid(&self) -> bool {
        let in_range = |v: T, hi: f64| v >= T::zero() && v <= T::lit(hi);
        in_range(self.perc, 1.0) && in_range(self.mean, 1.0) && in_range(self.std_dev, 0.5)
    }

    pub fn cast<U: Scalar>(self) -> ChannelStats<U> {
        ChannelStats {
            perc: U::lit(self.perc.as_f64()),
            mean: U::lit(self.mean.as_f64()),
            std_dev: U::lit(self.std_dev.as_f64()),
        }
    }
}

/// Exact integer moments: `(Σ v·n, Σ v²·n, total)`.
fn moments(h: &Histogram) -> (u128, u128, u128) {
    let mut s1 = 0u128;
    let mut s2 = 0u128;
    for (v, &c) in h.counts.iter().enumerate() {
        let v = v as u128;
        s1 += v * c as u128;
        s2 += v * v * c as u128;
    }
    (s1, s2, h.total as u128)
}

/// DN-scale mean and population standard deviation.
pub fn dn_mean_std(h: &Histogram) -> Result<(f64, f64), StatsError> {
    if h.total == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let (s1, s2, n) = moments(h);
    // n·Σv² − (Σv)² is exact and zero iff a single DN is occupied.
    let var_num = s2 * n - s1 * s1;
    let nf = n as f64;
    Ok((s1 as f64 / nf, (var_num as f64).sqrt() / nf))
}

pub fn stats_of<T: Scalar>(h: &Histogram) -> Result<ChannelStats<T>, StatsError> {
    if h.total == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let (s1, s2, n) = moments(h);
    let var_num = s2 * n - s1 * s1;
    let n_t = T::from_u128(n).expect("finite total");
    let dn_max = T::lit(255.0);
    let mean = T::from_u128(s1).expect("finite sum") / n_t / dn_max;
    let std_dev = T::from_u128(var_num).expect("finite variance").sqrt() / n_t / dn_max;
    let mode = h.counts.iter().copied().max().unwrap_or(0);
    let perc = T::from_u64(mode).expect("finite count") / T::from_u64(h.total).expect("finite total");
    Ok(ChannelStats { perc, mean, std_dev })
}

/// Before/after summary for one image, on the 0-255 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub label: String,
    pub original_mean: f64,
    pub original_std: f64,
    pub processed_mean: f64,
    pub processed_std: f64,
}

/// Rounds half away from zero to two decimals and formats.
pub fn fmt2(v: f64) -> String {
    format!("{:.2}", (v * 100.0).round() / 100.0)
}

impl StatsReport {
    pub const HEADER: &'static str = "Image | Original Mean | Original Std | Processed Mean | Processed Std";

    pub fn row(&self) -> String {
        format!(
            "{} | {} | {} | {} | {}",
            self.label,
            fmt2(self.original_mean),
            fmt2(self.original_std),
            fmt2(self.processed_mean),
            fmt2(self.processed_std)
        )
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.row())
    }
}

/// Mean and standard deviation of the pooled original and of the processed
/// single-channel image.
pub fn stats_report(label: impl Into<String>, original: &RgbImage, processed: &GrayImage) -> StatsReport {
    // Validated image types are never empty.
    let (original_mean, original_std) = dn_mean_std(&pooled_histogram(original)).expect("non-empty image");
    let (processed_mean, processed_std) = dn_mean_std(&gray_histogram(processed)).expect("non-empty image");
    StatsReport { label: label.into(), original_mean, original_std, processed_mean, processed_std }
}
