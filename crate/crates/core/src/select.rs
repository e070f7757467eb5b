//! Filter selection from acquisition metadata.
//!
//! Elevation `e` (degrees): `e < 0` night (default conversion), `0 <= e <= 10`
//! blue filter, `e >= 30` red filter, and in between a linear blend of the
//! two with `t = (e - 10) / 20`.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convert::ConversionSpec;
use crate::histogram::ChannelStats;
use crate::num::Scalar;
use crate::solar::{self, SolarError};
use crate::weights::{blend, blue_filter_weights, normalize_clamp, red_filter_weights, WeightError, WeightTriple};

pub const BLUE_MAX_ELEVATION_DEG: f64 = 10.0;
pub const RED_MIN_ELEVATION_DEG: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("metadata needs sun_elevation_deg or all of timestamp_utc, lat, lon")]
    InsufficientMetadata,
    #[error("sun elevation {0} outside [-90, 90]")]
    InvalidElevation(f64),
    #[error(transparent)]
    Solar(#[from] SolarError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sun_elevation_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_utc: Option<DateTime<Utc>>,
    #[serde(default, rename = "lat", alias = "latitude_deg", skip_serializing_if = "Option::is_none")]
    pub latitude_deg: Option<f64>,
    #[serde(default, rename = "lon", alias = "longitude_deg", skip_serializing_if = "Option::is_none")]
    pub longitude_deg: Option<f64>,
}

impl AcquisitionMeta {
    pub fn from_elevation(deg: f64) -> Self {
        Self { sun_elevation_deg: Some(deg), ..Self::default() }
    }

    pub fn from_time_place(t: DateTime<Utc>, lat: f64, lon: f64) -> Self {
        Self { sun_elevation_deg: None, timestamp_utc: Some(t), latitude_deg: Some(lat), longitude_deg: Some(lon) }
    }

    /// Explicit elevation wins over recomputation from time and place.
    pub fn elevation(&self) -> Result<f64, SelectError> {
        if let Some(e) = self.sun_elevation_deg {
            return if (-90.0..=90.0).contains(&e) { Ok(e) } else { Err(SelectError::InvalidElevation(e)) };
        }
        match (self.timestamp_utc, self.latitude_deg, self.longitude_deg) {
            (Some(t), Some(lat), Some(lon)) => Ok(solar::sun_elevation(&t, lat, lon)?),
            _ => Err(SelectError::InsufficientMetadata),
        }
    }

    /// Fields present in `self` override those in `fallback`.
    pub fn or(self, fallback: &AcquisitionMeta) -> AcquisitionMeta {
        AcquisitionMeta {
            sun_elevation_deg: self.sun_elevation_deg.or(fallback.sun_elevation_deg),
            timestamp_utc: self.timestamp_utc.or(fallback.timestamp_utc),
            latitude_deg: self.latitude_deg.or(fallback.latitude_deg),
            longitude_deg: self.longitude_deg.or(fallback.longitude_deg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterMode {
    Night,
    Blue,
    Red,
    /// `t` in `(0, 1)`: 0 is pure blue, 1 pure red.
    Blend { t: f64 },
}

impl FilterMode {
    pub fn name(&self) -> &'static str {
        match self {
            FilterMode::Night => "night",
            FilterMode::Blue => "blue",
            FilterMode::Red => "red",
            FilterMode::Blend { .. } => "blend",
        }
    }
}

pub fn mode_for_elevation(e: f64) -> FilterMode {
    if e < 0.0 {
        FilterMode::Night
    } else if e <= BLUE_MAX_ELEVATION_DEG {
        FilterMode::Blue
    } else if e >= RED_MIN_ELEVATION_DEG {
        FilterMode::Red
    } else {
        FilterMode::Blend { t: (e - BLUE_MAX_ELEVATION_DEG) / (RED_MIN_ELEVATION_DEG - BLUE_MAX_ELEVATION_DEG) }
    }
}

pub fn select_mode(meta: &AcquisitionMeta) -> Result<FilterMode, SelectError> {
    Ok(mode_for_elevation(meta.elevation()?))
}

/// Conversion chosen for one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub mode: FilterMode,
    pub spec: ConversionSpec,
    /// Set when the weight rule degenerated and the default conversion was
    /// used instead.
    pub fallback: bool,
}

impl Selection {
    pub fn weights(&self) -> Option<WeightTriple<f64>> {
        match self.spec.mode {
            crate::convert::ConversionMode::Weighted { weights } => Some(weights),
            _ => None,
        }
    }

    pub fn clamped(&self) -> bool {
        self.weights().is_some_and(|w| w.clamped)
    }
}

/// Normalized weights for a filter mode, or `None` for night.
pub fn mode_weights<T: Scalar>(mode: FilterMode, s: &ChannelStats<T>) -> Result<Option<WeightTriple<T>>, WeightError> {
    Ok(match mode {
        FilterMode::Night => None,
        FilterMode::Blue => Some(normalize_clamp(blue_filter_weights(s))?),
        FilterMode::Red => Some(normalize_clamp(red_filter_weights(s))?),
        FilterMode::Blend { t } => {
            let blue = normalize_clamp(blue_filter_weights(s))?;
            let red = normalize_clamp(red_filter_weights(s))?;
            Some(blend(&blue, &red, T::lit(t))?)
        }
    })
}

/// Conversion for an already-chosen mode. Degenerate weights fall back to
/// the default conversion with `fallback` set.
pub fn selection_for_mode<T: Scalar>(mode: FilterMode, s: &ChannelStats<T>) -> Selection {
    match mode_weights(mode, s) {
        Ok(Some(w)) => Selection { mode, spec: ConversionSpec::weighted(w.to_f64()), fallback: false },
        Ok(None) => Selection { mode, spec: ConversionSpec::DEFAULT, fallback: false },
        Err(_) => Selection { mode, spec: ConversionSpec::DEFAULT, fallback: true },
    }
}

pub fn weights_for<T: Scalar>(meta: &AcquisitionMeta, s: &ChannelStats<T>) -> Result<Selection, SelectError> {
    Ok(selection_for_mode(select_mode(meta)?, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convert::ConversionMode;

    const STATS: ChannelStats<f64> = ChannelStats { perc: 0.02, mean: 0.45, std_dev: 0.22 };

    #[test]
    fn thresholds() {
        assert_eq!(mode_for_elevation(45.0), FilterMode::Red);
        assert_eq!(mode_for_elevation(5.0), FilterMode::Blue);
        assert_eq!(mode_for_elevation(20.0), FilterMode::Blend { t: 0.5 });
        assert_eq!(mode_for_elevation(10.0), FilterMode::Blue);
        assert_eq!(mode_for_elevation(30.0), FilterMode::Red);
        assert_eq!(mode_for_elevation(0.0), FilterMode::Blue);
        assert_eq!(mode_for_elevation(-0.1), FilterMode::Night);
    }

    #[test]
    fn insufficient_metadata() {
        let meta = AcquisitionMeta { latitude_deg: Some(1.0), ..Default::default() };
        assert_eq!(select_mode(&meta), Err(SelectError::InsufficientMetadata));
        assert_eq!(select_mode(&AcquisitionMeta::from_elevation(91.0)), Err(SelectError::InvalidElevation(91.0)));
    }

    #[test]
    fn explicit_elevation_wins() {
        let t = "2024-03-20T00:00:00Z".parse().unwrap();
        let mut meta = AcquisitionMeta::from_time_place(t, 0.0, 0.0);
        assert_eq!(select_mode(&meta).unwrap(), FilterMode::Night);
        meta.sun_elevation_deg = Some(45.0);
        assert_eq!(select_mode(&meta).unwrap(), FilterMode::Red);
    }

    #[test]
    fn night_uses_default() {
        let s = weights_for(&AcquisitionMeta::from_elevation(-12.0), &STATS).unwrap();
        assert_eq!(s.spec, ConversionSpec::DEFAULT);
        assert_eq!(s.spec.coefficients(), [0.3, 0.1, 0.5]);
    }

    #[test]
    fn red_and_blue_compositions() {
        let red = weights_for(&AcquisitionMeta::from_elevation(45.0), &STATS).unwrap();
        let w = red.weights().unwrap();
        assert!((w.w_r - 0.670).abs() < 1e-12 && (w.w_g - 0.321).abs() < 1e-12 && (w.w_b - 0.009).abs() < 1e-12);
        let blue = weights_for(&AcquisitionMeta::from_elevation(5.0), &STATS).unwrap();
        let w = blue.weights().unwrap();
        assert!((w.w_r - 0.45).abs() < 1e-12 && (w.w_g - 0.54604).abs() < 1e-12 && (w.w_b - 0.00396).abs() < 1e-12);
    }

    #[test]
    fn degenerate_falls_back() {
        // Raw triples sum to one, so only non-finite stats can degenerate.
        let s = ChannelStats { perc: f64::NAN, mean: f64::NAN, std_dev: f64::NAN };
        let sel = selection_for_mode(FilterMode::Blue, &s);
        assert!(sel.fallback);
        assert_eq!(sel.spec.mode, ConversionMode::Default);
    }

    #[test]
    fn sidecar_json_shapes() {
        let m: AcquisitionMeta = serde_json::from_str(r#"{"sun_elevation_deg": 12.5}"#).unwrap();
        assert_eq!(m.sun_elevation_deg, Some(12.5));
        let m: AcquisitionMeta =
            serde_json::from_str(r#"{"timestamp_utc":"2024-06-21T12:00:00Z","lat":51.48,"lon":0.0}"#).unwrap();
        assert_eq!(m.latitude_deg, Some(51.48));
        assert!(m.elevation().unwrap() > 60.0);
    }
}
