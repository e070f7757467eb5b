//! Low-precision solar elevation (NOAA solar calculator equations).
//!
//! Good to a few hundredths of a degree for 1950-2100, well inside the
//! half-degree needed to dispatch a filter. No refraction correction.

use chrono::{DateTime, Datelike, Timelike, Utc};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SolarError {
    #[error("coordinates out of range: lat {lat}, lon {lon}")]
    OutOfRangeCoordinates { lat: f64, lon: f64 },
    #[error("year {0} outside the supported 1950-2100 range")]
    UnsupportedEpoch(i32),
}

/// Fractional Julian day for a UTC instant.
pub fn julian_day(t: &DateTime<Utc>) -> f64 {
    let secs = t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9;
    secs / 86_400.0 + 2_440_587.5
}

struct SunPosition {
    declination_deg: f64,
    equation_of_time_min: f64,
}

fn sun_position(jd: f64) -> SunPosition {
    let jc = (jd - 2_451_545.0) / 36_525.0;
    let mean_long = (280.46646 + jc * (36_000.769_83 + jc * 0.000_303_2)).rem_euclid(360.0);
    let mean_anom = 357.52911 + jc * (35_999.050_29 - 0.000_153_7 * jc);
    let ecc = 0.016_708_634 - jc * (0.000_042_037 + 0.000_000_126_7 * jc);
    let m = mean_anom.to_radians();
    let center = m.sin() * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + (2.0 * m).sin() * (0.019993 - 0.000101 * jc)
        + (3.0 * m).sin() * 0.000289;
    let true_long = mean_long + center;
    let omega = (125.04 - 1934.136 * jc).to_radians();
    let app_long = true_long - 0.00569 - 0.00478 * omega.sin();
    let mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0;
    let obliq = (mean_obliq + 0.00256 * omega.cos()).to_radians();
    let declination = (obliq.sin() * app_long.to_radians().sin()).asin();

    let y = (obliq / 2.0).tan().powi(2);
    let l0 = mean_long.to_radians();
    let eot = y * (2.0 * l0).sin() - 2.0 * ecc * m.sin() + 4.0 * ecc * y * m.sin() * (2.0 * l0).cos()
        - 0.5 * y * y * (4.0 * l0).sin()
        - 1.25 * ecc * ecc * (2.0 * m).sin();
    SunPosition { declination_deg: declination.to_degrees(), equation_of_time_min: 4.0 * eot.to_degrees() }
}

/// Geometric elevation of the sun's centre above the horizon, in degrees.
pub fn sun_elevation(t: &DateTime<Utc>, latitude_deg: f64, longitude_deg: f64) -> Result<f64, SolarError> {
    if !(-90.0..=90.0).contains(&latitude_deg) || !(-180.0..=180.0).contains(&longitude_deg) {
        return Err(SolarError::OutOfRangeCoordinates { lat: latitude_deg, lon: longitude_deg });
    }
    if !(1950..=2100).contains(&t.year()) {
        return Err(SolarError::UnsupportedEpoch(t.year()));
    }
    let pos = sun_position(julian_day(t));
    let minutes = f64::from(t.num_seconds_from_midnight()) / 60.0 + f64::from(t.nanosecond()) * 1e-9 / 60.0;
    let true_solar = (minutes + pos.equation_of_time_min + 4.0 * longitude_deg).rem_euclid(1440.0);
    let hour_angle = (true_solar / 4.0 - 180.0).to_radians();
    let lat = latitude_deg.to_radians();
    let decl = pos.declination_deg.to_radians();
    let cos_zenith = (lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos()).clamp(-1.0, 1.0);
    Ok(90.0 - cos_zenith.acos().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(y: i32, mo: u32, d: u32, h: u32, mi: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, mo, d, h, mi, 0).unwrap()
    }

    #[test]
    fn julian_day_epoch() {
        assert_eq!(julian_day(&at(2000, 1, 1, 12, 0)), 2_451_545.0);
    }

    #[test]
    fn equator_equinox_solar_noon_is_overhead() {
        // Solar noon at Greenwich falls near 12:07 UTC in late March.
        let e = sun_elevation(&at(2024, 3, 20, 12, 7), 0.0, 0.0).unwrap();
        assert!((e - 90.0).abs() < 1.0, "{e}");
        // At 12:00 UTC the sun is still about 1.9 degrees east of the meridian.
        let e = sun_elevation(&at(2024, 3, 20, 12, 0), 0.0, 0.0).unwrap();
        assert!((e - 88.1).abs() < 0.5, "{e}");
    }

    #[test]
    fn midnight_is_below_horizon() {
        assert!(sun_elevation(&at(2024, 3, 20, 0, 0), 0.0, 0.0).unwrap() < 0.0);
    }

    #[test]
    fn greenwich_summer_solstice() {
        // 90 - 51.48 + 23.44 at transit; 12:00 UTC is ~2 min before transit.
        let e = sun_elevation(&at(2024, 6, 21, 12, 0), 51.48, 0.0).unwrap();
        assert!((e - 61.96).abs() < 0.5, "{e}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            sun_elevation(&at(2024, 1, 1, 0, 0), 91.0, 0.0),
            Err(SolarError::OutOfRangeCoordinates { .. })
        ));
        assert!(matches!(
            sun_elevation(&at(2024, 1, 1, 0, 0), 0.0, f64::NAN),
            Err(SolarError::OutOfRangeCoordinates { .. })
        ));
        assert_eq!(sun_elevation(&at(1900, 1, 1, 0, 0), 0.0, 0.0), Err(SolarError::UnsupportedEpoch(1900)));
        assert_eq!(sun_elevation(&at(2101, 1, 1, 0, 0), 0.0, 0.0), Err(SolarError::UnsupportedEpoch(2101)));
    }
}
