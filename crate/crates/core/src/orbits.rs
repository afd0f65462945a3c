//! Walker Delta constellation geometry.
//!
//! Circular orbits, a single shell, and one Earth-fixed Cartesian frame. The
//! ascending node of every plane drifts at the Earth rotation rate and every
//! satellite advances along its plane at the two-body mean motion.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earth gravitational parameter in km³/s².
pub const EARTH_MU_KM3_S2: f64 = 398_601.2;
/// Earth rotation rate in rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_856e-5;
/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Angular span used to spread planes and in-plane slots at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phasing {
    /// Spread over π (half ring).
    PaperLiteral,
    /// Spread over 2π (uniform Walker pattern).
    #[default]
    Standard,
}

impl Phasing {
    fn span(self) -> f64 {
        match self {
            Phasing::PaperLiteral => PI,
            Phasing::Standard => TAU,
        }
    }
}

/// Sign convention for the y component of the orbit-to-frame rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionForm {
    /// Proper rotation; positions stay on the orbit sphere.
    #[default]
    Standard,
    /// Minus sign on the `cos Ω sin ω cos φ` term. Does not preserve radius.
    PaperLiteral,
}

/// Shape of a single Walker Delta shell.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerConfig {
    pub n_orbits: u32,
    pub sats_per_orbit: u32,
    /// Inclination in radians.
    pub inclination: f64,
    pub altitude_km: f64,
    pub earth_radius_km: f64,
    /// Drift rate of every ascending node, rad/s.
    pub earth_rotation_rate: f64,
    pub phasing: Phasing,
    pub position_form: PositionForm,
    /// Replaces the two-body mean motion when set (rad/s). Zero freezes the shell.
    pub mean_motion_override: Option<f64>,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        Self {
            n_orbits: 36,
            sats_per_orbit: 20,
            inclination: 70f64.to_radians(),
            altitude_km: 570.0,
            earth_radius_km: EARTH_RADIUS_KM,
            earth_rotation_rate: EARTH_ROTATION_RATE,
            phasing: Phasing::Standard,
            position_form: PositionForm::Standard,
            mean_motion_override: None,
        }
    }
}

/// Satellite `slot` (1-based) in orbit plane `plane` (1-based).
///
/// Ordering is by plane, then slot; this is the canonical client order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SatIndex {
    pub plane: u32,
    pub slot: u32,
}

impl SatIndex {
    pub const fn new(plane: u32, slot: u32) -> Self {
        Self { plane, slot }
    }

    /// Packs the index into one integer for seed derivation.
    pub fn key(self) -> u64 {
        (u64::from(self.plane) << 32) | u64::from(self.slot)
    }
}

impl fmt::Display for SatIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.plane, self.slot)
    }
}

impl FromStr for SatIndex {
    type Err = Error;

    /// Accepts `l,k` or `l-k`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("expected satellite as `plane,slot`, got `{s}`"));
        let (l, k) = s.split_once([',', '-']).ok_or_else(bad)?;
        let plane = l.trim().parse().map_err(|_| bad())?;
        let slot = k.trim().parse().map_err(|_| bad())?;
        Ok(SatIndex { plane, slot })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EcefPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefPosition {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn distance_to(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }
}

impl WalkerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_orbits == 0 {
            return Err(Error::config("n_orbits", "must be at least 1"));
        }
        if self.sats_per_orbit == 0 {
            return Err(Error::config("sats_per_orbit", "must be at least 1"));
        }
        if !(self.altitude_km > 0.0 && self.altitude_km.is_finite()) {
            return Err(Error::config("altitude_km", "must be positive"));
        }
        if !(0.0..=PI).contains(&self.inclination) {
            return Err(Error::config("inclination", "must lie in [0, 180] degrees"));
        }
        if !(self.earth_radius_km > 0.0 && self.earth_radius_km.is_finite()) {
            return Err(Error::config("earth_radius_km", "must be positive"));
        }
        if !self.earth_rotation_rate.is_finite() {
            return Err(Error::config("earth_rotation_rate", "must be finite"));
        }
        if let Some(n) = self.mean_motion_override {
            if !n.is_finite() {
                return Err(Error::config("mean_motion_override", "must be finite"));
            }
        }
        Ok(())
    }

    /// R_S = R_E + h_S, km.
    pub fn orbit_radius_km(&self) -> f64 {
        self.earth_radius_km + self.altitude_km
    }

    /// In-plane angular rate, rad/s.
    pub fn mean_motion(&self) -> f64 {
        self.mean_motion_override
            .unwrap_or_else(|| EARTH_MU_KM3_S2.sqrt() / self.orbit_radius_km().powf(1.5))
    }

    pub fn n_satellites(&self) -> usize {
        self.n_orbits as usize * self.sats_per_orbit as usize
    }

    /// All satellites in canonical order.
    pub fn satellites(&self) -> impl Iterator<Item = SatIndex> + '_ {
        (1..=self.n_orbits)
            .flat_map(move |l| (1..=self.sats_per_orbit).map(move |k| SatIndex::new(l, k)))
    }

    pub fn check_index(&self, sat: SatIndex) -> Result<()> {
        self.check_plane(sat.plane)?;
        if sat.slot == 0 || sat.slot > self.sats_per_orbit {
            return Err(Error::Index(format!(
                "slot {} outside 1..={}",
                sat.slot, self.sats_per_orbit
            )));
        }
        Ok(())
    }

    fn check_plane(&self, plane: u32) -> Result<()> {
        if plane == 0 || plane > self.n_orbits {
            return Err(Error::Index(format!(
                "plane {plane} outside 1..={}",
                self.n_orbits
            )));
        }
        Ok(())
    }

    /// In-plane anomaly of `sat` at t = 0.
    pub fn initial_anomaly(&self, sat: SatIndex) -> Result<f64> {
        self.check_index(sat)?;
        let c = self.phasing.span();
        let ns = f64::from(self.sats_per_orbit);
        let no = f64::from(self.n_orbits);
        Ok(f64::from(sat.slot - 1) * c / ns + f64::from(sat.plane - 1) * c / (ns * no))
    }

    /// Right ascension of the ascending node of `plane` at t = 0.
    pub fn initial_raan(&self, plane: u32) -> Result<f64> {
        self.check_plane(plane)?;
        Ok(f64::from(plane - 1) * self.phasing.span() / f64::from(self.n_orbits))
    }

    /// (RAAN, anomaly) at time `t_s`, each reduced to [0, 2π).
    pub fn angular_state(&self, sat: SatIndex, t_s: f64) -> Result<(f64, f64)> {
        check_time(t_s)?;
        let raan = self.initial_raan(sat.plane)? + self.earth_rotation_rate * t_s;
        let anomaly = self.initial_anomaly(sat)? + self.mean_motion() * t_s;
        Ok((raan.rem_euclid(TAU), anomaly.rem_euclid(TAU)))
    }

    pub fn position_at(&self, sat: SatIndex, t_s: f64) -> Result<EcefPosition> {
        let (raan, anomaly) = self.angular_state(sat, t_s)?;
        Ok(self.position_from_angles(raan, anomaly))
    }

    /// Cartesian position for explicit node and anomaly angles.
    pub fn position_from_angles(&self, raan: f64, anomaly: f64) -> EcefPosition {
        let r = self.orbit_radius_km();
        let (s_o, c_o) = raan.sin_cos();
        let (s_w, c_w) = anomaly.sin_cos();
        let (s_i, c_i) = self.inclination.sin_cos();
        let y_cross = match self.position_form {
            PositionForm::Standard => c_o * s_w * c_i,
            PositionForm::PaperLiteral => -c_o * s_w * c_i,
        };
        EcefPosition {
            x: r * (c_o * c_w - s_o * s_w * c_i),
            y: r * (s_o * c_w + y_cross),
            z: r * s_w * s_i,
        }
    }

    /// Straight-line distance between two distinct satellites, km.
    pub fn distance(&self, a: SatIndex, b: SatIndex, t_s: f64) -> Result<f64> {
        if a == b {
            return Err(Error::Domain(format!("distance from {a} to itself")));
        }
        Ok(self.position_at(a, t_s)?.distance_to(&self.position_at(b, t_s)?))
    }

    /// Positions of every satellite at `t_s`, in canonical order.
    pub fn snapshot(&self, t_s: f64) -> Result<Vec<(SatIndex, EcefPosition)>> {
        self.satellites()
            .map(|s| Ok((s, self.position_at(s, t_s)?)))
            .collect()
    }
}

fn check_time(t_s: f64) -> Result<()> {
    if t_s.is_finite() && t_s >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite and non-negative, got {t_s}")))
    }
}

/// Ground point on a sphere of radius `earth_radius_km`. Fixed in the
/// constellation frame.
pub fn ground_station_position(lat: f64, lon: f64, earth_radius_km: f64) -> EcefPosition {
    let (s_lat, c_lat) = lat.sin_cos();
    let (s_lon, c_lon) = lon.sin_cos();
    EcefPosition {
        x: earth_radius_km * c_lat * c_lon,
        y: earth_radius_km * c_lat * s_lon,
        z: earth_radius_km * s_lat,
    }
}

/// Elevation of `target` above the local horizon of `observer` (spherical
/// Earth, zenith along the observer's position vector).
pub fn elevation_angle(observer: &EcefPosition, target: &EcefPosition) -> f64 {
    let los = target.sub(observer);
    let range = los.norm();
    let r = observer.norm();
    if range == 0.0 || r == 0.0 {
        return PI / 2.0;
    }
    let sin_el = (los.dot(observer) / (range * r)).clamp(-1.0, 1.0);
    sin_el.asin()
}
