//! Optical inter-satellite link budget.
//!
//! Received power from telescope gains, Rayleigh pointing losses and free-space
//! path loss; shot, dark-current and thermal noise; SNR, bit error rate and the
//! achievable rate derived from them.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ELECTRON_CHARGE_C: f64 = 1.602_176_634e-19;
pub const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;

/// Physical-layer constants of one optical terminal pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalParams {
    pub wavelength_m: f64,
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub tx_efficiency: f64,
    pub rx_efficiency: f64,
    pub telescope_diameter_m: f64,
    /// Scale (σ_θ) of the Rayleigh radial pointing error, rad.
    pub pointing_sd_rad: f64,
    pub responsivity_a_per_w: f64,
    pub dark_current_a: f64,
    pub noise_temp_k: f64,
    pub load_resistance_ohm: f64,
    pub electron_charge_c: f64,
    pub boltzmann_j_per_k: f64,
}

impl Default for OpticalParams {
    fn default() -> Self {
        Self {
            wavelength_m: 1500e-9,
            bandwidth_hz: 1.25e9,
            tx_power_w: 30e-3,
            tx_efficiency: 0.8,
            rx_efficiency: 0.8,
            telescope_diameter_m: 0.06,
            pointing_sd_rad: 3e-6,
            responsivity_a_per_w: 0.6007,
            dark_current_a: 1e-9,
            noise_temp_k: 500.0,
            load_resistance_ohm: 1000.0,
            electron_charge_c: ELECTRON_CHARGE_C,
            boltzmann_j_per_k: BOLTZMANN_J_PER_K,
        }
    }
}

impl OpticalParams {
    /// Checks every field; `section` prefixes the field name in errors.
    pub fn validate(&self, section: &str) -> Result<()> {
        let positive = [
            ("wavelength_m", self.wavelength_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("tx_efficiency", self.tx_efficiency),
            ("rx_efficiency", self.rx_efficiency),
            ("telescope_diameter_m", self.telescope_diameter_m),
            ("pointing_sd_rad", self.pointing_sd_rad),
            ("responsivity_a_per_w", self.responsivity_a_per_w),
            ("dark_current_a", self.dark_current_a),
            ("noise_temp_k", self.noise_temp_k),
            ("load_resistance_ohm", self.load_resistance_ohm),
            ("electron_charge_c", self.electron_charge_c),
            ("boltzmann_j_per_k", self.boltzmann_j_per_k),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    format!("{section}.{name}"),
                    format!("must be finite and positive, got {v}"),
                ));
            }
        }
        for (name, v) in [
            ("tx_efficiency", self.tx_efficiency),
            ("rx_efficiency", self.rx_efficiency),
        ] {
            if v > 1.0 {
                return Err(Error::config(
                    format!("{section}.{name}"),
                    format!("efficiency must not exceed 1, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        antenna_gain(self.telescope_diameter_m, self.wavelength_m)
    }

    /// Noise power with no received signal (dark current plus thermal).
    pub fn noise_floor(&self) -> f64 {
        noise_power(self, 0.0)
    }
}

/// How SNR is formed from received power and noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrForm {
    /// Optical power over total noise variance.
    #[default]
    PaperLiteral,
    /// Photocurrent power `(R_p P_R)²` over total noise variance.
    Electrical,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BerScheme {
    /// On-off keying: `Q(sqrt(γ))`.
    #[default]
    Ook,
    /// Constant bit error rate regardless of SNR.
    Fixed(f64),
}

/// One evaluated link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub distance_km: f64,
    pub theta_t_rad: f64,
    pub theta_r_rad: f64,
    pub received_power_w: f64,
    pub noise_power: f64,
    pub snr_linear: f64,
    pub ber: f64,
    pub rate_bps: f64,
}

impl LinkSample {
    pub fn snr_db(&self) -> f64 {
        to_db(self.snr_linear)
    }
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Telescope gain `(πD/λ)²`.
pub fn antenna_gain(diameter_m: f64, wavelength_m: f64) -> f64 {
    (PI * diameter_m / wavelength_m).powi(2)
}

/// Misalignment loss `exp(-G θ²)`.
pub fn pointing_loss(gain: f64, theta_rad: f64) -> f64 {
    (-gain * theta_rad * theta_rad).exp()
}

/// Inverse-CDF Rayleigh draw for uniform `u` in [0, 1).
pub fn rayleigh_quantile(sigma: f64, u: f64) -> f64 {
    sigma * (-2.0 * (-u).ln_1p()).sqrt()
}

/// One radial pointing error with Rayleigh scale `sigma`.
pub fn sample_pointing_error<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    rayleigh_quantile(sigma, u)
}

/// Free-space loss `(λ / 4πd)²` with `d` in km.
pub fn path_loss(wavelength_m: f64, distance_km: f64) -> Result<f64> {
    if distance_km.is_nan() || distance_km <= 0.0 {
        return Err(Error::Domain(format!(
            "link distance must be positive, got {distance_km} km"
        )));
    }
    Ok((wavelength_m / (4.0 * PI * distance_km * 1e3)).powi(2))
}

pub fn received_power(p: &OpticalParams, distance_km: f64, theta_t: f64, theta_r: f64) -> Result<f64> {
    let g = p.gain();
    let l_ps = path_loss(p.wavelength_m, distance_km)?;
    Ok(p.tx_power_w
        * p.tx_efficiency
        * p.rx_efficiency
        * g
        * g
        * pointing_loss(g, theta_t)
        * pointing_loss(g, theta_r)
        * l_ps)
}

pub fn shot_noise(p: &OpticalParams, received_power_w: f64) -> f64 {
    2.0 * p.electron_charge_c * p.responsivity_a_per_w * received_power_w * p.bandwidth_hz
}

pub fn dark_current_noise(p: &OpticalParams) -> f64 {
    2.0 * p.electron_charge_c * p.dark_current_a * p.bandwidth_hz
}

pub fn thermal_noise(p: &OpticalParams) -> f64 {
    4.0 * p.boltzmann_j_per_k * p.noise_temp_k * p.bandwidth_hz / p.load_resistance_ohm
}

/// Sum of shot, dark-current and thermal noise variances.
pub fn noise_power(p: &OpticalParams, received_power_w: f64) -> f64 {
    shot_noise(p, received_power_w) + dark_current_noise(p) + thermal_noise(p)
}

/// `P_R / P_N`.
pub fn snr(received_power_w: f64, noise: f64) -> Result<f64> {
    if noise.is_nan() || noise <= 0.0 {
        return Err(Error::Domain(format!("noise power must be positive, got {noise}")));
    }
    Ok(received_power_w / noise)
}

pub fn snr_with_form(p: &OpticalParams, form: SnrForm, received_power_w: f64, noise: f64) -> Result<f64> {
    match form {
        SnrForm::PaperLiteral => snr(received_power_w, noise),
        SnrForm::Electrical => snr((p.responsivity_a_per_w * received_power_w).powi(2), noise),
    }
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn ber(snr_linear: f64, scheme: BerScheme) -> f64 {
    match scheme {
        BerScheme::Ook => q_function(snr_linear.max(0.0).sqrt()),
        BerScheme::Fixed(c) => c,
    }
}

/// `(1 - p_e) B log2(1 + γ)`.
pub fn achievable_rate(p: &OpticalParams, snr_linear: f64, ber: f64) -> f64 {
    (1.0 - ber) * p.bandwidth_hz * (1.0 + snr_linear).log2()
}

/// Optical parameters together with the SNR and BER conventions in force.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkBudget {
    pub optics: OpticalParams,
    pub snr_form: SnrForm,
    pub ber: BerScheme,
}

impl LinkBudget {
    pub fn new(optics: OpticalParams, snr_form: SnrForm, ber: BerScheme) -> Self {
        Self { optics, snr_form, ber }
    }

    pub fn evaluate_with_pointing(&self, distance_km: f64, theta_t: f64, theta_r: f64) -> Result<LinkSample> {
        let p = &self.optics;
        let received = received_power(p, distance_km, theta_t, theta_r)?;
        let noise = noise_power(p, received);
        let snr_linear = snr_with_form(p, self.snr_form, received, noise)?;
        let p_e = ber(snr_linear, self.ber);
        Ok(LinkSample {
            distance_km,
            theta_t_rad: theta_t,
            theta_r_rad: theta_r,
            received_power_w: received,
            noise_power: noise,
            snr_linear,
            ber: p_e,
            rate_bps: achievable_rate(p, snr_linear, p_e),
        })
    }

    /// Draws independent transmitter and receiver pointing errors, then
    /// evaluates the link.
    pub fn evaluate<R: Rng + ?Sized>(&self, distance_km: f64, rng: &mut R) -> Result<LinkSample> {
        let theta_t = sample_pointing_error(self.optics.pointing_sd_rad, rng);
        let theta_r = sample_pointing_error(self.optics.pointing_sd_rad, rng);
        self.evaluate_with_pointing(distance_km, theta_t, theta_r)
    }

    /// Evaluation with perfect pointing.
    pub fn evaluate_aligned(&self, distance_km: f64) -> Result<LinkSample> {
        self.evaluate_with_pointing(distance_km, 0.0, 0.0)
    }
}

/// Evaluates one link with literal SNR and on-off keying.
pub fn evaluate_link<R: Rng + ?Sized>(p: &OpticalParams, distance_km: f64, rng: &mut R) -> Result<LinkSample> {
    LinkBudget::new(p.clone(), SnrForm::PaperLiteral, BerScheme::Ook).evaluate(distance_km, rng)
}
