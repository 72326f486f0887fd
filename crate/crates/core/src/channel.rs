//! Link abstraction at the mean-SINR level.
//!
//! A receiver at `(x, y)` listening to a set of concurrent relays sees an
//! aggregate Rayleigh channel whose mean power is the sum of the per-relay
//! path gains `(λ / 4πd)^α`. The packet is detected when the per-subcarrier
//! outage probability `1 - exp(-γ_t / γ_o)` stays below `τ`, which reduces to
//! `H(x, y) >= U` with `H` the unscaled sum of `d^-α` terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Point2D;
use crate::units::{db_to_linear, dbm_to_watts};

const BOLTZMANN: f64 = 1.380_649e-23;

/// Thermal noise power `k·T·B` scaled by a noise figure.
pub fn thermal_noise(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * 290.0 * bandwidth_hz * db_to_linear(noise_figure_db)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyConfig {
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Large-scale path-loss exponent.
    pub alpha: f64,
    /// Number of OFDM subcarriers.
    pub subcarriers: u32,
    /// Noise plus interference power per subcarrier (W).
    pub noise_power: f64,
    /// Transmit power over the whole band (W).
    pub tx_power: f64,
    /// Detection SINR threshold (linear).
    pub gamma_t: f64,
    /// Detection reliability, the tolerated outage probability.
    pub tau: f64,
    /// Mean number of multipath taps. Descriptive only.
    pub mean_taps: f64,
    /// Cyclic prefix duration (s).
    pub cp_duration: f64,
    /// Data packet duration (s).
    pub packet_duration: f64,
    /// Listening time up to the packet-ID mark (s).
    pub id_duration: f64,
    /// Power drawn while receiving (W).
    pub rx_power: f64,
    /// PHY data rate (bit/s).
    pub data_rate: f64,
}

impl Default for PhyConfig {
    /// 2.4 GHz carrier, 64 subcarriers at 15 kHz spacing with a 10 dB noise
    /// figure, 33 dBm, γ_t = 5 dB at τ = 0.2, α = 3.
    fn default() -> Self {
        Self {
            wavelength: crate::units::SPEED_OF_LIGHT / 2.4e9,
            alpha: 3.0,
            subcarriers: 64,
            noise_power: thermal_noise(15e3, 10.0),
            tx_power: dbm_to_watts(33.0),
            gamma_t: db_to_linear(5.0),
            tau: 0.2,
            mean_taps: 4.0,
            cp_duration: 4.7e-6,
            packet_duration: 4e-3,
            id_duration: 0.4e-3,
            rx_power: 0.06,
            data_rate: 250e3,
        }
    }
}

impl PhyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.alpha >= 2.0) {
            return bad("alpha must be >= 2");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.gamma_t > 0.0) {
            return bad("gamma_t must be > 0");
        }
        if !(self.id_duration < self.packet_duration) {
            return bad("id_duration must be < packet_duration");
        }
        if !(self.wavelength > 0.0 && self.noise_power > 0.0 && self.tx_power > 0.0) {
            return bad("wavelength, noise_power and tx_power must be > 0");
        }
        if self.subcarriers == 0 {
            return bad("subcarriers must be >= 1");
        }
        if !(self.packet_duration > 0.0 && self.id_duration >= 0.0) {
            return bad("packet_duration must be > 0 and id_duration >= 0");
        }
        if !(self.rx_power >= 0.0 && self.data_rate > 0.0) {
            return bad("rx_power must be >= 0 and data_rate > 0");
        }
        Ok(())
    }

    pub fn with_tx_dbm(mut self, dbm: f64) -> Self {
        self.tx_power = dbm_to_watts(dbm);
        self
    }

    /// Busy-tone power, one subcarrier's share of the transmit power.
    pub fn busy_tone_power(&self) -> f64 {
        self.tx_power / self.subcarriers as f64
    }

    /// Reach of a lone transmitter, `U^(-1/α)`.
    pub fn single_hop_radius(&self) -> f64 {
        detection_constant(self).radius(self.alpha)
    }
}

/// Mean power gain `(λ / 4πd)^α` of one link.
pub fn mean_path_power(d: f64, phy: &PhyConfig) -> Result<f64> {
    if d <= 0.0 {
        return Err(Error::DegenerateDistance { x: d, y: 0.0 });
    }
    Ok((phy.wavelength / (4.0 * std::f64::consts::PI * d)).powf(phy.alpha))
}

/// Unscaled aggregate gain `H = Σ d_k^-α`.
pub fn aggregate_gain(rx: Point2D, relays: &[Point2D], alpha: f64) -> Result<f64> {
    let mut h = 0.0;
    for r in relays {
        let d2 = (rx.x - r.x).powi(2) + (rx.y - r.y).powi(2);
        if d2 == 0.0 {
            return Err(Error::DegenerateDistance { x: rx.x, y: rx.y });
        }
        h += d2.powf(-alpha / 2.0);
    }
    Ok(h)
}

/// Mean power `σ_S²` of the aggregate channel at `rx`.
pub fn sigma_s2(rx: Point2D, relays: &[Point2D], phy: &PhyConfig) -> Result<f64> {
    let scale = (phy.wavelength / (4.0 * std::f64::consts::PI)).powf(phy.alpha);
    Ok(scale * aggregate_gain(rx, relays, phy.alpha)?)
}

/// Average per-subcarrier SINR `γ_o = 2 P_t σ_S² / (N_s P_n)`.
pub fn mean_sinr(sigma_s2: f64, phy: &PhyConfig) -> f64 {
    2.0 * phy.tx_power * sigma_s2 / (phy.subcarriers as f64 * phy.noise_power)
}

/// Outage probability `1 - exp(-γ_t / γ_o)` for a Rayleigh subcarrier.
pub fn outage_probability(gamma_o: f64, gamma_t: f64) -> f64 {
    -(-gamma_t / gamma_o).exp_m1()
}

/// Threshold `U` such that detection holds iff `H >= U`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DetectionConstant(pub f64);

impl DetectionConstant {
    pub fn value(&self) -> f64 {
        self.0
    }

    /// Radius reached by `k` co-located transmitters, `(k / U)^(1/α)`.
    pub fn colocated_radius(&self, k: f64, alpha: f64) -> f64 {
        (k / self.0).powf(1.0 / alpha)
    }

    pub fn radius(&self, alpha: f64) -> f64 {
        self.0.powf(-1.0 / alpha)
    }
}

pub fn detection_constant(phy: &PhyConfig) -> DetectionConstant {
    let four_pi_over_lambda = 4.0 * std::f64::consts::PI / phy.wavelength;
    let reliability = (1.0 / (1.0 - phy.tau)).ln();
    DetectionConstant(
        phy.subcarriers as f64 * phy.noise_power / (2.0 * phy.tx_power)
            * four_pi_over_lambda.powf(phy.alpha)
            * phy.gamma_t
            / reliability,
    )
}

/// Relative slack on `H >= U` so that points constructed to sit exactly on
/// the boundary are not lost to rounding.
const BOUNDARY_SLACK: f64 = 1e-12;

fn gain_meets(h: f64, u: DetectionConstant) -> bool {
    h >= u.0 * (1.0 - BOUNDARY_SLACK)
}

pub fn is_detected(rx: Point2D, relays: &[Point2D], phy: &PhyConfig) -> Result<bool> {
    is_detected_with(rx, relays, detection_constant(phy), phy.alpha)
}

pub fn is_detected_with(
    rx: Point2D,
    relays: &[Point2D],
    u: DetectionConstant,
    alpha: f64,
) -> Result<bool> {
    Ok(gain_meets(aggregate_gain(rx, relays, alpha)?, u))
}

/// Largest `x` ahead of every relay with `H(x, y) = U`.
///
/// `H` is strictly decreasing in `x` once `x` exceeds every relay's
/// abscissa, so the root is bracketed by doubling and then bisected to
/// floating-point resolution.
pub fn coverage_contour(
    relays: &[Point2D],
    y: f64,
    u: DetectionConstant,
    alpha: f64,
) -> Result<f64> {
    if relays.is_empty() {
        return Err(Error::Domain(
            "coverage contour needs at least one relay".into(),
        ));
    }
    let gain = |x: f64| -> f64 {
        relays
            .iter()
            .map(|r| ((x - r.x).powi(2) + (y - r.y).powi(2)).powf(-alpha / 2.0))
            .sum()
    };
    let lo0 = relays.iter().map(|r| r.x).fold(f64::NEG_INFINITY, f64::max);
    let h_lo = gain(lo0);
    if !gain_meets(h_lo, u) {
        return Err(Error::ContourUndefined { y });
    }
    if h_lo.is_finite() && h_lo <= u.0 {
        return Ok(lo0);
    }
    let mut step = u.colocated_radius(relays.len() as f64, alpha).max(1e-9);
    let mut hi = lo0 + step;
    while gain(hi) >= u.0 {
        step *= 2.0;
        hi = lo0 + step;
        if !hi.is_finite() {
            return Err(Error::ContourUndefined { y });
        }
    }
    let mut lo = lo0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gain(mid) >= u.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed form of the contour for `k` transmitters stacked at `at`.
pub fn colocated_contour(
    at: Point2D,
    k: f64,
    y: f64,
    u: DetectionConstant,
    alpha: f64,
) -> Option<f64> {
    let r2 = (k / u.0).powf(2.0 / alpha);
    let dy2 = (y - at.y).powi(2);
    (dy2 <= r2).then(|| at.x + (r2 - dy2).sqrt())
}
