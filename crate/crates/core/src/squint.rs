//! Beam squint of frequency-flat weights.
//!
//! Phase-shifter weights designed at `f_c` steer carrier `f_m` towards a
//! direction whose spatial frequencies are scaled by `f_c / f_m`. The array
//! gain in the target direction follows a product of two Dirichlet kernels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{steering_vector, Direction, UpaGeometry};
use crate::{CVector, Error, Result, SPEED_OF_LIGHT};

/// Below this `|sin(π d Ψ)|` the Dirichlet ratio is replaced by its limit.
const DIRICHLET_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquintReport {
    pub frequency: f64,
    pub squinted_direction: Direction,
    /// Linear array gain in `[0, L W]`.
    pub array_gain: f64,
    pub gain_loss_db: f64,
}

/// Phase-shifter weights steering to `target` at the center frequency.
pub fn narrowband_weights(geom: &UpaGeometry, target: Direction) -> CVector {
    steering_vector(geom, geom.center_frequency(), target)
}

/// Frequency-matched weights of an ideal true-time-delay array.
pub fn ideal_ttd_weights(geom: &UpaGeometry, target: Direction, f_m: f64) -> CVector {
    steering_vector(geom, f_m, target)
}

/// Direction actually steered at `f_m` by weights designed at `f_c`.
pub fn squinted_direction(target: Direction, f_c: f64, f_m: f64) -> Result<Direction> {
    let ratio = f_c / f_m;
    let cos_el = ratio * target.elevation.cos();
    if !(-1.0..=1.0).contains(&cos_el) {
        return Err(Error::Domain {
            what: "squinted elevation arccos",
            value: cos_el,
        });
    }
    let elevation = cos_el.acos();
    let sin_az = ratio * target.azimuth.sin() * target.elevation.sin() / elevation.sin();
    if !(-1.0..=1.0).contains(&sin_az) || sin_az.is_nan() {
        return Err(Error::Domain {
            what: "squinted azimuth arcsin",
            value: sin_az,
        });
    }
    Ok(Direction {
        azimuth: sin_az.asin(),
        elevation,
    })
}

fn dirichlet(x: f64, n: usize) -> f64 {
    let den = (PI * x).sin();
    if den.abs() < DIRICHLET_EPS {
        // sin(nπx)/sin(πx) -> ±n at integer x.
        let parity = if (x.round() as i64 * (n as i64 - 1)) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        parity * n as f64
    } else {
        (PI * n as f64 * x).sin() / den
    }
}

/// Closed-form array gain of narrowband weights at carrier `f_m`.
pub fn array_gain(geom: &UpaGeometry, target: Direction, f_m: f64) -> f64 {
    let offset = (f_m - geom.center_frequency()) / SPEED_OF_LIGHT;
    let psi_a = offset * target.azimuth_cosine();
    let psi_e = offset * target.elevation_cosine();
    let d = geom.spacing();
    let amp = dirichlet(d * psi_a, geom.rows()) * dirichlet(d * psi_e, geom.cols());
    amp * amp / geom.antenna_count() as f64
}

/// `10 log10(LW) - 10 log10(gain)`; `+inf` when the gain vanishes.
pub fn array_gain_loss(geom: &UpaGeometry, target: Direction, f_m: f64) -> f64 {
    let gain = array_gain(geom, target, f_m);
    if gain <= 0.0 {
        return f64::INFINITY;
    }
    (10.0 * (geom.antenna_count() as f64).log10() - 10.0 * gain.log10()).max(0.0)
}

pub fn squint_report(geom: &UpaGeometry, target: Direction, f_m: f64) -> Result<SquintReport> {
    Ok(SquintReport {
        frequency: f_m,
        squinted_direction: squinted_direction(target, geom.center_frequency(), f_m)?,
        array_gain: array_gain(geom, target, f_m),
        gain_loss_db: array_gain_loss(geom, target, f_m),
    })
}

/// Beamforming gain `|w^H a|² / ‖w‖²` of arbitrary weights against a
/// response. For unit-modulus weights this is `|w^H a|² / N`.
pub fn weighted_gain(weights: &CVector, response: &CVector) -> f64 {
    let energy = weights.norm_squared();
    if energy == 0.0 {
        return 0.0;
    }
    weights.dotc(response).norm_sqr() / energy
}

/// Average of linear gains taken in the dB domain.
pub fn mean_gain_db(gains: &[f64]) -> f64 {
    gains.iter().map(|g| 10.0 * g.log10()).sum::<f64>() / gains.len() as f64
}

/// Arithmetic mean of linear gains, converted to dB.
pub fn linear_mean_gain_db(gains: &[f64]) -> f64 {
    10.0 * (gains.iter().sum::<f64>() / gains.len() as f64).log10()
}
