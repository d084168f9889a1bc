//! Uniform planar array geometry, the carrier grid, steering vectors and the
//! sector antenna model.
//!
//! Antennas sit on the yz-plane. Offsets `(a, b)` index the azimuth (y) and
//! elevation (z) axes; antenna `(a, b)` is stored at position `a * cols + b`,
//! which is the Kronecker order `azimuth ⊗ elevation`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{CVector, Error, Result, C64, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaGeometry {
    /// Antennas along y (`L`).
    rows: usize,
    /// Antennas along z (`W`).
    cols: usize,
    /// Element spacing in meters.
    spacing: f64,
    /// Center frequency in Hz.
    center_frequency: f64,
}

impl UpaGeometry {
    pub fn new(rows: usize, cols: usize, spacing: f64, center_frequency: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("rows/cols", "array needs at least one antenna per axis"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid("spacing", format!("{spacing} is not positive")));
        }
        if !(center_frequency > 0.0 && center_frequency.is_finite()) {
            return Err(Error::invalid(
                "center_frequency",
                format!("{center_frequency} is not positive"),
            ));
        }
        Ok(Self {
            rows,
            cols,
            spacing,
            center_frequency,
        })
    }

    /// Array with one-wavelength spacing at the center frequency.
    pub fn wavelength_spaced(rows: usize, cols: usize, center_frequency: f64) -> Result<Self> {
        if !(center_frequency > 0.0) {
            return Err(Error::invalid(
                "center_frequency",
                format!("{center_frequency} is not positive"),
            ));
        }
        Self::new(rows, cols, SPEED_OF_LIGHT / center_frequency, center_frequency)
    }

    /// Wavelength-spaced array with `count` antennas laid out as close to
    /// square as the divisors of `count` allow (`rows >= cols`).
    pub fn near_square(count: usize, center_frequency: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("count", "array needs at least one antenna"));
        }
        let cols = (1..=count)
            .take_while(|c| c * c <= count)
            .filter(|c| count.is_multiple_of(*c))
            .last()
            .unwrap_or(1);
        Self::wavelength_spaced(count / cols, cols, center_frequency)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn center_frequency(&self) -> f64 {
        self.center_frequency
    }

    pub fn antenna_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn center_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency
    }

    /// Largest delay any steering direction can require:
    /// `d (L + W - 2) / (sqrt(2) c)`.
    pub fn max_required_delay(&self) -> f64 {
        self.spacing * (self.rows + self.cols - 2) as f64 / (std::f64::consts::SQRT_2 * SPEED_OF_LIGHT)
    }
}

/// Carriers `f_m = f_c + B/(M-1) (m - (M+1)/2)`, `m = 1..M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    center: f64,
    bandwidth: f64,
    carriers: Vec<f64>,
}

impl FrequencyGrid {
    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn carriers(&self) -> &[f64] {
        &self.carriers
    }

    pub fn len(&self) -> usize {
        self.carriers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carriers.is_empty()
    }

    /// Bandwidth associated with a single carrier, `B / M`.
    pub fn carrier_bandwidth(&self) -> f64 {
        self.bandwidth / self.carriers.len() as f64
    }

    /// Index of the carrier closest to the center frequency (lowest index on
    /// a tie, which happens for even `M`).
    pub fn center_index(&self) -> usize {
        let mut best = 0;
        for (m, f) in self.carriers.iter().enumerate() {
            if (f - self.center).abs() < (self.carriers[best] - self.center).abs() {
                best = m;
            }
        }
        best
    }
}

pub fn frequency_grid(center: f64, bandwidth: f64, carriers: usize) -> Result<FrequencyGrid> {
    if carriers < 2 {
        return Err(Error::invalid(
            "carriers",
            format!("need at least 2 carriers, got {carriers}"),
        ));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid("bandwidth", format!("{bandwidth} is not positive")));
    }
    if !(center > 0.0 && center.is_finite()) {
        return Err(Error::invalid("center", format!("{center} is not positive")));
    }
    let step = bandwidth / (carriers - 1) as f64;
    let mid = (carriers + 1) as f64 / 2.0;
    let carriers = (1..=carriers).map(|m| center + step * (m as f64 - mid)).collect();
    Ok(FrequencyGrid {
        center,
        bandwidth,
        carriers,
    })
}

/// Azimuth `φ ∈ [-π, π]` and elevation `θ ∈ [0, π]`, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !(-PI..=PI).contains(&azimuth) {
            return Err(Error::invalid("azimuth", format!("{azimuth} rad outside [-pi, pi]")));
        }
        if !(0.0..=PI).contains(&elevation) {
            return Err(Error::invalid("elevation", format!("{elevation} rad outside [0, pi]")));
        }
        Ok(Self { azimuth, elevation })
    }

    pub fn from_degrees(azimuth: f64, elevation: f64) -> Result<Self> {
        Self::new(azimuth.to_radians(), elevation.to_radians())
    }

    /// Sector-antenna boresight.
    pub fn boresight() -> Self {
        Self {
            azimuth: 0.0,
            elevation: PI / 2.0,
        }
    }

    /// Spatial frequency along the azimuth axis, `sin φ sin θ`.
    pub fn azimuth_cosine(&self) -> f64 {
        self.azimuth.sin() * self.elevation.sin()
    }

    /// Spatial frequency along the elevation axis, `cos θ`.
    pub fn elevation_cosine(&self) -> f64 {
        self.elevation.cos()
    }
}

/// Array response at frequency `f` towards `dir`, built as the Kronecker
/// product of the azimuth and elevation factors.
pub fn steering_vector(geom: &UpaGeometry, f: f64, dir: Direction) -> CVector {
    let k = TAU * f / SPEED_OF_LIGHT * geom.spacing;
    let az: Vec<C64> = (0..geom.rows)
        .map(|a| C64::from_polar(1.0, k * a as f64 * dir.azimuth_cosine()))
        .collect();
    let el: Vec<C64> = (0..geom.cols)
        .map(|b| C64::from_polar(1.0, k * b as f64 * dir.elevation_cosine()))
        .collect();
    CVector::from_iterator(
        geom.antenna_count(),
        az.iter().flat_map(|x| el.iter().map(move |y| x * y)),
    )
}

/// Sector antenna: constant gain inside an azimuth/elevation window centered
/// on boresight (`φ = 0`, `θ = π/2`), zero outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorAntenna {
    azimuth_beamwidth: f64,
    elevation_beamwidth: f64,
}

impl SectorAntenna {
    /// Beamwidths are clamped to the full sphere (`2π` azimuth, `π`
    /// elevation).
    pub fn new(azimuth_beamwidth: f64, elevation_beamwidth: f64) -> Result<Self> {
        if !(azimuth_beamwidth > 0.0) || !(elevation_beamwidth > 0.0) {
            return Err(Error::invalid(
                "beamwidth",
                format!("beamwidths ({azimuth_beamwidth}, {elevation_beamwidth}) must be positive"),
            ));
        }
        Ok(Self {
            azimuth_beamwidth: azimuth_beamwidth.min(TAU),
            elevation_beamwidth: elevation_beamwidth.min(PI),
        })
    }

    /// Omnidirectional element, `G_0 = 1`.
    pub fn omni() -> Self {
        Self {
            azimuth_beamwidth: TAU,
            elevation_beamwidth: PI,
        }
    }

    pub fn azimuth_beamwidth(&self) -> f64 {
        self.azimuth_beamwidth
    }

    pub fn elevation_beamwidth(&self) -> f64 {
        self.elevation_beamwidth
    }

    /// Linear power gain `G_0 ≈ 4π / (Δφ Δθ)`, never below the 0 dBi
    /// isotropic reference.
    pub fn gain(&self) -> f64 {
        (4.0 * PI / (self.azimuth_beamwidth * self.elevation_beamwidth)).max(1.0)
    }

    /// Closed intervals: directions exactly on the sector edge count as inside.
    pub fn covers(&self, dir: Direction) -> bool {
        let boresight = Direction::boresight();
        (dir.azimuth - boresight.azimuth).abs() <= self.azimuth_beamwidth / 2.0
            && (dir.elevation - boresight.elevation).abs() <= self.elevation_beamwidth / 2.0
    }

    /// Effective aperture at the center frequency `f_c`.
    pub fn effective_area(&self, center_frequency: f64) -> f64 {
        effective_area(self.gain(), center_frequency)
    }
}

/// Amplitude gain `sqrt(G_0)` inside the sector and `0` outside.
pub fn sector_gain(ant: &SectorAntenna, dir: Direction) -> f64 {
    if ant.covers(dir) {
        ant.gain().sqrt()
    } else {
        0.0
    }
}

/// `A_e = λ_c² G_0 / (4π)`.
pub fn effective_area(gain: f64, center_frequency: f64) -> f64 {
    let lambda = SPEED_OF_LIGHT / center_frequency;
    lambda * lambda * gain / (4.0 * PI)
}
