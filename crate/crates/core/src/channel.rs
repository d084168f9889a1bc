//! Multicarrier multipath channels, optimal (SVD + water-filling) precoders
//! and the imperfect-CSI model.
//!
//! A clean channel is kept in factored form `H[m] = A_r diag(g[m]) A_t^H`
//! with one steering-vector column per path, so 1024 x 1024 arrays over 50
//! carriers cost a few megabytes instead of gigabytes. Perturbed channels are
//! full rank and are stored densely.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{sector_gain, steering_vector, Direction, FrequencyGrid, SectorAntenna, UpaGeometry};
use crate::linalg::{frobenius_sq, orthonormal_completion};
use crate::{CMatrix, Error, Execution, Result, C64, SPEED_OF_LIGHT};

/// Upper bound on the number of propagation paths.
pub const MAX_PATHS: usize = 5;

mod complex_pair {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::C64;

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

/// One propagation path. The per-carrier gain is
/// `α_n[m] = α_n exp(-j 2π f_m T_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    /// Complex gain at the center frequency, serialized as `[re, im]`.
    #[serde(with = "complex_pair")]
    pub gain: C64,
    pub departure: Direction,
    pub arrival: Direction,
    /// Propagation delay `T_n` in seconds.
    pub delay: f64,
}

impl PathSpec {
    pub fn gain_at(&self, f_m: f64) -> C64 {
        self.gain * C64::from_polar(1.0, -TAU * f_m * self.delay)
    }
}

/// Channel matrix of one carrier.
#[derive(Debug, Clone, PartialEq)]
pub enum CarrierMatrix {
    /// `rx * diag(gains) * tx^H`; one column per path.
    Paths {
        rx: CMatrix,
        gains: Vec<C64>,
        tx: CMatrix,
    },
    Dense(CMatrix),
}

impl CarrierMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            CarrierMatrix::Paths { rx, .. } => rx.nrows(),
            CarrierMatrix::Dense(h) => h.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            CarrierMatrix::Paths { tx, .. } => tx.nrows(),
            CarrierMatrix::Dense(h) => h.ncols(),
        }
    }

    pub fn dense(&self) -> CMatrix {
        match self {
            CarrierMatrix::Paths { rx, gains, tx } => scale_columns(rx, gains) * tx.adjoint(),
            CarrierMatrix::Dense(h) => h.clone(),
        }
    }

    /// `H x` without materializing `H` for factored carriers.
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        match self {
            CarrierMatrix::Paths { rx, gains, tx } => {
                let mut inner = tx.ad_mul(x);
                for (mut row, g) in inner.row_iter_mut().zip(gains) {
                    row *= *g;
                }
                rx * inner
            }
            CarrierMatrix::Dense(h) => h * x,
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        match self {
            CarrierMatrix::Paths { rx, gains, tx } => {
                // ‖A_r G A_t^H‖² = tr((A_r G)^H (A_r G) · A_t^H A_t)
                let left = scale_columns(rx, gains);
                let a = left.ad_mul(&left);
                let b = tx.ad_mul(tx);
                a.component_mul(&b.transpose()).iter().map(|z| z.re).sum()
            }
            CarrierMatrix::Dense(h) => frobenius_sq(h),
        }
    }

    /// Compact SVD `H = U diag(σ) V^H` with singular values sorted in
    /// decreasing order. Factored carriers go through QR of the path
    /// matrices, so the cost is linear in the antenna counts.
    pub fn svd(&self) -> (CMatrix, Vec<f64>, CMatrix) {
        match self {
            CarrierMatrix::Paths { rx, gains, tx } => {
                let qr_r = rx.clone().qr();
                let qr_t = tx.clone().qr();
                let core = scale_columns(&qr_r.r(), gains) * qr_t.r().adjoint();
                let svd = core.svd(true, true);
                let u = qr_r.q() * svd.u.expect("requested U");
                let v = qr_t.q() * svd.v_t.expect("requested V").adjoint();
                (u, svd.singular_values.iter().copied().collect(), v)
            }
            CarrierMatrix::Dense(h) => {
                let svd = h.clone().svd(true, true);
                let v = svd.v_t.expect("requested V").adjoint();
                (
                    svd.u.expect("requested U"),
                    svd.singular_values.iter().copied().collect(),
                    v,
                )
            }
        }
    }

    /// Leading `n` right singular vectors and values. Missing dimensions are
    /// padded with zero singular values and an orthonormal completion.
    pub fn right_singular(&self, n: usize) -> (Vec<f64>, CMatrix) {
        let (mut sigma, v) = match self {
            // Eigen-decomposition of the Gram matrix; U is never needed here.
            CarrierMatrix::Dense(h) => {
                let eig = (h.adjoint() * h).symmetric_eigen();
                let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
                let sigma = order.iter().map(|&k| eig.eigenvalues[k].max(0.0).sqrt()).collect();
                let v = CMatrix::from_columns(&order.iter().map(|&k| eig.eigenvectors.column(k)).collect::<Vec<_>>());
                (sigma, v)
            }
            paths => {
                let (_, sigma, v) = paths.svd();
                (sigma, v)
            }
        };
        let keep = n.min(v.ncols());
        let v = orthonormal_completion(&v.columns(0, keep).into_owned(), n);
        sigma.resize(n, 0.0);
        (sigma, v)
    }
}

fn scale_columns(m: &CMatrix, gains: &[C64]) -> CMatrix {
    let mut out = m.clone();
    for (mut col, g) in out.column_iter_mut().zip(gains) {
        col *= *g;
    }
    out
}

/// Parameters of the stochastic multipath generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    /// Link distance for the free-space loss of the line-of-sight path.
    pub distance: f64,
    /// Path delays are drawn from `[0, max_delay]` seconds.
    pub max_delay: f64,
    /// Non-line-of-sight paths sit this many dB below line of sight.
    pub nlos_attenuation_db: (f64, f64),
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            distance: 50.0,
            max_delay: 20e-9,
            nlos_attenuation_db: (10.0, 20.0),
        }
    }
}

impl ChannelModel {
    pub fn draw_paths(
        &self,
        grid: &FrequencyGrid,
        antenna: &SectorAntenna,
        n_paths: usize,
        seed: u64,
    ) -> Result<Vec<PathSpec>> {
        if !(1..=MAX_PATHS).contains(&n_paths) {
            return Err(Error::invalid("n_paths", format!("{n_paths} not in 1..={MAX_PATHS}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let los_amplitude = SPEED_OF_LIGHT / grid.center() / (4.0 * PI * self.distance);
        let (lo, hi) = self.nlos_attenuation_db;
        let draw_direction = |rng: &mut ChaCha8Rng| {
            let half_az = antenna.azimuth_beamwidth() / 2.0;
            let half_el = antenna.elevation_beamwidth() / 2.0;
            Direction {
                azimuth: rng.random_range(-half_az..=half_az),
                elevation: PI / 2.0 + rng.random_range(-half_el..=half_el),
            }
        };
        let paths = (0..n_paths)
            .map(|n| {
                let departure = draw_direction(&mut rng);
                let arrival = draw_direction(&mut rng);
                let attenuation_db = if n == 0 { 0.0 } else { rng.random_range(lo..=hi) };
                let amplitude = los_amplitude * 10f64.powf(-attenuation_db / 20.0);
                let phase = rng.random_range(0.0..TAU);
                let delay = rng.random_range(0.0..=self.max_delay);
                PathSpec {
                    gain: C64::from_polar(amplitude, phase),
                    departure,
                    arrival,
                    delay,
                }
            })
            .collect();
        Ok(paths)
    }
}

/// Imperfect-CSI perturbation applied on top of the clean paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiError {
    pub accuracy: f64,
    pub seed: u64,
}

/// Replayable description of a [`ChannelSet`]; matrices are re-derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub tx: UpaGeometry,
    pub rx: UpaGeometry,
    pub antenna: SectorAntenna,
    pub grid: FrequencyGrid,
    pub paths: Vec<PathSpec>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csi: Option<CsiError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    spec: ChannelSpec,
    carriers: Vec<CarrierMatrix>,
}

impl ChannelSet {
    /// Builds `H[m] = Σ_n α_n[m] G_t G_r a_rn[m] a_tn[m]^H` for every carrier.
    pub fn from_paths(
        tx: UpaGeometry,
        rx: UpaGeometry,
        antenna: SectorAntenna,
        grid: FrequencyGrid,
        paths: Vec<PathSpec>,
        seed: u64,
    ) -> Result<Self> {
        if paths.is_empty() || paths.len() > MAX_PATHS {
            return Err(Error::invalid(
                "paths",
                format!("{} paths, expected 1..={MAX_PATHS}", paths.len()),
            ));
        }
        Self::from_spec(ChannelSpec {
            tx,
            rx,
            antenna,
            grid,
            paths,
            seed,
            csi: None,
        })
    }

    pub fn from_spec(spec: ChannelSpec) -> Result<Self> {
        let carriers = spec
            .grid
            .carriers()
            .iter()
            .map(|&f| {
                let tx = CMatrix::from_columns(
                    &spec
                        .paths
                        .iter()
                        .map(|p| steering_vector(&spec.tx, f, p.departure))
                        .collect::<Vec<_>>(),
                );
                let rx = CMatrix::from_columns(
                    &spec
                        .paths
                        .iter()
                        .map(|p| steering_vector(&spec.rx, f, p.arrival))
                        .collect::<Vec<_>>(),
                );
                let gains = spec
                    .paths
                    .iter()
                    .map(|p| {
                        p.gain_at(f) * sector_gain(&spec.antenna, p.departure) * sector_gain(&spec.antenna, p.arrival)
                    })
                    .collect();
                CarrierMatrix::Paths { rx, gains, tx }
            })
            .collect();
        let csi = spec.csi;
        let clean = ChannelSet {
            spec: ChannelSpec { csi: None, ..spec },
            carriers,
        };
        match csi {
            Some(e) => perturb_csi(&clean, e.accuracy, e.seed),
            None => Ok(clean),
        }
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.spec)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_spec(serde_json::from_str(json)?)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.spec.grid
    }

    pub fn tx(&self) -> &UpaGeometry {
        &self.spec.tx
    }

    pub fn rx(&self) -> &UpaGeometry {
        &self.spec.rx
    }

    pub fn paths(&self) -> &[PathSpec] {
        &self.spec.paths
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn carriers(&self) -> &[CarrierMatrix] {
        &self.carriers
    }

    pub fn carrier(&self, m: usize) -> &CarrierMatrix {
        &self.carriers[m]
    }

    pub fn len(&self) -> usize {
        self.carriers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carriers.is_empty()
    }
}

pub fn generate_channel(
    tx: &UpaGeometry,
    rx: &UpaGeometry,
    grid: &FrequencyGrid,
    antenna: &SectorAntenna,
    n_paths: usize,
    seed: u64,
) -> Result<ChannelSet> {
    generate_channel_with(&ChannelModel::default(), tx, rx, grid, antenna, n_paths, seed)
}

pub fn generate_channel_with(
    model: &ChannelModel,
    tx: &UpaGeometry,
    rx: &UpaGeometry,
    grid: &FrequencyGrid,
    antenna: &SectorAntenna,
    n_paths: usize,
    seed: u64,
) -> Result<ChannelSet> {
    let paths = model.draw_paths(grid, antenna, n_paths, seed)?;
    ChannelSet::from_paths(*tx, *rx, *antenna, grid.clone(), paths, seed)
}

/// `Ĥ[m] = ξ H[m] + ê_m sqrt(1 - ξ²) E[m]` with `E[m]` i.i.d. `CN(0, 1)` and
/// `‖ê_m E[m]‖_F = ‖H[m]‖_F`.
pub fn perturb_csi(ch: &ChannelSet, accuracy: f64, seed: u64) -> Result<ChannelSet> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::invalid("accuracy", format!("{accuracy} not in [0, 1]")));
    }
    let spec = ChannelSpec {
        csi: Some(CsiError { accuracy, seed }),
        ..ch.spec.clone()
    };
    if accuracy == 1.0 {
        return Ok(ChannelSet {
            spec,
            carriers: ch.carriers.clone(),
        });
    }
    let mix = (1.0 - accuracy * accuracy).sqrt();
    let carriers = Execution::Parallel.map(ch.len(), |m| {
        let h = ch.carriers[m].dense();
        let e = gaussian_matrix(h.nrows(), h.ncols(), seed, m as u64);
        let e_norm = frobenius_sq(&e).sqrt();
        let scale = if e_norm > 0.0 {
            frobenius_sq(&h).sqrt() / e_norm
        } else {
            0.0
        };
        CarrierMatrix::Dense(h * C64::from(accuracy) + e * C64::from(scale * mix))
    });
    Ok(ChannelSet { spec, carriers })
}

/// i.i.d. `CN(0, 1)` entries from an independent ChaCha stream per carrier.
fn gaussian_matrix(rows: usize, cols: usize, seed: u64, stream: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re * s, im * s)
    })
}

/// Thermal noise over one carrier's bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub density_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            density_dbm_per_hz: -174.0,
            noise_figure_db: 10.0,
        }
    }
}

impl NoiseModel {
    /// Noise power per carrier in watts, over `B / M`.
    pub fn power(&self, grid: &FrequencyGrid) -> f64 {
        let dbm = self.density_dbm_per_hz + 10.0 * grid.carrier_bandwidth().log10() + self.noise_figure_db;
        10f64.powf((dbm - 30.0) / 10.0)
    }
}

/// Result of capacity-optimal precoding: `P[m] = V_Ns[m] Γ[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalPrecoderSet {
    pub precoders: Vec<CMatrix>,
    /// Per-carrier stream powers (diagonal of `Γ[m]²`).
    pub powers: Vec<Vec<f64>>,
    pub singular_values: Vec<Vec<f64>>,
    pub water_level: f64,
    pub noise_power: f64,
}

impl OptimalPrecoderSet {
    pub fn len(&self) -> usize {
        self.precoders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precoders.is_empty()
    }

    pub fn streams(&self) -> usize {
        self.precoders.first().map_or(0, |p| p.ncols())
    }

    pub fn total_power(&self) -> f64 {
        self.precoders.iter().map(frobenius_sq).sum()
    }
}

/// Water-filling over parallel subchannels with effective gains `g_k`
/// (`σ_k² / σ_n²`). Returns the powers and the water level `μ`; every active
/// subchannel gets `μ - 1/g_k`.
pub fn water_filling(gains: &[f64], total_power: f64) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&k| gains[k] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut powers = vec![0.0; gains.len()];
    if order.is_empty() || total_power <= 0.0 {
        return (powers, 0.0);
    }
    let mut inverse_sum = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (k, &idx) in order.iter().enumerate() {
        let inv = 1.0 / gains[idx];
        let candidate = (total_power + inverse_sum + inv) / (k + 1) as f64;
        if candidate <= inv {
            break;
        }
        inverse_sum += inv;
        level = candidate;
        active = k + 1;
    }
    for &idx in &order[..active] {
        powers[idx] = (level - 1.0 / gains[idx]).max(0.0);
    }
    (powers, level)
}

/// SVD per carrier and one global water level over all `M · N_s` streams.
pub fn optimal_precoders(
    ch: &ChannelSet,
    streams: usize,
    total_power: f64,
    noise_power: f64,
) -> Result<OptimalPrecoderSet> {
    let (n_r, n_t) = (ch.rx().antenna_count(), ch.tx().antenna_count());
    if streams == 0 || streams > n_r.min(n_t) {
        return Err(Error::invalid(
            "streams",
            format!("{streams} streams for a {n_r}x{n_t} channel"),
        ));
    }
    if !(total_power > 0.0) {
        return Err(Error::invalid("total_power", format!("{total_power} is not positive")));
    }
    if !(noise_power > 0.0) {
        return Err(Error::invalid("noise_power", format!("{noise_power} is not positive")));
    }
    let decomps = Execution::Parallel.map(ch.len(), |m| ch.carrier(m).right_singular(streams));
    let gains: Vec<f64> = decomps
        .iter()
        .flat_map(|(sigma, _)| sigma.iter().map(|s| s * s / noise_power))
        .collect();
    let (flat, water_level) = water_filling(&gains, total_power);
    let powers: Vec<Vec<f64>> = flat.chunks(streams).map(<[f64]>::to_vec).collect();
    let precoders = decomps
        .iter()
        .zip(&powers)
        .map(|((_, v), p)| {
            let amplitudes = DVector::from_iterator(streams, p.iter().map(|x| C64::from(x.sqrt())));
            v * CMatrix::from_diagonal(&amplitudes)
        })
        .collect();
    Ok(OptimalPrecoderSet {
        precoders,
        powers,
        singular_values: decomps.into_iter().map(|(s, _)| s).collect(),
        water_level,
        noise_power,
    })
}
