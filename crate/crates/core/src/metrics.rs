//! Spectral efficiency, per-architecture transmitter power and energy
//! efficiency.

use serde::{Deserialize, Serialize};

use crate::channel::CarrierMatrix;
use crate::fttd::{composite_precoder, FttdMatrix, SwitchMatrix};
use crate::linalg::{frobenius_sq, hermitian_log2_det};
use crate::rd::{normalize_power, update_digital, RdProblem};
use crate::{CMatrix, Error, Execution, Result, C64};

/// `(1/M) Σ_m log2 det(I + H[m] T[m] T[m]^H H[m]^H / σ²)`, evaluated in the
/// `N_s x N_s` Gram form.
pub fn spectral_efficiency(channels: &[CarrierMatrix], precoders: &[CMatrix], noise_power: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(Error::invalid("noise_power", format!("{noise_power} is not positive")));
    }
    if channels.len() != precoders.len() || channels.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} channels for {} precoders",
            channels.len(),
            precoders.len()
        )));
    }
    let mut total = 0.0;
    for (m, (h, t)) in channels.iter().zip(precoders).enumerate() {
        if h.ncols() != t.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "carrier {m}: H has {} columns, T has {} rows",
                h.ncols(),
                t.nrows()
            )));
        }
        let x = h.apply(t);
        let mut gram = x.ad_mul(&x) / C64::from(noise_power);
        for k in 0..gram.nrows() {
            gram[(k, k)] += C64::from(1.0);
        }
        total += hermitian_log2_det(gram)?;
    }
    Ok((total / channels.len() as f64).max(0.0))
}

/// Spectral efficiency of the DS-FTTD precoder `S F[m] D[m]`.
pub fn ds_fttd_spectral_efficiency(
    channels: &[CarrierMatrix],
    s: &SwitchMatrix,
    fttd: &[FttdMatrix],
    digital: &[CMatrix],
    noise_power: f64,
) -> Result<f64> {
    let t = fttd
        .iter()
        .zip(digital)
        .map(|(f, d)| composite_precoder(s, f, d))
        .collect::<Result<Vec<_>>>()?;
    spectral_efficiency(channels, &t, noise_power)
}

/// Fully connected frequency-flat phase-shifter precoder. The `N_t x N_s`
/// analog matrix holds the phases of the target at carrier `reference`; each
/// carrier then gets a unitary digital stage fitted to its target and is
/// rescaled to the target's power.
pub fn fully_connected_ps_precoders(targets: &[CMatrix], reference: usize) -> Result<Vec<CMatrix>> {
    let anchor = targets
        .get(reference)
        .ok_or_else(|| Error::invalid("reference", format!("carrier {reference} of {}", targets.len())))?;
    let analog = anchor.map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::from(1.0) });
    targets
        .iter()
        .map(|p| {
            if p.shape() != analog.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "target is {:?}, reference is {:?}",
                    p.shape(),
                    analog.shape()
                )));
            }
            let svd = analog.ad_mul(p).svd(true, true);
            let d = svd.u.expect("requested U") * svd.v_t.expect("requested V^H");
            let t = &analog * d;
            let (have, want) = (frobenius_sq(&t), frobenius_sq(p));
            Ok(if have > 0.0 {
                t * C64::from((want / have).sqrt())
            } else {
                t
            })
        })
        .collect()
}

/// Frequency-flat counterpart of a DS-FTTD design: the same switch network
/// with every delay replaced by a phase shifter holding that delay's phase at
/// the reference carrier. The digital stage is re-fitted per carrier and the
/// result is rescaled to the target's power.
pub fn frozen_phase_precoders(
    targets: &[CMatrix],
    s: &SwitchMatrix,
    reference: &FttdMatrix,
    exec: Execution,
) -> Result<Vec<CMatrix>> {
    let frozen = vec![reference.clone(); targets.len()];
    let problem = RdProblem::from_matrices(targets, frozen)?;
    let digital = update_digital(&problem, s, exec)?.precoders;
    let digital = normalize_power(&problem, s, &digital)?;
    digital.iter().map(|d| composite_precoder(s, reference, d)).collect()
}

/// Per-device power draw in milliwatts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DevicePowers {
    pub pa: f64,
    pub rf: f64,
    pub dac: f64,
    pub bb: f64,
    pub ps: f64,
    pub ttd: f64,
    pub fttd: f64,
    pub sw: f64,
    pub pd: f64,
    pub pc: f64,
}

impl Default for DevicePowers {
    fn default() -> Self {
        Self {
            pa: 60.0,
            rf: 26.0,
            dac: 110.0,
            bb: 200.0,
            ps: 42.0,
            ttd: 80.0,
            fttd: 30.0,
            sw: 10.0,
            pd: 6.6,
            pc: 6.6,
        }
    }
}

impl DevicePowers {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("pa", self.pa),
            ("rf", self.rf),
            ("dac", self.dac),
            ("bb", self.bb),
            ("ps", self.ps),
            ("ttd", self.ttd),
            ("fttd", self.fttd),
            ("sw", self.sw),
            ("pd", self.pd),
            ("pc", self.pc),
        ];
        match all.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            Some((name, v)) => Err(Error::invalid(name, format!("{v} mW is not a valid power"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchitectureKind {
    DsFttd,
    FcTtd,
    TtdAided,
    FcPs,
    DsPs,
    AosaPs,
    Gosa,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 7] = [
        ArchitectureKind::DsFttd,
        ArchitectureKind::FcTtd,
        ArchitectureKind::TtdAided,
        ArchitectureKind::FcPs,
        ArchitectureKind::DsPs,
        ArchitectureKind::AosaPs,
        ArchitectureKind::Gosa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchitectureKind::DsFttd => "ds-fttd",
            ArchitectureKind::FcTtd => "fc-ttd",
            ArchitectureKind::TtdAided => "ttd-aided",
            ArchitectureKind::FcPs => "fc-ps",
            ArchitectureKind::DsPs => "ds-ps",
            ArchitectureKind::AosaPs => "aosa-ps",
            ArchitectureKind::Gosa => "gosa",
        }
    }
}

pub const DEFAULT_TTD_COUNT: usize = 128;
pub const DEFAULT_GOSA_GROUP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchitectureKind,
    pub antennas: usize,
    pub chains: usize,
    /// Transmit power `ρ` in watts.
    pub transmit_power: f64,
    /// FTTDs per RF chain (DS-FTTD).
    #[serde(default)]
    pub delays_per_chain: Option<usize>,
    /// FTTDs actually switched in (DS-FTTD); defaults to `L_t Q`.
    #[serde(default)]
    pub active_fttd: Option<usize>,
    /// TTD count `N_k` (TTD-aided).
    #[serde(default)]
    pub ttd_count: Option<usize>,
    /// Antennas per phase shifter `Q_GoSA` (GoSA).
    #[serde(default)]
    pub gosa_group: Option<usize>,
}

impl ArchitectureSpec {
    pub fn new(kind: ArchitectureKind, antennas: usize, chains: usize, transmit_power: f64) -> Self {
        Self {
            kind,
            antennas,
            chains,
            transmit_power,
            delays_per_chain: None,
            active_fttd: None,
            ttd_count: None,
            gosa_group: None,
        }
    }

    pub fn with_delays(mut self, q: usize) -> Self {
        self.delays_per_chain = Some(q);
        self
    }

    pub fn with_active_fttd(mut self, n: usize) -> Self {
        self.active_fttd = Some(n);
        self
    }

    pub fn with_ttd_count(mut self, n: usize) -> Self {
        self.ttd_count = Some(n);
        self
    }

    pub fn with_gosa_group(mut self, q: usize) -> Self {
        self.gosa_group = Some(q);
        self
    }

    fn active_fttd_count(&self) -> Result<usize> {
        match (self.active_fttd, self.delays_per_chain) {
            (Some(n), _) => Ok(n),
            (None, Some(q)) => Ok(self.chains * q),
            (None, None) => Err(Error::MissingField {
                kind: "ds-fttd",
                field: "active_fttd",
            }),
        }
    }
}

/// Part shared by every architecture:
/// `P_PA N_t + P_RF L_t + P_DAC L_t + P_BB + ρ`, watts.
pub fn common_power(spec: &ArchitectureSpec, dev: &DevicePowers) -> f64 {
    let (n_t, l_t) = (spec.antennas as f64, spec.chains as f64);
    (dev.pa * n_t + dev.rf * l_t + dev.dac * l_t + dev.bb) / 1e3 + spec.transmit_power
}

/// Architecture-specific analog network, watts.
pub fn analog_power(spec: &ArchitectureSpec, dev: &DevicePowers) -> Result<f64> {
    let (n_t, l_t) = (spec.antennas as f64, spec.chains as f64);
    let mw = match spec.kind {
        ArchitectureKind::DsFttd => {
            let n_a = spec.active_fttd_count()? as f64;
            dev.fttd * n_a + dev.sw * n_t + dev.pd * (l_t + n_a)
        }
        ArchitectureKind::FcTtd => dev.ttd * n_t * l_t + dev.pd * l_t + dev.pc * n_t,
        ArchitectureKind::TtdAided => {
            let n_k = spec.ttd_count.unwrap_or(DEFAULT_TTD_COUNT) as f64;
            dev.ttd * n_k + dev.ps * n_t * l_t + dev.pd * (l_t + n_k) + dev.pc * n_t
        }
        ArchitectureKind::FcPs => dev.ps * n_t * l_t + dev.pd * l_t + dev.pc * n_t,
        ArchitectureKind::DsPs => dev.ps * n_t + dev.sw * n_t + dev.pd * l_t,
        ArchitectureKind::AosaPs => dev.ps * n_t + dev.pd * l_t,
        ArchitectureKind::Gosa => {
            let group = spec.gosa_group.unwrap_or(DEFAULT_GOSA_GROUP);
            if group == 0 {
                return Err(Error::invalid("gosa_group", "must be positive"));
            }
            let shifters = n_t / group as f64;
            dev.ps * shifters + dev.pd * (l_t + shifters)
        }
    };
    Ok(mw / 1e3)
}

/// Total transmitter power, watts.
pub fn power_consumption(spec: &ArchitectureSpec, dev: &DevicePowers) -> Result<f64> {
    Ok(common_power(spec, dev) + analog_power(spec, dev)?)
}

/// Dominant analog term of each architecture, as quoted when comparing
/// delay-based front ends: `80 N_t L_t` (FC-TTD), `42 N_t L_t + 80 N_k`
/// (TTD-aided) and `10 N_t + 30 N_a` (DS-FTTD), in watts.
pub fn delay_network_power(spec: &ArchitectureSpec, dev: &DevicePowers) -> Result<f64> {
    let (n_t, l_t) = (spec.antennas as f64, spec.chains as f64);
    let mw = match spec.kind {
        ArchitectureKind::FcTtd => dev.ttd * n_t * l_t,
        ArchitectureKind::TtdAided => dev.ps * n_t * l_t + dev.ttd * spec.ttd_count.unwrap_or(DEFAULT_TTD_COUNT) as f64,
        ArchitectureKind::DsFttd => dev.sw * n_t + dev.fttd * spec.active_fttd_count()? as f64,
        other => return Err(Error::invalid("kind", format!("{} has no delay network", other.name()))),
    };
    Ok(mw / 1e3)
}

/// Spectral efficiency per watt.
pub fn energy_efficiency(se: f64, power: f64) -> Result<f64> {
    if !(power > 0.0) {
        return Err(Error::DivisionByZero("energy_efficiency: power must be positive"));
    }
    Ok(se / power)
}

/// `ρ` in watts from dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, optimal_precoders};
    use crate::geometry::{frequency_grid, SectorAntenna, UpaGeometry};
    use crate::linalg::orthonormal_completion;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const NT: usize = 1024;
    const LT: usize = 4;

    fn dense(h: CMatrix) -> CarrierMatrix {
        CarrierMatrix::Dense(h)
    }

    #[test]
    fn zero_precoder_gives_zero_rate() {
        let h = vec![dense(CMatrix::identity(2, 2))];
        assert_eq!(spectral_efficiency(&h, &[CMatrix::zeros(2, 2)], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn scalar_shannon() {
        let h = vec![dense(CMatrix::from_element(1, 1, C64::from(1.0)))];
        let t = vec![CMatrix::from_element(1, 1, C64::from(3f64.sqrt()))];
        assert_relative_eq!(spectral_efficiency(&h, &t, 0.5).unwrap(), 7f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn se_input_checks() {
        let h = vec![dense(CMatrix::identity(2, 2))];
        assert!(spectral_efficiency(&h, &[CMatrix::zeros(3, 1)], 1.0).is_err());
        assert!(spectral_efficiency(&h, &[CMatrix::zeros(2, 1)], 0.0).is_err());
        assert!(spectral_efficiency(&h, &[], 1.0).is_err());
    }

    #[test]
    fn optimal_precoder_beats_other_feasible_precoders() {
        let fc = 300e9;
        let geom = UpaGeometry::wavelength_spaced(3, 2, fc).unwrap();
        let grid = frequency_grid(fc, 30e9, 3).unwrap();
        let ant = SectorAntenna::new(2.0 * std::f64::consts::PI / 3.0, std::f64::consts::FRAC_PI_4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..10 {
            let ch = generate_channel(&geom, &geom, &grid, &ant, 4, seed).unwrap();
            let noise = ch.carrier(0).frobenius_sq() * 1e-2;
            let opt = optimal_precoders(&ch, 2, 1.0, noise).unwrap();
            let best = spectral_efficiency(ch.carriers(), &opt.precoders, noise).unwrap();
            for _ in 0..50 {
                let others: Vec<CMatrix> = opt
                    .precoders
                    .iter()
                    .map(|p| {
                        let g = CMatrix::from_fn(6, 2, |_, _| {
                            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                        });
                        let q = orthonormal_completion(&g, 2);
                        q * C64::from(frobenius_sq(p).sqrt() / 2f64.sqrt())
                    })
                    .collect();
                let se = spectral_efficiency(ch.carriers(), &others, noise).unwrap();
                assert!(se <= best + 1e-9, "{se} > {best}");
            }
        }
    }

    #[test]
    fn narrowband_ps_keeps_power_and_unit_modulus_analog() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let targets: Vec<CMatrix> = (0..3)
            .map(|_| {
                CMatrix::from_fn(8, 2, |_, _| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        let t = fully_connected_ps_precoders(&targets, 1).unwrap();
        for (tm, p) in t.iter().zip(&targets) {
            assert_relative_eq!(frobenius_sq(tm), frobenius_sq(p), max_relative = 1e-12);
        }
        assert!(fully_connected_ps_precoders(&targets, 3).is_err());
    }

    #[test]
    fn frozen_phases_match_design_at_reference() {
        use crate::fttd::{fttd_matrix, FttdBank};
        use crate::rd::{rd_solve, RdConfig};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bank = FttdBank::with_range(2, 4, 50e-12).unwrap();
        let grid = frequency_grid(300e9, 40e9, 3).unwrap();
        let targets: Vec<CMatrix> = (0..3)
            .map(|_| {
                CMatrix::from_fn(6, 2, |_, _| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        let problem = RdProblem::new(&targets, &bank, &grid).unwrap();
        let r = rd_solve(&problem, &RdConfig::default()).unwrap();
        let reference = fttd_matrix(&bank, grid.carriers()[1]);
        let t = frozen_phase_precoders(&targets, &r.switch, &reference, Execution::Sequential).unwrap();
        let designed = r.composite(&problem).unwrap();
        // Same network and same phases at the reference carrier.
        assert!((&t[1] - &designed[1]).norm() < 1e-9 * designed[1].norm());
        for (tm, p) in t.iter().zip(&targets) {
            assert_relative_eq!(frobenius_sq(tm), frobenius_sq(p), max_relative = 1e-12);
        }
    }

    #[test]
    fn delay_network_golden_values() {
        let dev = DevicePowers::default();
        let fc_ttd = ArchitectureSpec::new(ArchitectureKind::FcTtd, NT, LT, 0.1);
        assert_relative_eq!(delay_network_power(&fc_ttd, &dev).unwrap(), 327.68, epsilon = 1e-9);
        let ttd_aided = ArchitectureSpec::new(ArchitectureKind::TtdAided, NT, LT, 0.1);
        assert_relative_eq!(delay_network_power(&ttd_aided, &dev).unwrap(), 182.272, epsilon = 1e-9);
        let ds = ArchitectureSpec::new(ArchitectureKind::DsFttd, NT, LT, 0.1).with_delays(32);
        assert_relative_eq!(delay_network_power(&ds, &dev).unwrap(), 14.08, epsilon = 1e-9);
        assert!(delay_network_power(&ArchitectureSpec::new(ArchitectureKind::FcPs, NT, LT, 0.1), &dev).is_err());
    }

    #[test]
    fn table_rows() {
        let dev = DevicePowers::default();
        let rho = 0.1;
        let common = (60.0 * 1024.0 + 26.0 * 4.0 + 110.0 * 4.0 + 200.0) / 1e3 + rho;
        let spec = |k| ArchitectureSpec::new(k, NT, LT, rho);
        let cases = [
            (spec(ArchitectureKind::FcTtd), 80.0 * 4096.0 + 6.6 * 4.0 + 6.6 * 1024.0),
            (
                spec(ArchitectureKind::TtdAided),
                80.0 * 128.0 + 42.0 * 4096.0 + 6.6 * 132.0 + 6.6 * 1024.0,
            ),
            (spec(ArchitectureKind::FcPs), 42.0 * 4096.0 + 6.6 * 4.0 + 6.6 * 1024.0),
            (spec(ArchitectureKind::DsPs), 42.0 * 1024.0 + 10.0 * 1024.0 + 6.6 * 4.0),
            (spec(ArchitectureKind::AosaPs), 42.0 * 1024.0 + 6.6 * 4.0),
            (spec(ArchitectureKind::Gosa), 42.0 * 256.0 + 6.6 * 260.0),
            (
                spec(ArchitectureKind::DsFttd).with_active_fttd(100),
                30.0 * 100.0 + 10.0 * 1024.0 + 6.6 * 104.0,
            ),
        ];
        for (s, analog_mw) in cases {
            assert_relative_eq!(
                power_consumption(&s, &dev).unwrap(),
                common + analog_mw / 1e3,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn ds_fttd_needs_fttd_count() {
        let s = ArchitectureSpec::new(ArchitectureKind::DsFttd, NT, LT, 0.1);
        assert!(matches!(
            power_consumption(&s, &DevicePowers::default()),
            Err(Error::MissingField {
                field: "active_fttd",
                ..
            })
        ));
    }

    #[test]
    fn energy_efficiency_cases() {
        assert_eq!(energy_efficiency(0.0, 3.0).unwrap(), 0.0);
        assert_relative_eq!(energy_efficiency(10.0, 100.0).unwrap(), 0.1);
        assert!(energy_efficiency(1.0, 0.0).is_err());
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watts(20.0), 0.1, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn device_power_validation() {
        assert!(DevicePowers::default().validate().is_ok());
        assert!(DevicePowers {
            sw: -1.0,
            ..DevicePowers::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn ds_fttd_power_monotone_in_active(a in 0usize..4096, b in 0usize..4096) {
            let dev = DevicePowers::default();
            let spec = |n| ArchitectureSpec::new(ArchitectureKind::DsFttd, NT, LT, 0.1).with_active_fttd(n);
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(power_consumption(&spec(lo), &dev).unwrap() <= power_consumption(&spec(hi), &dev).unwrap());
        }

        #[test]
        fn se_invariant_under_digital_rotation(seed in 0u64..500, angle in 0.0f64..6.3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rand_m = |r, c| CMatrix::from_fn(r, c, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let h = vec![dense(rand_m(4, 5))];
            let t = rand_m(5, 2);
            let rot = CMatrix::from_row_slice(2, 2, &[
                C64::from(angle.cos()), C64::from(-angle.sin()),
                C64::from(angle.sin()), C64::from(angle.cos()),
            ]) * C64::from_polar(1.0, angle / 3.0);
            let a = spectral_efficiency(&h, std::slice::from_ref(&t), 0.3).unwrap();
            let b = spectral_efficiency(&h, &[t * rot], 0.3).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
