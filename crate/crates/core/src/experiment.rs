//! Configurable sweeps producing CSV tables plus a JSON manifest.
//!
//! A configuration is a TOML document layered on top of one of the bundled
//! profiles (`paper`, or `desk` which itself sits on `paper`). Every task of a
//! sweep (one sweep point for one seed) is independent; tasks run through
//! [`Execution`] and are merged back in declaration order, so output is
//! byte-identical for any thread count.
//!
//! Seeds drive the channel draw and the RD initialization. The imperfect-CSI
//! error uses `seed + CSI_SEED_OFFSET`.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{generate_channel_with, optimal_precoders, perturb_csi, ChannelModel, NoiseModel, MAX_PATHS};
use crate::fttd::{active_fttd_count, build_delay_bank};
use crate::geometry::{frequency_grid, steering_vector, Direction, FrequencyGrid, SectorAntenna, UpaGeometry};
use crate::metrics::{
    dbm_to_watts, energy_efficiency, frozen_phase_precoders, fully_connected_ps_precoders, power_consumption,
    spectral_efficiency, ArchitectureKind, ArchitectureSpec, DevicePowers,
};
use crate::rd::{rd_solve, RdConfig, RdProblem};
use crate::squint::{
    array_gain, array_gain_loss, ideal_ttd_weights, mean_gain_db, narrowband_weights, squinted_direction, weighted_gain,
};
use crate::{CMatrix, Error, Execution, Result};

pub const CSI_SEED_OFFSET: u64 = 1_000_003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GainVsFrequency,
    GainVsQ,
    SeVsQ,
    EeVsQ,
    SeVsPower,
    EeVsPower,
    SeVsAntennas,
    EeVsAntennas,
    SeVsBandwidth,
    SeVsCsi,
    ConvergenceTrace,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::GainVsFrequency,
        ExperimentKind::GainVsQ,
        ExperimentKind::SeVsQ,
        ExperimentKind::EeVsQ,
        ExperimentKind::SeVsPower,
        ExperimentKind::EeVsPower,
        ExperimentKind::SeVsAntennas,
        ExperimentKind::EeVsAntennas,
        ExperimentKind::SeVsBandwidth,
        ExperimentKind::SeVsCsi,
        ExperimentKind::ConvergenceTrace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GainVsFrequency => "gain-vs-frequency",
            ExperimentKind::GainVsQ => "gain-vs-q",
            ExperimentKind::SeVsQ => "se-vs-q",
            ExperimentKind::EeVsQ => "ee-vs-q",
            ExperimentKind::SeVsPower => "se-vs-power",
            ExperimentKind::EeVsPower => "ee-vs-power",
            ExperimentKind::SeVsAntennas => "se-vs-antennas",
            ExperimentKind::EeVsAntennas => "ee-vs-antennas",
            ExperimentKind::SeVsBandwidth => "se-vs-bandwidth",
            ExperimentKind::SeVsCsi => "se-vs-csi",
            ExperimentKind::ConvergenceTrace => "convergence-trace",
        }
    }

    /// Everything except the closed-form squint curve depends on seeds.
    pub fn is_stochastic(self) -> bool {
        self != ExperimentKind::GainVsFrequency
    }

    fn reports_energy(self) -> bool {
        matches!(
            self,
            ExperimentKind::EeVsQ | ExperimentKind::EeVsPower | ExperimentKind::EeVsAntennas
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::config("kind", format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

const PAPER_PROFILE: &str = include_str!("../profiles/paper.toml");
const DESK_PROFILE: &str = include_str!("../profiles/desk.toml");

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }

    /// TOML layers, base first.
    fn layers(self) -> &'static [&'static str] {
        match self {
            Profile::Paper => &[PAPER_PROFILE],
            Profile::Desk => &[PAPER_PROFILE, DESK_PROFILE],
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            _ => Err(Error::config("profile", format!("unknown profile `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub tx_rows: usize,
    pub tx_cols: usize,
    pub rx_rows: usize,
    pub rx_cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub center_frequency: f64,
    pub bandwidth: f64,
    pub carriers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaConfig {
    pub azimuth_beamwidth_deg: f64,
    pub elevation_beamwidth_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub paths: usize,
    pub distance: f64,
    pub max_delay: f64,
    pub nlos_attenuation_db: [f64; 2],
    pub noise_density_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub chains: usize,
    pub streams: usize,
    pub delays_per_chain: usize,
    pub transmit_power_dbm: f64,
    pub ttd_count: usize,
    pub gosa_group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdSettings {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub restarts: usize,
    pub execution: Execution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquintConfig {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub q: Vec<usize>,
    pub power_dbm: Vec<f64>,
    pub antennas: Vec<usize>,
    pub bandwidth: Vec<f64>,
    pub csi_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub array: ArrayConfig,
    pub band: BandConfig,
    pub antenna: AntennaConfig,
    pub channel: ChannelConfig,
    pub architecture: ArchitectureConfig,
    pub devices: DevicePowers,
    pub rd: RdSettings,
    pub target: TargetConfig,
    pub squint: SquintConfig,
    pub sweep: SweepConfig,
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn parse_table(source: &str, origin: &str) -> Result<toml::Table> {
    source
        .parse::<toml::Table>()
        .map_err(|e| Error::config(origin, e.message().to_string()))
}

impl ExperimentConfig {
    pub fn from_profile(profile: Profile) -> Result<Self> {
        Self::load(profile, None)
    }

    /// Profile defaults with an optional TOML overlay on top. Unknown keys
    /// and type errors are reported with their field path.
    pub fn load(profile: Profile, overlay: Option<&str>) -> Result<Self> {
        let mut table = toml::Table::new();
        for layer in profile.layers() {
            merge(&mut table, parse_table(layer, profile.name())?);
        }
        if let Some(text) = overlay {
            merge(&mut table, parse_table(text, "config")?);
        }
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { String::new() } else { path },
                e.into_inner().message().to_string(),
            )
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("", e.to_string()))
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.kind.ok_or_else(|| Error::config("kind", "no experiment selected"))
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        let positive = |path: &str, v: usize| {
            if v == 0 {
                Err(Error::config(path, "must be positive"))
            } else {
                Ok(())
            }
        };
        let positive_f = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(path, format!("{v} must be positive and finite")))
            }
        };
        if kind.is_stochastic() && self.seeds.is_empty() {
            return Err(Error::config("seeds", format!("{kind} needs at least one seed")));
        }
        positive("array.tx_rows", self.array.tx_rows)?;
        positive("array.tx_cols", self.array.tx_cols)?;
        positive("array.rx_rows", self.array.rx_rows)?;
        positive("array.rx_cols", self.array.rx_cols)?;
        positive_f("band.center_frequency", self.band.center_frequency)?;
        positive_f("band.bandwidth", self.band.bandwidth)?;
        if self.band.carriers < 2 {
            return Err(Error::config("band.carriers", "need at least 2 carriers"));
        }
        positive_f("antenna.azimuth_beamwidth_deg", self.antenna.azimuth_beamwidth_deg)?;
        positive_f("antenna.elevation_beamwidth_deg", self.antenna.elevation_beamwidth_deg)?;
        if !(1..=MAX_PATHS).contains(&self.channel.paths) {
            return Err(Error::config("channel.paths", format!("must be in 1..={MAX_PATHS}")));
        }
        positive_f("channel.distance", self.channel.distance)?;
        if !(self.channel.max_delay >= 0.0) {
            return Err(Error::config("channel.max_delay", "must be non-negative"));
        }
        let [lo, hi] = self.channel.nlos_attenuation_db;
        if !(0.0 <= lo && lo <= hi) {
            return Err(Error::config("channel.nlos_attenuation_db", "need 0 <= low <= high"));
        }
        let arch = &self.architecture;
        positive("architecture.chains", arch.chains)?;
        positive("architecture.streams", arch.streams)?;
        if arch.streams > arch.chains {
            return Err(Error::config(
                "architecture.streams",
                "cannot exceed architecture.chains",
            ));
        }
        if arch.delays_per_chain < 2 {
            return Err(Error::config("architecture.delays_per_chain", "must be at least 2"));
        }
        if !arch.transmit_power_dbm.is_finite() {
            return Err(Error::config("architecture.transmit_power_dbm", "must be finite"));
        }
        positive("architecture.gosa_group", arch.gosa_group)?;
        self.devices
            .validate()
            .map_err(|e| Error::config("devices", e.to_string()))?;
        positive("rd.max_iterations", self.rd.max_iterations)?;
        positive_f("rd.relative_tolerance", self.rd.relative_tolerance)?;
        positive("rd.restarts", self.rd.restarts)?;
        Direction::from_degrees(self.target.azimuth_deg, self.target.elevation_deg)
            .map_err(|e| Error::config("target", e.to_string()))?;
        Direction::from_degrees(self.squint.azimuth_deg, self.squint.elevation_deg)
            .map_err(|e| Error::config("squint", e.to_string()))?;
        if self.squint.points < 2 {
            return Err(Error::config("squint.points", "need at least 2 points"));
        }
        let min_antennas = self
            .tx_geometry()?
            .antenna_count()
            .min(self.rx_geometry()?.antenna_count());
        if arch.streams > min_antennas {
            return Err(Error::config("architecture.streams", "exceeds the antenna count"));
        }
        let sweep = &self.sweep;
        let nonempty = |path: &str, len: usize| {
            if len == 0 {
                Err(Error::config(path, format!("{kind} needs a non-empty sweep")))
            } else {
                Ok(())
            }
        };
        match kind {
            ExperimentKind::GainVsQ | ExperimentKind::SeVsQ | ExperimentKind::EeVsQ => {
                nonempty("sweep.q", sweep.q.len())?;
                if let Some(i) = sweep.q.iter().position(|&q| q < 2) {
                    return Err(Error::config(format!("sweep.q[{i}]"), "must be at least 2"));
                }
            }
            ExperimentKind::SeVsPower | ExperimentKind::EeVsPower => {
                nonempty("sweep.power_dbm", sweep.power_dbm.len())?;
                if let Some(i) = sweep.power_dbm.iter().position(|p| !p.is_finite()) {
                    return Err(Error::config(format!("sweep.power_dbm[{i}]"), "must be finite"));
                }
            }
            ExperimentKind::SeVsAntennas | ExperimentKind::EeVsAntennas => {
                nonempty("sweep.antennas", sweep.antennas.len())?;
                if let Some(i) = sweep.antennas.iter().position(|&n| n < arch.streams) {
                    return Err(Error::config(
                        format!("sweep.antennas[{i}]"),
                        "must be at least architecture.streams",
                    ));
                }
            }
            ExperimentKind::SeVsBandwidth => {
                nonempty("sweep.bandwidth", sweep.bandwidth.len())?;
                if let Some(i) = sweep.bandwidth.iter().position(|b| !(*b > 0.0)) {
                    return Err(Error::config(format!("sweep.bandwidth[{i}]"), "must be positive"));
                }
            }
            ExperimentKind::SeVsCsi => {
                nonempty("sweep.csi_accuracy", sweep.csi_accuracy.len())?;
                if let Some(i) = sweep.csi_accuracy.iter().position(|x| !(0.0..=1.0).contains(x)) {
                    return Err(Error::config(format!("sweep.csi_accuracy[{i}]"), "must be in [0, 1]"));
                }
            }
            ExperimentKind::GainVsFrequency | ExperimentKind::ConvergenceTrace => {}
        }
        Ok(())
    }

    pub fn tx_geometry(&self) -> Result<UpaGeometry> {
        UpaGeometry::wavelength_spaced(self.array.tx_rows, self.array.tx_cols, self.band.center_frequency)
    }

    pub fn rx_geometry(&self) -> Result<UpaGeometry> {
        UpaGeometry::wavelength_spaced(self.array.rx_rows, self.array.rx_cols, self.band.center_frequency)
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        frequency_grid(self.band.center_frequency, self.band.bandwidth, self.band.carriers)
    }

    pub fn sector_antenna(&self) -> Result<SectorAntenna> {
        SectorAntenna::new(
            self.antenna.azimuth_beamwidth_deg.to_radians(),
            self.antenna.elevation_beamwidth_deg.to_radians(),
        )
    }

    pub fn channel_model(&self) -> ChannelModel {
        let [lo, hi] = self.channel.nlos_attenuation_db;
        ChannelModel {
            distance: self.channel.distance,
            max_delay: self.channel.max_delay,
            nlos_attenuation_db: (lo, hi),
        }
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            density_dbm_per_hz: self.channel.noise_density_dbm_per_hz,
            noise_figure_db: self.channel.noise_figure_db,
        }
    }

    pub fn rd_config(&self, seed: u64) -> RdConfig {
        RdConfig {
            max_iterations: self.rd.max_iterations,
            relative_tolerance: self.rd.relative_tolerance,
            seed,
            restarts: self.rd.restarts,
            execution: self.rd.execution,
        }
    }

    pub fn target(&self) -> Result<Direction> {
        Direction::from_degrees(self.target.azimuth_deg, self.target.elevation_deg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Rows whose `seed` column reads `mean`.
    pub fn mean_rows(&self) -> impl Iterator<Item = &Vec<Cell>> {
        let seed = self.column("seed");
        self.rows
            .iter()
            .filter(move |r| seed.is_some_and(|s| matches!(&r[s], Cell::Text(t) if t == "mean")))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

/// Machine-readable description written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub library: &'static str,
    pub version: &'static str,
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    pub columns: Vec<&'static str>,
    pub rows: usize,
    pub degenerate_rows: usize,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub manifest: Manifest,
}

impl ExperimentOutput {
    pub fn has_degeneracy(&self) -> bool {
        self.manifest.degenerate_rows > 0
    }

    /// Writes `path` (CSV) and `path` with a `.json` extension (manifest).
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.table.write_csv(std::fs::File::create(path)?)?;
        let manifest_path = path.with_extension("json");
        let mut json = serde_json::to_string_pretty(&self.manifest)?;
        json.push('\n');
        std::fs::write(&manifest_path, json)?;
        Ok(manifest_path)
    }
}

/// One seed's measurements at one sweep point.
struct Measurement {
    values: Vec<Cell>,
    notes: String,
}

fn degenerate_note(carriers: &[usize]) -> String {
    if carriers.is_empty() {
        return String::new();
    }
    let list: Vec<String> = carriers.iter().map(usize::to_string).collect();
    format!("rank-deficient digital update on carriers {}", list.join(" "))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let kind = cfg.kind()?;
    let table = match kind {
        ExperimentKind::GainVsFrequency => gain_vs_frequency(cfg)?,
        ExperimentKind::GainVsQ => gain_vs_q(cfg)?,
        ExperimentKind::ConvergenceTrace => convergence_trace(cfg)?,
        _ => se_sweep(cfg, kind)?,
    };
    let notes = table.column("notes");
    let degenerate_rows = notes.map_or(0, |n| {
        table
            .rows
            .iter()
            .filter(|r| matches!(&r[n], Cell::Text(t) if !t.is_empty()))
            .count()
    });
    let manifest = Manifest {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: kind,
        seeds: if kind.is_stochastic() {
            cfg.seeds.clone()
        } else {
            Vec::new()
        },
        columns: table.columns.clone(),
        rows: table.rows.len(),
        degenerate_rows,
        config: cfg.clone(),
    };
    Ok(ExperimentOutput { table, manifest })
}

/// Builds `key..., seed, values..., notes` rows with a mean row closing each
/// sweep point. `measure(point, seed)` runs for every combination.
fn seeded_table<P, F>(
    cfg: &ExperimentConfig,
    key_columns: &[&'static str],
    value_columns: &[&'static str],
    points: &[P],
    key: impl Fn(&P) -> Vec<Cell>,
    measure: F,
) -> Result<ResultTable>
where
    P: Sync,
    F: Fn(&P, u64) -> Result<Measurement> + Sync + Send,
{
    let seeds = &cfg.seeds;
    let tasks = points.len() * seeds.len();
    let results = cfg
        .rd
        .execution
        .try_map(tasks, |t| measure(&points[t / seeds.len()], seeds[t % seeds.len()]))?;
    let mut columns = key_columns.to_vec();
    columns.push("seed");
    columns.extend_from_slice(value_columns);
    columns.push("notes");
    let mut rows = Vec::with_capacity(tasks + points.len());
    let mut results = results.into_iter();
    for point in points {
        let k = key(point);
        let group: Vec<Measurement> = results.by_ref().take(seeds.len()).collect();
        let mut sums = vec![0.0; value_columns.len()];
        let mut counts = vec![0usize; value_columns.len()];
        for (seed, m) in seeds.iter().zip(&group) {
            let mut row = k.clone();
            row.push(Cell::Int(*seed as i64));
            for (j, v) in m.values.iter().enumerate() {
                if let Some(x) = v.as_f64().filter(|x| x.is_finite()) {
                    sums[j] += x;
                    counts[j] += 1;
                }
                row.push(v.clone());
            }
            row.push(Cell::Text(m.notes.clone()));
            rows.push(row);
        }
        let mut mean = k;
        mean.push(Cell::Text("mean".into()));
        for (s, c) in sums.iter().zip(&counts) {
            mean.push(if *c > 0 { Cell::Num(s / *c as f64) } else { Cell::Empty });
        }
        mean.push(Cell::Text(String::new()));
        rows.push(mean);
    }
    Ok(ResultTable { columns, rows })
}

fn gain_vs_frequency(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let geom = cfg.tx_geometry()?;
    let target = Direction::from_degrees(cfg.squint.azimuth_deg, cfg.squint.elevation_deg)?;
    let dense = frequency_grid(cfg.band.center_frequency, cfg.band.bandwidth, cfg.squint.points)?;
    let n = geom.antenna_count() as f64;
    let rows = dense
        .carriers()
        .iter()
        .map(|&f| {
            let (az, el) = match squinted_direction(target, geom.center_frequency(), f) {
                Ok(d) => (Cell::Num(d.azimuth.to_degrees()), Cell::Num(d.elevation.to_degrees())),
                Err(_) => (Cell::Empty, Cell::Empty),
            };
            let ideal = weighted_gain(&ideal_ttd_weights(&geom, target, f), &steering_vector(&geom, f, target));
            vec![
                Cell::Num(f / 1e9),
                Cell::Num(array_gain(&geom, target, f)),
                Cell::Num(array_gain_loss(&geom, target, f)),
                Cell::Num(10.0 * n.log10() - array_gain_loss(&geom, target, f)),
                Cell::Num(10.0 * ideal.log10()),
                az,
                el,
            ]
        })
        .collect();
    Ok(ResultTable {
        columns: vec![
            "frequency_ghz",
            "array_gain",
            "gain_loss_db",
            "narrowband_gain_db",
            "ideal_ttd_gain_db",
            "squint_azimuth_deg",
            "squint_elevation_deg",
        ],
        rows,
    })
}

/// Steering vectors towards the configured target, one per carrier.
pub fn steering_targets(geom: &UpaGeometry, grid: &FrequencyGrid, target: Direction) -> Vec<CMatrix> {
    grid.carriers()
        .iter()
        .map(|&f| {
            let a = steering_vector(geom, f, target);
            CMatrix::from_column_slice(a.len(), 1, a.as_slice())
        })
        .collect()
}

fn gain_vs_q(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let geom = cfg.tx_geometry()?;
    let grid = cfg.grid()?;
    let target = cfg.target()?;
    let targets = steering_targets(&geom, &grid, target);
    let narrow = narrowband_weights(&geom, target);
    let responses: Vec<_> = targets.iter().map(|p| p.column(0).into_owned()).collect();
    let narrowband_db = mean_gain_db(&responses.iter().map(|a| weighted_gain(&narrow, a)).collect::<Vec<_>>());
    let ideal_db = 10.0 * (geom.antenna_count() as f64).log10();
    seeded_table(
        cfg,
        &["q"],
        &[
            "ds_fttd_gain_db",
            "narrowband_gain_db",
            "ideal_ttd_gain_db",
            "active_fttd",
            "iterations",
        ],
        &cfg.sweep.q,
        |&q| vec![Cell::Int(q as i64)],
        |&q, seed| {
            let bank = build_delay_bank(&geom, 1, q)?;
            let problem = RdProblem::new(&targets, &bank, &grid)?;
            let r = rd_solve(&problem, &cfg.rd_config(seed))?;
            let gains: Vec<f64> = r
                .composite(&problem)?
                .iter()
                .zip(&responses)
                .map(|(t, a)| weighted_gain(&t.column(0).into_owned(), a))
                .collect();
            Ok(Measurement {
                values: vec![
                    Cell::Num(mean_gain_db(&gains)),
                    Cell::Num(narrowband_db),
                    Cell::Num(ideal_db),
                    Cell::Int(active_fttd_count(&r.switch) as i64),
                    Cell::Int(r.iterations as i64),
                ],
                notes: degenerate_note(&r.degenerate_carriers),
            })
        },
    )
}

fn convergence_trace(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let tx = cfg.tx_geometry()?;
    let rx = cfg.rx_geometry()?;
    let grid = cfg.grid()?;
    let antenna = cfg.sector_antenna()?;
    let noise = cfg.noise_model().power(&grid);
    let power = dbm_to_watts(cfg.architecture.transmit_power_dbm);
    let arch = cfg.architecture;
    let runs = cfg.rd.execution.try_map(cfg.seeds.len(), |k| {
        let seed = cfg.seeds[k];
        let ch = generate_channel_with(&cfg.channel_model(), &tx, &rx, &grid, &antenna, cfg.channel.paths, seed)?;
        let p = optimal_precoders(&ch, arch.streams, power, noise)?;
        let bank = build_delay_bank(&tx, arch.chains, arch.delays_per_chain)?;
        let problem = RdProblem::new(&p.precoders, &bank, &grid)?;
        rd_solve(&problem, &cfg.rd_config(seed))
    })?;
    let longest = runs.iter().map(|r| r.objective_trace.len()).max().unwrap_or(0);
    let mut rows = Vec::new();
    for it in 0..longest {
        let mut sum = 0.0;
        for (seed, r) in cfg.seeds.iter().zip(&runs) {
            // Converged runs hold their last value.
            let value = r
                .objective_trace
                .get(it)
                .or(r.objective_trace.last())
                .copied()
                .unwrap_or(f64::NAN);
            sum += value;
            rows.push(vec![
                Cell::Int(it as i64 + 1),
                Cell::Int(*seed as i64),
                Cell::Num(value),
                Cell::Text(if it == 0 {
                    degenerate_note(&r.degenerate_carriers)
                } else {
                    String::new()
                }),
            ]);
        }
        rows.push(vec![
            Cell::Int(it as i64 + 1),
            Cell::Text("mean".into()),
            Cell::Num(sum / runs.len() as f64),
            Cell::Text(String::new()),
        ]);
    }
    Ok(ResultTable {
        columns: vec!["iteration", "seed", "objective", "notes"],
        rows,
    })
}

/// One point of the spectral-efficiency sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
enum SePoint {
    Q(usize),
    PowerDbm(f64),
    Antennas(usize),
    Bandwidth(f64),
    Csi(f64),
}

fn se_sweep(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<ResultTable> {
    let sweep = &cfg.sweep;
    let (key, points): (&'static str, Vec<SePoint>) = match kind {
        ExperimentKind::SeVsQ | ExperimentKind::EeVsQ => ("q", sweep.q.iter().map(|&q| SePoint::Q(q)).collect()),
        ExperimentKind::SeVsPower | ExperimentKind::EeVsPower => (
            "transmit_power_dbm",
            sweep.power_dbm.iter().map(|&p| SePoint::PowerDbm(p)).collect(),
        ),
        ExperimentKind::SeVsAntennas | ExperimentKind::EeVsAntennas => (
            "antennas",
            sweep.antennas.iter().map(|&n| SePoint::Antennas(n)).collect(),
        ),
        ExperimentKind::SeVsBandwidth => (
            "bandwidth_ghz",
            sweep.bandwidth.iter().map(|&b| SePoint::Bandwidth(b)).collect(),
        ),
        ExperimentKind::SeVsCsi => (
            "csi_accuracy",
            sweep.csi_accuracy.iter().map(|&x| SePoint::Csi(x)).collect(),
        ),
        other => unreachable!("{other} is not a spectral-efficiency sweep"),
    };
    let energy = kind.reports_energy();
    let mut columns = vec![
        "se_optimal",
        "se_ds_fttd",
        "se_ps_narrowband",
        "se_fc_ps_narrowband",
        "active_fttd",
        "iterations",
    ];
    if energy {
        columns.extend([
            "power_ds_fttd_w",
            "power_fc_ps_w",
            "power_fc_ttd_w",
            "power_ttd_aided_w",
            "ee_ds_fttd",
            "ee_fc_ps_narrowband",
            "ee_fc_ttd_bound",
            "ee_ttd_aided_bound",
        ]);
    }
    seeded_table(
        cfg,
        &[key],
        &columns,
        &points,
        |p| {
            vec![match *p {
                SePoint::Q(q) | SePoint::Antennas(q) => Cell::Int(q as i64),
                SePoint::PowerDbm(x) | SePoint::Csi(x) => Cell::Num(x),
                SePoint::Bandwidth(b) => Cell::Num(b / 1e9),
            }]
        },
        |p, seed| se_measurement(cfg, *p, seed, energy),
    )
}

fn se_measurement(cfg: &ExperimentConfig, point: SePoint, seed: u64, energy: bool) -> Result<Measurement> {
    let arch = cfg.architecture;
    let mut q = arch.delays_per_chain;
    let mut power_dbm = arch.transmit_power_dbm;
    let mut tx = cfg.tx_geometry()?;
    let mut rx = cfg.rx_geometry()?;
    let mut bandwidth = cfg.band.bandwidth;
    let mut accuracy = 1.0;
    match point {
        SePoint::Q(v) => q = v,
        SePoint::PowerDbm(v) => power_dbm = v,
        SePoint::Antennas(n) => {
            tx = UpaGeometry::near_square(n, cfg.band.center_frequency)?;
            rx = tx;
        }
        SePoint::Bandwidth(b) => bandwidth = b,
        SePoint::Csi(x) => accuracy = x,
    }
    let grid = frequency_grid(cfg.band.center_frequency, bandwidth, cfg.band.carriers)?;
    let noise = cfg.noise_model().power(&grid);
    let power = dbm_to_watts(power_dbm);
    let antenna = cfg.sector_antenna()?;
    let ch = generate_channel_with(&cfg.channel_model(), &tx, &rx, &grid, &antenna, cfg.channel.paths, seed)?;
    // Precoders are designed on the (possibly perturbed) estimate and
    // evaluated on the true channel.
    let estimate = if accuracy < 1.0 {
        perturb_csi(&ch, accuracy, seed.wrapping_add(CSI_SEED_OFFSET))?
    } else {
        ch.clone()
    };
    let p = optimal_precoders(&estimate, arch.streams, power, noise)?;
    let bank = build_delay_bank(&tx, arch.chains, q)?;
    let problem = RdProblem::new(&p.precoders, &bank, &grid)?;
    let r = rd_solve(&problem, &cfg.rd_config(seed))?;
    let reference = grid.center_index();
    let se_opt = spectral_efficiency(ch.carriers(), &p.precoders, noise)?;
    let se_ds = spectral_efficiency(ch.carriers(), &r.composite(&problem)?, noise)?;
    let frozen = frozen_phase_precoders(&p.precoders, &r.switch, &problem.fttd()[reference], cfg.rd.execution)?;
    let se_ps = spectral_efficiency(ch.carriers(), &frozen, noise)?;
    let se_fc_ps = spectral_efficiency(
        ch.carriers(),
        &fully_connected_ps_precoders(&p.precoders, reference)?,
        noise,
    )?;
    let active = active_fttd_count(&r.switch);
    let mut values = vec![
        Cell::Num(se_opt),
        Cell::Num(se_ds),
        Cell::Num(se_ps),
        Cell::Num(se_fc_ps),
        Cell::Int(active as i64),
        Cell::Int(r.iterations as i64),
    ];
    if energy {
        let n_t = tx.antenna_count();
        let spec = |kind| {
            ArchitectureSpec::new(kind, n_t, arch.chains, power)
                .with_delays(q)
                .with_ttd_count(arch.ttd_count)
                .with_gosa_group(arch.gosa_group)
        };
        let p_ds = power_consumption(&spec(ArchitectureKind::DsFttd).with_active_fttd(active), &cfg.devices)?;
        let p_fc_ps = power_consumption(&spec(ArchitectureKind::FcPs), &cfg.devices)?;
        let p_fc_ttd = power_consumption(&spec(ArchitectureKind::FcTtd), &cfg.devices)?;
        let p_ttd_aided = power_consumption(&spec(ArchitectureKind::TtdAided), &cfg.devices)?;
        values.extend([
            Cell::Num(p_ds),
            Cell::Num(p_fc_ps),
            Cell::Num(p_fc_ttd),
            Cell::Num(p_ttd_aided),
            Cell::Num(energy_efficiency(se_ds, p_ds)?),
            Cell::Num(energy_efficiency(se_fc_ps, p_fc_ps)?),
            // Delay-based baselines are credited with the optimal rate.
            Cell::Num(energy_efficiency(se_opt, p_fc_ttd)?),
            Cell::Num(energy_efficiency(se_opt, p_ttd_aided)?),
        ]);
    }
    Ok(Measurement {
        values,
        notes: degenerate_note(&r.degenerate_carriers),
    })
}
