//! Fixed true-time-delay front end: the delay bank, the per-carrier
//! block-diagonal delay matrix `F[m]` and the one-hot switch matrix `S`.
//!
//! Columns of `S` (and rows of `F[m]`) are indexed `p = l * Q + q` for RF
//! chain `l` and delay `q`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize, Serializer};

use crate::geometry::UpaGeometry;
use crate::{CMatrix, CVector, Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FttdBank {
    chains: usize,
    /// `τ_1 = 0 < τ_2 < … < τ_Q = τ_max`, seconds.
    delays: Vec<f64>,
}

/// Uniform delay bank covering `[0, d (L + W - 2) / (sqrt(2) c)]`.
pub fn build_delay_bank(geom: &UpaGeometry, chains: usize, delays_per_chain: usize) -> Result<FttdBank> {
    FttdBank::with_range(chains, delays_per_chain, geom.max_required_delay())
}

impl FttdBank {
    pub fn with_range(chains: usize, delays_per_chain: usize, max_delay: f64) -> Result<Self> {
        if chains == 0 {
            return Err(Error::invalid("chains", "need at least one RF chain"));
        }
        if delays_per_chain < 2 {
            return Err(Error::invalid(
                "delays_per_chain",
                format!("Q = {delays_per_chain}, need at least 2"),
            ));
        }
        if !(max_delay >= 0.0 && max_delay.is_finite()) {
            return Err(Error::invalid("max_delay", format!("{max_delay} s")));
        }
        let step = max_delay / (delays_per_chain - 1) as f64;
        let delays = (0..delays_per_chain).map(|q| step * q as f64).collect();
        Ok(Self { chains, delays })
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn delays_per_chain(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn max_delay(&self) -> f64 {
        *self.delays.last().expect("bank holds at least two delays")
    }

    /// Total number of FTTDs, `L_t Q`.
    pub fn columns(&self) -> usize {
        self.chains * self.delays.len()
    }

    /// `(chain, delay)` of switch column `p`.
    pub fn split(&self, column: usize) -> (usize, usize) {
        (column / self.delays.len(), column % self.delays.len())
    }

    pub fn fttd_matrix(&self, f_m: f64) -> FttdMatrix {
        fttd_matrix(self, f_m)
    }
}

/// `F[m] = blkdiag(f[m], …, f[m])`, stored as the shared block `f[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FttdMatrix {
    chains: usize,
    response: CVector,
}

/// `f[m]_q = exp(j 2π f_m τ_q)`.
pub fn fttd_matrix(bank: &FttdBank, f_m: f64) -> FttdMatrix {
    let response = CVector::from_iterator(
        bank.delays.len(),
        bank.delays.iter().map(|&tau| C64::from_polar(1.0, TAU * f_m * tau)),
    );
    FttdMatrix {
        chains: bank.chains,
        response,
    }
}

impl FttdMatrix {
    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn delays_per_chain(&self) -> usize {
        self.response.len()
    }

    /// The repeated diagonal block `f[m]`.
    pub fn response(&self) -> &CVector {
        &self.response
    }

    /// Entry `(l Q + q, l)` of `F[m]`.
    pub fn phase(&self, q: usize) -> C64 {
        self.response[q]
    }

    pub fn dense(&self) -> CMatrix {
        let q = self.response.len();
        let mut f = CMatrix::zeros(self.chains * q, self.chains);
        for l in 0..self.chains {
            f.view_mut((l * q, l), (q, 1)).copy_from(&self.response);
        }
        f
    }
}

/// One-hot-per-row binary matrix, stored as the selected column per antenna.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Deserialize)]
#[serde(try_from = "SwitchRepr")]
pub struct SwitchMatrix {
    columns: usize,
    selection: Vec<usize>,
}

#[derive(Deserialize)]
struct SwitchRepr {
    columns: usize,
    selection: Vec<usize>,
}

impl TryFrom<SwitchRepr> for SwitchMatrix {
    type Error = Error;

    fn try_from(r: SwitchRepr) -> Result<Self> {
        SwitchMatrix::new(r.selection, r.columns)
    }
}

/// Serialized as the plain index list, one entry per antenna.
impl Serialize for SwitchMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.selection.serialize(s)
    }
}

impl SwitchMatrix {
    pub fn new(selection: Vec<usize>, columns: usize) -> Result<Self> {
        if selection.is_empty() {
            return Err(Error::invalid("selection", "switch needs at least one antenna"));
        }
        if let Some((i, &p)) = selection.iter().enumerate().find(|(_, &p)| p >= columns) {
            return Err(Error::invalid(
                "selection",
                format!("antenna {i} selects column {p} of {columns}"),
            ));
        }
        Ok(Self { columns, selection })
    }

    /// Every antenna on the same column.
    pub fn uniform(antennas: usize, column: usize, columns: usize) -> Result<Self> {
        Self::new(vec![column; antennas], columns)
    }

    pub fn antennas(&self) -> usize {
        self.selection.len()
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    pub fn selected(&self, antenna: usize) -> usize {
        self.selection[antenna]
    }

    /// Moves one antenna to another column, keeping the row one-hot.
    pub fn select(&mut self, antenna: usize, column: usize) -> Result<()> {
        if column >= self.columns {
            return Err(Error::invalid("column", format!("{column} of {}", self.columns)));
        }
        self.selection[antenna] = column;
        Ok(())
    }

    pub fn dense(&self) -> nalgebra::DMatrix<u8> {
        let mut s = nalgebra::DMatrix::zeros(self.selection.len(), self.columns);
        for (i, &p) in self.selection.iter().enumerate() {
            s[(i, p)] = 1;
        }
        s
    }
}

/// Number of FTTDs that at least one antenna is switched to.
pub fn active_fttd_count(s: &SwitchMatrix) -> usize {
    let mut used = vec![false; s.columns];
    for &p in &s.selection {
        used[p] = true;
    }
    used.into_iter().filter(|&u| u).count()
}

/// `T[m] = S F[m] D[m]`; row `i` is `f[m]_q D[m]_l` for the `(l, q)` picked
/// by antenna `i`.
pub fn composite_precoder(s: &SwitchMatrix, f: &FttdMatrix, d: &CMatrix) -> Result<CMatrix> {
    let q = f.delays_per_chain();
    if s.columns != f.chains * q || d.nrows() != f.chains {
        return Err(Error::ShapeMismatch(format!(
            "S is {}x{}, F[m] is {}x{}, D[m] is {}x{}",
            s.antennas(),
            s.columns,
            f.chains * q,
            f.chains,
            d.nrows(),
            d.ncols()
        )));
    }
    let mut t = CMatrix::zeros(s.antennas(), d.ncols());
    for (i, &p) in s.selection.iter().enumerate() {
        let phase = f.response[p % q];
        t.row_mut(i).copy_from(&(d.row(p / q) * phase));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SPEED_OF_LIGHT;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FC: f64 = 300e9;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn two_point_bank() {
        let bank = FttdBank::with_range(1, 2, 5e-12).unwrap();
        assert_eq!(bank.delays(), &[0.0, 5e-12]);
        assert!(FttdBank::with_range(1, 1, 5e-12).is_err());
    }

    #[test]
    fn default_range_for_32x32() {
        let geom = UpaGeometry::wavelength_spaced(32, 32, FC).unwrap();
        let bank = build_delay_bank(&geom, 4, 32).unwrap();
        let expected = (SPEED_OF_LIGHT / FC) * 62.0 / (2f64.sqrt() * SPEED_OF_LIGHT);
        assert_relative_eq!(bank.max_delay(), expected, max_relative = 1e-12);
        assert!((bank.max_delay() - 146.1e-12).abs() < 0.1e-12);
        for w in bank.delays().windows(2) {
            assert_relative_eq!(w[1] - w[0], expected / 31.0, max_relative = 1e-9);
        }
        assert_eq!(bank.columns(), 128);
        assert_eq!(bank.split(37), (1, 5));
    }

    #[test]
    fn fttd_block_structure() {
        let bank = FttdBank::with_range(3, 5, 100e-12).unwrap();
        let f = fttd_matrix(&bank, 310e9);
        let dense = f.dense();
        assert_eq!(dense.shape(), (15, 3));
        for r in 0..15 {
            for c in 0..3 {
                let z = dense[(r, c)];
                if r / 5 == c {
                    assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-12);
                } else {
                    assert_eq!(z, C64::new(0.0, 0.0));
                }
            }
            assert_eq!(dense[(r / 5 * 5, r / 5)], C64::new(1.0, 0.0));
        }
        let gram = dense.adjoint() * &dense;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 5.0 } else { 0.0 };
                assert_relative_eq!(gram[(i, j)].re, want, epsilon = 1e-12);
                assert_relative_eq!(gram[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn first_column_identity_precoder() {
        let bank = FttdBank::with_range(2, 4, 50e-12).unwrap();
        let f = fttd_matrix(&bank, FC);
        let s = SwitchMatrix::uniform(6, 0, bank.columns()).unwrap();
        let d = CMatrix::identity(2, 2);
        let t = composite_precoder(&s, &f, &d).unwrap();
        for i in 0..6 {
            assert_eq!(t.row(i), d.row(0));
        }
    }

    #[test]
    fn composite_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bank = FttdBank::with_range(3, 4, 80e-12).unwrap();
        let f = fttd_matrix(&bank, 290e9);
        let s = SwitchMatrix::new((0..10).map(|_| rng.random_range(0..12)).collect(), 12).unwrap();
        let d = random_matrix(&mut rng, 3, 2);
        let t = composite_precoder(&s, &f, &d).unwrap();
        let s_dense = s.dense().map(|x| C64::new(x as f64, 0.0));
        let oracle = &s_dense * f.dense() * &d;
        assert!((&t - &oracle).norm() < 1e-12);
        // Each row of S F D is a unit-modulus multiple of one row of D.
        let fd = f.dense() * &d;
        let max_row = (0..fd.nrows()).map(|r| fd.row(r).norm()).fold(0.0, f64::max);
        assert!(t.norm() <= max_row * (s.antennas() as f64).sqrt() + 1e-12);
    }

    #[test]
    fn composite_rejects_bad_shapes() {
        let bank = FttdBank::with_range(2, 4, 50e-12).unwrap();
        let f = fttd_matrix(&bank, FC);
        let s = SwitchMatrix::uniform(3, 0, 8).unwrap();
        assert!(matches!(
            composite_precoder(&s, &f, &CMatrix::zeros(3, 1)),
            Err(Error::ShapeMismatch(_))
        ));
        let wrong = SwitchMatrix::uniform(3, 0, 9).unwrap();
        assert!(composite_precoder(&wrong, &f, &CMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn active_count_cases() {
        assert_eq!(active_fttd_count(&SwitchMatrix::uniform(8, 0, 16).unwrap()), 1);
        assert_eq!(active_fttd_count(&SwitchMatrix::new((0..8).collect(), 16).unwrap()), 8);
    }

    #[test]
    fn switch_validation_and_json() {
        assert!(SwitchMatrix::new(vec![0, 4], 4).is_err());
        let mut s = SwitchMatrix::new(vec![0, 3, 1], 4).unwrap();
        assert!(s.select(1, 4).is_err());
        s.select(1, 2).unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[0,2,1]");
        let back: SwitchMatrix = serde_json::from_str(r#"{"columns":4,"selection":[0,2,1]}"#).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SwitchMatrix>(r#"{"columns":2,"selection":[0,2]}"#).is_err());
    }

    proptest! {
        #[test]
        fn dense_switch_is_one_hot(sel in proptest::collection::vec(0usize..12, 1..20)) {
            let s = SwitchMatrix::new(sel, 12).unwrap();
            let dense = s.dense();
            for r in 0..dense.nrows() {
                prop_assert_eq!(dense.row(r).iter().map(|&x| x as usize).sum::<usize>(), 1);
            }
            let scanned = (0..12).filter(|&c| dense.column(c).iter().any(|&x| x == 1)).count();
            prop_assert_eq!(active_fttd_count(&s), scanned);
        }

        #[test]
        fn composite_is_linear_in_d(seed in 0u64..1000, a in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bank = FttdBank::with_range(2, 3, 40e-12).unwrap();
            let f = fttd_matrix(&bank, 305e9);
            let s = SwitchMatrix::new((0..5).map(|_| rng.random_range(0..6)).collect(), 6).unwrap();
            let d1 = random_matrix(&mut rng, 2, 2);
            let d2 = random_matrix(&mut rng, 2, 2);
            let lhs = composite_precoder(&s, &f, &(&d1 * C64::from(a) + &d2)).unwrap();
            let rhs = composite_precoder(&s, &f, &d1).unwrap() * C64::from(a) + composite_precoder(&s, &f, &d2).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
