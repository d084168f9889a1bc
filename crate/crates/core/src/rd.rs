//! Row-decomposition alternating minimization of
//! `Σ_m ‖P[m] - S F[m] D[m]‖_F²` over one-hot `S` and semi-unitary `D[m]`.
//!
//! With `D` fixed the objective splits into one small problem per antenna
//! row, each solved by scanning the `L_t Q` candidate positions. With `S`
//! fixed each carrier is an orthogonal Procrustes problem. The power
//! constraint `‖S F[m] D[m]‖_F = ‖P[m]‖_F` is applied once after the loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fttd::{FttdBank, FttdMatrix, SwitchMatrix};
use crate::geometry::FrequencyGrid;
use crate::linalg::{frobenius_sq, orthonormal_completion};
use crate::{CMatrix, Error, Execution, Result, C64};

/// A singular value below this fraction of the largest marks the carrier as
/// rank deficient in the digital update.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RdConfig {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub seed: u64,
    /// Independent random initializations; the lowest final objective wins.
    pub restarts: usize,
    pub execution: Execution,
}

impl Default for RdConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            relative_tolerance: 1e-4,
            seed: 0,
            restarts: 1,
            execution: Execution::default(),
        }
    }
}

impl RdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        if !(self.relative_tolerance > 0.0) {
            return Err(Error::invalid(
                "relative_tolerance",
                format!("{} is not positive", self.relative_tolerance),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts", "must be at least 1"));
        }
        Ok(())
    }
}

/// Targets `P[m]` together with the delay matrices of every carrier.
#[derive(Debug, Clone)]
pub struct RdProblem<'a> {
    targets: &'a [CMatrix],
    fttd: Vec<FttdMatrix>,
    chains: usize,
}

impl<'a> RdProblem<'a> {
    pub fn new(targets: &'a [CMatrix], bank: &FttdBank, grid: &FrequencyGrid) -> Result<Self> {
        Self::from_matrices(targets, grid.carriers().iter().map(|&f| bank.fttd_matrix(f)).collect())
    }

    pub fn from_matrices(targets: &'a [CMatrix], fttd: Vec<FttdMatrix>) -> Result<Self> {
        let first = targets
            .first()
            .ok_or_else(|| Error::ShapeMismatch("no target precoders".into()))?;
        if fttd.len() != targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} targets for {} carriers",
                targets.len(),
                fttd.len()
            )));
        }
        let chains = fttd[0].chains();
        let (n_t, n_s) = first.shape();
        if let Some(m) = targets.iter().position(|p| p.shape() != (n_t, n_s)) {
            return Err(Error::ShapeMismatch(format!(
                "target {m} is {:?}, expected {:?}",
                targets[m].shape(),
                (n_t, n_s)
            )));
        }
        if n_s > chains {
            return Err(Error::ShapeMismatch(format!(
                "{n_s} streams need at least as many RF chains, got {chains}"
            )));
        }
        Ok(Self { targets, fttd, chains })
    }

    pub fn targets(&self) -> &[CMatrix] {
        self.targets
    }

    pub fn fttd(&self) -> &[FttdMatrix] {
        &self.fttd
    }

    pub fn carriers(&self) -> usize {
        self.targets.len()
    }

    pub fn antennas(&self) -> usize {
        self.targets[0].nrows()
    }

    pub fn streams(&self) -> usize {
        self.targets[0].ncols()
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn delays_per_chain(&self) -> usize {
        self.fttd[0].delays_per_chain()
    }

    pub fn columns(&self) -> usize {
        self.chains * self.delays_per_chain()
    }

    fn check_switch(&self, s: &SwitchMatrix) -> Result<()> {
        if s.antennas() != self.antennas() || s.columns() != self.columns() {
            return Err(Error::ShapeMismatch(format!(
                "S is {}x{}, expected {}x{}",
                s.antennas(),
                s.columns(),
                self.antennas(),
                self.columns()
            )));
        }
        Ok(())
    }

    fn check_digital(&self, d: &[CMatrix]) -> Result<()> {
        let want = (self.chains, self.streams());
        if d.len() != self.carriers() {
            return Err(Error::ShapeMismatch(format!(
                "{} digital precoders for {} carriers",
                d.len(),
                self.carriers()
            )));
        }
        if let Some(m) = d.iter().position(|x| x.shape() != want) {
            return Err(Error::ShapeMismatch(format!(
                "D[{m}] is {:?}, expected {want:?}",
                d[m].shape()
            )));
        }
        Ok(())
    }

    /// `‖P[m] - S F[m] D[m]‖_F²` for one carrier.
    fn carrier_residual(&self, m: usize, s: &SwitchMatrix, d: &CMatrix) -> f64 {
        let p = &self.targets[m];
        let f = &self.fttd[m];
        let q = f.delays_per_chain();
        let mut total = 0.0;
        for (i, &col) in s.selection().iter().enumerate() {
            let phase = f.phase(col % q);
            let l = col / q;
            for k in 0..p.ncols() {
                total += (p[(i, k)] - phase * d[(l, k)]).norm_sqr();
            }
        }
        total
    }
}

/// `Σ_m ‖P[m] - S F[m] D[m]‖_F²`.
pub fn objective(problem: &RdProblem, s: &SwitchMatrix, d: &[CMatrix]) -> Result<f64> {
    problem.check_switch(s)?;
    problem.check_digital(d)?;
    Ok(objective_unchecked(problem, s, d, Execution::Sequential))
}

fn objective_unchecked(problem: &RdProblem, s: &SwitchMatrix, d: &[CMatrix], exec: Execution) -> f64 {
    exec.map(problem.carriers(), |m| problem.carrier_residual(m, s, &d[m]))
        .into_iter()
        .sum()
}

/// Cost of every candidate position for antenna `i`, up to the constant
/// `Σ_m ‖P_i[m]‖²`:
/// `Σ_m -2 Re(f_q[m] D_l[m] P_i[m]^H) + |f_q[m]|² ‖D_l[m]‖²`.
pub fn switch_row_cost(problem: &RdProblem, i: usize, d: &[CMatrix]) -> Vec<f64> {
    let (chains, q) = (problem.chains, problem.delays_per_chain());
    let mut cost = vec![0.0; chains * q];
    for (m, p) in problem.targets.iter().enumerate() {
        let dm = &d[m];
        let f = problem.fttd[m].response();
        for l in 0..chains {
            let mut corr = C64::new(0.0, 0.0);
            let mut energy = 0.0;
            for k in 0..dm.ncols() {
                corr += dm[(l, k)] * p[(i, k)].conj();
                energy += dm[(l, k)].norm_sqr();
            }
            for (qi, phase) in f.iter().enumerate() {
                cost[l * q + qi] += -2.0 * (phase * corr).re + phase.norm_sqr() * energy;
            }
        }
    }
    cost
}

/// Position of the smallest cost; the lowest index wins ties.
fn argmin(cost: &[f64]) -> usize {
    let mut best = 0;
    for (p, &c) in cost.iter().enumerate().skip(1) {
        if c < cost[best] {
            best = p;
        }
    }
    best
}

/// Row-wise optimal `S` for fixed `D`.
pub fn update_switch(problem: &RdProblem, d: &[CMatrix], exec: Execution) -> Result<SwitchMatrix> {
    problem.check_digital(d)?;
    let selection = exec.map(problem.antennas(), |i| argmin(&switch_row_cost(problem, i, d)));
    SwitchMatrix::new(selection, problem.columns())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalUpdate {
    pub precoders: Vec<CMatrix>,
    /// Carriers where `P[m]^H S F[m]` had rank below `N_s`; their missing
    /// directions were completed with arbitrary orthonormal columns.
    pub degenerate: Vec<usize>,
}

/// Orthogonal Procrustes per carrier: with `B = S F[m]` and the thin SVD
/// `B^H P[m] = U Σ V^H`, the candidate is `D[m] = U V^H`.
///
/// That candidate is exact when `D[m]` is square. For `L_t > N_s` the term
/// `‖B D‖_F²` depends on `D` because `B^H B = diag(g)` holds the per-chain
/// antenna loads, so the candidate is refined by majorize-minimize steps
/// `D ← polar(B^H P + (max g - diag(g)) D)`, each of which never increases
/// the residual.
pub fn update_digital(problem: &RdProblem, s: &SwitchMatrix, exec: Execution) -> Result<DigitalUpdate> {
    update_digital_from(problem, s, None, exec)
}

/// Like [`update_digital`], but also refines `warm` and keeps whichever fit
/// is better, so the result is never worse than `warm` for this `S`.
pub fn update_digital_from(
    problem: &RdProblem,
    s: &SwitchMatrix,
    warm: Option<&[CMatrix]>,
    exec: Execution,
) -> Result<DigitalUpdate> {
    problem.check_switch(s)?;
    if let Some(w) = warm {
        problem.check_digital(w)?;
    }
    let per_carrier = exec.map(problem.carriers(), |m| {
        let fit = CarrierFit::new(problem, m, s);
        let (closed, deficient) = polar(&fit.cross);
        if fit.is_balanced() {
            return (closed, deficient);
        }
        let mut best = fit.refine(closed);
        if let Some(w) = warm {
            let other = fit.refine(w[m].clone());
            if fit.cost(&other) < fit.cost(&best) {
                best = other;
            }
        }
        (best, deficient)
    });
    let mut precoders = Vec::with_capacity(per_carrier.len());
    let mut degenerate = Vec::new();
    for (m, (d, deficient)) in per_carrier.into_iter().enumerate() {
        if deficient {
            degenerate.push(m);
        }
        precoders.push(d);
    }
    Ok(DigitalUpdate { precoders, degenerate })
}

/// Upper bound on refinement steps per carrier.
const REFINE_ITERATIONS: usize = 500;

/// `‖P - B D‖² = ‖P‖² - 2 Re tr(D^H C) + Σ_l g_l ‖D_l‖²` with `C = B^H P`.
struct CarrierFit {
    cross: CMatrix,
    load: Vec<f64>,
}

impl CarrierFit {
    fn new(problem: &RdProblem, m: usize, s: &SwitchMatrix) -> Self {
        let p = &problem.targets[m];
        let f = &problem.fttd[m];
        let q = f.delays_per_chain();
        let mut cross = CMatrix::zeros(problem.chains, p.ncols());
        let mut load = vec![0.0; problem.chains];
        for (i, &col) in s.selection().iter().enumerate() {
            let phase = f.phase(col % q);
            let l = col / q;
            load[l] += phase.norm_sqr();
            for k in 0..p.ncols() {
                cross[(l, k)] += phase.conj() * p[(i, k)];
            }
        }
        Self { cross, load }
    }

    /// Square `D`, or equal loads: the closed form is already optimal.
    fn is_balanced(&self) -> bool {
        let max = self.load.iter().copied().fold(0.0, f64::max);
        let min = self.load.iter().copied().fold(f64::INFINITY, f64::min);
        self.cross.nrows() == self.cross.ncols() || max - min <= 1e-12 * max
    }

    /// Residual without the constant `‖P‖²`.
    fn cost(&self, d: &CMatrix) -> f64 {
        let mut c = 0.0;
        for l in 0..d.nrows() {
            c += self.load[l] * d.row(l).norm_squared();
        }
        c - 2.0 * self.cross.dotc(d).re
    }

    fn refine(&self, mut d: CMatrix) -> CMatrix {
        let top = self.load.iter().copied().fold(0.0, f64::max);
        let scale = top * d.ncols() as f64 + self.cross.norm();
        let mut current = self.cost(&d);
        for _ in 0..REFINE_ITERATIONS {
            let mut pull = self.cross.clone();
            for l in 0..d.nrows() {
                let slack = top - self.load[l];
                for k in 0..d.ncols() {
                    pull[(l, k)] += d[(l, k)] * slack;
                }
            }
            let next = polar(&pull).0;
            let cost = self.cost(&next);
            if cost > current {
                break;
            }
            let gain = current - cost;
            d = next;
            current = cost;
            if gain <= 1e-15 * scale {
                break;
            }
        }
        d
    }
}

/// Semi-unitary polar factor `U V^H` of a tall matrix, plus a rank-deficiency
/// flag. Null directions are arbitrary: the well-determined singular pairs are
/// kept and both sides completed to orthonormal bases.
fn polar(c: &CMatrix) -> (CMatrix, bool) {
    let n_s = c.ncols();
    let svd = c.clone().svd(true, true);
    let sigma = &svd.singular_values;
    let top = sigma.iter().copied().fold(0.0, f64::max);
    let deficient = top == 0.0 || sigma.iter().any(|&x| x <= RANK_TOLERANCE * top);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^H").adjoint();
    if !deficient {
        return (u * v.adjoint(), false);
    }
    let kept: Vec<usize> = (0..sigma.len()).filter(|&k| sigma[k] > RANK_TOLERANCE * top).collect();
    let pick = |m: &CMatrix| CMatrix::from_columns(&kept.iter().map(|&k| m.column(k).into_owned()).collect::<Vec<_>>());
    let (u, v) = if kept.is_empty() {
        (CMatrix::zeros(u.nrows(), 0), CMatrix::zeros(v.nrows(), 0))
    } else {
        (pick(&u), pick(&v))
    };
    let u = orthonormal_completion(&u, n_s);
    let v = orthonormal_completion(&v, n_s);
    (u * v.adjoint(), true)
}

/// Rescales every `D[m]` so that `‖S F[m] D[m]‖_F = ‖P[m]‖_F`.
pub fn normalize_power(problem: &RdProblem, s: &SwitchMatrix, d: &[CMatrix]) -> Result<Vec<CMatrix>> {
    problem.check_switch(s)?;
    problem.check_digital(d)?;
    let q = problem.delays_per_chain();
    (0..problem.carriers())
        .map(|m| {
            // |f_q| = 1 for a delay bank, but stay general.
            let f = &problem.fttd[m];
            let achieved: f64 = s
                .selection()
                .iter()
                .map(|&col| f.phase(col % q).norm_sqr() * d[m].row(col / q).norm_squared())
                .sum();
            let wanted = frobenius_sq(&problem.targets[m]);
            if achieved == 0.0 {
                if wanted == 0.0 {
                    return Ok(d[m].clone());
                }
                return Err(Error::DivisionByZero("normalize_power: S F[m] D[m] vanishes"));
            }
            Ok(&d[m] * C64::from((wanted / achieved).sqrt()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdResult {
    pub switch: SwitchMatrix,
    /// Normalized digital precoders.
    pub digital: Vec<CMatrix>,
    /// Objective after every iteration, before normalization.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective of the normalized solution.
    pub final_objective: f64,
    pub degenerate_carriers: Vec<usize>,
    /// Index of the winning initialization when `restarts > 1`.
    pub restart: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdReport {
    pub switch: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub degenerate_carriers: Vec<usize>,
    /// `(rows, cols)` of every `D[m]`.
    pub digital_shape: (usize, usize),
    /// Row-major `[re, im]` entries of every `D[m]`, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digital: Option<Vec<Vec<[f64; 2]>>>,
}

impl RdResult {
    pub fn report(&self, include_values: bool) -> RdReport {
        RdReport {
            switch: self.switch.selection().to_vec(),
            objective_trace: self.objective_trace.clone(),
            iterations: self.iterations,
            converged: self.converged,
            final_objective: self.final_objective,
            degenerate_carriers: self.degenerate_carriers.clone(),
            digital_shape: self.digital.first().map_or((0, 0), |d| d.shape()),
            digital: include_values.then(|| {
                self.digital
                    .iter()
                    .map(|d| d.transpose().iter().map(|z| [z.re, z.im]).collect())
                    .collect()
            }),
        }
    }

    pub fn composite(&self, problem: &RdProblem) -> Result<Vec<CMatrix>> {
        problem
            .fttd
            .iter()
            .zip(&self.digital)
            .map(|(f, d)| crate::fttd::composite_precoder(&self.switch, f, d))
            .collect()
    }
}

/// Uniformly random one-hot rows.
pub fn random_switch(antennas: usize, columns: usize, rng: &mut impl Rng) -> Result<SwitchMatrix> {
    SwitchMatrix::new((0..antennas).map(|_| rng.random_range(0..columns)).collect(), columns)
}

pub fn rd_solve(problem: &RdProblem, cfg: &RdConfig) -> Result<RdResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<RdResult> = None;
    for restart in 0..cfg.restarts {
        let init = random_switch(problem.antennas(), problem.columns(), &mut rng)?;
        let mut run = rd_solve_from(problem, init, cfg)?;
        run.restart = restart;
        let better = best
            .as_ref()
            .is_none_or(|b| run.objective_trace.last() < b.objective_trace.last());
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Alternation from a given initial switch matrix.
pub fn rd_solve_from(problem: &RdProblem, init: SwitchMatrix, cfg: &RdConfig) -> Result<RdResult> {
    cfg.validate()?;
    problem.check_switch(&init)?;
    let exec = cfg.execution;
    let mut s = init;
    let mut update = update_digital(problem, &s, exec)?;
    let mut trace = Vec::new();
    let mut previous = objective_unchecked(problem, &s, &update.precoders, exec);
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        s = update_switch(problem, &update.precoders, exec)?;
        update = update_digital_from(problem, &s, Some(&update.precoders), exec)?;
        let current = objective_unchecked(problem, &s, &update.precoders, exec);
        trace.push(current);
        let decrease = previous - current;
        previous = current;
        if current == 0.0 || decrease <= cfg.relative_tolerance * current.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let digital = normalize_power(problem, &s, &update.precoders)?;
    let final_objective = objective_unchecked(problem, &s, &digital, exec);
    Ok(RdResult {
        iterations: trace.len(),
        switch: s,
        digital,
        objective_trace: trace,
        converged,
        final_objective,
        degenerate_carriers: update.degenerate,
        restart: 0,
    })
}
