//! Producing the first solution levels before the shape parameter can be estimated.
//!
//! Every strategy returns a history with uniform spacing `dt`: refined CN
//! integrates at `dt / n0` but only keeps every `n0`-th level.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{DiscreteOperator, Field};
use crate::problem::Discretization;
use crate::rbf::{cn_step, implicit_solve, StepCoefficient};
use crate::shape::HistoryBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StartupKind {
    Exact,
    /// Crank-Nicolson with `n0` substeps per level.
    RefinedCn { n0: usize },
    /// Crank-Nicolson with one Richardson extrapolation per level.
    RichardsonCn,
    GaussLegendreIrk,
}

impl StartupKind {
    pub fn token(self) -> &'static str {
        match self {
            StartupKind::Exact => "exact",
            StartupKind::RefinedCn { .. } => "refined-cn",
            StartupKind::RichardsonCn => "richardson-cn",
            StartupKind::GaussLegendreIrk => "irk",
        }
    }

    /// Conventional label of the strategy in the literature on this scheme.
    pub fn type_label(self) -> &'static str {
        match self {
            StartupKind::Exact => "exact",
            StartupKind::RefinedCn { .. } => "Type I",
            StartupKind::RichardsonCn => "Type II",
            StartupKind::GaussLegendreIrk => "Type III",
        }
    }

    /// Parses a startup token; `n0` only applies to `refined-cn`.
    pub fn parse(token: &str, n0: usize) -> Result<Self> {
        match token {
            "exact" => Ok(StartupKind::Exact),
            "refined-cn" => {
                if n0 == 0 {
                    return Err(Error::InvalidConfig("n0 must be at least 1".into()));
                }
                Ok(StartupKind::RefinedCn { n0 })
            }
            "richardson-cn" => Ok(StartupKind::RichardsonCn),
            "irk" => Ok(StartupKind::GaussLegendreIrk),
            other => Err(Error::InvalidConfig(format!(
                "unknown startup '{other}' (expected exact, refined-cn, richardson-cn or irk)"
            ))),
        }
    }

    /// Implicit and explicit stages spent per stored level.
    pub fn stages_per_level(self) -> StageCounts {
        match self {
            StartupKind::Exact => StageCounts::default(),
            StartupKind::RefinedCn { n0 } => StageCounts { implicit: n0, explicit: 0 },
            StartupKind::RichardsonCn => StageCounts { implicit: 3, explicit: 0 },
            StartupKind::GaussLegendreIrk => StageCounts { implicit: 2, explicit: 1 },
        }
    }
}

impl fmt::Display for StartupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StartupKind::RefinedCn { n0 } => write!(f, "refined-cn(n0={n0})"),
            other => f.write_str(other.token()),
        }
    }
}

impl FromStr for StartupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("refined-cn") {
            Some("") => Ok(StartupKind::RefinedCn { n0: 1 }),
            Some(rest) => {
                let n0 = rest
                    .strip_prefix("(n0=")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::InvalidConfig(format!("bad startup '{s}'")))?;
                StartupKind::parse("refined-cn", n0)
            }
            None => StartupKind::parse(s, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StartupStrategy {
    pub kind: StartupKind,
    /// Levels produced beyond the initial condition.
    pub steps_needed: usize,
}

impl StartupStrategy {
    /// Strategy that provides the `s + 1` levels an order-`s` estimator needs.
    pub fn for_approx_order(kind: StartupKind, s: usize) -> Self {
        Self { kind, steps_needed: s + 1 }
    }

    /// The initial condition alone, for schemes that keep no history.
    pub fn initial_only() -> Self {
        Self { kind: StartupKind::Exact, steps_needed: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub implicit: usize,
    pub explicit: usize,
}

impl std::ops::AddAssign for StageCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.implicit += rhs.implicit;
        self.explicit += rhs.explicit;
    }
}

#[derive(Debug, Clone)]
pub struct StartupRun {
    pub history: HistoryBuffer,
    pub stages: StageCounts,
}

/// Two-stage Runge-Kutta tableau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrkTableau {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl IrkTableau {
    /// Fourth-order Gauss-Legendre collocation.
    pub fn gauss_legendre() -> Self {
        let r = 3.0_f64.sqrt() / 6.0;
        Self { a11: 0.25, a12: 0.25 - r, a21: 0.25 + r, a22: 0.25, b1: 0.5, b2: 0.5, c1: 0.5 - r, c2: 0.5 + r }
    }

    fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }
}

fn levels_buffer(count: usize, dt: f64) -> HistoryBuffer {
    HistoryBuffer::new(count + 1, dt)
}

/// Levels `u(., k dt)` for `k = 0..=count` sampled from the exact solution.
pub fn seed_exact(disc: &Discretization, dt: f64, count: usize) -> Result<HistoryBuffer> {
    if disc.problem.exact.is_none() {
        return Err(Error::Unsupported(format!("problem {} has no exact solution", disc.problem.name)));
    }
    let mut history = levels_buffer(count, dt);
    for k in 0..=count {
        history.push(disc.exact_field(k as f64 * dt).expect("exact solution checked"))?;
    }
    Ok(history)
}

/// Standard CN at `dt / n0`, keeping every `n0`-th level.
pub fn startup_refined_cn(disc: &Discretization, dt: f64, n0: usize, count: usize) -> Result<StartupRun> {
    if n0 == 0 {
        return Err(Error::InvalidConfig("n0 must be at least 1".into()));
    }
    let n = disc.unknown_count();
    let coeff = StepCoefficient::crank_nicolson(n, dt / n0 as f64);
    let mut history = levels_buffer(count, dt);
    let mut stages = StageCounts::default();
    let mut u = disc.initial_field();
    history.push(u.clone())?;
    for k in 1..=count {
        for _ in 0..n0 {
            u = cn_step(&disc.op, &u, &coeff)?;
            stages.implicit += 1;
        }
        u.t = k as f64 * dt;
        history.push(u.clone())?;
    }
    Ok(StartupRun { history, stages })
}

/// One CN step of `dt` and two of `dt / 2` combined as `(4 u_half - u_full) / 3`.
pub fn richardson_cn_step(op: &DiscreteOperator, u: &Field, dt: f64) -> Result<Field> {
    let n = op.unknown_count();
    let full = cn_step(op, u, &StepCoefficient::crank_nicolson(n, dt))?;
    let half = StepCoefficient::crank_nicolson(n, dt / 2.0);
    let halves = cn_step(op, &cn_step(op, u, &half)?, &half)?;
    let values = halves.values.iter().zip(&full.values).map(|(h, f)| (4.0 * h - f) / 3.0).collect();
    Ok(Field::new(values, u.t + dt))
}

pub fn startup_richardson_cn(disc: &Discretization, dt: f64, count: usize) -> Result<StartupRun> {
    let mut history = levels_buffer(count, dt);
    let mut stages = StageCounts::default();
    let mut u = disc.initial_field();
    history.push(u.clone())?;
    for k in 1..=count {
        u = richardson_cn_step(&disc.op, &u, dt)?;
        u.t = k as f64 * dt;
        stages.implicit += 3;
        history.push(u.clone())?;
    }
    Ok(StartupRun { history, stages })
}

/// Reusable buffers for [`irk_step_into`].
#[derive(Debug, Clone, Default)]
pub struct IrkWorkspace {
    w: Vec<f64>,
    lw: Vec<f64>,
    c: Vec<Complex64>,
    y: Vec<Complex64>,
}

/// In place: `r <- S^{-1} r` with `S = I - h tr(A) L + h^2 det(A) L^2`.
///
/// `S` factors as `(I - mu1 h L)(I - mu2 h L)` over the eigenvalues of `A`.
/// For a complex pair one complex solve suffices since
/// `S^{-1} = Im(mu (I - mu h L)^{-1}) / Im(mu)` for real `L`.
fn apply_stage_schur_inverse(
    op: &DiscreteOperator,
    tab: &IrkTableau,
    h: f64,
    r: &mut [f64],
    ws: &mut IrkWorkspace,
) -> Result<()> {
    let half_tr = 0.5 * tab.trace();
    let disc = half_tr * half_tr - tab.det();
    if disc < 0.0 {
        let mu = Complex64::new(half_tr, (-disc).sqrt());
        complex_shifted_solve(op, mu * h, r, ws)?;
        for (ri, yi) in r.iter_mut().zip(&ws.y) {
            *ri = (mu * yi).im / mu.im;
        }
    } else {
        let sq = disc.sqrt();
        for mu in [half_tr + sq, half_tr - sq] {
            if mu != 0.0 {
                let c = vec![mu * h; r.len()];
                implicit_solve(op, &c, r)?;
            }
        }
    }
    Ok(())
}

/// `ws.y <- (I - c L)^{-1} r` for real `r`, bands formed during the sweep.
fn complex_shifted_solve(op: &DiscreteOperator, c: Complex64, r: &[f64], ws: &mut IrkWorkspace) -> Result<()> {
    let n = r.len();
    let (lo, di, up) = (op.lower(), op.diag(), op.upper());
    let zero = Complex64::new(0.0, 0.0);
    ws.c.clear();
    ws.c.resize(n, zero);
    ws.y.clear();
    ws.y.resize(n, zero);
    let mut prev_c = zero;
    let mut prev_y = zero;
    for i in 0..n {
        let l = -c * lo[i];
        let pivot = Complex64::new(1.0, 0.0) - c * di[i] - l * prev_c;
        if pivot.norm_sqr() == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        let inv = pivot.inv();
        prev_c = -c * up[i] * inv;
        prev_y = (Complex64::new(r[i], 0.0) - l * prev_y) * inv;
        ws.c[i] = prev_c;
        ws.y[i] = prev_y;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let next = ws.y[i + 1];
        ws.y[i] -= ws.c[i] * next;
    }
    Ok(())
}

/// One step of a two-stage implicit Runge-Kutta method for `u' = L u`.
///
/// The stage system is reduced by block elimination: with `w = L u`, the
/// stage slopes are `k_i = S^{-1} (I + h g_i L) w` where `S` is the Schur
/// complement of the 2x2 stage coupling, so `u+ = u + h S^{-1} (b1 + b2 + h g L) w`.
pub fn irk_step(op: &DiscreteOperator, u: &Field, dt: f64, tab: &IrkTableau) -> Result<Field> {
    let mut out = vec![0.0; u.len()];
    irk_step_into(op, &u.values, dt, tab, &mut out, &mut IrkWorkspace::default()).map_err(|e| e.at_time(u.t))?;
    Ok(Field::new(out, u.t + dt))
}

/// Allocation-free form of [`irk_step`].
pub fn irk_step_into(
    op: &DiscreteOperator,
    u: &[f64],
    dt: f64,
    tab: &IrkTableau,
    out: &mut [f64],
    ws: &mut IrkWorkspace,
) -> Result<()> {
    op.check_len(u.len())?;
    op.check_len(out.len())?;
    let n = u.len();
    let g = tab.b1 * (tab.a12 - tab.a22) + tab.b2 * (tab.a21 - tab.a11);
    let bsum = tab.b1 + tab.b2;
    ws.w.resize(n, 0.0);
    op.apply_into(u, &mut ws.w);
    out.copy_from_slice(&ws.w);
    out.iter_mut().for_each(|v| *v *= bsum);
    if g != 0.0 {
        ws.lw.resize(n, 0.0);
        op.apply_into(&ws.w, &mut ws.lw);
        for (r, v) in out.iter_mut().zip(&ws.lw) {
            *r += dt * g * v;
        }
    }
    apply_stage_schur_inverse(op, tab, dt, out, ws)?;
    for (o, v) in out.iter_mut().zip(u) {
        *o = v + dt * *o;
    }
    Ok(())
}

const RATIONAL_REFINEMENTS: usize = 2;

/// Bands `(-2, -1, 0, +1, +2)` of `alpha I + beta L + gamma L^2` for tridiagonal `L`.
fn quadratic_bands(op: &DiscreteOperator, alpha: f64, beta: f64, gamma: f64) -> Vec<[f64; 5]> {
    let (lo, di, up) = (op.lower(), op.diag(), op.upper());
    let n = di.len();
    let l = |i: usize| if i > 0 && i < n { lo[i] } else { 0.0 };
    let u = |i: usize| if i + 1 < n { up[i] } else { 0.0 };
    (0..n)
        .map(|i| {
            let ll = if i >= 2 { l(i) * l(i - 1) } else { 0.0 };
            let lm = if i >= 1 { l(i) * (di[i - 1] + di[i]) } else { 0.0 };
            let lc = di[i] * di[i] + if i >= 1 { l(i) * u(i - 1) } else { 0.0 } + if i + 1 < n { u(i) * l(i + 1) } else { 0.0 };
            let lp = if i + 1 < n { u(i) * (di[i] + di[i + 1]) } else { 0.0 };
            let lpp = if i + 2 < n { u(i) * u(i + 1) } else { 0.0 };
            [
                gamma * ll,
                beta * l(i) + gamma * lm,
                alpha + beta * di[i] + gamma * lc,
                beta * u(i) + gamma * lp,
                gamma * lpp,
            ]
        })
        .collect()
}

/// Banded Gaussian elimination without pivoting for bandwidth 2.
fn solve_pentadiagonal(mut bands: Vec<[f64; 5]>, rhs: &mut [f64]) -> Result<()> {
    let n = bands.len();
    for k in 0..n {
        let pivot = bands[k][2];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: k });
        }
        for off in 1..=2 {
            let i = k + off;
            if i >= n {
                break;
            }
            // entry (i, k) sits at band index 2 - off in row i
            let factor = bands[i][2 - off] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in 0..=2 {
                // (k, k + j) maps to band 2 + j in row k and 2 - off + j in row i
                if 2 + j < 5 && 2 - off + j < 5 {
                    bands[i][2 - off + j] -= factor * bands[k][2 + j];
                }
            }
            rhs[i] -= factor * rhs[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for j in 1..=2 {
            if k + j < n {
                s -= bands[k][2 + j] * rhs[k + j];
            }
        }
        rhs[k] = s / bands[k][2];
    }
    Ok(())
}

/// Gauss-Legendre step through its stability function:
/// `(I - h L / 2 + h^2 L^2 / 12) u+ = (I + h L / 2 + h^2 L^2 / 12) u`.
pub fn irk_step_rational(op: &DiscreteOperator, u: &Field, dt: f64) -> Result<Field> {
    op.check_len(u.len())?;
    let n = u.len();
    let h2 = dt * dt / 12.0;
    let bands = quadratic_bands(op, 1.0, -0.5 * dt, h2);
    // P = I - dt/2 L + dt^2/12 L^2 and u+ - u = P^{-1} dt L u. The summed
    // bands of P lose digits to cancellation, so the solve is refined with
    // residuals from the unsummed operator.
    let mut target = vec![0.0; n];
    op.apply_into(&u.values, &mut target);
    target.iter_mut().for_each(|v| *v *= dt);
    let mut d = target.clone();
    solve_pentadiagonal(bands.clone(), &mut d).map_err(|e| e.at_time(u.t))?;
    let (mut ld, mut lld) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..RATIONAL_REFINEMENTS {
        op.apply_into(&d, &mut ld);
        op.apply_into(&ld, &mut lld);
        let mut r: Vec<f64> = (0..n).map(|i| target[i] - (d[i] - 0.5 * dt * ld[i] + h2 * lld[i])).collect();
        solve_pentadiagonal(bands.clone(), &mut r).map_err(|e| e.at_time(u.t))?;
        d.iter_mut().zip(&r).for_each(|(di, ri)| *di += ri);
    }
    let values = u.values.iter().zip(&d).map(|(v, di)| v + di).collect();
    Ok(Field::new(values, u.t + dt))
}

pub fn startup_irk(disc: &Discretization, dt: f64, count: usize) -> Result<StartupRun> {
    let tab = IrkTableau::gauss_legendre();
    let mut history = levels_buffer(count, dt);
    let mut stages = StageCounts::default();
    let mut u = disc.initial_field();
    history.push(u.clone())?;
    for k in 1..=count {
        u = irk_step(&disc.op, &u, dt, &tab)?;
        u.t = k as f64 * dt;
        stages += StartupKind::GaussLegendreIrk.stages_per_level();
        history.push(u.clone())?;
    }
    Ok(StartupRun { history, stages })
}

/// Runs the strategy and returns `steps_needed + 1` levels starting at `t = 0`.
pub fn run_startup(strategy: &StartupStrategy, disc: &Discretization, dt: f64) -> Result<StartupRun> {
    let count = strategy.steps_needed;
    match strategy.kind {
        StartupKind::Exact => Ok(StartupRun { history: seed_exact(disc, dt, count)?, stages: StageCounts::default() }),
        StartupKind::RefinedCn { n0 } => startup_refined_cn(disc, dt, n0, count),
        StartupKind::RichardsonCn => startup_richardson_cn(disc, dt, count),
        StartupKind::GaussLegendreIrk => startup_irk(disc, dt, count),
    }
}
