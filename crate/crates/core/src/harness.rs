//! Integration driver, error norms, order fitting and convergence studies.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{analytic_spectrum, Field};
use crate::problem::{Discretization, Problem};
use crate::rbf::{backward_step, cn_step_into, forward_step, RbfKind, ShapeParam, StepCoefficient};
use crate::shape::{HistoryBuffer, ShapeDiagnostics, ShapeParamPlan, StepPlanner};
use crate::stability::{check_stability, real_spectrum, StabilityReport};
use crate::startup::{irk_step_into, richardson_cn_step, run_startup, IrkTableau, IrkWorkspace, StageCounts, StartupStrategy};

/// Largest number of intervals a coupled mesh may use.
pub const MAX_INTERVALS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    StandardCn,
    /// RBF-CN with the shape parameter chosen every step.
    RbfCn(ShapeParamPlan),
    /// RBF-CN with a fixed shape parameter.
    RbfCnConstant { kind: RbfKind, eps2: f64 },
    RbfForward { kind: RbfKind, eps2: f64 },
    RbfBackward { kind: RbfKind, eps2: f64 },
    GaussLegendreIrk,
    RichardsonCn,
}

impl Scheme {
    pub fn token(&self) -> &'static str {
        match self {
            Scheme::StandardCn => "cn",
            Scheme::RbfCn(_) | Scheme::RbfCnConstant { .. } => "rbf-cn",
            Scheme::RbfForward { .. } => "rbf-forward",
            Scheme::RbfBackward { .. } => "rbf-backward",
            Scheme::GaussLegendreIrk => "irk",
            Scheme::RichardsonCn => "richardson-cn",
        }
    }

    /// Levels the main loop needs before its first step.
    pub fn history_len(&self) -> usize {
        match self {
            Scheme::RbfCn(plan) => plan.history_len(),
            _ => 1,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::RbfCn(p) => write!(
                f,
                "rbf-cn(rbf={}, eps-order={}, approx-order={}, estimator={}, cap={}, zero-tol={})",
                p.kind,
                p.order.target.as_int(),
                p.order.approx_order,
                p.estimator.token(),
                p.safeguard_cap,
                p.u_zero_tol
            ),
            Scheme::RbfCnConstant { kind, eps2 }
            | Scheme::RbfForward { kind, eps2 }
            | Scheme::RbfBackward { kind, eps2 } => write!(f, "{}(rbf={kind}, eps2={eps2})", self.token()),
            other => f.write_str(other.token()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshRule {
    /// `dx = dt^(p/2)`, so the spatial error matches a temporal order `p`.
    Coupled(u32),
    Fixed(usize),
}

impl MeshRule {
    /// Grid size for the given step; the flag is set when the coupled rule hit the cap.
    pub fn nx(&self, length: f64, dt: f64) -> Result<(usize, bool)> {
        match *self {
            MeshRule::Fixed(nx) => Ok((nx, false)),
            MeshRule::Coupled(p) => {
                if p == 0 {
                    return Err(Error::InvalidConfig("coupling exponent p must be positive".into()));
                }
                let dx = dt.powf(p as f64 / 2.0);
                let wanted = (length / dx - 1e-9).ceil().max(2.0);
                if wanted > MAX_INTERVALS as f64 {
                    Ok((MAX_INTERVALS + 1, true))
                } else {
                    Ok((wanted as usize + 1, false))
                }
            }
        }
    }
}

impl fmt::Display for MeshRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshRule::Coupled(p) => write!(f, "coupled(p={p})"),
            MeshRule::Fixed(nx) => write!(f, "fixed(nx={nx})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub startup: StartupStrategy,
    pub nt: usize,
    pub mesh_rule: MeshRule,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nt == 0 {
            return Err(Error::InvalidConfig("nt must be positive".into()));
        }
        if let Scheme::RbfCn(plan) = &self.scheme {
            plan.validate()?;
        }
        let needed = self.scheme.history_len();
        let have = self.startup.steps_needed + 1;
        if have < needed {
            return Err(Error::NotReady { needed, have });
        }
        if self.startup.steps_needed > self.nt {
            return Err(Error::InvalidConfig(format!(
                "startup produces {} steps but nt is {}",
                self.startup.steps_needed, self.nt
            )));
        }
        Ok(())
    }
}

/// Outcome of one integration.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub nt: usize,
    pub dt: f64,
    pub nx: usize,
    pub nx_capped: bool,
    /// Max over all levels, startup included, and all nodes.
    pub global_error: Option<f64>,
    /// Wall-clock of startup plus time stepping; error evaluation excluded.
    pub cpu_seconds: f64,
    pub diagnostics: ShapeDiagnostics,
    pub startup_stages: StageCounts,
    /// Extremes of the per-node step coefficient over all CN-type steps.
    pub a_min: f64,
    pub a_max: f64,
    /// Largest `|eps2| dt^2` used.
    pub max_eps2_dt2: f64,
    pub final_field: Field,
    pub trajectory: Option<Vec<Field>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IntegrateOptions {
    pub keep_trajectory: bool,
}

struct Tracker<'a> {
    disc: &'a Discretization,
    error: Option<f64>,
    trajectory: Option<Vec<Field>>,
    a_min: f64,
    a_max: f64,
    max_eps2_dt2: f64,
}

impl Tracker<'_> {
    fn record(&mut self, u: &Field) -> Result<()> {
        if u.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure { t: u.t, source: Box::new(Error::Domain("non-finite solution".into())) });
        }
        if let (Some(e), Some(level)) = (self.error.as_mut(), self.disc.max_error(u)) {
            *e = e.max(level);
        }
        if let Some(t) = self.trajectory.as_mut() {
            t.push(u.clone());
        }
        Ok(())
    }

    fn coefficient(&mut self, a_min: f64, a_max: f64) {
        self.a_min = self.a_min.min(a_min);
        self.a_max = self.a_max.max(a_max);
    }
}

pub fn integrate(problem: &Problem, config: &RunConfig) -> Result<RunSummary> {
    integrate_with(problem, config, IntegrateOptions::default())
}

pub fn integrate_with(problem: &Problem, config: &RunConfig, options: IntegrateOptions) -> Result<RunSummary> {
    problem.validate()?;
    config.validate()?;
    let dt = problem.t_final / config.nt as f64;
    let (nx, nx_capped) = config.mesh_rule.nx(problem.length(), dt)?;
    if nx_capped {
        warn!("{}: coupled mesh for nt = {} capped at {} nodes", problem.name, config.nt, nx);
    }
    let disc = problem.discretize(nx)?;
    let n = disc.unknown_count();
    let mut tracker = Tracker {
        disc: &disc,
        error: problem.exact.as_ref().map(|_| 0.0),
        trajectory: options.keep_trajectory.then(Vec::new),
        a_min: f64::INFINITY,
        a_max: f64::NEG_INFINITY,
        max_eps2_dt2: 0.0,
    };
    let mut elapsed = Duration::ZERO;

    let clock = Instant::now();
    let startup = run_startup(&config.startup, &disc, dt)?;
    elapsed += clock.elapsed();

    let mut history = HistoryBuffer::new(config.scheme.history_len(), dt);
    for level in startup.history.iter() {
        tracker.record(level)?;
        history.push(level.clone())?;
    }
    let mut u = startup.history.newest().expect("startup yields the initial level").clone();
    let mut next = Field::new(vec![0.0; n], u.t);

    let cn = StepCoefficient::crank_nicolson(n, dt);
    let constant = match config.scheme {
        Scheme::RbfCnConstant { kind, eps2 } => Some(StepCoefficient::from_shape(kind, &ShapeParam::Uniform(eps2), dt, n)?),
        _ => None,
    };
    let tableau = IrkTableau::gauss_legendre();
    let mut planner = StepPlanner::default();
    let mut irk_ws = IrkWorkspace::default();
    let mut scratch = Vec::new();
    let mut diagnostics = ShapeDiagnostics::default();

    for k in (config.startup.steps_needed + 1)..=config.nt {
        let clock = Instant::now();
        let t = u.t;
        let stepped = match &config.scheme {
            Scheme::StandardCn => {
                tracker.coefficient(cn.min(), cn.max());
                cn_step_into(&disc.op, &u.values, &cn.a, &mut next.values, &mut scratch)
            }
            Scheme::RbfCnConstant { eps2, .. } => {
                let c = constant.as_ref().expect("built above");
                tracker.coefficient(c.min(), c.max());
                tracker.max_eps2_dt2 = tracker.max_eps2_dt2.max(eps2.abs() * dt * dt);
                cn_step_into(&disc.op, &u.values, &c.a, &mut next.values, &mut scratch)
            }
            Scheme::RbfCn(plan) => planner.plan(plan, &history, &disc.op, dt).and_then(|stats| {
                diagnostics += stats.diagnostics;
                tracker.coefficient(stats.a_min, stats.a_max);
                tracker.max_eps2_dt2 = tracker.max_eps2_dt2.max(stats.max_eps2_dt2);
                cn_step_into(&disc.op, &u.values, &planner.a, &mut next.values, &mut scratch)
            }),
            Scheme::RbfForward { kind, eps2 } => {
                forward_step(*kind, &disc.op, &u, &ShapeParam::Uniform(*eps2), dt).map(|f| next.values = f.values)
            }
            Scheme::RbfBackward { kind, eps2 } => {
                backward_step(*kind, &disc.op, &u, &ShapeParam::Uniform(*eps2), dt).map(|f| next.values = f.values)
            }
            Scheme::GaussLegendreIrk => irk_step_into(&disc.op, &u.values, dt, &tableau, &mut next.values, &mut irk_ws),
            Scheme::RichardsonCn => richardson_cn_step(&disc.op, &u, dt).map(|f| next.values = f.values),
        };
        stepped.map_err(|e| e.at_time(t))?;
        next.t = k as f64 * dt;
        if config.scheme.history_len() > 1 {
            history.push_copy(&next.values, next.t)?;
        }
        elapsed += clock.elapsed();
        tracker.record(&next)?;
        std::mem::swap(&mut u, &mut next);
    }

    if !tracker.a_min.is_finite() {
        tracker.a_min = f64::NAN;
        tracker.a_max = f64::NAN;
    }
    Ok(RunSummary {
        nt: config.nt,
        dt,
        nx,
        nx_capped,
        global_error: tracker.error,
        cpu_seconds: elapsed.as_secs_f64().max(f64::MIN_POSITIVE),
        diagnostics,
        startup_stages: startup.stages,
        a_min: tracker.a_min,
        a_max: tracker.a_max,
        max_eps2_dt2: tracker.max_eps2_dt2,
        final_field: u,
        trajectory: tracker.trajectory,
    })
}

/// Checks the closed-form spectrum of the run's operator against the extreme
/// step coefficients of the run. `|G| <= 1` iff `a Re(lambda) <= 0`, so for
/// positive `a` the two extremes decide every intermediate value as well.
pub fn run_stability(problem: &Problem, summary: &RunSummary) -> Result<StabilityReport> {
    let disc = problem.discretize(summary.nx)?;
    let spectrum = real_spectrum(&analytic_spectrum(&disc.grid, problem.bc));
    if summary.a_min.is_nan() {
        return Ok(StabilityReport::default());
    }
    check_stability(&spectrum, &[summary.a_min, summary.a_max])
}

/// Least-squares slope of `ln(error)` against `ln(dt)`.
pub fn fit_order(errors: &[f64], dts: &[f64]) -> Result<f64> {
    if errors.len() != dts.len() {
        return Err(Error::Dimension { expected: dts.len(), found: errors.len() });
    }
    if errors.len() < 2 {
        return Err(Error::Domain("order fit needs at least two points".into()));
    }
    if let Some(bad) = errors.iter().chain(dts).find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("order fit needs positive data, got {bad}")));
    }
    let xs: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("order fit needs distinct step sizes".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub nt: usize,
    pub dt: f64,
    pub nx: usize,
    pub global_error: f64,
    /// Fit over this row and all previous ones; absent on the first row.
    pub fitted_order: Option<f64>,
    pub cpu_seconds: f64,
    pub safeguard_count: usize,
    pub zero_node_count: usize,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub problem: String,
    /// Free-form `key=value` description written as the CSV comment line.
    pub config: String,
    pub rows: Vec<ConvergenceRow>,
}

pub const CSV_HEADER: [&str; 8] =
    ["nt", "dt", "nx", "global_error", "fitted_order", "cpu_seconds", "safeguard_count", "zero_node_count"];

impl ConvergenceReport {
    pub fn final_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.fitted_order)
    }

    /// Fit over the rows whose `nt` lies in `[lo, hi]`.
    pub fn order_over(&self, lo: usize, hi: usize) -> Result<f64> {
        let rows: Vec<&ConvergenceRow> = self.rows.iter().filter(|r| r.nt >= lo && r.nt <= hi).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.global_error).collect();
        let d: Vec<f64> = rows.iter().map(|r| r.dt).collect();
        fit_order(&e, &d)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# config: problem={} {}", self.problem, self.config)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.nt.to_string(),
                format!("{:.9}", r.dt),
                r.nx.to_string(),
                format!("{:.6e}", r.global_error),
                r.fitted_order.map(|o| format!("{o:.6}")).unwrap_or_default(),
                format!("{:.6}", r.cpu_seconds),
                r.safeguard_count.to_string(),
                r.zero_node_count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ascii"))
    }

    /// Aligned table with the global error and order columns.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:>6} {:>12} {:>8} {:>14} {:>8} {:>10} {:>9} {:>9}\n", "Nt", "dt", "nx", "Global Error", "Order", "CPU (s)", "clamped", "zeros");
        for r in &self.rows {
            let order = r.fitted_order.map(|o| format!("{o:.2}")).unwrap_or_else(|| "--".into());
            s.push_str(&format!(
                "{:>6} {:>12.6e} {:>8} {:>14.4e} {:>8} {:>10.4} {:>9} {:>9}\n",
                r.nt, r.dt, r.nx, r.global_error, order, r.cpu_seconds, r.safeguard_count, r.zero_node_count
            ));
        }
        s
    }
}

/// One integration per entry of `nt_list`, with running order fits.
pub fn convergence_study(
    problem: &Problem,
    scheme: Scheme,
    startup: StartupStrategy,
    nt_list: &[usize],
    mesh_rule: MeshRule,
) -> Result<ConvergenceReport> {
    if nt_list.is_empty() {
        return Err(Error::InvalidConfig("empty nt list".into()));
    }
    if nt_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!("nt list {nt_list:?} is not strictly increasing")));
    }
    if problem.exact.is_none() {
        return Err(Error::Unsupported(format!("problem {} has no exact solution", problem.name)));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(nt_list.len());
    for &nt in nt_list {
        let summary = integrate(problem, &RunConfig { scheme, startup, nt, mesh_rule })?;
        let global_error = summary.global_error.expect("exact solution checked");
        let fitted_order = if rows.is_empty() {
            None
        } else {
            let mut e: Vec<f64> = rows.iter().map(|r| r.global_error).collect();
            let mut d: Vec<f64> = rows.iter().map(|r| r.dt).collect();
            e.push(global_error);
            d.push(summary.dt);
            fit_order(&e, &d).ok()
        };
        rows.push(ConvergenceRow {
            nt,
            dt: summary.dt,
            nx: summary.nx,
            global_error,
            fitted_order,
            cpu_seconds: summary.cpu_seconds,
            safeguard_count: summary.diagnostics.safeguard_count,
            zero_node_count: summary.diagnostics.zero_node_count,
            summary,
        });
    }
    let config = format!(
        "scheme={scheme} startup={} ({}) steps={} mesh={mesh_rule} nt={}",
        startup.kind,
        startup.kind.type_label(),
        startup.steps_needed,
        nt_list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
    );
    Ok(ConvergenceReport { problem: problem.name.clone(), config, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryCondition, DiscreteOperator};
    use crate::problem::dirichlet_sine;
    use crate::shape::{EpsOrder, TargetOrder};

    fn exact0() -> StartupStrategy {
        StartupStrategy::initial_only()
    }

    #[test]
    fn fit_order_examples() {
        assert!((fit_order(&[1e-2, 1e-4], &[0.1, 0.01]).unwrap() - 2.0).abs() < 1e-12);
        let dts = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = dts.iter().map(|d: &f64| 3.0 * d.powi(4)).collect();
        assert!((fit_order(&errs, &dts).unwrap() - 4.0).abs() < 1e-10);
        assert!(matches!(fit_order(&[0.0, 1.0], &[0.1, 0.2]), Err(Error::Domain(_))));
        assert!(fit_order(&[1.0], &[0.1]).is_err());
    }

    #[test]
    fn coupled_mesh_sizes() {
        assert_eq!(MeshRule::Coupled(2).nx(1.0, 1.0 / 16.0).unwrap(), (17, false));
        assert_eq!(MeshRule::Coupled(4).nx(1.0, 1.0 / 16.0).unwrap(), (257, false));
        assert_eq!(MeshRule::Coupled(4).nx(1.0, 1.0 / 512.0).unwrap(), (MAX_INTERVALS + 1, true));
        assert_eq!(MeshRule::Fixed(33).nx(1.0, 0.1).unwrap(), (33, false));
    }

    #[test]
    fn still_problem_has_zero_error() {
        let p = Problem::heat("still", 0.0, 1.0, BoundaryCondition::DirichletHomogeneous, 1.0, |x| x * (1.0 - x))
            .with_exact(|x, _| x * (1.0 - x))
            .with_operator(|g, bc| Ok(DiscreteOperator::zero(bc.unknown_count(g))));
        for scheme in [Scheme::StandardCn, Scheme::GaussLegendreIrk, Scheme::RichardsonCn] {
            let s = integrate(&p, &RunConfig { scheme, startup: exact0(), nt: 8, mesh_rule: MeshRule::Fixed(11) }).unwrap();
            assert!(s.global_error.unwrap() <= 1e-15, "{scheme}");
        }
    }

    #[test]
    fn short_startup_is_rejected() {
        let plan = ShapeParamPlan::new(RbfKind::Gaussian, EpsOrder::new(TargetOrder::Order4, 3).unwrap());
        let cfg = RunConfig { scheme: Scheme::RbfCn(plan), startup: exact0(), nt: 16, mesh_rule: MeshRule::Fixed(17) };
        assert_eq!(integrate(&dirichlet_sine(), &cfg).unwrap_err(), Error::NotReady { needed: 5, have: 1 });
    }

    #[test]
    fn study_rows_and_csv() {
        let r = convergence_study(&dirichlet_sine(), Scheme::StandardCn, exact0(), &[8, 16, 32], MeshRule::Coupled(2)).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows[0].fitted_order.is_none());
        assert!(r.rows[1].fitted_order.is_some());
        let csv = r.to_csv_string().unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# config: problem=p1 scheme=cn"));
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(lines.count(), 3);
        let single = convergence_study(&dirichlet_sine(), Scheme::StandardCn, exact0(), &[8], MeshRule::Coupled(2)).unwrap();
        assert!(single.final_order().is_none());
        assert!(convergence_study(&dirichlet_sine(), Scheme::StandardCn, exact0(), &[16, 8], MeshRule::Coupled(2)).is_err());
    }
}
