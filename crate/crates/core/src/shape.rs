//! Per-step, per-node choice of the squared shape parameter `eps2`.
//!
//! The optimal value cancels leading terms of the RBF-CN truncation error.
//! For fourth order it only needs `u_tt / u`; for fifth order it is a root
//! of a node-wise quadratic whose coefficients use `u, u_t, ..., u_tttt`
//! (equivalently `L^k u`). Only one root of that quadratic is consistent,
//! and which one depends on the kernel and on the sign of `u`.
//!
//! Time derivatives come either from one-sided differences over the stored
//! history (uniform spacing `dt`) or from powers of the discrete operator.
//! Degenerate nodes are handled by policy rather than errors: `eps2 = 0`
//! where `|u|` is negligible, an order-4 fallback where the quadratic has no
//! real root, and a clamp that keeps `|eps2| dt^2` below a cap `< 1`.

use std::collections::VecDeque;
use std::ops::AddAssign;

use crate::error::{Error, Result};
use crate::grid::{DiscreteOperator, Field};
use crate::rbf::{step_coefficient, RbfKind, ShapeParam, StepCoefficient};
use crate::stencil::backward_difference_weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetOrder {
    Order4,
    Order5,
}

impl TargetOrder {
    pub fn as_int(self) -> u32 {
        match self {
            TargetOrder::Order4 => 4,
            TargetOrder::Order5 => 5,
        }
    }

    pub fn from_int(v: u32) -> Result<Self> {
        match v {
            4 => Ok(TargetOrder::Order4),
            5 => Ok(TargetOrder::Order5),
            other => Err(Error::InvalidConfig(format!("eps order {other} not in {{4, 5}}"))),
        }
    }
}

/// Target truncation order together with the accuracy `s` of the derivative estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EpsOrder {
    pub target: TargetOrder,
    pub approx_order: usize,
}

impl EpsOrder {
    pub fn new(target: TargetOrder, approx_order: usize) -> Result<Self> {
        if !(1..=4).contains(&approx_order) {
            return Err(Error::InvalidConfig(format!("approx order {approx_order} not in 1..=4")));
        }
        Ok(Self { target, approx_order })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// One-sided differences in time over the last `s + 2` levels.
    BackwardDifference,
    /// `u_t^(k) = L^k u` from repeated operator application on the newest level.
    OperatorPower,
}

impl Estimator {
    pub fn token(self) -> &'static str {
        match self {
            Estimator::BackwardDifference => "backward-difference",
            Estimator::OperatorPower => "operator-power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParamPlan {
    pub kind: RbfKind,
    pub order: EpsOrder,
    /// Nodes with `|u| < u_zero_tol * max|u|` get `eps2 = 0`.
    pub u_zero_tol: f64,
    /// Largest permitted `|eps2| dt^2`; must lie in `(0, 1)`.
    pub safeguard_cap: f64,
    pub estimator: Estimator,
}

impl ShapeParamPlan {
    pub const DEFAULT_ZERO_TOL: f64 = 1e-8;
    pub const DEFAULT_SAFEGUARD_CAP: f64 = 0.5;

    pub fn new(kind: RbfKind, order: EpsOrder) -> Self {
        Self {
            kind,
            order,
            u_zero_tol: Self::DEFAULT_ZERO_TOL,
            safeguard_cap: Self::DEFAULT_SAFEGUARD_CAP,
            estimator: Estimator::BackwardDifference,
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_safeguard_cap(mut self, cap: f64) -> Self {
        self.safeguard_cap = cap;
        self
    }

    pub fn with_zero_tol(mut self, tol: f64) -> Self {
        self.u_zero_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.safeguard_cap > 0.0 && self.safeguard_cap < 1.0) {
            return Err(Error::InvalidConfig(format!("safeguard cap {} not in (0, 1)", self.safeguard_cap)));
        }
        if !(self.u_zero_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("zero tolerance {} must be positive", self.u_zero_tol)));
        }
        EpsOrder::new(self.order.target, self.order.approx_order)?;
        if self.order.target == TargetOrder::Order5
            && self.estimator == Estimator::BackwardDifference
            && self.order.approx_order < 3
        {
            return Err(Error::InvalidConfig(
                "eps order 5 with backward differences needs approx order >= 3 (u_tttt over s + 2 levels)".into(),
            ));
        }
        Ok(())
    }

    /// Number of stored levels the estimator needs before the first RBF-CN step.
    pub fn history_len(&self) -> usize {
        match self.estimator {
            Estimator::BackwardDifference => self.order.approx_order + 2,
            Estimator::OperatorPower => 1,
        }
    }
}

/// The last few solution levels, oldest first, equispaced by `dt`.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    levels: VecDeque<Field>,
    capacity: usize,
    dt: f64,
}

impl HistoryBuffer {
    pub fn new(capacity: usize, dt: f64) -> Self {
        Self { levels: VecDeque::with_capacity(capacity.max(1)), capacity: capacity.max(1), dt }
    }

    /// Append a level, dropping the oldest one when full.
    pub fn push(&mut self, field: Field) -> Result<()> {
        self.check_next(field.len(), field.t)?;
        if self.levels.len() == self.capacity {
            self.levels.pop_front();
        }
        self.levels.push_back(field);
        Ok(())
    }

    /// Like [`push`](Self::push), copying `values` into the evicted level's storage when full.
    pub fn push_copy(&mut self, values: &[f64], t: f64) -> Result<()> {
        self.check_next(values.len(), t)?;
        let mut level = if self.levels.len() == self.capacity {
            self.levels.pop_front().expect("full buffer")
        } else {
            Field::new(Vec::with_capacity(values.len()), t)
        };
        level.values.clear();
        level.values.extend_from_slice(values);
        level.t = t;
        self.levels.push_back(level);
        Ok(())
    }

    fn check_next(&self, len: usize, t: f64) -> Result<()> {
        if let Some(last) = self.levels.back() {
            if last.len() != len {
                return Err(Error::Dimension { expected: last.len(), found: len });
            }
            let gap = t - last.t;
            let tol = 1e-12 * self.dt + 8.0 * f64::EPSILON * t.abs();
            if (gap - self.dt).abs() > tol {
                return Err(Error::Spacing { expected: self.dt, found: gap });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_ready(&self) -> bool {
        self.levels.len() == self.capacity
    }

    pub fn newest(&self) -> Option<&Field> {
        self.levels.back()
    }

    /// Level `back` steps before the newest one.
    pub fn back(&self, back: usize) -> Option<&Field> {
        self.levels.len().checked_sub(back + 1).and_then(|i| self.levels.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Field> {
        self.levels.iter()
    }
}

/// Counters surfaced to reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShapeDiagnostics {
    pub safeguard_count: usize,
    pub zero_node_count: usize,
    pub discriminant_fallbacks: usize,
}

impl AddAssign for ShapeDiagnostics {
    fn add_assign(&mut self, rhs: Self) {
        self.safeguard_count += rhs.safeguard_count;
        self.zero_node_count += rhs.zero_node_count;
        self.discriminant_fallbacks += rhs.discriminant_fallbacks;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEstimate {
    pub eps2: Vec<f64>,
    pub diagnostics: ShapeDiagnostics,
}

impl ShapeEstimate {
    pub fn shape_param(&self) -> ShapeParam {
        ShapeParam::PerNode(self.eps2.clone())
    }
}

/// `u` and its first four time derivatives at one level.
/// Higher entries may be absent when the target order does not need them.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDerivatives {
    pub u: Vec<f64>,
    /// `d[k-1]` holds the k-th derivative.
    pub d: Vec<Vec<f64>>,
}

impl TimeDerivatives {
    pub fn order(&self, k: usize) -> &[f64] {
        &self.d[k - 1]
    }

    /// `L u, ..., L^max u` by repeated application to `u`.
    pub fn from_operator(op: &DiscreteOperator, u: &Field, max: usize) -> Result<Self> {
        op.check_len(u.len())?;
        let mut d = Vec::with_capacity(max);
        let mut cur = u.values.clone();
        for _ in 0..max {
            let mut next = vec![0.0; cur.len()];
            op.apply_into(&cur, &mut next);
            d.push(next.clone());
            cur = next;
        }
        Ok(Self { u: u.values.clone(), d })
    }

    /// Derivatives `1..=max` at the newest level of the history using its
    /// last `s + 2` levels; the k-th derivative is accurate to `O(dt^(s+2-k))`.
    pub fn from_history(history: &HistoryBuffer, s: usize, max: usize) -> Result<Self> {
        let npoints = s + 2;
        if history.len() < npoints {
            return Err(Error::NotReady { needed: npoints, have: history.len() });
        }
        if max >= npoints {
            return Err(Error::Domain(format!("derivative {max} needs more than {npoints} levels")));
        }
        let newest = history.newest().expect("non-empty history");
        let n = newest.len();
        let dt = history.dt();
        let mut d = Vec::with_capacity(max);
        for k in 1..=max {
            let w = backward_difference_weights(k, npoints);
            let scale = dt.powi(-(k as i32));
            let mut acc = vec![0.0; n];
            for (j, wj) in w.iter().enumerate() {
                let level = &history.back(j).expect("checked length").values;
                for (a, v) in acc.iter_mut().zip(level) {
                    *a += wj * v;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
            d.push(acc);
        }
        Ok(Self { u: newest.values.clone(), d })
    }
}

/// Node-wise `s`-th order backward-difference estimate of `u_tt` at the newest level.
pub fn second_time_derivative(history: &HistoryBuffer, s: usize) -> Result<Field> {
    let t = history.newest().map(|f| f.t).unwrap_or(0.0);
    let mut d = TimeDerivatives::from_history(history, s, 2)?.d;
    Ok(Field::new(d.swap_remove(1), t))
}

struct NodePolicy {
    zero_cut: f64,
    cap: f64,
}

impl NodePolicy {
    fn new(u: &[f64], dt: f64, plan: &ShapeParamPlan) -> Self {
        let umax = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Self { zero_cut: plan.u_zero_tol * umax, cap: plan.safeguard_cap / (dt * dt) }
    }

    #[inline]
    fn is_zero(&self, u: f64) -> bool {
        u.abs() < self.zero_cut || u == 0.0
    }

    #[inline]
    fn clamp(&self, eps2: f64, diag: &mut ShapeDiagnostics) -> f64 {
        if eps2.abs() >= self.cap {
            diag.safeguard_count += 1;
            self.cap.copysign(eps2)
        } else {
            eps2
        }
    }
}

/// `eps2 = c * u_tt / u` with `c = -1/6` (Gaussian), `-1/3` (MQ), `+1/3` (IMQ).
#[inline]
fn order4_value(kind: RbfKind, u: f64, d2u: f64) -> f64 {
    let c = match kind {
        RbfKind::Gaussian => -1.0 / 6.0,
        RbfKind::Mq => -1.0 / 3.0,
        RbfKind::Imq => 1.0 / 3.0,
    };
    c * d2u / u
}

/// Shape parameter that makes the RBF-CN step fourth-order accurate.
pub fn eps2_order4(kind: RbfKind, u: &Field, d2u: &Field, dt: f64, plan: &ShapeParamPlan) -> Result<ShapeEstimate> {
    if u.len() != d2u.len() {
        return Err(Error::Dimension { expected: u.len(), found: d2u.len() });
    }
    let policy = NodePolicy::new(&u.values, dt, plan);
    let mut diagnostics = ShapeDiagnostics::default();
    let eps2 = u
        .values
        .iter()
        .zip(&d2u.values)
        .map(|(&ui, &di)| {
            if policy.is_zero(ui) {
                diagnostics.zero_node_count += 1;
                0.0
            } else {
                policy.clamp(order4_value(kind, ui, di), &mut diagnostics)
            }
        })
        .collect();
    Ok(ShapeEstimate { eps2, diagnostics })
}

/// Coefficients `(A, B, C)` of the fifth-order condition `A e^2 + B e + C = 0` in `e = eps2`.
pub fn order5_quadratic(kind: RbfKind, dt: f64, u: f64, l1: f64, l2: f64, l3: f64, l4: f64) -> (f64, f64, f64) {
    let dt2 = dt * dt;
    let inner = dt2 * l2 + 2.0 * dt * l1 + 4.0 * u;
    let c = 3.0 * dt2 * l4 + 10.0 * dt * l3 + 20.0 * l2;
    match kind {
        RbfKind::Gaussian => (40.0 * dt2 * u, 30.0 * inner, c),
        RbfKind::Mq => (-30.0 * dt2 * u, 15.0 * inner, c),
        RbfKind::Imq => (30.0 * dt2 * u, -15.0 * inner, c),
    }
}

/// Roots `(plus, minus)` of `a x^2 + b x + c`, labelled by the sign in
/// `(-b +- sqrt(b^2 - 4ac)) / 2a`; `None` when there is no real root.
/// Evaluated without cancellation.
pub fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if !(disc >= 0.0) || a == 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    if b > 0.0 {
        let q = -0.5 * (b + sq);
        Some((c / q, q / a))
    } else {
        let q = 0.5 * (sq - b);
        if q == 0.0 {
            // b = 0 and c = 0: double root at zero
            return Some((0.0, 0.0));
        }
        Some((q / a, c / q))
    }
}

/// Consistent root: Gaussian and MQ take `plus` where `u > 0`, IMQ the reverse.
fn select_root(kind: RbfKind, u: f64, plus: f64, minus: f64) -> f64 {
    let plus_branch = match kind {
        RbfKind::Gaussian | RbfKind::Mq => u > 0.0,
        RbfKind::Imq => u < 0.0,
    };
    if plus_branch {
        plus
    } else {
        minus
    }
}

/// Fifth-order shape parameter from the derivative stack `u, u_t, ..., u_tttt`.
pub fn eps2_order5_from_derivatives(
    kind: RbfKind,
    derivs: &TimeDerivatives,
    dt: f64,
    plan: &ShapeParamPlan,
) -> Result<ShapeEstimate> {
    if derivs.d.len() < 4 {
        return Err(Error::Domain("fifth-order eps2 needs derivatives up to order 4".into()));
    }
    let u = &derivs.u;
    let policy = NodePolicy::new(u, dt, plan);
    let mut diagnostics = ShapeDiagnostics::default();
    let mut eps2 = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let ui = u[i];
        if policy.is_zero(ui) {
            diagnostics.zero_node_count += 1;
            eps2.push(0.0);
            continue;
        }
        let (l1, l2, l3, l4) = (derivs.d[0][i], derivs.d[1][i], derivs.d[2][i], derivs.d[3][i]);
        let (a, b, c) = order5_quadratic(kind, dt, ui, l1, l2, l3, l4);
        let value = match quadratic_roots(a, b, c) {
            Some((plus, minus)) => select_root(kind, ui, plus, minus),
            None => {
                diagnostics.discriminant_fallbacks += 1;
                order4_value(kind, ui, l2)
            }
        };
        eps2.push(policy.clamp(value, &mut diagnostics));
    }
    Ok(ShapeEstimate { eps2, diagnostics })
}

/// Fifth-order shape parameter with `L^k u` taken from the operator.
pub fn eps2_order5(kind: RbfKind, u: &Field, op: &DiscreteOperator, dt: f64, plan: &ShapeParamPlan) -> Result<ShapeEstimate> {
    let derivs = TimeDerivatives::from_operator(op, u, 4)?;
    eps2_order5_from_derivatives(kind, &derivs, dt, plan)
}

/// Coefficients for the next RBF-CN step together with what produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedStep {
    pub coeff: StepCoefficient,
    pub eps2: Vec<f64>,
    pub diagnostics: ShapeDiagnostics,
}

impl PlannedStep {
    /// Largest `|eps2| dt^2` over the nodes.
    pub fn max_eps2_dt2(&self) -> f64 {
        let dt2 = self.coeff.dt * self.coeff.dt;
        self.eps2.iter().fold(0.0_f64, |m, e| m.max(e.abs() * dt2))
    }
}

/// Optimal `eps2` at the newest history level turned into per-node `a_n`.
pub fn plan_step(plan: &ShapeParamPlan, history: &HistoryBuffer, op: &DiscreteOperator, dt: f64) -> Result<PlannedStep> {
    let mut planner = StepPlanner::default();
    let diagnostics = planner.plan(plan, history, op, dt)?.diagnostics;
    let StepPlanner { eps2, a, .. } = planner;
    Ok(PlannedStep { coeff: StepCoefficient { a, dt }, eps2, diagnostics })
}

/// Summary of one [`StepPlanner::plan`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub diagnostics: ShapeDiagnostics,
    pub a_min: f64,
    pub a_max: f64,
    pub max_eps2_dt2: f64,
}

impl StepStats {
    #[inline]
    fn include(&mut self, a: f64, x: f64) {
        if a < self.a_min {
            self.a_min = a;
        }
        if a > self.a_max {
            self.a_max = a;
        }
        if x.abs() > self.max_eps2_dt2 {
            self.max_eps2_dt2 = x.abs();
        }
    }
}

/// Reusable buffers for per-step shape parameters and step coefficients.
#[derive(Debug, Clone, Default)]
pub struct StepPlanner {
    pub eps2: Vec<f64>,
    pub a: Vec<f64>,
    d2_weights: Vec<f64>,
}

impl StepPlanner {
    /// Fills `eps2` and `a` for the step leaving the newest history level.
    pub fn plan(&mut self, plan: &ShapeParamPlan, history: &HistoryBuffer, op: &DiscreteOperator, dt: f64) -> Result<StepStats> {
        plan.validate()?;
        let needed = plan.history_len();
        if history.len() < needed {
            return Err(Error::NotReady { needed, have: history.len() });
        }
        let newest = history.newest().expect("non-empty history");
        op.check_len(newest.len())?;
        let s = plan.order.approx_order;
        if plan.order.target == TargetOrder::Order4 && plan.estimator == Estimator::BackwardDifference {
            return self.order4_from_history(plan, history, s, dt);
        }
        let max_deriv = match plan.order.target {
            TargetOrder::Order4 => 2,
            TargetOrder::Order5 => 4,
        };
        let derivs = match plan.estimator {
            Estimator::BackwardDifference => TimeDerivatives::from_history(history, s, max_deriv)?,
            Estimator::OperatorPower => TimeDerivatives::from_operator(op, newest, max_deriv)?,
        };
        let estimate = match plan.order.target {
            TargetOrder::Order4 => {
                let d2 = Field::new(derivs.order(2).to_vec(), newest.t);
                eps2_order4(plan.kind, newest, &d2, dt, plan)?
            }
            TargetOrder::Order5 => eps2_order5_from_derivatives(plan.kind, &derivs, dt, plan)?,
        };
        self.eps2 = estimate.eps2;
        let mut stats = StepStats {
            diagnostics: estimate.diagnostics,
            a_min: f64::INFINITY,
            a_max: f64::NEG_INFINITY,
            max_eps2_dt2: 0.0,
        };
        self.a.clear();
        for &e in &self.eps2 {
            let a = step_coefficient(plan.kind, e, dt)?;
            stats.include(a, e * dt * dt);
            self.a.push(a);
        }
        Ok(stats)
    }

    /// Same arithmetic as `second_time_derivative`, `eps2_order4` and
    /// `step_coefficient` in one pass over the nodes.
    fn order4_from_history(&mut self, plan: &ShapeParamPlan, history: &HistoryBuffer, s: usize, dt: f64) -> Result<StepStats> {
        let npoints = s + 2;
        if self.d2_weights.len() != npoints {
            self.d2_weights = backward_difference_weights(2, npoints);
        }
        let levels: Vec<&[f64]> = (0..npoints).map(|j| history.back(j).expect("checked length").values.as_slice()).collect();
        match npoints {
            3 => self.order4_kernel::<3>(plan, &levels, dt),
            4 => self.order4_kernel::<4>(plan, &levels, dt),
            5 => self.order4_kernel::<5>(plan, &levels, dt),
            6 => self.order4_kernel::<6>(plan, &levels, dt),
            _ => unreachable!("approx order is validated to 1..=4"),
        }
    }

    fn order4_kernel<const N: usize>(&mut self, plan: &ShapeParamPlan, levels: &[&[f64]], dt: f64) -> Result<StepStats> {
        let u = levels[0];
        let n = u.len();
        let levels: [&[f64]; N] = std::array::from_fn(|j| &levels[j][..n]);
        let w: [f64; N] = std::array::from_fn(|j| self.d2_weights[j]);
        let scale = dt.powi(-2);
        let policy = NodePolicy::new(u, dt, plan);
        let mut stats = StepStats { a_min: f64::INFINITY, a_max: f64::NEG_INFINITY, ..StepStats::default() };
        self.eps2.clear();
        self.a.clear();
        for i in 0..n {
            let ui = u[i];
            let e = if policy.is_zero(ui) {
                stats.diagnostics.zero_node_count += 1;
                0.0
            } else {
                let mut d2 = 0.0;
                for j in 0..N {
                    d2 += w[j] * levels[j][i];
                }
                policy.clamp(order4_value(plan.kind, ui, d2 * scale), &mut stats.diagnostics)
            };
            let a = step_coefficient(plan.kind, e, dt)?;
            stats.include(a, e * dt * dt);
            self.eps2.push(e);
            self.a.push(a);
        }
        Ok(stats)
    }
}
