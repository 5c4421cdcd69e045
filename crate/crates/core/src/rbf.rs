//! Two-node RBF interpolants in time and the schemes built from them.
//!
//! Every scheme here advances `u_t = L u` with a coefficient that depends on
//! the kernel and on `eps2` (the squared shape parameter, which may be
//! negative). At `eps2 = 0` each one collapses to its classical counterpart:
//! forward Euler, backward Euler or Crank-Nicolson.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{thomas_in_place, DiscreteOperator, Field};

/// Below this magnitude of `eps2 * dt^2` the Gaussian coefficient is replaced by its limit.
pub const EPS2_ZERO_CUTOFF: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RbfKind {
    Gaussian,
    /// Multiquadric `sqrt(1 + eps^2 r^2)`.
    Mq,
    /// Inverse multiquadric `1 / sqrt(1 + eps^2 r^2)`.
    Imq,
}

impl RbfKind {
    pub const ALL: [RbfKind; 3] = [RbfKind::Gaussian, RbfKind::Mq, RbfKind::Imq];

    pub fn token(self) -> &'static str {
        match self {
            RbfKind::Gaussian => "gaussian",
            RbfKind::Mq => "mq",
            RbfKind::Imq => "imq",
        }
    }

    /// Kernel value at separation `r`.
    pub fn phi(self, eps2: f64, r: f64) -> f64 {
        let s = eps2 * r * r;
        match self {
            RbfKind::Gaussian => (-s).exp(),
            RbfKind::Mq => (1.0 + s).sqrt(),
            RbfKind::Imq => 1.0 / (1.0 + s).sqrt(),
        }
    }
}

impl fmt::Display for RbfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for RbfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(RbfKind::Gaussian),
            "mq" => Ok(RbfKind::Mq),
            "imq" => Ok(RbfKind::Imq),
            other => Err(Error::InvalidConfig(format!("unknown RBF '{other}' (gaussian|mq|imq)"))),
        }
    }
}

/// Squared shape parameter, either one value for every node or one per node.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeParam {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl ShapeParam {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            ShapeParam::Uniform(v) => *v,
            ShapeParam::PerNode(v) => v[i],
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        match self {
            ShapeParam::PerNode(v) if v.len() != n => Err(Error::Dimension { expected: n, found: v.len() }),
            _ => Ok(()),
        }
    }
}

/// Per-node CN coefficients `a_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoefficient {
    pub a: Vec<f64>,
    pub dt: f64,
}

impl StepCoefficient {
    /// Classical Crank-Nicolson: `a = dt / 2` everywhere.
    pub fn crank_nicolson(n: usize, dt: f64) -> Self {
        Self { a: vec![0.5 * dt; n], dt }
    }

    pub fn uniform(n: usize, a: f64, dt: f64) -> Self {
        Self { a: vec![a; n], dt }
    }

    pub fn from_shape(kind: RbfKind, eps2: &ShapeParam, dt: f64, n: usize) -> Result<Self> {
        eps2.check_len(n)?;
        let a = match eps2 {
            ShapeParam::Uniform(e) => vec![step_coefficient(kind, *e, dt)?; n],
            ShapeParam::PerNode(v) => v.iter().map(|&e| step_coefficient(kind, e, dt)).collect::<Result<_>>()?,
        };
        Ok(Self { a, dt })
    }

    pub fn min(&self) -> f64 {
        self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Coefficients of the two-node interpolant `lambda0 phi(t - t0) + lambda1 phi(t - t0 - dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolantCoefficients {
    pub lambda0: f64,
    pub lambda1: f64,
    pub kind: RbfKind,
    pub eps2: f64,
    pub dt: f64,
}

impl InterpolantCoefficients {
    /// Evaluate at offset `s = t - t0`.
    pub fn eval(&self, s: f64) -> f64 {
        self.lambda0 * self.kind.phi(self.eps2, s) + self.lambda1 * self.kind.phi(self.eps2, s - self.dt)
    }
}

pub fn interp_coefficients(kind: RbfKind, u0: f64, u1: f64, eps2: f64, dt: f64) -> Result<InterpolantCoefficients> {
    let x = eps2 * dt * dt;
    let (lambda0, lambda1) = match kind {
        RbfKind::Gaussian => {
            if x == 0.0 {
                return Err(Error::DegenerateInterpolant("Gaussian kernel matrix is singular at eps2*dt^2 = 0".into()));
            }
            let e = (-x).exp();
            let det = -(-2.0 * x).exp_m1();
            ((u0 - u1 * e) / det, (u1 - u0 * e) / det)
        }
        RbfKind::Mq | RbfKind::Imq => {
            if x == 0.0 {
                return Err(Error::DegenerateInterpolant(format!("{kind} kernel matrix is singular at eps2 = 0")));
            }
            if 1.0 + x <= 0.0 {
                return Err(Error::NonRealCoefficient(1.0 + x));
            }
            let m = (1.0 + x).sqrt();
            if kind == RbfKind::Mq {
                (-(u0 - u1 * m) / x, (u0 * m - u1) / x)
            } else {
                ((u0 * (1.0 + x) - u1 * m) / x, (u1 * (1.0 + x) - u0 * m) / x)
            }
        }
    };
    Ok(InterpolantCoefficients { lambda0, lambda1, kind, eps2, dt })
}

#[inline]
fn multiquadric_factor(x: f64) -> Result<f64> {
    if 1.0 + x <= 0.0 {
        return Err(Error::NonRealCoefficient(1.0 + x));
    }
    Ok((1.0 + x).sqrt())
}

/// The RBF-CN coefficient `a_n` in `u_{n+1} = u_n + a_n (L u_n + L u_{n+1})`.
#[inline]
pub fn step_coefficient(kind: RbfKind, eps2: f64, dt: f64) -> Result<f64> {
    let x = eps2 * dt * dt;
    if x.abs() < EPS2_ZERO_CUTOFF {
        return Ok(0.5 * dt);
    }
    match kind {
        RbfKind::Gaussian => Ok(0.5 * dt * expm1_ratio(x)),
        RbfKind::Mq => {
            let m = multiquadric_factor(x)?;
            Ok(dt * m / (1.0 + m))
        }
        RbfKind::Imq => Ok(dt / (1.0 + multiquadric_factor(x)?)),
    }
}

/// `expm1(x) / x`; a Taylor polynomial below `|x| = 1e-2` (truncation under 1e-18 relative).
#[inline]
fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        1.0 + x * (1.0 / 2.0 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x * (1.0 / 720.0 + x / 5040.0)))))
    } else {
        x.exp_m1() / x
    }
}

/// Truncated small-`eps2*dt^2` expansion of [`step_coefficient`], accurate to `O(dt^7)`.
pub fn series_coefficient(kind: RbfKind, eps2: f64, dt: f64) -> f64 {
    let dt3 = dt * dt * dt;
    let dt5 = dt3 * dt * dt;
    let e4 = eps2 * eps2;
    match kind {
        RbfKind::Gaussian => dt / 2.0 + eps2 * dt3 / 4.0 + e4 * dt5 / 12.0,
        RbfKind::Mq => dt / 2.0 + eps2 * dt3 / 8.0 - e4 * dt5 / 16.0,
        RbfKind::Imq => dt / 2.0 - eps2 * dt3 / 8.0 + e4 * dt5 / 16.0,
    }
}

/// Solve `(I - D_a L) u_{n+1} = (I + D_a L) u_n` with `D_a = diag(a)`.
///
/// Solved for the increment, `u_{n+1} = u_n + (I - D_a L)^{-1} 2 D_a L u_n`:
/// on fine meshes the system is badly conditioned and the solve error scales
/// with the size of its solution, which is much smaller for the increment.
pub fn cn_step(op: &DiscreteOperator, u: &Field, coeff: &StepCoefficient) -> Result<Field> {
    let mut out = vec![0.0; u.len()];
    let mut scratch = Vec::new();
    cn_step_into(op, &u.values, &coeff.a, &mut out, &mut scratch).map_err(|e| e.at_time(u.t))?;
    Ok(Field::new(out, u.t + coeff.dt))
}

/// Allocation-free form of [`cn_step`]: writes `u_{n+1}` into `out`, reusing `scratch`.
pub fn cn_step_into(op: &DiscreteOperator, u: &[f64], a: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
    let n = op.unknown_count();
    op.check_len(u.len())?;
    op.check_len(a.len())?;
    op.check_len(out.len())?;
    if n == 0 {
        return Ok(());
    }
    let (lo, di, up) = (op.lower(), op.diag(), op.upper());
    scratch.clear();
    scratch.resize(n, 0.0);
    // rhs 2 a_i (L u)_i, eliminated on the fly (Thomas forward sweep)
    let mut prev_c = 0.0;
    let mut prev_d = 0.0;
    for i in 0..n {
        let lu = if n == 1 {
            di[0] * u[0]
        } else if i == 0 {
            di[0] * u[0] + up[0] * u[1]
        } else if i == n - 1 {
            lo[i] * u[i - 1] + di[i] * u[i]
        } else {
            lo[i] * u[i - 1] + di[i] * u[i] + up[i] * u[i + 1]
        };
        let l = -a[i] * lo[i];
        let pivot = 1.0 - a[i] * di[i] - l * prev_c;
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        let inv = pivot.recip();
        prev_c = -a[i] * up[i] * inv;
        prev_d = (2.0 * a[i] * lu - l * prev_d) * inv;
        scratch[i] = prev_c;
        out[i] = prev_d;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
    for (o, v) in out.iter_mut().zip(u) {
        *o += v;
    }
    Ok(())
}

/// In place: `rhs <- (I - diag(c) L)^{-1} rhs`.
pub(crate) fn implicit_solve(op: &DiscreteOperator, c: &[f64], rhs: &mut [f64]) -> Result<()> {
    let lower: Vec<f64> = op.lower().iter().zip(c).map(|(&l, &ci)| -ci * l).collect();
    let diag: Vec<f64> = op.diag().iter().zip(c).map(|(&d, &ci)| 1.0 - ci * d).collect();
    let mut upper: Vec<f64> = op.upper().iter().zip(c).map(|(&u, &ci)| -ci * u).collect();
    thomas_in_place(&lower, &diag, &mut upper, rhs)
}

/// Explicit RBF forward Euler step.
pub fn forward_step(kind: RbfKind, op: &DiscreteOperator, u: &Field, eps2: &ShapeParam, dt: f64) -> Result<Field> {
    let n = op.unknown_count();
    op.check_len(u.len())?;
    eps2.check_len(n)?;
    let mut lu = vec![0.0; n];
    op.apply_into(&u.values, &mut lu);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = eps2.at(i) * dt * dt;
        let (scale, coeff) = forward_factors(kind, x, dt)?;
        out.push(scale * u.values[i] + coeff * lu[i]);
    }
    Ok(Field::new(out, u.t + dt))
}

/// `(scale, coeff)` in `u_{n+1} = scale * u_n + coeff * L u_n`.
fn forward_factors(kind: RbfKind, x: f64, dt: f64) -> Result<(f64, f64)> {
    if x.abs() < EPS2_ZERO_CUTOFF {
        return Ok((1.0, dt));
    }
    match kind {
        // sinh(x) / x * dt
        RbfKind::Gaussian => Ok(((-x).exp(), (x.exp() - (-x).exp()) / (2.0 * x) * dt)),
        RbfKind::Mq => {
            let m = multiquadric_factor(x)?;
            Ok((m, m * m * dt))
        }
        RbfKind::Imq => Ok((1.0 / multiquadric_factor(x)?, dt)),
    }
}

/// `(scale, coeff)` in `(I - coeff L) u_{n+1} = scale * u_n`.
fn backward_factors(kind: RbfKind, x: f64, dt: f64) -> Result<(f64, f64)> {
    if x.abs() < EPS2_ZERO_CUTOFF {
        return Ok((1.0, dt));
    }
    match kind {
        RbfKind::Gaussian => Ok((x.exp(), (2.0 * x).exp_m1() / (2.0 * x) * dt)),
        RbfKind::Mq => Ok((1.0 / multiquadric_factor(x)?, dt)),
        RbfKind::Imq => Ok((multiquadric_factor(x)?, dt)),
    }
}

/// Implicit RBF backward Euler step.
pub fn backward_step(kind: RbfKind, op: &DiscreteOperator, u: &Field, eps2: &ShapeParam, dt: f64) -> Result<Field> {
    let n = op.unknown_count();
    op.check_len(u.len())?;
    eps2.check_len(n)?;
    let mut coeff = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for i in 0..n {
        let x = eps2.at(i) * dt * dt;
        let (scale, c) = backward_factors(kind, x, dt)?;
        coeff.push(c);
        rhs.push(scale * u.values[i]);
    }
    implicit_solve(op, &coeff, &mut rhs).map_err(|e| e.at_time(u.t))?;
    Ok(Field::new(rhs, u.t + dt))
}
