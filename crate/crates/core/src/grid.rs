//! Uniform 1D grids, the second-order diffusion operator and tridiagonal solves.

use std::ops::{Div, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Uniform grid on `[x_min, x_max]` with `nx` nodes, boundary nodes included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    nx: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if nx < 3 {
            return Err(Error::InvalidGrid(format!("nx = {nx}, need at least 3 nodes")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!("empty interval [{x_min}, {x_max}]")));
        }
        let dx = (x_max - x_min) / (nx - 1) as f64;
        Ok(Self { x_min, x_max, nx, dx })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Coordinate of node `j`. The last node is pinned to `x_max`.
    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.nx {
            self.x_max
        } else {
            self.x_min + j as f64 * self.dx
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryCondition {
    /// `u = 0` at both ends; only interior nodes are unknowns.
    DirichletHomogeneous,
    /// `du/dx = 0` at both ends, closed with a mirrored ghost node; every node is an unknown.
    NeumannHomogeneous,
}

impl BoundaryCondition {
    pub fn unknown_count(self, grid: &SpatialGrid) -> usize {
        match self {
            BoundaryCondition::DirichletHomogeneous => grid.nx() - 2,
            BoundaryCondition::NeumannHomogeneous => grid.nx(),
        }
    }

    /// Coordinates of the nodes that carry unknowns.
    pub fn unknown_positions(self, grid: &SpatialGrid) -> Vec<f64> {
        match self {
            BoundaryCondition::DirichletHomogeneous => (1..grid.nx() - 1).map(|j| grid.x(j)).collect(),
            BoundaryCondition::NeumannHomogeneous => (0..grid.nx()).map(|j| grid.x(j)).collect(),
        }
    }
}

/// Solution samples at the unknowns of a discrete operator, stamped with a time.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub t: f64,
}

impl Field {
    pub fn new(values: Vec<f64>, t: f64) -> Self {
        Self { values, t }
    }

    pub fn zeros(n: usize, t: f64) -> Self {
        Self { values: vec![0.0; n], t }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Tridiagonal spatial operator. Row `i` reads
/// `lower[i] * u[i-1] + diag[i] * u[i] + upper[i] * u[i+1]`;
/// `lower[0]` and `upper[n-1]` are stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    bc: Option<BoundaryCondition>,
}

/// Second-order central difference for `u_xx` with the requested closure.
pub fn build_diffusion_operator(grid: &SpatialGrid, bc: BoundaryCondition) -> Result<DiscreteOperator> {
    if grid.nx() < 3 {
        return Err(Error::InvalidGrid(format!("nx = {}", grid.nx())));
    }
    let n = bc.unknown_count(grid);
    let inv = 1.0 / (grid.dx() * grid.dx());
    let mut lower = vec![inv; n];
    let diag = vec![-2.0 * inv; n];
    let mut upper = vec![inv; n];
    lower[0] = 0.0;
    upper[n - 1] = 0.0;
    if bc == BoundaryCondition::NeumannHomogeneous {
        // ghost node u[-1] = u[1] (and symmetrically on the right)
        upper[0] = 2.0 * inv;
        lower[n - 1] = 2.0 * inv;
    }
    Ok(DiscreteOperator { lower, diag, upper, bc: Some(bc) })
}

impl DiscreteOperator {
    /// General tridiagonal operator from its three diagonals (all of length `n`).
    pub fn tridiagonal(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::Dimension { expected: 1, found: 0 });
        }
        for v in [&lower, &upper] {
            if v.len() != n {
                return Err(Error::Dimension { expected: n, found: v.len() });
            }
        }
        let (mut lower, mut upper) = (lower, upper);
        lower[0] = 0.0;
        upper[n - 1] = 0.0;
        Ok(Self { lower, diag, upper, bc: None })
    }

    /// One-unknown operator `L u = lambda u`, the scalar test equation.
    pub fn scalar(lambda: f64) -> Self {
        Self { lower: vec![0.0], diag: vec![lambda], upper: vec![0.0], bc: None }
    }

    pub fn zero(n: usize) -> Self {
        Self { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n], bc: None }
    }

    pub fn unknown_count(&self) -> usize {
        self.diag.len()
    }

    pub fn bc(&self) -> Option<BoundaryCondition> {
        self.bc
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_zero(&self) -> bool {
        self.diag.iter().chain(&self.lower).chain(&self.upper).all(|&v| v == 0.0)
    }

    /// `out = L u`.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.diag.len();
        debug_assert_eq!(u.len(), n);
        debug_assert_eq!(out.len(), n);
        if n == 1 {
            out[0] = self.diag[0] * u[0];
            return;
        }
        out[0] = self.diag[0] * u[0] + self.upper[0] * u[1];
        for i in 1..n - 1 {
            out[i] = self.lower[i] * u[i - 1] + self.diag[i] * u[i] + self.upper[i] * u[i + 1];
        }
        out[n - 1] = self.lower[n - 1] * u[n - 2] + self.diag[n - 1] * u[n - 1];
    }

    pub fn apply_slice(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        let mut out = vec![0.0; u.len()];
        self.apply_into(u, &mut out);
        Ok(out)
    }

    /// `L^power u` by repeated application. The time stamp is carried over.
    pub fn apply(&self, u: &Field, power: u32) -> Result<Field> {
        if !(1..=4).contains(&power) {
            return Err(Error::Domain(format!("operator power {power} outside 1..=4")));
        }
        self.check_len(u.len())?;
        let mut cur = u.values.clone();
        let mut next = vec![0.0; cur.len()];
        for _ in 0..power {
            self.apply_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(Field::new(cur, u.t))
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if n != self.diag.len() {
            return Err(Error::Dimension { expected: self.diag.len(), found: n });
        }
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j + 1 == i {
                self.lower[i]
            } else if i + 1 == j {
                self.upper[i]
            } else {
                0.0
            }
        })
    }

    /// Positive weights `w` for which `diag(w) L` is symmetric: all ones for
    /// Dirichlet, trapezoidal end weights of one half for the Neumann closure.
    pub fn symmetrizing_weights(&self) -> Vec<f64> {
        let n = self.diag.len();
        let mut w = vec![1.0; n];
        if self.bc == Some(BoundaryCondition::NeumannHomogeneous) && n > 1 {
            w[0] = 0.5;
            w[n - 1] = 0.5;
        }
        w
    }
}

/// Eigenvalues of the operator from a dense eigensolve. Intended for small
/// instances; results are sorted by real part, most negative first.
pub fn operator_spectrum(op: &DiscreteOperator) -> Vec<Complex64> {
    let dense = op.to_dense();
    let symmetric = (0..op.unknown_count().saturating_sub(1)).all(|i| op.upper[i] == op.lower[i + 1]);
    let mut eig: Vec<Complex64> = if symmetric {
        dense.symmetric_eigenvalues().iter().map(|&v| Complex64::new(v, 0.0)).collect()
    } else {
        dense.complex_eigenvalues().iter().map(|c| Complex64::new(c.re, c.im)).collect()
    };
    eig.sort_by(|a, b| a.re.total_cmp(&b.re));
    eig
}

/// Closed-form spectrum of the Dirichlet diffusion operator,
/// `-(4/dx^2) sin^2(k pi dx / (2 L))` for `k = 1..nx-2`.
pub fn dirichlet_spectrum(grid: &SpatialGrid) -> Vec<f64> {
    let dx = grid.dx();
    let len = grid.length();
    (1..grid.nx() - 1)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI * dx / (2.0 * len)).sin();
            -4.0 / (dx * dx) * s * s
        })
        .collect()
}

/// Closed-form spectrum of the ghost-point Neumann operator,
/// `-(4/dx^2) sin^2(k pi dx / (2 L))` for `k = 0..nx-1`.
pub fn neumann_spectrum(grid: &SpatialGrid) -> Vec<f64> {
    let dx = grid.dx();
    let len = grid.length();
    (0..grid.nx())
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI * dx / (2.0 * len)).sin();
            -4.0 / (dx * dx) * s * s
        })
        .collect()
}

pub fn analytic_spectrum(grid: &SpatialGrid, bc: BoundaryCondition) -> Vec<f64> {
    match bc {
        BoundaryCondition::DirichletHomogeneous => dirichlet_spectrum(grid),
        BoundaryCondition::NeumannHomogeneous => neumann_spectrum(grid),
    }
}

/// Scalar type accepted by the Thomas solver.
pub trait ThomasScalar: Copy + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> {
    fn degenerate_pivot(&self) -> bool;
}

impl ThomasScalar for f64 {
    fn degenerate_pivot(&self) -> bool {
        *self == 0.0 || !self.is_finite()
    }
}

impl ThomasScalar for Complex64 {
    fn degenerate_pivot(&self) -> bool {
        (self.re == 0.0 && self.im == 0.0) || !self.is_finite()
    }
}

/// Thomas elimination without pivoting, in place: on return `rhs` holds the
/// solution and `upper` is overwritten with the eliminated super-diagonal.
pub fn thomas_in_place<T: ThomasScalar>(lower: &[T], diag: &[T], upper: &mut [T], rhs: &mut [T]) -> Result<()> {
    let n = diag.len();
    for len in [lower.len(), upper.len(), rhs.len()] {
        if len != n {
            return Err(Error::Dimension { expected: n, found: len });
        }
    }
    if n == 0 {
        return Ok(());
    }
    let mut pivot = diag[0];
    if pivot.degenerate_pivot() {
        return Err(Error::SingularSystem { row: 0 });
    }
    upper[0] = upper[0] / pivot;
    rhs[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * upper[i - 1];
        if pivot.degenerate_pivot() {
            return Err(Error::SingularSystem { row: i });
        }
        upper[i] = upper[i] / pivot;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - upper[i] * rhs[i + 1];
    }
    Ok(())
}

/// Solve the tridiagonal system with sub-diagonal `lower` (entry 0 ignored),
/// main diagonal `diag` and super-diagonal `upper` (last entry ignored).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let mut up = upper.to_vec();
    let mut x = rhs.to_vec();
    thomas_in_place(lower, diag, &mut up, &mut x)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nx: usize) -> SpatialGrid {
        SpatialGrid::new(0.0, 1.0, nx).unwrap()
    }

    #[test]
    fn rejects_small_grids() {
        assert!(matches!(SpatialGrid::new(0.0, 1.0, 2), Err(Error::InvalidGrid(_))));
        assert!(SpatialGrid::new(1.0, 0.0, 5).is_err());
    }

    #[test]
    fn dirichlet_stencil_nx5() {
        let g = grid(5);
        assert_eq!(g.dx(), 0.25);
        let op = build_diffusion_operator(&g, BoundaryCondition::DirichletHomogeneous).unwrap();
        assert_eq!(op.unknown_count(), 3);
        let inv = 16.0;
        assert_eq!(op.diag(), &[-2.0 * inv; 3]);
        assert_eq!(&op.upper()[..2], &[inv; 2]);
        assert_eq!(&op.lower()[1..], &[inv; 2]);
    }

    #[test]
    fn neumann_ghost_rows_nx4() {
        let g = grid(4);
        let op = build_diffusion_operator(&g, BoundaryCondition::NeumannHomogeneous).unwrap();
        let inv = 1.0 / (g.dx() * g.dx());
        assert_eq!(op.unknown_count(), 4);
        assert_eq!((op.diag()[0], op.upper()[0]), (-2.0 * inv, 2.0 * inv));
        assert_eq!((op.lower()[3], op.diag()[3]), (2.0 * inv, -2.0 * inv));
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let op = build_diffusion_operator(&grid(9), BoundaryCondition::NeumannHomogeneous).unwrap();
        let z = Field::zeros(9, 0.3);
        for p in 1..=4 {
            let r = op.apply(&z, p).unwrap();
            assert!(r.values.iter().all(|&v| v == 0.0));
            assert_eq!(r.t, 0.3);
        }
    }

    #[test]
    fn second_derivative_of_sine() {
        let g = grid(101);
        let bc = BoundaryCondition::DirichletHomogeneous;
        let op = build_diffusion_operator(&g, bc).unwrap();
        let xs = bc.unknown_positions(&g);
        let pi = std::f64::consts::PI;
        let u = Field::new(xs.iter().map(|&x| (pi * x).sin()).collect(), 0.0);
        let lu = op.apply(&u, 1).unwrap();
        let err = xs
            .iter()
            .zip(&lu.values)
            .map(|(&x, &v)| (v + pi * pi * (pi * x).sin()).abs())
            .fold(0.0, f64::max);
        // truncation error is pi^4 dx^2 / 12 at most
        assert!(err <= pi.powi(4) / 12.0 * g.dx() * g.dx() * 1.01, "err = {err}");
    }

    #[test]
    fn power_is_repeated_application() {
        let op = build_diffusion_operator(&grid(17), BoundaryCondition::NeumannHomogeneous).unwrap();
        let u = Field::new((0..17).map(|i| (i as f64 * 0.37).cos()).collect(), 0.0);
        let once = op.apply(&u, 1).unwrap();
        let twice = op.apply(&once, 1).unwrap();
        assert_eq!(op.apply(&u, 2).unwrap(), twice);
        assert!(op.apply(&u, 5).is_err());
        assert!(matches!(op.apply(&Field::zeros(3, 0.0), 1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn tridiagonal_examples() {
        let x = solve_tridiagonal(&[0.0; 4], &[1.0; 4], &[0.0; 4], &[1.0, -2.0, 3.5, 0.0]).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.5, 0.0]);

        let x = solve_tridiagonal(&[0.0, -1.0, -1.0], &[2.0; 3], &[-1.0, -1.0, 0.0], &[1.0, 0.0, 1.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_pivot_is_an_error() {
        let r = solve_tridiagonal(&[0.0, 1.0], &[1.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(r, Err(Error::SingularSystem { row: 1 }));
    }

    #[test]
    fn analytic_dirichlet_spectrum_nx5() {
        let g = grid(5);
        let op = build_diffusion_operator(&g, BoundaryCondition::DirichletHomogeneous).unwrap();
        let dense = operator_spectrum(&op);
        let closed = dirichlet_spectrum(&g);
        let mut closed_sorted = closed.clone();
        closed_sorted.sort_by(f64::total_cmp);
        for (d, c) in dense.iter().zip(&closed_sorted) {
            assert!(d.im == 0.0);
            assert!((d.re - c).abs() <= 1e-12 * c.abs());
        }
    }

    #[test]
    fn analytic_neumann_spectrum_matches_dense() {
        let g = grid(9);
        let op = build_diffusion_operator(&g, BoundaryCondition::NeumannHomogeneous).unwrap();
        let dense = operator_spectrum(&op);
        let mut closed = neumann_spectrum(&g);
        closed.sort_by(f64::total_cmp);
        assert_eq!(dense.len(), closed.len());
        for (d, c) in dense.iter().zip(&closed) {
            assert!(d.im.abs() < 1e-9);
            assert!((d.re - c).abs() <= 1e-9 * (1.0 + c.abs()), "{d} {c}");
        }
    }
}
