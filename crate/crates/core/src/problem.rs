//! Model problems and their spatial discretization.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{build_diffusion_operator, BoundaryCondition, DiscreteOperator, Field, SpatialGrid};

pub type InitialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ExactFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type OperatorBuilder = Arc<dyn Fn(&SpatialGrid, BoundaryCondition) -> Result<DiscreteOperator> + Send + Sync>;

/// A linear problem `u_t = L u` on an interval with homogeneous boundary data.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub description: String,
    pub x_min: f64,
    pub x_max: f64,
    pub bc: BoundaryCondition,
    pub t_final: f64,
    pub initial: InitialFn,
    pub exact: Option<ExactFn>,
    pub operator: OperatorBuilder,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("domain", &(self.x_min, self.x_max))
            .field("bc", &self.bc)
            .field("t_final", &self.t_final)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl Problem {
    /// Heat equation `u_t = u_xx` with the given initial condition.
    pub fn heat(
        name: impl Into<String>,
        x_min: f64,
        x_max: f64,
        bc: BoundaryCondition,
        t_final: f64,
        initial: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            description: String::new(),
            x_min,
            x_max,
            bc,
            t_final,
            initial: Arc::new(initial),
            exact: None,
            operator: Arc::new(build_diffusion_operator),
        }
    }

    pub fn with_exact(mut self, exact: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn with_operator(
        mut self,
        builder: impl Fn(&SpatialGrid, BoundaryCondition) -> Result<DiscreteOperator> + Send + Sync + 'static,
    ) -> Self {
        self.operator = Arc::new(builder);
        self
    }

    pub fn with_description(mut self, text: impl Into<String>) -> Self {
        self.description = text.into();
        self
    }

    pub fn with_t_final(mut self, t_final: f64) -> Self {
        self.t_final = t_final;
        self
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Checks the domain, final time and, when present, that the exact solution
    /// matches the initial condition at a few sample points.
    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidConfig(format!("problem {}: empty domain", self.name)));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidConfig(format!("problem {}: t_final must be positive", self.name)));
        }
        if let Some(exact) = &self.exact {
            for k in 0..=16 {
                let x = self.x_min + self.length() * k as f64 / 16.0;
                let (e, i) = (exact(x, 0.0), (self.initial)(x));
                if (e - i).abs() > 1e-12 * (1.0 + i.abs()) {
                    return Err(Error::InvalidConfig(format!(
                        "problem {}: exact solution {e} differs from initial condition {i} at x = {x}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn discretize(&self, nx: usize) -> Result<Discretization> {
        let grid = SpatialGrid::new(self.x_min, self.x_max, nx)?;
        let op = (self.operator)(&grid, self.bc)?;
        let positions = self.bc.unknown_positions(&grid);
        if positions.len() != op.unknown_count() {
            return Err(Error::Dimension { expected: positions.len(), found: op.unknown_count() });
        }
        Ok(Discretization { problem: self.clone(), grid, op, positions })
    }
}

/// A problem bound to a grid: operator plus the coordinates of the unknowns.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub problem: Problem,
    pub grid: SpatialGrid,
    pub op: DiscreteOperator,
    pub positions: Vec<f64>,
}

impl Discretization {
    pub fn unknown_count(&self) -> usize {
        self.positions.len()
    }

    pub fn initial_field(&self) -> Field {
        Field::new(self.positions.iter().map(|&x| (self.problem.initial)(x)).collect(), 0.0)
    }

    pub fn exact_field(&self, t: f64) -> Option<Field> {
        let exact = self.problem.exact.as_ref()?;
        Some(Field::new(self.positions.iter().map(|&x| exact(x, t)).collect(), t))
    }

    /// Largest nodal deviation from the exact solution at `u.t`.
    pub fn max_error(&self, u: &Field) -> Option<f64> {
        let exact = self.problem.exact.as_ref()?;
        Some(
            self.positions
                .iter()
                .zip(&u.values)
                .fold(0.0_f64, |m, (&x, &v)| m.max((v - exact(x, u.t)).abs())),
        )
    }
}

/// `p1`: Dirichlet heat problem with `u = e^{-pi^2 t} sin(pi x)` on `[0, 1]`, `T = 1`.
pub fn dirichlet_sine() -> Problem {
    Problem::heat("p1", 0.0, 1.0, BoundaryCondition::DirichletHomogeneous, 1.0, |x| (PI * x).sin())
        .with_exact(|x, t| (-PI * PI * t).exp() * (PI * x).sin())
        .with_description("Dirichlet, u = exp(-pi^2 t) sin(pi x), T = 1")
}

/// `p2`: Neumann heat problem with `u = e^{-4 pi^2 t} cos(2 pi x)` on `[0, 1]`, `T = 0.1`.
/// The solution vanishes at `x = 1/4` and `x = 3/4` for all time.
pub fn neumann_cosine() -> Problem {
    Problem::heat("p2", 0.0, 1.0, BoundaryCondition::NeumannHomogeneous, 0.1, |x| (2.0 * PI * x).cos())
        .with_exact(|x, t| (-4.0 * PI * PI * t).exp() * (2.0 * PI * x).cos())
        .with_description("Neumann, u = exp(-4 pi^2 t) cos(2 pi x), T = 0.1")
}

pub fn builtin_problems() -> Vec<Problem> {
    vec![dirichlet_sine(), neumann_cosine()]
}

pub fn find_problem(name: &str) -> Result<Problem> {
    builtin_problems()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown problem '{name}' (expected p1 or p2)")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_exact_values() {
        let p1 = dirichlet_sine();
        let p2 = neumann_cosine();
        let e1 = p1.exact.as_ref().unwrap();
        let e2 = p2.exact.as_ref().unwrap();
        assert!((e1(0.5, 0.0) - 1.0).abs() < 1e-15);
        assert!((e1(0.5, 0.1) - 0.372_707_838_853_438).abs() < 1e-12);
        assert!(e2(0.25, 0.0).abs() < 1e-15);
        assert!((e2(0.0, 0.01) - 0.673_825_451_231_434).abs() < 1e-12);
        for p in builtin_problems() {
            p.validate().unwrap();
        }
    }

    #[test]
    fn mismatched_exact_is_rejected() {
        let p = dirichlet_sine().with_exact(|x, _| x);
        assert!(p.validate().is_err());
    }

    #[test]
    fn discretization_sizes() {
        let d1 = dirichlet_sine().discretize(9).unwrap();
        assert_eq!(d1.unknown_count(), 7);
        let d2 = neumann_cosine().discretize(9).unwrap();
        assert_eq!(d2.unknown_count(), 9);
        assert_eq!(d2.max_error(&d2.initial_field()), Some(0.0));
        assert!(find_problem("p3").is_err());
    }
}
