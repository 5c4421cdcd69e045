//! Amplification factors of CN-type steps and stability checks.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::DiscreteOperator;

/// Tolerance above 1 before a mode counts as growing.
pub const GROWTH_TOL: f64 = 1e-12;
/// Largest system for the dense step-matrix check.
pub const DENSE_LIMIT: usize = 256;

/// `G = (1 + a lambda) / (1 - a lambda)`.
pub fn amplification(a: f64, lambda: Complex64) -> Result<Complex64> {
    let den = Complex64::new(1.0, 0.0) - lambda * a;
    if den.norm() <= f64::EPSILON {
        return Err(Error::SingularAmplification);
    }
    Ok((Complex64::new(1.0, 0.0) + lambda * a) / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeReport {
    pub index: usize,
    pub a: f64,
    pub lambda: Complex64,
    pub modulus: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StabilityReport {
    pub violations: Vec<ModeReport>,
    /// Modes with `|G| = 1` up to round-off.
    pub neutral: Vec<ModeReport>,
    pub pairs_checked: usize,
    pub max_modulus: f64,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every `(lambda_k, a)` pair. Repeated `a` values are checked once.
/// A pole (`a lambda = 1`) is reported as a violation with infinite modulus.
pub fn check_stability(spectrum: &[Complex64], a_values: &[f64]) -> Result<StabilityReport> {
    if let Some(&bad) = a_values.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Domain(format!("step coefficient {bad} is not positive")));
    }
    let mut a_sorted = a_values.to_vec();
    a_sorted.sort_by(f64::total_cmp);
    a_sorted.dedup();
    let mut report = StabilityReport::default();
    for &a in &a_sorted {
        for (index, &lambda) in spectrum.iter().enumerate() {
            report.pairs_checked += 1;
            let modulus = match amplification(a, lambda) {
                Ok(g) => g.norm(),
                Err(_) => f64::INFINITY,
            };
            report.max_modulus = report.max_modulus.max(modulus);
            let mode = ModeReport { index, a, lambda, modulus };
            if modulus > 1.0 + GROWTH_TOL {
                report.violations.push(mode);
            } else if (modulus - 1.0).abs() <= GROWTH_TOL {
                report.neutral.push(mode);
            }
        }
    }
    Ok(report)
}

pub fn real_spectrum(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// Norms of the dense step matrix `M = (I - D_a L)^{-1} (I + D_a L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMatrixNorms {
    /// Plain spectral norm.
    pub euclidean: f64,
    /// Spectral norm in the inner product `<x, y> = x^T W D_a^{-1} y`, with `W`
    /// the weights that make `W L` symmetric; at most 1 whenever `W L` is
    /// negative semi-definite.
    pub energy: f64,
}

pub fn step_matrix_norms(op: &DiscreteOperator, a: &[f64]) -> Result<StepMatrixNorms> {
    let n = op.unknown_count();
    op.check_len(a.len())?;
    if n > DENSE_LIMIT {
        return Err(Error::Unsupported(format!("dense step matrix for {n} unknowns (limit {DENSE_LIMIT})")));
    }
    if let Some(&bad) = a.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("step coefficient {bad} is not positive")));
    }
    let l = op.to_dense();
    let dl = DMatrix::from_fn(n, n, |i, j| a[i] * l[(i, j)]);
    let id = DMatrix::<f64>::identity(n, n);
    let lhs = &id - &dl;
    let rhs = &id + &dl;
    let m = lhs.lu().solve(&rhs).ok_or(Error::SingularSystem { row: 0 })?;
    let euclidean = m.clone().svd(false, false).singular_values.max();
    let w = op.symmetrizing_weights();
    let p_sqrt: Vec<f64> = w.iter().zip(a).map(|(wi, ai)| (wi / ai).sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| p_sqrt[i] * m[(i, j)] / p_sqrt[j]);
    let energy = scaled.svd(false, false).singular_values.max();
    Ok(StepMatrixNorms { euclidean, energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_diffusion_operator, dirichlet_spectrum, BoundaryCondition, SpatialGrid};

    #[test]
    fn amplification_values() {
        assert_eq!(amplification(0.3, Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(1.0, 0.0));
        let g = amplification(0.05, Complex64::new(-1.0, 0.0)).unwrap();
        assert!((g.re - 0.95 / 1.05).abs() < 1e-15 && g.im == 0.0);
        assert_eq!(amplification(0.5, Complex64::new(2.0, 0.0)), Err(Error::SingularAmplification));
        assert!((amplification(0.7, Complex64::new(0.0, 1.0)).unwrap().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_spectrum_is_stable() {
        let g = SpatialGrid::new(0.0, 1.0, 101).unwrap();
        let r = check_stability(&real_spectrum(&dirichlet_spectrum(&g)), &[1e-4, 0.01, 0.5, 10.0]).unwrap();
        assert!(r.is_stable());
        assert!(r.neutral.is_empty());
        assert_eq!(r.pairs_checked, 4 * 99);
    }

    #[test]
    fn growing_and_neutral_modes_are_flagged() {
        let r = check_stability(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)], &[0.1]).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].index, 0);
        assert_eq!(r.neutral.len(), 1);
        assert_eq!(r.neutral[0].index, 1);
        let pole = check_stability(&[Complex64::new(10.0, 0.0)], &[0.1]).unwrap();
        assert_eq!(pole.violations[0].modulus, f64::INFINITY);
        assert!(check_stability(&[Complex64::new(-1.0, 0.0)], &[0.0]).is_err());
    }

    #[test]
    fn dense_norms_bounded_for_both_boundary_conditions() {
        for bc in [BoundaryCondition::DirichletHomogeneous, BoundaryCondition::NeumannHomogeneous] {
            let g = SpatialGrid::new(0.0, 1.0, 33).unwrap();
            let op = build_diffusion_operator(&g, bc).unwrap();
            let n = op.unknown_count();
            let uniform = step_matrix_norms(&op, &vec![0.01; n]).unwrap();
            assert!(uniform.energy <= 1.0 + 1e-10);
            let varying: Vec<f64> = (0..n).map(|i| 0.004 + 0.002 * (i as f64 / n as f64)).collect();
            let v = step_matrix_norms(&op, &varying).unwrap();
            assert!(v.energy <= 1.0 + 1e-10, "{bc:?} {v:?}");
        }
    }

    #[test]
    fn dense_norm_symmetric_uniform_case_is_spectral_radius() {
        let g = SpatialGrid::new(0.0, 1.0, 17).unwrap();
        let op = build_diffusion_operator(&g, BoundaryCondition::DirichletHomogeneous).unwrap();
        let a = 0.02;
        let norms = step_matrix_norms(&op, &vec![a; op.unknown_count()]).unwrap();
        let rho = dirichlet_spectrum(&g).iter().map(|&l| ((1.0 + a * l) / (1.0 - a * l)).abs()).fold(0.0, f64::max);
        assert!((norms.euclidean - rho).abs() < 1e-12);
        assert!((norms.energy - rho).abs() < 1e-12);
    }
}
