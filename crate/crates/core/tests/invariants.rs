use rbfcn_core::grid::{DiscreteOperator, Field};
use rbfcn_core::harness::{convergence_study, integrate, integrate_with, IntegrateOptions, MeshRule, RunConfig, Scheme};
use rbfcn_core::problem::{builtin_problems, dirichlet_sine};
use rbfcn_core::rbf::RbfKind;
use rbfcn_core::shape::{EpsOrder, ShapeParamPlan, TargetOrder};
use rbfcn_core::startup::{richardson_cn_step, StartupKind, StartupStrategy};

fn rbf_cn_s3() -> Scheme {
    Scheme::RbfCn(ShapeParamPlan::new(RbfKind::Gaussian, EpsOrder::new(TargetOrder::Order4, 3).unwrap()))
}

fn exact_s3() -> StartupStrategy {
    StartupStrategy::for_approx_order(StartupKind::Exact, 3)
}

#[test]
fn zero_shape_parameter_is_crank_nicolson_on_every_problem() {
    let options = IntegrateOptions { keep_trajectory: true };
    for problem in builtin_problems() {
        for nt in [10, 40] {
            let base = RunConfig { scheme: Scheme::StandardCn, startup: StartupStrategy::initial_only(), nt, mesh_rule: MeshRule::Fixed(33) };
            let cn = integrate_with(&problem, &base, options).unwrap().trajectory.unwrap();
            for kind in RbfKind::ALL {
                let config = RunConfig { scheme: Scheme::RbfCnConstant { kind, eps2: 0.0 }, ..base };
                let rbf = integrate_with(&problem, &config, options).unwrap().trajectory.unwrap();
                for (a, b) in rbf.iter().zip(&cn) {
                    let diff = a.values.iter().zip(&b.values).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                    assert!(diff <= 1e-12 * b.max_abs(), "{} {kind} nt = {nt}: {diff}", problem.name);
                }
            }
        }
    }
}

#[test]
fn halving_the_step_reduces_error_at_the_scheme_order() {
    let p1 = dirichlet_sine();
    let cases = [
        (Scheme::StandardCn, StartupStrategy::initial_only(), 2u32),
        (Scheme::GaussLegendreIrk, StartupStrategy::initial_only(), 4),
        (rbf_cn_s3(), exact_s3(), 4),
    ];
    for (scheme, startup, p) in cases {
        let report = convergence_study(&p1, scheme, startup, &[64, 128, 256], MeshRule::Coupled(p)).unwrap();
        for pair in report.rows.windows(2) {
            let ratio = pair[0].global_error / pair[1].global_error;
            assert!(ratio >= 2f64.powf(p as f64 - 0.5), "{scheme} nt {} -> {}: ratio {ratio}", pair[0].nt, pair[1].nt);
        }
    }
}

#[test]
fn richardson_cn_amplifies_stiff_modes() {
    // (4 R(z/2)^2 - R(z)) / 3 -> 5/3 as z -> -inf, so it only suits a few startup steps
    let op = DiscreteOperator::scalar(-1e8);
    let u = Field::new(vec![1.0], 0.0);
    let g = richardson_cn_step(&op, &u, 1.0).unwrap().values[0];
    assert!((g - 5.0 / 3.0).abs() < 1e-6, "{g}");
    let mild = richardson_cn_step(&DiscreteOperator::scalar(-1.0), &u, 0.1).unwrap().values[0];
    assert!((mild - (-0.1f64).exp()).abs() < 1e-6);
}

#[test]
fn coupled_mesh_error_is_temporal() {
    let p1 = dirichlet_sine();
    for (scheme, startup, p, nt) in [(Scheme::StandardCn, StartupStrategy::initial_only(), 2u32, 64), (rbf_cn_s3(), exact_s3(), 4, 32)] {
        let coupled = integrate(&p1, &RunConfig { scheme, startup, nt, mesh_rule: MeshRule::Coupled(p) }).unwrap();
        let refined = integrate(&p1, &RunConfig { scheme, startup, nt, mesh_rule: MeshRule::Fixed(2 * (coupled.nx - 1) + 1) }).unwrap();
        let (a, b) = (coupled.global_error.unwrap(), refined.global_error.unwrap());
        assert!((a - b).abs() < 0.25 * a, "{scheme}: {a} vs {b}");
    }
}

#[test]
fn timing_grows_with_work() {
    let report = convergence_study(&dirichlet_sine(), rbf_cn_s3(), exact_s3(), &[32, 64, 128], MeshRule::Coupled(4)).unwrap();
    for row in &report.rows {
        assert!(row.cpu_seconds > 0.0);
    }
    for pair in report.rows.windows(2) {
        assert!(pair[1].nt * pair[1].nx > pair[0].nt * pair[0].nx);
        assert!(pair[1].cpu_seconds > pair[0].cpu_seconds, "{} s then {} s", pair[0].cpu_seconds, pair[1].cpu_seconds);
    }
}

#[test]
fn csv_is_deterministic_apart_from_timing() {
    let run = || {
        convergence_study(&dirichlet_sine(), rbf_cn_s3(), exact_s3(), &[16, 32], MeshRule::Coupled(4)).unwrap().to_csv_string().unwrap()
    };
    let strip = |csv: String| -> Vec<String> {
        csv.lines()
            .map(|line| {
                let mut fields: Vec<&str> = line.split(',').collect();
                if fields.len() == 8 && !line.starts_with('#') {
                    fields[5] = "";
                }
                fields.join(",")
            })
            .collect()
    };
    assert_eq!(strip(run()), strip(run()));
}
