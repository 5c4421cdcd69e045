//! Flag parsing and validation. Nothing here touches the numerics beyond
//! building the configuration objects.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rbfcn_core::harness::{MeshRule, Scheme};
use rbfcn_core::problem::{find_problem, Problem};
use rbfcn_core::rbf::RbfKind;
use rbfcn_core::shape::{EpsOrder, Estimator, ShapeParamPlan, TargetOrder};
use rbfcn_core::startup::{StartupKind, StartupStrategy};

const DEFAULT_STUDY_NT: [usize; 5] = [16, 32, 64, 128, 256];
const DEFAULT_RUN_NT: usize = 64;
const DEFAULT_STABILITY_NX: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "rbfcn", version, about = "RBF-enhanced Crank-Nicolson integrations and convergence studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate once and report the global error.
    Run,
    /// Integrate for every entry of --nt and fit the convergence order.
    Study,
    /// Check the amplification factor over the operator spectrum.
    Stability,
    /// Print the built-in problems.
    ListProblems,
}

impl Command {
    fn token(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Study => "study",
            Command::Stability => "stability",
            Command::ListProblems => "list-problems",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Cn,
    RbfCn,
    RbfForward,
    RbfBackward,
    Irk,
    RichardsonCn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RbfArg {
    Gaussian,
    Mq,
    Imq,
}

impl From<RbfArg> for RbfKind {
    fn from(v: RbfArg) -> Self {
        match v {
            RbfArg::Gaussian => RbfKind::Gaussian,
            RbfArg::Mq => RbfKind::Mq,
            RbfArg::Imq => RbfKind::Imq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartupArg {
    Exact,
    RefinedCn,
    RichardsonCn,
    Irk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    BackwardDifference,
    OperatorPower,
}

impl From<EstimatorArg> for Estimator {
    fn from(v: EstimatorArg) -> Self {
        match v {
            EstimatorArg::BackwardDifference => Estimator::BackwardDifference,
            EstimatorArg::OperatorPower => Estimator::OperatorPower,
        }
    }
}

/// Every flag is optional so that flags which do not apply to the chosen
/// scheme can be rejected instead of silently ignored.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Problem name (see list-problems).
    #[arg(long, global = true, env = "RBFCN_PROBLEM", default_value = "p1")]
    pub problem: String,
    #[arg(long, global = true, env = "RBFCN_SCHEME", value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Radial basis function behind the scheme [default: gaussian].
    #[arg(long, global = true, env = "RBFCN_RBF", value_enum)]
    pub rbf: Option<RbfArg>,
    /// Local truncation order targeted by the shape parameter [default: 4].
    #[arg(long, global = true, env = "RBFCN_EPS_ORDER", value_parser = clap::value_parser!(u32).range(4..=5))]
    pub eps_order: Option<u32>,
    /// Accuracy of the time-derivative estimates [default: 3].
    #[arg(long, global = true, env = "RBFCN_APPROX_ORDER", value_parser = clap::value_parser!(u32).range(1..=4))]
    pub approx_order: Option<u32>,
    /// How the first levels are produced [default: irk].
    #[arg(long, global = true, env = "RBFCN_STARTUP", value_enum)]
    pub startup: Option<StartupArg>,
    /// Substeps per level for the refined-cn startup [default: 1].
    #[arg(long, global = true, env = "RBFCN_N0", value_parser = clap::value_parser!(u32).range(1..))]
    pub n0: Option<u32>,
    /// Step counts, comma separated; run takes exactly one.
    #[arg(long, global = true, env = "RBFCN_NT", value_delimiter = ',')]
    pub nt: Option<Vec<usize>>,
    /// Couple the mesh as dx = dt^(p/2) [default: 4].
    #[arg(long, global = true, env = "RBFCN_P", value_parser = clap::value_parser!(u32).range(1..))]
    pub p: Option<u32>,
    /// Fixed number of grid nodes instead of the coupled mesh.
    #[arg(long, global = true, env = "RBFCN_NX")]
    pub nx: Option<usize>,
    /// CSV destination; `-` writes to standard output after the table.
    #[arg(long, global = true, env = "RBFCN_OUT")]
    pub out: Option<PathBuf>,
    /// Constant squared shape parameter for every node.
    #[arg(long, global = true, env = "RBFCN_EPS2", allow_negative_numbers = true)]
    pub eps2: Option<f64>,
    #[arg(long, global = true, env = "RBFCN_ESTIMATOR", value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Largest |eps2| dt^2 allowed at any node [default: 0.5].
    #[arg(long, global = true, env = "RBFCN_CAP")]
    pub cap: Option<f64>,
    /// Relative size below which a node counts as zero [default: 1e-8].
    #[arg(long, global = true, env = "RBFCN_ZERO_TOL")]
    pub zero_tol: Option<f64>,
}

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

/// A validated invocation.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub command: Command,
    pub problem: Problem,
    pub scheme: Scheme,
    pub startup: StartupStrategy,
    pub nt: Vec<usize>,
    pub mesh_rule: MeshRule,
    pub out: Option<PathBuf>,
    /// `key=value` echo of every flag, written as the CSV comment line.
    pub echo: String,
}

pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    validate(&cli).map_err(|e| clap::Error::raw(clap::error::ErrorKind::ArgumentConflict, format!("{e}\n")))
}

pub fn validate(cli: &Cli) -> Result<CliConfig, UsageError> {
    let f = &cli.flags;
    let problem = find_problem(&f.problem).or_else(|e| usage(format!("--problem: {e}")))?;
    let scheme_arg = f.scheme.unwrap_or(SchemeArg::RbfCn);
    let scheme_name = scheme_arg.to_possible_value().expect("no skipped variants").get_name().to_owned();

    let (scheme, startup) = match scheme_arg {
        SchemeArg::Cn | SchemeArg::Irk | SchemeArg::RichardsonCn => {
            reject_shape_flags(f, &scheme_name, true)?;
            reject_startup_flags(f, &scheme_name)?;
            let scheme = match scheme_arg {
                SchemeArg::Cn => Scheme::StandardCn,
                SchemeArg::Irk => Scheme::GaussLegendreIrk,
                _ => Scheme::RichardsonCn,
            };
            (scheme, StartupStrategy::initial_only())
        }
        SchemeArg::RbfForward | SchemeArg::RbfBackward => {
            let Some(eps2) = f.eps2 else {
                return usage(format!("--scheme {scheme_name} requires --eps2"));
            };
            reject_shape_flags(f, &scheme_name, false)?;
            reject_startup_flags(f, &scheme_name)?;
            let kind = f.rbf.unwrap_or(RbfArg::Gaussian).into();
            let scheme = if scheme_arg == SchemeArg::RbfForward {
                Scheme::RbfForward { kind, eps2 }
            } else {
                Scheme::RbfBackward { kind, eps2 }
            };
            (scheme, StartupStrategy::initial_only())
        }
        SchemeArg::RbfCn => match f.eps2 {
            Some(eps2) => {
                reject_shape_flags(f, "rbf-cn with --eps2", false)?;
                reject_startup_flags(f, "rbf-cn with --eps2")?;
                let kind = f.rbf.unwrap_or(RbfArg::Gaussian).into();
                (Scheme::RbfCnConstant { kind, eps2 }, StartupStrategy::initial_only())
            }
            None => adaptive(f)?,
        },
    };

    let mesh_rule = match (cli.command, f.p, f.nx) {
        (_, Some(_), Some(_)) => return usage("--p conflicts with --nx: choose a coupled or a fixed mesh"),
        (Command::Stability, Some(_), None) => return usage("--p does not apply to stability, which uses --nx"),
        (Command::Stability, None, nx) => MeshRule::Fixed(nx.unwrap_or(DEFAULT_STABILITY_NX)),
        (_, _, Some(nx)) => MeshRule::Fixed(nx),
        (_, p, None) => MeshRule::Coupled(p.unwrap_or(4)),
    };
    if let MeshRule::Fixed(nx) = mesh_rule {
        if nx < 3 {
            return usage(format!("--nx {nx} must be at least 3"));
        }
    }

    let nt = match (cli.command, &f.nt) {
        (Command::Study, None) => DEFAULT_STUDY_NT.to_vec(),
        (_, None) => vec![DEFAULT_RUN_NT],
        (Command::Study, Some(list)) => list.clone(),
        (_, Some(list)) if list.len() == 1 => list.clone(),
        (command, Some(_)) => return usage(format!("--nt takes a single value with {}", command.token())),
    };
    if nt.is_empty() || nt.contains(&0) {
        return usage("--nt values must be positive");
    }
    if nt.windows(2).any(|w| w[1] <= w[0]) {
        return usage("--nt list must be strictly increasing");
    }
    if startup.steps_needed > nt[0] {
        return usage(format!(
            "--nt {} is shorter than the {} startup levels --approx-order {} needs",
            nt[0],
            startup.steps_needed,
            f.approx_order.unwrap_or(3)
        ));
    }

    let echo = echo(cli, &scheme_name, &scheme, startup, &nt, mesh_rule);
    Ok(CliConfig { command: cli.command, problem, scheme, startup, nt, mesh_rule, out: f.out.clone(), echo })
}

fn adaptive(f: &Flags) -> Result<(Scheme, StartupStrategy), UsageError> {
    let kind: RbfKind = f.rbf.unwrap_or(RbfArg::Gaussian).into();
    let eps_order = f.eps_order.unwrap_or(4);
    let s = f.approx_order.unwrap_or(3) as usize;
    let target = TargetOrder::from_int(eps_order).or_else(|e| usage(format!("--eps-order: {e}")))?;
    let order = EpsOrder::new(target, s).or_else(|e| usage(format!("--approx-order: {e}")))?;
    let estimator: Estimator = f.estimator.unwrap_or(EstimatorArg::BackwardDifference).into();
    if target == TargetOrder::Order5 && estimator == Estimator::BackwardDifference && s < 3 {
        return usage(format!(
            "--eps-order 5 conflicts with --approx-order {s}: backward differences need --approx-order >= 3 (or --estimator operator-power)"
        ));
    }
    let mut plan = ShapeParamPlan::new(kind, order).with_estimator(estimator);
    if let Some(cap) = f.cap {
        if !(cap > 0.0 && cap < 1.0) {
            return usage(format!("--cap {cap} must lie in (0, 1)"));
        }
        plan = plan.with_safeguard_cap(cap);
    }
    if let Some(tol) = f.zero_tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return usage(format!("--zero-tol {tol} must be positive"));
        }
        plan = plan.with_zero_tol(tol);
    }
    plan.validate().or_else(|e| usage(e.to_string()))?;

    let startup_kind = match f.startup.unwrap_or(StartupArg::Irk) {
        StartupArg::Exact => StartupKind::Exact,
        StartupArg::RefinedCn => StartupKind::RefinedCn { n0: f.n0.unwrap_or(1) as usize },
        StartupArg::RichardsonCn => StartupKind::RichardsonCn,
        StartupArg::Irk => StartupKind::GaussLegendreIrk,
    };
    if f.n0.is_some() && !matches!(startup_kind, StartupKind::RefinedCn { .. }) {
        return usage(format!("--n0 requires --startup refined-cn, not --startup {}", startup_kind.token()));
    }
    Ok((Scheme::RbfCn(plan), StartupStrategy::for_approx_order(startup_kind, s)))
}

fn reject_shape_flags(f: &Flags, scheme: &str, rbf_too: bool) -> Result<(), UsageError> {
    let given = [
        ("--rbf", rbf_too && f.rbf.is_some()),
        ("--eps2", rbf_too && f.eps2.is_some()),
        ("--eps-order", f.eps_order.is_some()),
        ("--approx-order", f.approx_order.is_some()),
        ("--estimator", f.estimator.is_some()),
        ("--cap", f.cap.is_some()),
        ("--zero-tol", f.zero_tol.is_some()),
    ];
    match given.iter().find(|(_, set)| *set) {
        Some((flag, _)) => usage(format!("{flag} does not apply to --scheme {scheme}")),
        None => Ok(()),
    }
}

fn reject_startup_flags(f: &Flags, scheme: &str) -> Result<(), UsageError> {
    if f.startup.is_some() {
        return usage(format!("--startup does not apply to --scheme {scheme}, which keeps no history"));
    }
    if f.n0.is_some() {
        return usage(format!("--n0 does not apply to --scheme {scheme}"));
    }
    Ok(())
}

fn echo(cli: &Cli, scheme_name: &str, scheme: &Scheme, startup: StartupStrategy, nt: &[usize], mesh: MeshRule) -> String {
    let f = &cli.flags;
    let none = || "none".to_owned();
    let (rbf, eps_order, approx, estimator, cap, zero_tol, eps2) = match scheme {
        Scheme::RbfCn(p) => (
            p.kind.to_string(),
            p.order.target.as_int().to_string(),
            p.order.approx_order.to_string(),
            p.estimator.token().to_owned(),
            p.safeguard_cap.to_string(),
            format!("{:e}", p.u_zero_tol),
            none(),
        ),
        Scheme::RbfCnConstant { kind, eps2 } | Scheme::RbfForward { kind, eps2 } | Scheme::RbfBackward { kind, eps2 } => {
            (kind.to_string(), none(), none(), none(), none(), none(), eps2.to_string())
        }
        _ => (none(), none(), none(), none(), none(), none(), none()),
    };
    let (startup_name, n0) = match (scheme, startup.kind) {
        (Scheme::RbfCn(_), StartupKind::RefinedCn { n0 }) => (format!("refined-cn ({})", startup.kind.type_label()), n0.to_string()),
        (Scheme::RbfCn(_), kind) => (format!("{} ({})", kind.token(), kind.type_label()), none()),
        _ => (none(), none()),
    };
    let (p, nx) = match mesh {
        MeshRule::Coupled(p) => (p.to_string(), none()),
        MeshRule::Fixed(nx) => (none(), nx.to_string()),
    };
    let nt = nt.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
    let out = f.out.as_ref().map(|o| o.display().to_string()).unwrap_or_else(none);
    let mut s = String::new();
    write!(
        s,
        "command={} scheme={scheme_name} rbf={rbf} eps-order={eps_order} approx-order={approx} estimator={estimator} \
         cap={cap} zero-tol={zero_tol} eps2={eps2} startup={startup_name} n0={n0} startup-steps={} nt={nt} p={p} nx={nx} out={out}",
        cli.command.token(),
        startup.steps_needed,
    )
    .expect("writing to a String");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> Result<CliConfig, String> {
        let argv = std::iter::once("rbfcn").chain(args.split_whitespace());
        let cli = Cli::try_parse_from(argv).map_err(|e| e.to_string())?;
        validate(&cli).map_err(|e| e.0)
    }

    #[test]
    fn table_two_configuration() {
        let c = parse(
            "study --problem p1 --scheme rbf-cn --rbf gaussian --eps-order 4 --approx-order 3 --startup irk --nt 16,32,64,128,256,512 --p 4",
        )
        .unwrap();
        assert_eq!(c.nt.len(), 6);
        assert_eq!(c.mesh_rule, MeshRule::Coupled(4));
        assert_eq!(c.startup, StartupStrategy::for_approx_order(StartupKind::GaussLegendreIrk, 3));
        assert!(matches!(c.scheme, Scheme::RbfCn(p) if p.kind == RbfKind::Gaussian && p.order.approx_order == 3));
    }

    #[test]
    fn plain_cn_keeps_no_history() {
        let c = parse("run --problem p1 --scheme cn --nt 64").unwrap();
        assert_eq!(c.scheme, Scheme::StandardCn);
        assert_eq!(c.startup, StartupStrategy::initial_only());
        assert_eq!(c.nt, vec![64]);
    }

    #[test]
    fn refined_startup_takes_n0() {
        let c = parse("study --startup refined-cn --n0 40 --approx-order 2").unwrap();
        assert_eq!(c.startup.kind, StartupKind::RefinedCn { n0: 40 });
        assert!(c.echo.contains("Type I"));
    }

    #[test]
    fn offending_pairs_are_named() {
        let cases = [
            ("run --scheme cn --rbf mq", ["--rbf", "--scheme cn"]),
            ("run --startup irk --n0 4", ["--n0", "--startup"]),
            ("study --eps-order 5 --approx-order 2", ["--eps-order", "--approx-order"]),
            ("run --p 4 --nx 65", ["--p", "--nx"]),
            ("run --scheme irk --startup exact", ["--startup", "--scheme irk"]),
            ("run --scheme rbf-forward", ["--scheme rbf-forward", "--eps2"]),
            ("run --nt 16,32", ["--nt", "run"]),
            ("run --eps2 1 --approx-order 2", ["--approx-order", "--eps2"]),
        ];
        for (args, names) in cases {
            let err = parse(args).unwrap_err();
            for name in names {
                assert!(err.contains(name), "{args}: {err}");
            }
        }
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for args in ["run --eps-order 6", "run --approx-order 0", "run --approx-order 5", "run --rbf tps", "run --scheme bdf2", "run --startup euler"] {
            assert!(parse(args).is_err(), "{args}");
        }
        assert!(parse("run --cap 1.5").unwrap_err().contains("--cap"));
        assert!(parse("run --problem p9").unwrap_err().contains("--problem"));
        assert!(parse("study --nt 32,16").unwrap_err().contains("increasing"));
    }

    #[test]
    fn echo_names_every_flag() {
        let c = parse("study --scheme cn --nt 8,16").unwrap();
        for flag in ["scheme", "rbf", "eps-order", "approx-order", "startup", "n0", "nt", "p", "out", "eps2", "estimator", "cap", "zero-tol", "nx"] {
            assert!(c.echo.split(' ').any(|kv| kv.starts_with(&format!("{flag}="))), "{flag}: {}", c.echo);
        }
    }
}
