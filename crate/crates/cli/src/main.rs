mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use config::{parse_args, CliConfig, Command};
use rbfcn_core::harness::{convergence_study, run_stability, ConvergenceReport, RunConfig};
use rbfcn_core::problem::builtin_problems;
use rbfcn_core::Error;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let config = match parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    log::info!("{}", config.echo);
    match execute(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already carry their source in the message
            match e.downcast_ref::<Error>() {
                Some(core) => eprintln!("error: {core}"),
                None => eprintln!("error: {e:#}"),
            }
            let config_error = e
                .downcast_ref::<Error>()
                .is_some_and(|c| matches!(c, Error::InvalidConfig(_) | Error::NotReady { .. } | Error::Unsupported(_)));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}

fn execute(config: &CliConfig) -> anyhow::Result<()> {
    match config.command {
        Command::ListProblems => {
            for p in builtin_problems() {
                println!("{:<4} {}", p.name, p.description);
            }
            Ok(())
        }
        Command::Run | Command::Study => {
            let mut report = convergence_study(&config.problem, config.scheme, config.startup, &config.nt, config.mesh_rule)?;
            report.config = config.echo.clone();
            for row in report.rows.iter().filter(|r| r.summary.nx_capped) {
                log::warn!("nt = {}: coupled mesh capped at nx = {}", row.nt, row.nx);
            }
            println!("# problem={} {}", report.problem, report.config);
            print!("{}", report.to_table());
            write_report(&report, config.out.as_deref())
        }
        Command::Stability => {
            let nt = config.nt[0];
            let run = RunConfig { scheme: config.scheme, startup: config.startup, nt, mesh_rule: config.mesh_rule };
            let summary = rbfcn_core::harness::integrate(&config.problem, &run)?;
            let report = run_stability(&config.problem, &summary)?;
            println!(
                "{} nx={} nt={} scheme={}: a in [{:.6e}, {:.6e}], {} pairs checked, {} violations, max |G| = {:.12}",
                config.problem.name,
                summary.nx,
                nt,
                config.scheme,
                summary.a_min,
                summary.a_max,
                report.pairs_checked,
                report.violations.len(),
                report.max_modulus
            );
            if report.is_stable() {
                Ok(())
            } else {
                anyhow::bail!("{} unstable modes", report.violations.len())
            }
        }
    }
}

fn write_report(report: &ConvergenceReport, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        None => Ok(()),
        Some(path) if path == Path::new("-") => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            report.write_csv(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            report.write_csv(&mut w)?;
            w.flush().with_context(|| format!("writing {}", path.display()))?;
            Ok(())
        }
    }
}
