use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wrl_core::bounds::REPORT_HEADER;
use wrl_core::diagnostics::{mass_drift, maximum_principle, Slack};
use wrl_core::experiments::{
    oracle_cases, run, solve_to_dir, verify, write_diagnostics, write_report, ExperimentConfig,
};
use wrl_core::measures::{load_density, DomainKind, Grid1D};
use wrl_core::solvers::{solve_pme, InitialSpec, PmeConfig};
use wrl_core::transport::wasserstein;
use wrl_core::{Error, Result};

/// Wasserstein rate studies for nonlinear continuity equations.
#[derive(Parser)]
#[command(name = "wrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the base equation of a config and write its snapshots.
    Solve {
        config: PathBuf,
        /// Output directory; defaults to `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wasserstein distance between two density CSVs.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Expected domain of both files.
        #[arg(long, value_enum)]
        domain: Option<Domain>,
    },
    /// Run the parameter ladder of a config and write the rate report.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print bound comparisons as CSV and write the diagnostic checks.
    Verify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Coefficient of the cell width in the diagnostic slack.
        #[arg(long)]
        slack_dx: Option<f64>,
        /// Coefficient of the time step in the diagnostic slack.
        #[arg(long)]
        slack_dt: Option<f64>,
    },
    /// Quick internal consistency checks.
    Selftest,
}

/// Writes a line to stdout; a closed pipe is not an error for a report.
macro_rules! emit {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Domain {
    Line,
    Circle,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output.dir.clone())
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Solve { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let paths = solve_to_dir(&cfg, &out_dir(&cfg, out))?;
            for p in &paths {
                emit!("{}", p.display());
            }
            Ok(true)
        }
        Command::Distance { a, b, p, domain } => {
            let (f, g) = (load_density(&a)?, load_density(&b)?);
            if let Some(d) = domain {
                check_domain(&a, f.grid(), d)?;
                check_domain(&b, g.grid(), d)?;
            }
            emit!("{}", wasserstein(p, &f, &g)?);
            Ok(true)
        }
        Command::Sweep { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run(&cfg)?;
            write_report(&report, &out_dir(&cfg, out))?;
            emit!("{}", report.summary().trim_end());
            Ok(report.pass())
        }
        Command::Verify { config, out, slack_dx, slack_dt } => {
            let cfg = ExperimentConfig::load(&config)?;
            let default = Slack::default();
            let slack = Slack { dx: slack_dx.unwrap_or(default.dx), dt: slack_dt.unwrap_or(default.dt) };
            let report = run(&cfg)?;
            let bounds = report.bound_reports(cfg.experiment.t, cfg.experiment.margin_tol);
            emit!("{REPORT_HEADER}");
            for b in &bounds {
                emit!("{}", b.csv_row());
            }
            let checks = verify(&cfg, &slack)?;
            write_diagnostics(&checks, &out_dir(&cfg, out))?;
            for c in checks.iter().filter(|c| !c.pass) {
                eprintln!("check {} failed: max residual {:e} > tol {:e}", c.check, c.max_residual, c.tol);
            }
            Ok(bounds.iter().all(|b| b.pass) && checks.iter().all(|c| c.pass))
        }
        Command::Selftest => selftest(),
    }
}

fn check_domain(path: &Path, grid: &Grid1D, want: Domain) -> Result<()> {
    let got = match grid.kind() {
        DomainKind::Line { .. } => Domain::Line,
        DomainKind::Circle { .. } => Domain::Circle,
    };
    if got != want {
        return Err(Error::Invalid(format!("{} does not hold a density on the requested domain", path.display())));
    }
    Ok(())
}

const SELFTEST_PME: &str = r#"
[experiment]
id = "pme_exponent"
ladder = [2.4, 2.2, 2.1]
t = 0.05
snapshots = 5
[grid]
kind = "line"
a = -2.0
b = 2.0
n_cells = 64
"#;

const SELFTEST_FLOW: &str = r#"
[experiment]
id = "trotter_kato"
ladder = [0.1, 0.05, 0.025]
cases = 2
seed = 1
[grid]
kind = "circle"
r = 1.0
n_cells = 128
"#;

fn selftest() -> Result<bool> {
    let mut all = true;
    let mut line = |name: &str, pass: bool| {
        emit!("{name}: {}", if pass { "PASS" } else { "FAIL" });
        all &= pass;
    };
    let cases = oracle_cases(1, 40)?;
    line("transport oracle", cases.iter().all(|c| c.gap() < 1e-9));
    let grid = Grid1D::line(-2.0, 2.0, 128)?;
    let f0 = InitialSpec::Barenblatt { m: 2.0, t0: 0.05, diffusivity: 1.0 }.build(grid)?;
    let traj = solve_pme(&PmeConfig::new(2.0, grid, 0.05).with_snapshots(5), &f0)?;
    line("mass conservation", mass_drift(&traj).pass);
    line("maximum principle", maximum_principle(&traj).pass);
    line("exponent rows", run(&ExperimentConfig::from_toml(SELFTEST_PME)?)?.rows_pass());
    line("flow composition", run(&ExperimentConfig::from_toml(SELFTEST_FLOW)?)?.pass());
    Ok(all)
}
