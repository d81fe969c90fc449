use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levy_multiscale::finance::{bs_oracle, effective_vol_quadratic, merton_hara_closed_form, merton_hbar, price_mc};
use levy_multiscale::harness::config::{ExperimentConfig, ProblemKind};
use levy_multiscale::harness::experiment::{
    check_driver, corrector_rate, estimate_measure, fast_config, merton_sweep, run_experiment,
};
use levy_multiscale::harness::parse_config;
use levy_multiscale::hjb::{effective_solve, pide_solve, SolverGrids};
use levy_multiscale::jump::simulate_fast_path;
use levy_multiscale::{Error, FastProcessConfig, Result};

/// Multiscale control with a fast jump-driven volatility factor.
#[derive(Parser)]
#[command(name = "levy-multiscale", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `experiment.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the invariant measure of the fast factor.
    Invariant(Io),
    /// Approximate correctors of the frozen Merton Hamiltonian.
    Corrector(Io),
    /// Solve the epsilon-dependent HJB equation for every configured epsilon.
    SolveEps(Io),
    /// Solve the averaged HJB equation.
    SolveEffective(Io),
    /// Monte Carlo prices for every epsilon against the effective price.
    Price(Io),
    /// Merton values for every epsilon against the closed form.
    Merton(Io),
    /// Run the configured experiment and write its report and plot.
    Converge(Io),
    /// Check the assumptions on the Levy measure.
    CheckAssumptions(Io),
}

fn load(io: &Io) -> Result<(ExperimentConfig, PathBuf)> {
    let text = std::fs::read_to_string(&io.config)?;
    let cfg = parse_config(&text)?;
    let out = io.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn write(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Invariant(io) => {
            let (cfg, out) = load(&io)?;
            check_driver(&cfg)?;
            let mu = estimate_measure(&cfg)?;
            let p = out.join("invariant.csv");
            mu.write_csv(&p)?;
            println!("wrote {}", p.display());
            let path = simulate_fast_path(&FastProcessConfig::new(
                cfg.levy,
                cfg.invariant.lambda,
                0.0,
                cfg.invariant.burn_in,
                cfg.seed(),
            ))?;
            let p = out.join("path.csv");
            path.write_csv(&p)?;
            println!("wrote {}", p.display());
        }
        Command::Corrector(io) => {
            let (cfg, out) = load(&io)?;
            check_driver(&cfg)?;
            let (_, lines) = corrector_rate(&cfg)?;
            write(&out.join("corrector.csv"), "delta,y,chi_delta,delta_chi_delta,H_bar,residual", &lines)?;
        }
        Command::SolveEps(io) => {
            let (cfg, out) = load(&io)?;
            check_driver(&cfg)?;
            let grids = cfg.grid.solver_grids()?;
            let problem = match cfg.problem.kind {
                ProblemKind::Pricing => cfg.problem.pricing_spec().control_problem(),
                ProblemKind::Merton => {
                    let m = cfg.problem.merton_spec()?;
                    let mu = estimate_measure(&cfg)?;
                    m.control_problem(merton_hbar(&m, &mu))
                }
            };
            for (k, &eps) in cfg.epsilons.iter().enumerate() {
                let f = pide_solve(&problem, &cfg.levy, eps, &grids)?;
                let d = f.diagnostics;
                log::info!(
                    "epsilon={eps}: dt={} steps={} extrapolated jump mass={}",
                    d.dt,
                    d.steps,
                    d.extrapolated_mass
                );
                let p = out.join(format!("field_eps_{k}.csv"));
                f.write_csv(&p)?;
                println!("wrote {} (epsilon = {eps})", p.display());
            }
        }
        Command::SolveEffective(io) => {
            let (cfg, out) = load(&io)?;
            check_driver(&cfg)?;
            let mu = estimate_measure(&cfg)?;
            let problem = match cfg.problem.kind {
                ProblemKind::Pricing => cfg.problem.pricing_spec().control_problem(),
                ProblemKind::Merton => {
                    let m = cfg.problem.merton_spec()?;
                    m.control_problem(merton_hbar(&m, &mu))
                }
            };
            let grids = SolverGrids {
                time_steps: Some(cfg.grid.effective_steps),
                ..cfg.grid.solver_grids()?
            };
            let f = effective_solve(&problem, &mu, &grids)?;
            let p = out.join("field_effective.csv");
            f.write_csv(&p)?;
            println!("wrote {}", p.display());
        }
        Command::Price(io) => {
            let (cfg, out) = load(&io)?;
            check_driver(&cfg)?;
            let spec = cfg.problem.pricing_spec();
            let mu = estimate_measure(&cfg)?;
            let eff = bs_oracle(&spec, effective_vol_quadratic(&spec.sigma, &mu), 0.0, spec.x0);
            let mut rows = Vec::new();
            for &eps in &cfg.epsilons {
                let e = price_mc(&spec, eps, &fast_config(&cfg, eps), cfg.mc.paths)?;
                rows.push(format!("{eps},{},{},{eff},{}", e.mean, e.std_error, (e.mean - eff).abs()));
            }
            write(&out.join("price.csv"), "epsilon,estimate,std_error,effective_price,gap", &rows)?;
        }
        Command::Merton(io) => {
            let (cfg, out) = load(&io)?;
            check_driver(&cfg)?;
            let m = cfg.problem.merton_spec()?;
            let mu = estimate_measure(&cfg)?;
            let sweep = merton_sweep(&cfg, &mu)?;
            let exact = merton_hara_closed_form(&m, &mu, 0.0, m.w0)?;
            let mut rows = Vec::new();
            for (f, row) in sweep.fields.iter().zip(&sweep.rows) {
                let v = f.interpolate(0.0, m.w0, 0.0);
                rows.push(format!("{},{v},{},{exact},{}", row.epsilon, row.grid_tol, (v - exact).abs()));
            }
            write(&out.join("merton.csv"), "epsilon,estimate,std_error,effective_price,gap", &rows)?;
            write(&out.join("merton_growth.csv"), "epsilon,growth_ratio,bound", &sweep.growth)?;
        }
        Command::Converge(io) => {
            let (cfg, out) = load(&io)?;
            let res = run_experiment(&cfg, &out)?;
            for f in &res.files {
                println!("wrote {}", f.display());
            }
            for r in &res.report.rows {
                println!(
                    "epsilon={} gap={} std_error={} grid_tol={}",
                    r.epsilon, r.gap, r.std_error, r.grid_tol
                );
            }
            println!(
                "monotone={} final_gap={}",
                res.report.monotone_flag, res.report.final_gap
            );
        }
        Command::CheckAssumptions(io) => {
            let (cfg, out) = load(&io)?;
            let report = cfg.levy.check_assumptions();
            let text = report.summary();
            std::fs::write(out.join("assumptions.txt"), format!("{text}\n"))?;
            println!("{text}");
            if !report.passes() {
                return Err(Error::Assumption(text));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(v) = std::env::var("LEVY_MULTISCALE_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: LEVY_MULTISCALE_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
