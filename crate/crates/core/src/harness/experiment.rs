//! Experiment runners behind the command line.
//!
//! Every stochastic quantity is keyed by the first configured seed. Monte
//! Carlo for the slow system uses that seed for every epsilon (common
//! random numbers); the invariant measure is sampled with the seed plus
//! one so that it is independent of the pricing paths.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::plot::emit_plot;
use super::report::{ConvergenceReport, ReportRow};
use crate::control::hamiltonian_eval;
use crate::ergodicity::{stationary_cf_oracle, stationary_samples, InvariantMeasure, InvariantOptions};
use crate::error::{Error, Result};
use crate::finance::{
    bs_oracle, effective_vol_quadratic, merton_hara_closed_form, merton_hbar, merton_hmax, price_mc_grid,
};
use crate::generator::{
    approximate_corrector_sweep, lyapunov_drift_check, subordinator_counterexample, GeneratorQuadrature,
};
use crate::hjb::{effective_solve, pide_solve, sup_norm_gap, CompactBox, SolverGrids, ValueField};
use crate::jump::FastProcessConfig;
use crate::stats::ks_distance;

/// Report plus the files written.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ConvergenceReport,
    pub files: Vec<PathBuf>,
}

fn write_lines(path: &Path, header: &str, lines: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn check_driver(cfg: &ExperimentConfig) -> Result<()> {
    let report = cfg.levy.check_assumptions();
    if report.passes() {
        Ok(())
    } else {
        Err(Error::Assumption(report.summary()))
    }
}

/// Factor configuration at rate `1/epsilon` over the problem horizon.
pub fn fast_config(cfg: &ExperimentConfig, epsilon: f64) -> FastProcessConfig {
    let f = FastProcessConfig::new(cfg.levy, 1.0 / epsilon, 0.0, cfg.problem.horizon, cfg.seed());
    match cfg.mc.dt {
        Some(dt) => f.with_dt(dt),
        None => f,
    }
}

fn measure_config(cfg: &ExperimentConfig, lambda: f64, dt: Option<f64>) -> FastProcessConfig {
    let inv = &cfg.invariant;
    // default lambda * dt = 0.01 keeps the step bias of the stationary scale near alpha / 200
    let dt = dt.or(inv.dt).unwrap_or(0.01 / lambda);
    FastProcessConfig::new(cfg.levy, lambda, 0.0, inv.burn_in.max(2.0 * dt), cfg.seed().wrapping_add(1)).with_dt(dt)
}

fn invariant_options(cfg: &ExperimentConfig) -> InvariantOptions {
    InvariantOptions {
        n_nodes: cfg.invariant.nodes,
        chains: cfg.invariant.chains,
        stride: None,
        clip: cfg.invariant.clip,
    }
}

fn measure_from(cfg: &ExperimentConfig, fast: &FastProcessConfig) -> Result<InvariantMeasure> {
    let samples = stationary_samples(fast, cfg.invariant.burn_in, cfg.invariant.samples, &invariant_options(cfg))?;
    InvariantMeasure::from_samples(&samples, cfg.invariant.nodes, cfg.invariant.clip)
}

/// Empirical invariant measure from the `[invariant]` section.
pub fn estimate_measure(cfg: &ExperimentConfig) -> Result<InvariantMeasure> {
    measure_from(cfg, &measure_config(cfg, cfg.invariant.lambda, None))
}

/// Standard error of `int f dmu` from the sample count behind `mu`.
fn measure_se(mu: &InvariantMeasure, f: impl Fn(f64) -> f64) -> f64 {
    if mu.sample_count < 2 {
        return 0.0;
    }
    let m = mu.expectation(&f);
    let var = mu.expectation(|y| (f(y) - m).powi(2));
    (var / mu.sample_count as f64).sqrt()
}

fn y_window(cfg: &ExperimentConfig, mu: &InvariantMeasure) -> Vec<f64> {
    cfg.compact_box.y_quantiles.iter().map(|&q| mu.quantile(q)).collect()
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Monte Carlo prices against the closed-form effective price on the box.
/// Detail rows: `epsilon,t,x,y,estimate,std_error,effective_price,gap`.
pub fn pricing_sweep(cfg: &ExperimentConfig, mu: &InvariantMeasure) -> Result<(Vec<ReportRow>, Vec<String>)> {
    let spec = cfg.problem.pricing_spec();
    let s_tilde = effective_vol_quadratic(&spec.sigma, mu);
    let se_s = if s_tilde > 0.0 {
        measure_se(mu, |y| spec.sigma.eval(y).powi(2)) / (2.0 * s_tilde)
    } else {
        0.0
    };
    let ys = y_window(cfg, mu);
    let b = &cfg.compact_box;
    let results: Vec<Result<(ReportRow, Vec<String>)>> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let grid = price_mc_grid(&spec, eps, &fast_config(cfg, eps), cfg.mc.paths, &b.times, &b.x, &ys)?;
            let (mut gap, mut se) = (0.0f64, 0.0f64);
            let mut lines = Vec::new();
            for (ti, &t) in b.times.iter().enumerate() {
                for (yi, &y) in ys.iter().enumerate() {
                    for (xi, &x) in b.x.iter().enumerate() {
                        let e = grid.at(ti, yi, xi);
                        let eff = bs_oracle(&spec, s_tilde, t, x);
                        let eff_se = 0.5
                            * (bs_oracle(&spec, s_tilde + se_s, t, x) - bs_oracle(&spec, (s_tilde - se_s).max(0.0), t, x))
                                .abs();
                        let g = (e.mean - eff).abs();
                        gap = gap.max(g);
                        se = se.max(e.std_error.hypot(eff_se));
                        lines.push(format!("{eps},{t},{x},{y},{},{},{eff},{g}", e.mean, e.std_error));
                    }
                }
            }
            Ok((
                ReportRow {
                    epsilon: eps,
                    gap,
                    std_error: se,
                    grid_tol: 0.0,
                },
                lines,
            ))
        })
        .collect();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for r in results {
        let (row, l) = r?;
        rows.push(row);
        lines.extend(l);
    }
    Ok((rows, lines))
}

/// Result of the Merton sweep.
pub struct MertonSweep {
    pub rows: Vec<ReportRow>,
    /// `epsilon,growth_ratio,bound`
    pub growth: Vec<String>,
    pub effective: ValueField,
    pub fields: Vec<ValueField>,
}

/// PIDE solves for every epsilon against the averaged solve.
pub fn merton_sweep(cfg: &ExperimentConfig, mu: &InvariantMeasure) -> Result<MertonSweep> {
    let m = cfg.problem.merton_spec()?;
    let h_bar = merton_hbar(&m, mu);
    let problem = m.control_problem(h_bar);
    let grids = cfg.grid.solver_grids()?;
    let eff_grids = SolverGrids {
        time_steps: Some(cfg.grid.effective_steps),
        ..grids.clone()
    };
    let effective = effective_solve(&problem, mu, &eff_grids)?;
    let ys = y_window(cfg, mu);
    let (tlo, _) = bounds(&cfg.compact_box.times);
    let bx = CompactBox {
        t: (tlo, m.horizon),
        x: bounds(&cfg.compact_box.x),
        y: bounds(&ys),
    };
    let mut grid_tol: f64 = 0.0;
    for (ti, &t) in effective.t_grid.iter().enumerate() {
        for (xi, &w) in effective.x_grid.iter().enumerate() {
            if w >= bx.x.0 && w <= bx.x.1 && t >= bx.t.0 {
                let exact = merton_hara_closed_form(&m, mu, t, w)?;
                grid_tol = grid_tol.max((effective.at(ti, 0, xi) - exact).abs());
            }
        }
    }
    let bound = merton_hmax(&m).map(|h| m.a / m.gamma * (m.gamma * h * m.horizon).exp());
    let solved: Vec<Result<ValueField>> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| pide_solve(&problem, &cfg.levy, eps, &grids))
        .collect();
    let mut rows = Vec::new();
    let mut growth = Vec::new();
    let mut fields = Vec::new();
    for (&eps, f) in cfg.epsilons.iter().zip(solved) {
        let f = f?;
        rows.push(ReportRow {
            epsilon: eps,
            gap: sup_norm_gap(&f, &effective, &bx)?,
            std_error: 0.0,
            grid_tol,
        });
        growth.push(format!("{eps},{},{}", f.growth_ratio(), bound.unwrap_or(f64::NAN)));
        fields.push(f);
    }
    Ok(MertonSweep {
        rows,
        growth,
        effective,
        fields,
    })
}

const TABLE_HALF_WIDTH: f64 = 50.0;
const TABLE_POINTS: usize = 100_001;

/// Piecewise-linear interpolant of `f` on a uniform grid.
struct Tabulated {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl Tabulated {
    fn new(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Self {
        let step = (hi - lo) / (n - 1) as f64;
        Self {
            lo,
            step,
            values: (0..n).map(|k| f(lo + k as f64 * step)).collect(),
        }
    }

    /// `None` outside the table.
    fn eval(&self, y: f64) -> Option<f64> {
        let s = (y - self.lo) / self.step;
        if !(s >= 0.0) || s > (self.values.len() - 1) as f64 {
            return None;
        }
        let k = (s as usize).min(self.values.len() - 2);
        let t = s - k as f64;
        Some(self.values[k] + t * (self.values[k + 1] - self.values[k]))
    }
}

/// Abel correctors of the frozen Merton Hamiltonian.
/// Detail rows: `delta,y,chi_delta,delta_chi_delta,H_bar,residual`.
pub fn corrector_rate(cfg: &ExperimentConfig) -> Result<(Vec<ReportRow>, Vec<String>)> {
    let m = cfg.problem.merton_spec()?;
    let problem = m.control_problem(0.0);
    let c = &cfg.corrector;
    let exact = |y: f64| hamiltonian_eval(&problem, c.w, y, c.p, c.xx).0;
    // the corrector paths evaluate H hundreds of millions of times
    let table = Tabulated::new(&exact, -TABLE_HALF_WIDTH, TABLE_HALF_WIDTH, TABLE_POINTS);
    let h = |y: f64| table.eval(y).unwrap_or_else(|| exact(y));
    let mu = measure_from(cfg, &measure_config(cfg, 1.0, Some(c.dt)))?;
    let h_bar = mu.expectation(h);
    let h_se = measure_se(&mu, h);
    let mut deltas = c.deltas.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    let profiles = approximate_corrector_sweep(&cfg.levy, &deltas, &c.y, c.paths, cfg.seed(), c.dt, &h)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for p in &profiles {
        let scaled = p.scaled();
        for (k, &y) in p.y.iter().enumerate() {
            lines.push(format!(
                "{},{y},{},{},{h_bar},{}",
                p.delta,
                p.chi[k],
                scaled[k],
                scaled[k] + h_bar
            ));
        }
        rows.push(ReportRow {
            epsilon: p.delta,
            gap: p.residual(h_bar),
            std_error: p.std_error.iter().map(|s| s * p.delta).fold(0.0, f64::max),
            grid_tol: h_se,
        });
    }
    Ok((rows, lines))
}

/// Stationary law at each rate `1/epsilon`: characteristic function
/// against the closed form and KS distance to the first rate.
/// Detail rows: `epsilon,u,cf_re,cf_im,oracle_re,oracle_im,ks_to_first`.
pub fn ergodicity_check(cfg: &ExperimentConfig) -> Result<(Vec<ReportRow>, Vec<String>)> {
    let runs: Vec<Result<Vec<f64>>> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let fast = measure_config(cfg, 1.0 / eps, None);
            let burn = cfg.invariant.burn_in.max(5.0 * eps);
            stationary_samples(&fast, burn, cfg.invariant.samples, &invariant_options(cfg))
        })
        .collect();
    let samples = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (k, (&eps, s)) in cfg.epsilons.iter().zip(&samples).enumerate() {
        let ks = if k == 0 { 0.0 } else { ks_distance(&samples[0], s) };
        let n = s.len() as f64;
        let mut gap: f64 = 0.0;
        for &u in &cfg.ergodicity.cf_points {
            let (re, im) = s
                .iter()
                .fold((0.0, 0.0), |(a, b), &y| (a + (u * y).cos(), b + (u * y).sin()));
            let (re, im) = (re / n, im / n);
            let o = stationary_cf_oracle(&cfg.levy, u)?;
            gap = gap.max((re - o.re).hypot(im - o.im));
            lines.push(format!("{eps},{u},{re},{im},{},{},{ks}", o.re, o.im));
        }
        rows.push(ReportRow {
            epsilon: eps,
            gap,
            std_error: 1.0 / n.sqrt(),
            grid_tol: ks,
        });
    }
    Ok((rows, lines))
}

/// Lyapunov witnesses at `|y| = radius`. Rows: `radius,witness,passes`.
pub fn lyapunov_rows(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let q = GeneratorQuadrature::new(cfg.levy);
    cfg.ergodicity
        .radii
        .iter()
        .map(|&r| {
            let (w, ok) = lyapunov_drift_check(&q, cfg.ergodicity.q, r, &[-r, r])?;
            Ok(format!("{r},{w},{ok}"))
        })
        .collect()
}

/// Runs the configured experiment and writes its artifacts to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutput> {
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let echo = out.join("config.toml");
    std::fs::write(&echo, cfg.to_toml())?;
    files.push(echo);
    if cfg.kind != ExperimentKind::Counterexample {
        check_driver(cfg)?;
    }
    let (rows, title) = match cfg.kind {
        ExperimentKind::PricingConvergence => {
            let mu = estimate_measure(cfg)?;
            let (rows, lines) = pricing_sweep(cfg, &mu)?;
            let p = out.join("prices.csv");
            write_lines(&p, "epsilon,t,x,y,estimate,std_error,effective_price,gap", &lines)?;
            files.push(p);
            (rows, "pricing: Monte Carlo price vs effective price")
        }
        ExperimentKind::MertonConvergence => {
            let mu = estimate_measure(cfg)?;
            let sweep = merton_sweep(cfg, &mu)?;
            let p = out.join("merton_growth.csv");
            write_lines(&p, "epsilon,growth_ratio,bound", &sweep.growth)?;
            files.push(p);
            (sweep.rows, "Merton: PIDE value vs averaged value")
        }
        ExperimentKind::CorrectorRate => {
            let (rows, lines) = corrector_rate(cfg)?;
            let p = out.join("corrector.csv");
            write_lines(&p, "delta,y,chi_delta,delta_chi_delta,H_bar,residual", &lines)?;
            files.push(p);
            (rows, "corrector: max |delta chi + H_bar| vs delta")
        }
        ExperimentKind::ErgodicityCheck => {
            let (rows, lines) = ergodicity_check(cfg)?;
            let p = out.join("ergodicity.csv");
            write_lines(&p, "epsilon,u,cf_re,cf_im,oracle_re,oracle_im,ks_to_first", &lines)?;
            files.push(p);
            let p = out.join("lyapunov.csv");
            write_lines(&p, "radius,witness,passes", &lyapunov_rows(cfg)?)?;
            files.push(p);
            (rows, "stationary characteristic function error vs epsilon")
        }
        ExperimentKind::Counterexample => {
            let q = GeneratorQuadrature::new(cfg.levy);
            let rep = subordinator_counterexample(&q)?;
            let lines: Vec<String> = rep.grid.iter().zip(&rep.values).map(|(y, v)| format!("{y},{v}")).collect();
            let p = out.join("counterexample.csv");
            write_lines(&p, "y,minus_generator", &lines)?;
            files.push(p);
            let p = out.join("counterexample_profile.csv");
            write_lines(&p, "c,width,max_violation", &[format!("{},{},{}", rep.c, rep.width, rep.max_violation)])?;
            files.push(p);
            let row = ReportRow {
                epsilon: 1.0,
                gap: rep.max_violation,
                std_error: 0.0,
                grid_tol: q.tolerance,
            };
            (vec![row], "")
        }
    };
    let mut rows = rows;
    rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let report = ConvergenceReport::new(rows)?;
    let p = out.join("report.csv");
    report.write_csv(&p)?;
    files.push(p);
    if !title.is_empty() {
        let p = out.join("gap_vs_epsilon.svg");
        emit_plot(&report, title, &p)?;
        files.push(p);
    }
    Ok(ExperimentOutput { report, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_exact_on_lines_and_close_on_curves() {
        let t = Tabulated::new(&|y| 2.0 * y - 1.0, -1.0, 1.0, 11);
        assert!((t.eval(0.37).unwrap() - (-0.26)).abs() < 1e-12);
        assert_eq!(t.eval(1.0), Some(1.0));
        assert!(t.eval(1.01).is_none() && t.eval(f64::NAN).is_none());
        let t = Tabulated::new(&|y: f64| y.tanh(), -5.0, 5.0, 10_001);
        assert!((t.eval(0.123456).unwrap() - 0.123456f64.tanh()).abs() < 1e-7);
    }
}
