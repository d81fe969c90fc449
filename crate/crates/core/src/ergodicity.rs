//! Invariant law of the fast factor, its characteristic-function oracle,
//! and ergodic and Abel averages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jump::{FastProcessConfig, FastStepper};
use crate::levy::{LevyFamily, LevyMeasureModel};
use crate::quadrature::{integrate, Tolerance};
use crate::rng::jump_stream;
use crate::stats::{parallel_estimates, quantile_sorted, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureProvenance {
    EmpiricalLongRun,
    ExplicitTwoAtomTest,
    /// Supplied by the caller, e.g. read from a file.
    Explicit,
}

/// Discrete probability measure: sorted nodes with nonnegative weights
/// summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMeasure {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pub provenance: MeasureProvenance,
    pub sample_count: usize,
}

impl InvariantMeasure {
    /// Sorts the atoms, merges repeated nodes and checks normalisation.
    pub fn new(
        nodes: Vec<f64>,
        weights: Vec<f64>,
        provenance: MeasureProvenance,
        sample_count: usize,
    ) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::invalid(
                "measure",
                format!("{} nodes with {} weights", nodes.len(), weights.len()),
            ));
        }
        if nodes.iter().any(|x| !x.is_finite()) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("measure", "nodes must be finite and weights nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("measure", format!("weights sum to {total}, not 1")));
        }
        let mut atoms: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut nodes: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if nodes.last() == Some(&x) {
                *weights.last_mut().unwrap() += w;
            } else {
                nodes.push(x);
                weights.push(w);
            }
        }
        Ok(Self {
            nodes,
            weights,
            provenance,
            sample_count,
        })
    }

    pub fn point_mass(y: f64) -> Self {
        Self {
            nodes: vec![y],
            weights: vec![1.0],
            provenance: MeasureProvenance::Explicit,
            sample_count: 0,
        }
    }

    /// Half of the mass at each of `y1`, `y2`.
    pub fn two_atom(y1: f64, y2: f64) -> Self {
        let mut m = Self::new(vec![y1, y2], vec![0.5, 0.5], MeasureProvenance::ExplicitTwoAtomTest, 0)
            .expect("two finite atoms");
        m.provenance = MeasureProvenance::ExplicitTwoAtomTest;
        m
    }

    /// Quantile-binned empirical measure. Samples are clipped at the
    /// `clip` and `1 - clip` quantiles (the clipped mass lands in the
    /// extreme bins), sorted into `n_nodes` bins of equal count, and each
    /// bin is represented by its mean.
    pub fn from_samples(samples: &[f64], n_nodes: usize, clip: f64) -> Result<Self> {
        if samples.is_empty() || n_nodes == 0 {
            return Err(Error::invalid("samples", "need at least one sample and one node"));
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let lo = quantile_sorted(&s, clip);
        let hi = quantile_sorted(&s, 1.0 - clip);
        for v in s.iter_mut() {
            *v = v.clamp(lo, hi);
        }
        let n = s.len();
        let bins = n_nodes.min(n);
        let mut nodes = Vec::with_capacity(bins);
        let mut weights = Vec::with_capacity(bins);
        for b in 0..bins {
            let (i0, i1) = (b * n / bins, (b + 1) * n / bins);
            let chunk = &s[i0..i1];
            nodes.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
            weights.push(chunk.len() as f64 / n as f64);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(nodes, weights, MeasureProvenance::EmpiricalLongRun, n)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `int f d mu`
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&y, &w)| w * f(y)).sum()
    }

    pub fn cf(&self, u: f64) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&y, &w)| Complex64::from_polar(w, u * y))
            .sum()
    }

    /// Smallest node at which the cumulative weight reaches `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut cum = 0.0;
        for (&y, &w) in self.nodes.iter().zip(&self.weights) {
            cum += w;
            if cum >= p - 1e-15 {
                return y;
            }
        }
        *self.nodes.last().unwrap()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "node,weight")?;
        for (y, p) in self.nodes.iter().zip(&self.weights) {
            writeln!(w, "{y},{p}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Config {
                    line: i + 1,
                    key: "node,weight".into(),
                    reason: format!("cannot parse `{line}`"),
                })
            };
            nodes.push(parse(parts.next())?);
            weights.push(parse(parts.next())?);
        }
        let total: f64 = weights.iter().sum();
        if total > 0.0 && (total - 1.0).abs() < 1e-9 {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        Self::new(nodes, weights, MeasureProvenance::Explicit, 0)
    }
}

/// Sampling scheme for [`estimate_invariant_measure_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantOptions {
    pub n_nodes: usize,
    /// Independent chains run in parallel.
    pub chains: usize,
    /// Spacing between retained samples; `None` means `2 / lambda`.
    pub stride: Option<f64>,
    pub clip: f64,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self {
            n_nodes: 256,
            chains: 32,
            stride: None,
            clip: 1e-3,
        }
    }
}

fn check_ergodic(model: &LevyMeasureModel) -> Result<()> {
    if model.is_subordinator_mode() {
        return Err(Error::Assumption(
            "the driver is a subordinator; ergodicity of the factor is not guaranteed".into(),
        ));
    }
    Ok(())
}

/// Approximately stationary samples of the factor: after `burn_in`, each
/// chain is sampled every `stride` time units.
pub fn stationary_samples(
    cfg: &FastProcessConfig,
    burn_in: f64,
    n_samples: usize,
    opts: &InvariantOptions,
) -> Result<Vec<f64>> {
    check_ergodic(&cfg.model)?;
    if burn_in < 5.0 / cfg.lambda - 1e-12 {
        return Err(Error::invalid(
            "burn_in",
            format!("{burn_in} is shorter than five relaxation times 5/lambda = {}", 5.0 / cfg.lambda),
        ));
    }
    if n_samples < 1000 {
        return Err(Error::invalid("n_samples", format!("{n_samples} < 1000")));
    }
    let stride = opts.stride.unwrap_or(2.0 / cfg.lambda);
    if stride < 1.0 / cfg.lambda - 1e-12 {
        return Err(Error::invalid("stride", "sampling stride must be at least 1/lambda"));
    }
    let dt = cfg.dt;
    if !(dt > 0.0 && cfg.lambda > 0.0) {
        return Err(Error::invalid("dt", "step and rate must be positive"));
    }
    let stepper = FastStepper::new(&cfg.model, cfg.lambda, dt, false)?;
    let burn_steps = (burn_in / dt).ceil() as usize;
    let stride_steps = ((stride / dt).round() as usize).max(1);
    let chains = opts.chains.max(1).min(n_samples);
    let per_chain = n_samples.div_ceil(chains);
    let runs: Vec<Vec<f64>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = jump_stream(cfg.seed, c as u64);
            let mut y = cfg.y0;
            for _ in 0..burn_steps {
                y = stepper.step(y, &mut rng);
            }
            let mut out = Vec::with_capacity(per_chain);
            for _ in 0..per_chain {
                for _ in 0..stride_steps {
                    y = stepper.step(y, &mut rng);
                }
                out.push(y);
            }
            out
        })
        .collect();
    Ok(runs.into_iter().flatten().take(n_samples).collect())
}

pub fn estimate_invariant_measure(cfg: &FastProcessConfig, burn_in: f64, n_samples: usize) -> Result<InvariantMeasure> {
    estimate_invariant_measure_with(cfg, burn_in, n_samples, &InvariantOptions::default())
}

pub fn estimate_invariant_measure_with(
    cfg: &FastProcessConfig,
    burn_in: f64,
    n_samples: usize,
    opts: &InvariantOptions,
) -> Result<InvariantMeasure> {
    let samples = stationary_samples(cfg, burn_in, n_samples, opts)?;
    InvariantMeasure::from_samples(&samples, opts.n_nodes, opts.clip)
}

/// Characteristic function of the stationary law,
/// `exp(int_0^inf psi(u e^{-s}) ds)`. For the stable family the
/// `alpha`-homogeneous part of `psi` integrates to `1/alpha` of itself and
/// the linear compensator part (one-sided family only) integrates to itself.
pub fn stationary_cf_oracle(model: &LevyMeasureModel, u: f64) -> Result<Complex64> {
    if u == 0.0 || model.is_null() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let psi = model.levy_exponent(u)?;
    let linear = match model.family() {
        LevyFamily::SymmetricStable => Complex64::new(0.0, 0.0),
        LevyFamily::OneSidedStable => Complex64::new(0.0, u * model.stable_law().drift),
    };
    Ok(((psi - linear) / model.alpha() + linear).exp())
}

/// The same quantity by direct quadrature of `psi(u e^{-s})` over `s`.
pub fn stationary_cf_by_integration(model: &LevyMeasureModel, u: f64) -> Result<Complex64> {
    if u == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let tol = Tolerance {
        abs: 1e-9,
        rel: 1e-8,
        max_intervals: 2_000,
    };
    let s_max = 60.0;
    let breaks: Vec<f64> = (0..=30).map(|k| s_max * k as f64 / 30.0).collect();
    let part = |im: bool| {
        integrate(
            |s: f64| {
                let p = model.levy_exponent(u * (-s).exp()).unwrap_or_default();
                if im {
                    p.im
                } else {
                    p.re
                }
            },
            &breaks,
            tol,
        )
    };
    let re = part(false)?.value;
    let im = part(true)?.value;
    Ok(Complex64::new(re, im).exp())
}

/// Monte Carlo estimate of `(1/t) int_0^t E f(Y(s)) ds` (left-point rule
/// on the simulation grid).
pub fn ergodic_time_average(
    cfg: &FastProcessConfig,
    f: &(dyn Fn(f64) -> f64 + Sync),
    t: f64,
    n_paths: usize,
) -> Result<Estimate> {
    check_ergodic(&cfg.model)?;
    let run = cfg.with_horizon(t);
    let stepper = run.stepper(false)?;
    let n = run.n_steps();
    let est = parallel_estimates(n_paths, 1, |i, out| {
        let mut rng = jump_stream(cfg.seed, i);
        let mut y = cfg.y0;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += f(y);
            y = stepper.step(y, &mut rng);
        }
        out[0] = acc / n as f64;
    });
    Ok(est[0])
}

/// Abel weights on the grid `t_k = k dt`: `e^{-delta t_k} - e^{-delta t_{k+1}}`
/// for `k < n` and the remaining tail `e^{-delta t_n}` on the last state,
/// so the weights sum to one.
pub fn abel_weights(delta: f64, dt: f64, n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n + 1);
    for k in 0..n {
        let a = (-delta * k as f64 * dt).exp();
        let b = (-delta * (k + 1) as f64 * dt).exp();
        w.push(a - b);
    }
    w.push((-delta * n as f64 * dt).exp());
    w
}

/// Monte Carlo estimate of `delta int_0^inf E f(Y(t)) e^{-delta t} dt`,
/// truncated at `10 / delta`; the truncated tail is charged to the last
/// state, which bounds the truncation error by `e^{-10} sup |f|`.
pub fn abel_average(
    cfg: &FastProcessConfig,
    f: &(dyn Fn(f64) -> f64 + Sync),
    delta: f64,
    n_paths: usize,
) -> Result<Estimate> {
    let profiles = abel_profiles(cfg, f, &[delta], &[cfg.y0], n_paths)?;
    Ok(profiles[0][0])
}

/// Abel averages for several `delta` and starting points from one set of
/// paths. All starting points share the jump noise: the scheme is affine
/// in the initial state, so the path from `y` is the path from 0 plus
/// `y exp(-lambda t_k)`. Returns `[delta][y]`.
pub fn abel_profiles(
    cfg: &FastProcessConfig,
    f: &(dyn Fn(f64) -> f64 + Sync),
    deltas: &[f64],
    y_grid: &[f64],
    n_paths: usize,
) -> Result<Vec<Vec<Estimate>>> {
    check_ergodic(&cfg.model)?;
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::invalid("delta", "need positive discount rates"));
    }
    let dt = cfg.dt;
    let horizon = |d: f64| 10.0 / d;
    let d_min = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let n_max = (horizon(d_min) / dt).ceil() as usize;
    let weights: Vec<Vec<f64>> = deltas
        .iter()
        .map(|&d| {
            let n = (horizon(d) / dt).ceil() as usize;
            let mut w = abel_weights(d, dt, n);
            w.resize(n_max + 1, 0.0);
            w
        })
        .collect();
    let stepper = FastStepper::new(&cfg.model, cfg.lambda, dt, false)?;
    let decay = stepper.decay();
    let (nd, ny) = (deltas.len(), y_grid.len());
    let est = parallel_estimates(n_paths, nd * ny, |i, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut rng = jump_stream(cfg.seed, i);
        let mut base = 0.0;
        let mut shift = 1.0;
        for k in 0..=n_max {
            for (j, &y) in y_grid.iter().enumerate() {
                let v = f(base + y * shift);
                for (d, w) in weights.iter().enumerate() {
                    out[d * ny + j] += w[k] * v;
                }
            }
            if k < n_max {
                base = stepper.step(base, &mut rng);
                shift *= decay;
            }
        }
    });
    Ok((0..nd).map(|d| est[d * ny..(d + 1) * ny].to_vec()).collect())
}
