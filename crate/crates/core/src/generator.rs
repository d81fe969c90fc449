//! The nonlocal generator of the fast factor,
//!
//! `I[y, f] = -f'(y) y + int (f(y+z) - f(y) - f'(y) z 1_{|z|<=1}) nu(dz)`,
//!
//! with the integral over the support of `nu`, together with the Lyapunov
//! drift check, the subordinator counterexample, approximate correctors and
//! the averaged Hamiltonian.

use crate::control::{hamiltonian_eval, ControlProblemSpec};
use crate::ergodicity::{abel_profiles, InvariantMeasure};
use crate::error::{Error, Result};
use crate::jump::FastProcessConfig;
use crate::levy::LevyMeasureModel;
use crate::quadrature::{geometric_breakpoints, integrate, Tolerance};

/// A twice differentiable function with known derivatives and growth.
pub trait TestFunction: Sync {
    fn value(&self, y: f64) -> f64;
    fn d1(&self, y: f64) -> f64;
    fn d2(&self, y: f64) -> f64;
    /// Exponent `g` with `|f(y)| = O(|y|^g)` at infinity.
    fn growth_order(&self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn value(&self, _: f64) -> f64 {
        self.0
    }
    fn d1(&self, _: f64) -> f64 {
        0.0
    }
    fn d2(&self, _: f64) -> f64 {
        0.0
    }
    fn growth_order(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl TestFunction for Identity {
    fn value(&self, y: f64) -> f64 {
        y
    }
    fn d1(&self, _: f64) -> f64 {
        1.0
    }
    fn d2(&self, _: f64) -> f64 {
        0.0
    }
    fn growth_order(&self) -> f64 {
        1.0
    }
}

/// `cos(k y)`
#[derive(Debug, Clone, Copy)]
pub struct Cosine(pub f64);

impl TestFunction for Cosine {
    fn value(&self, y: f64) -> f64 {
        (self.0 * y).cos()
    }
    fn d1(&self, y: f64) -> f64 {
        -self.0 * (self.0 * y).sin()
    }
    fn d2(&self, y: f64) -> f64 {
        -self.0 * self.0 * (self.0 * y).cos()
    }
    fn growth_order(&self) -> f64 {
        0.0
    }
}

/// `(1 + y^2)^{q/2}`
#[derive(Debug, Clone, Copy)]
pub struct Lyapunov(pub f64);

impl TestFunction for Lyapunov {
    fn value(&self, y: f64) -> f64 {
        (1.0 + y * y).powf(self.0 / 2.0)
    }
    fn d1(&self, y: f64) -> f64 {
        self.0 * y * (1.0 + y * y).powf(self.0 / 2.0 - 1.0)
    }
    fn d2(&self, y: f64) -> f64 {
        let q = self.0;
        let s = 1.0 + y * y;
        q * s.powf(q / 2.0 - 1.0) + q * (q - 2.0) * y * y * s.powf(q / 2.0 - 2.0)
    }
    fn growth_order(&self) -> f64 {
        self.0
    }
}

/// Smooth, bounded, nondecreasing profile that is constant (zero) on
/// `[-c, inf)`: `f(y) = -exp(-w / (-c - y))` for `y < -c`.
#[derive(Debug, Clone, Copy)]
pub struct SubordinatorProfile {
    pub c: f64,
    pub width: f64,
}

impl SubordinatorProfile {
    fn gap(&self, y: f64) -> Option<f64> {
        let s = -self.c - y;
        (s > 0.0).then_some(s)
    }
}

impl TestFunction for SubordinatorProfile {
    fn value(&self, y: f64) -> f64 {
        self.gap(y).map_or(0.0, |s| -(-self.width / s).exp())
    }
    fn d1(&self, y: f64) -> f64 {
        self.gap(y).map_or(0.0, |s| (-self.width / s).exp() * self.width / (s * s))
    }
    fn d2(&self, y: f64) -> f64 {
        let w = self.width;
        self.gap(y)
            .map_or(0.0, |s| -(-w / s).exp() * w * (w - 2.0 * s) / s.powi(4))
    }
    fn growth_order(&self) -> f64 {
        0.0
    }
}

/// Function given by closures, e.g. a linear combination of others.
pub struct FnTestFunction<F, D1, D2> {
    pub f: F,
    pub d1: D1,
    pub d2: D2,
    pub growth: f64,
}

impl<F, D1, D2> TestFunction for FnTestFunction<F, D1, D2>
where
    F: Fn(f64) -> f64 + Sync,
    D1: Fn(f64) -> f64 + Sync,
    D2: Fn(f64) -> f64 + Sync,
{
    fn value(&self, y: f64) -> f64 {
        (self.f)(y)
    }
    fn d1(&self, y: f64) -> f64 {
        (self.d1)(y)
    }
    fn d2(&self, y: f64) -> f64 {
        (self.d2)(y)
    }
    fn growth_order(&self) -> f64 {
        self.growth
    }
}

/// Quadrature settings for [`generator_apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorQuadrature {
    pub model: LevyMeasureModel,
    /// Jumps below `kappa` enter through `1/2 f''(y) int z^2 nu(dz)`.
    pub kappa: f64,
    /// Jumps beyond `outer_cut` use a power-law extrapolation of `f`.
    pub outer_cut: f64,
    pub tolerance: f64,
}

impl GeneratorQuadrature {
    /// `kappa = 1e-3`; `outer_cut` puts less than `1e-8` of the mass of
    /// `{|z| > 1}` beyond the cut.
    pub fn new(model: LevyMeasureModel) -> Self {
        let outer = 10f64.powf(8.0 / model.alpha()).clamp(1e3, 1e100);
        Self {
            model,
            kappa: 1e-3,
            outer_cut: outer,
            tolerance: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0 && self.outer_cut > 1.0) {
            return Err(Error::invalid(
                "generator",
                format!("need 0 < kappa < 1 < M, got kappa={} M={}", self.kappa, self.outer_cut),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("generator.tolerance", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorValue {
    pub value: f64,
    pub error: f64,
}

/// `I[y, f]` by quadrature. Small jumps use the second-order Taylor term,
/// the body `kappa <= |z| <= M` adaptive Gauss–Kronrod on dyadic panels,
/// and the far tail the extrapolation
/// `f(y + z) ~ f(y +- M) (|y + z| / |y +- M|)^g` integrated in closed form
/// to second order in `y / M`.
pub fn generator_apply(q: &GeneratorQuadrature, f: &dyn TestFunction, y: f64) -> Result<GeneratorValue> {
    q.validate()?;
    let model = &q.model;
    let drift = -f.d1(y) * y;
    if model.is_null() {
        return Ok(GeneratorValue { value: drift, error: 0.0 });
    }
    let a = model.alpha();
    let g = f.growth_order();
    if g >= a {
        return Err(Error::invalid(
            "f",
            format!("growth order {g} is not below alpha = {a}; the jump integral diverges"),
        ));
    }
    let c = model.intensity();
    let m = q.outer_cut.max(1e3 * (1.0 + y.abs()));
    let kappa = q.kappa;

    let small = 0.5 * f.d2(y) * model.second_moment_below(kappa);

    let fy = f.value(y);
    let fp = f.d1(y);
    let weight = |z: f64| c * z.powf(-1.0 - a);
    let tol = Tolerance {
        abs: q.tolerance,
        rel: 1e-10,
        max_intervals: 400_000,
    };
    let mut breaks = geometric_breakpoints(kappa, 1.0);
    breaks.extend(geometric_breakpoints(1.0, m).into_iter().skip(1));
    let body = if model.is_symmetric() {
        integrate(
            |z| (f.value(y + z) + f.value(y - z) - 2.0 * fy) * weight(z),
            &breaks,
            tol,
        )?
    } else {
        integrate(
            |z| {
                let comp = if z <= 1.0 { fp * z } else { 0.0 };
                (f.value(y + z) - fy - comp) * weight(z)
            },
            &breaks,
            tol,
        )?
    };

    let tail_side = |s: f64| {
        let eps = s * y / m;
        let series = 1.0 / (a - g) + g * eps / (a - g + 1.0) + g * (g - 1.0) * eps * eps / (2.0 * (a - g + 2.0));
        let far = f.value(y + s * m);
        let extrap = far / (1.0 + eps).powf(g) * series;
        let value = c * m.powf(-a) * (extrap - fy / a);
        let err = c * m.powf(-a) * far.abs() * eps.abs().powi(3);
        (value, err)
    };
    let (mut tail, mut tail_err) = tail_side(1.0);
    if model.is_symmetric() {
        let (v, e) = tail_side(-1.0);
        tail += v;
        tail_err += e;
    }

    let taylor_err = (f.d2(y).abs() + 1.0) * model.second_moment_below(kappa) * kappa;
    Ok(GeneratorValue {
        value: drift + small + body.value + tail,
        error: body.error + tail_err + taylor_err,
    })
}

/// Witness `a = min (-I[y, phi]) / phi(y)` for `phi = (1 + y^2)^{q/2}`
/// over the sample points; the drift condition holds when `a > 0`.
pub fn lyapunov_drift_check(
    q: &GeneratorQuadrature,
    q_exp: f64,
    radius: f64,
    y_samples: &[f64],
) -> Result<(f64, bool)> {
    let a = q.model.alpha();
    if !(q_exp > 0.0 && q_exp < a) {
        return Err(Error::invalid(
            "q_exp",
            format!("{q_exp} must lie in (0, alpha) = (0, {a}) for the moment to exist"),
        ));
    }
    if y_samples.is_empty() {
        return Err(Error::invalid("y_samples", "no sample points"));
    }
    if let Some(y) = y_samples.iter().find(|y| y.abs() < radius) {
        return Err(Error::invalid(
            "y_samples",
            format!("sample {y} lies inside the radius {radius}"),
        ));
    }
    let phi = Lyapunov(q_exp);
    let mut witness = f64::INFINITY;
    for &y in y_samples {
        let gen = generator_apply(q, &phi, y)?;
        witness = witness.min(-gen.value / phi.value(y));
    }
    Ok((witness, witness > 0.0))
}

/// Outcome of [`subordinator_counterexample`].
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    /// `max_y -I[y, f]`; nonpositive up to quadrature error.
    pub max_violation: f64,
    /// `c = int_0^1 z nu(dz)`
    pub c: f64,
    pub width: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// For a subordinator, the nondecreasing profile that is constant on
/// `[-c, inf)` is a classical subsolution, `I[y, f] >= 0`: jumps only move
/// the factor to the right, so the maximum of `f` propagates to the right
/// but never to the left. Evaluates `-I[y, f]` on `n` points of `[lo, hi]`.
pub fn subordinator_counterexample_on(
    q: &GeneratorQuadrature,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<CounterexampleReport> {
    if !q.model.is_subordinator_mode() {
        return Err(Error::Usage(
            "the counterexample needs a one-sided measure with alpha in (0, 1) in subordinator mode".into(),
        ));
    }
    let a = q.model.alpha();
    let c = q.model.intensity() / (1.0 - a);
    let profile = SubordinatorProfile { c, width: 1.0 };
    let grid: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64)
        .collect();
    let values = grid
        .iter()
        .map(|&y| generator_apply(q, &profile, y).map(|g| -g.value))
        .collect::<Result<Vec<f64>>>()?;
    // adding 0.0 turns a -0.0 maximum into +0.0
    let max_violation = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.0;
    Ok(CounterexampleReport {
        max_violation,
        c,
        width: profile.width,
        grid,
        values,
    })
}

/// The counterexample on 401 points of `[-10, 10]`.
pub fn subordinator_counterexample(q: &GeneratorQuadrature) -> Result<CounterexampleReport> {
    subordinator_counterexample_on(q, -10.0, 10.0, 401)
}

/// Point `(x, p, X)` at which the Hamiltonian is frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenPoint {
    pub x: f64,
    pub p: f64,
    pub xx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorQuery {
    pub frozen: FrozenPoint,
    pub delta: f64,
    pub y_grid: Vec<f64>,
    pub mc_paths: usize,
    pub seed: u64,
    /// Simulation step of the unit-rate factor.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorProfile {
    pub delta: f64,
    pub y: Vec<f64>,
    pub chi: Vec<f64>,
    /// Standard error of `chi`.
    pub std_error: Vec<f64>,
}

impl CorrectorProfile {
    /// `delta * chi_delta(y)`
    pub fn scaled(&self) -> Vec<f64> {
        self.chi.iter().map(|c| self.delta * c).collect()
    }

    /// `max_y |delta chi_delta(y) + h_bar|`
    pub fn residual(&self, h_bar: f64) -> f64 {
        self.scaled().iter().map(|v| (v + h_bar).abs()).fold(0.0, f64::max)
    }
}

/// `chi_delta(y) = -E int_0^inf H(Y_y(t)) e^{-delta t} dt` for the unit-rate
/// factor started at each `y`, by Monte Carlo with horizon `10 / delta`.
pub fn approximate_corrector(
    model: &LevyMeasureModel,
    cq: &CorrectorQuery,
    h: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<CorrectorProfile> {
    let mut v = approximate_corrector_sweep(model, &[cq.delta], &cq.y_grid, cq.mc_paths, cq.seed, cq.dt, h)?;
    Ok(v.remove(0))
}

/// Correctors for several `delta` from one set of paths (common random
/// numbers across `delta` and across the starting points).
pub fn approximate_corrector_sweep(
    model: &LevyMeasureModel,
    deltas: &[f64],
    y_grid: &[f64],
    mc_paths: usize,
    seed: u64,
    dt: f64,
    h: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<Vec<CorrectorProfile>> {
    if mc_paths < 1000 {
        return Err(Error::invalid("mc_paths", format!("{mc_paths} < 1000")));
    }
    if y_grid.is_empty() {
        return Err(Error::invalid("y_grid", "empty grid"));
    }
    let d_min = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let cfg = FastProcessConfig {
        model: *model,
        lambda: 1.0,
        y0: 0.0,
        dt,
        horizon: 10.0 / d_min,
        seed,
    };
    let profiles = abel_profiles(&cfg, h, deltas, y_grid, mc_paths)?;
    Ok(deltas
        .iter()
        .zip(profiles)
        .map(|(&d, est)| {
            let profile = CorrectorProfile {
                delta: d,
                y: y_grid.to_vec(),
                chi: est.iter().map(|e| -e.mean / d).collect(),
                std_error: est.iter().map(|e| e.std_error / d).collect(),
            };
            let worst = est.iter().map(|e| e.std_error).fold(0.0, f64::max);
            if worst > 0.1 * d {
                log::warn!("corrector at delta={d}: standard error of delta*chi is {worst:.3e}");
            }
            profile
        })
        .collect())
}

/// `H_bar = int H(y) mu(dy)`.
pub fn effective_hamiltonian(mu: &InvariantMeasure, h: impl Fn(f64) -> f64) -> f64 {
    mu.expectation(h)
}

/// `H_bar(x, p, X)` for a control problem: node-by-node Bellman
/// minimisation, then the `mu`-average.
pub fn effective_hamiltonian_at(mu: &InvariantMeasure, spec: &ControlProblemSpec, x: f64, p: f64, xx: f64) -> f64 {
    mu.expectation(|y| hamiltonian_eval(spec, x, y, p, xx).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gq(a: f64) -> GeneratorQuadrature {
        GeneratorQuadrature::new(LevyMeasureModel::symmetric(a).unwrap())
    }

    #[test]
    fn identity_reduces_to_drift() {
        let g = generator_apply(&gq(1.5), &Identity, 2.0).unwrap();
        assert!((g.value + 2.0).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn constants_are_annihilated() {
        for y in [-3.0, 0.0, 5.0] {
            let g = generator_apply(&gq(1.2), &Constant(4.0), y).unwrap();
            assert!(g.value.abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_at_origin_is_the_exponent() {
        let g = generator_apply(&gq(1.0), &Cosine(1.0), 0.0).unwrap();
        assert!((g.value + PI).abs() < 1e-6, "{}", g.value);
    }

    #[test]
    fn one_sided_cosine_matches_exponent() {
        let m = LevyMeasureModel::one_sided(1.5).unwrap();
        let q = GeneratorQuadrature::new(m);
        let g = generator_apply(&q, &Cosine(1.0), 0.0).unwrap();
        assert!((g.value - m.levy_exponent(1.0).unwrap().re).abs() < 1e-6);
    }

    #[test]
    fn growth_at_alpha_is_refused() {
        assert!(generator_apply(&gq(1.0), &Identity, 0.0).is_err());
    }

    #[test]
    fn lyapunov_witness_is_positive() {
        let ys = [-20.0, -10.0, -5.0, 5.0, 10.0, 20.0];
        let (a, pass) = lyapunov_drift_check(&gq(1.5), 1.0, 5.0, &ys).unwrap();
        assert!(pass && a > 0.0);
        assert!(lyapunov_drift_check(&gq(1.5), 1.5, 5.0, &ys).is_err());
    }

    #[test]
    fn counterexample_constant() {
        let q = GeneratorQuadrature::new(LevyMeasureModel::subordinator(0.5).unwrap());
        let r = subordinator_counterexample_on(&q, -6.0, 2.0, 9).unwrap();
        assert!((r.c - 2.0).abs() < 1e-15);
        for (&y, &v) in r.grid.iter().zip(&r.values) {
            if y >= -r.c {
                assert!(v <= 0.0);
            }
        }
        assert!(subordinator_counterexample(&gq(1.5)).is_err());
    }

    #[test]
    fn profile_derivatives_match_differences() {
        let f = SubordinatorProfile { c: 2.0, width: 1.0 };
        let h = 1e-5;
        for y in [-2.5, -3.0, -6.0] {
            let d1 = (f.value(y + h) - f.value(y - h)) / (2.0 * h);
            let d2 = (f.value(y + h) - 2.0 * f.value(y) + f.value(y - h)) / (h * h);
            assert!((d1 - f.d1(y)).abs() < 1e-7);
            assert!((d2 - f.d2(y)).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_hamiltonian_corrector() {
        let m = LevyMeasureModel::symmetric(1.5).unwrap();
        let cq = CorrectorQuery {
            frozen: FrozenPoint { x: 1.0, p: 1.0, xx: -1.0 },
            delta: 0.5,
            y_grid: vec![-1.0, 0.0, 1.0],
            mc_paths: 1000,
            seed: 3,
            dt: 0.1,
        };
        let p = approximate_corrector(&m, &cq, &|_| 0.3).unwrap();
        for v in p.scaled() {
            assert!((v + 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn two_atom_effective_hamiltonian() {
        let mu = InvariantMeasure::two_atom(-1.0, 2.0);
        assert_eq!(effective_hamiltonian(&mu, |y| y * y), 2.5);
        let flat = InvariantMeasure::two_atom(0.0, 5.0);
        assert_eq!(effective_hamiltonian(&flat, |_| -0.7), -0.7);
    }
}
