//! The two applications: pricing under a fast jump-driven volatility
//! factor, and Merton portfolio choice with HARA utility.
//!
//! Diffusion terms carry a factor `sqrt 2`: the asset follows
//! `dX = r X dt + sqrt(2) sigma(Y) X dW`, so the instantaneous log-variance
//! is `2 sigma^2`.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::control::{control_grid, ControlProblemSpec, Payoff, VolatilityModel, DEFAULT_CONTROL_POINTS};
use crate::ergodicity::InvariantMeasure;
use crate::error::{Error, Result};
use crate::jump::FastProcessConfig;
use crate::levy::LevyMeasureModel;
use crate::quadrature::gauss_hermite;
use crate::rng::{brownian_stream, jump_stream};
use crate::stats::{parallel_estimates, Estimate};

/// European claim on one asset with a fast volatility factor.
#[derive(Debug, Clone)]
pub struct PricingSpec {
    pub r: f64,
    pub sigma: VolatilityModel,
    pub payoff: Payoff,
    pub discount: f64,
    pub horizon: f64,
    pub x0: f64,
}

impl PricingSpec {
    /// Discount rate equal to `r`, `x0 = 1`.
    pub fn new(r: f64, sigma: VolatilityModel, payoff: Payoff, horizon: f64) -> Self {
        Self {
            r,
            sigma,
            payoff,
            discount: r,
            horizon,
            x0: 1.0,
        }
    }

    pub fn with_discount(mut self, c: f64) -> Self {
        self.discount = c;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.sigma.validate()?;
        if !self.r.is_finite() {
            return Err(Error::invalid("problem.r", "interest rate must be finite"));
        }
        if !(self.discount >= 0.0 && self.discount.is_finite()) {
            return Err(Error::invalid("problem.discount", format!("{} must be nonnegative", self.discount)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("problem.horizon", format!("{} must be positive", self.horizon)));
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::invalid("problem.x0", format!("{} must be positive", self.x0)));
        }
        Ok(())
    }

    /// Uncontrolled problem with the far field `e^{-c tau} g(x e^{r tau})`,
    /// the value with the diffusion switched off.
    pub fn control_problem(&self) -> ControlProblemSpec {
        let (r, c) = (self.r, self.discount);
        let sigma = self.sigma.clone();
        let g = self.payoff.clone();
        ControlProblemSpec {
            name: "pricing".into(),
            drift: Arc::new(move |x, _, _| r * x),
            vol: Arc::new(move |x, y, _| std::f64::consts::SQRT_2 * sigma.eval(y) * x),
            controls: vec![0.0],
            payoff: self.payoff.clone(),
            discount: c,
            horizon: self.horizon,
            multiplicative: true,
            far_field: Arc::new(move |tau, x| (-c * tau).exp() * g.eval(x * (r * tau).exp())),
        }
    }
}

/// Quadratic mean `(sum_m w_m sigma(y_m)^2)^{1/2}`.
pub fn effective_vol_quadratic(sigma: &VolatilityModel, mu: &InvariantMeasure) -> f64 {
    let s = mu.expectation(|y| sigma.eval(y).powi(2)).sqrt();
    if s == 0.0 {
        log::warn!("volatility vanishes on every node of the measure");
    }
    s
}

/// Harmonic mean `(sum_m w_m / sigma(y_m)^2)^{-1/2}`.
pub fn effective_vol_harmonic(sigma: &VolatilityModel, mu: &InvariantMeasure) -> Result<f64> {
    if let Some(&node) = mu.nodes().iter().find(|&&y| sigma.eval(y) == 0.0) {
        return Err(Error::DegenerateVolatility { node });
    }
    Ok(mu.expectation(|y| sigma.eval(y).powi(-2)).powf(-0.5))
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Discounted expected payoff at time `t`, state `x`, when the volatility
/// is the constant `vol`: the terminal value is lognormal with forward
/// `x e^{r (T-t)}` and log-variance `2 vol^2 (T-t)`. Calls and puts use the
/// closed form; other payoffs use 64-point Gauss–Hermite quadrature.
pub fn bs_oracle(spec: &PricingSpec, vol: f64, t: f64, x: f64) -> f64 {
    let tau = (spec.horizon - t).max(0.0);
    let disc = (-spec.discount * tau).exp();
    let fwd = x * (spec.r * tau).exp();
    let v = std::f64::consts::SQRT_2 * vol.abs() * tau.sqrt();
    if v == 0.0 {
        return disc * spec.payoff.eval(fwd);
    }
    match spec.payoff {
        Payoff::Call { strike } | Payoff::Put { strike } if strike > 0.0 && fwd > 0.0 => {
            let d1 = ((fwd / strike).ln() + 0.5 * v * v) / v;
            let d2 = d1 - v;
            let call = fwd * normal_cdf(d1) - strike * normal_cdf(d2);
            let undiscounted = match spec.payoff {
                Payoff::Call { .. } => call,
                _ => call - fwd + strike,
            };
            disc * undiscounted
        }
        _ => disc * lognormal_expectation(&spec.payoff, fwd, v),
    }
}

/// `E g(F exp(-v^2/2 + v Z))` by Gauss–Hermite quadrature.
pub fn lognormal_expectation(g: &Payoff, fwd: f64, v: f64) -> f64 {
    let (nodes, weights) = gauss_hermite(64);
    let norm = std::f64::consts::PI.sqrt();
    nodes
        .iter()
        .zip(&weights)
        .map(|(&z, &w)| w * g.eval(fwd * (-0.5 * v * v + v * std::f64::consts::SQRT_2 * z).exp()))
        .sum::<f64>()
        / norm
}

/// Monte Carlo prices on a `(t, x, y)` lattice, indexed
/// `[(ti * ny + yi) * nx + xi]`.
#[derive(Debug, Clone)]
pub struct PriceGrid {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub estimates: Vec<Estimate>,
}

impl PriceGrid {
    pub fn at(&self, ti: usize, yi: usize, xi: usize) -> Estimate {
        self.estimates[(ti * self.ys.len() + yi) * self.xs.len() + xi]
    }
}

/// Prices `E[e^{-c (T-t)} g(X_T) | X_t = x, Y_t = y]` for every lattice
/// point with one set of paths (common random numbers). The factor runs
/// at rate `1/epsilon`; the step and seed come from `fast`. Starting
/// points in `y` share the jumps, since `Y^y_k = Y^0_k + y e^{-lambda k dt}`;
/// starting points in `x` share the multiplier `X_T / x`; start times share
/// the first `T - t` of each path. The asset uses the exact log-Euler step
/// with the factor frozen at the left endpoint.
pub fn price_mc_grid(
    spec: &PricingSpec,
    epsilon: f64,
    fast: &FastProcessConfig,
    n_paths: usize,
    times: &[f64],
    xs: &[f64],
    ys: &[f64],
) -> Result<PriceGrid> {
    spec.validate()?;
    check_driver(&fast.model)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", format!("{epsilon} must be positive")));
    }
    if n_paths < 1000 {
        return Err(Error::invalid("n_paths", format!("{n_paths} is below the minimum of 1000")));
    }
    if times.is_empty() || xs.is_empty() || ys.is_empty() {
        return Err(Error::Usage("empty pricing lattice".into()));
    }
    let mut cfg = *fast;
    cfg.lambda = 1.0 / epsilon;
    cfg.horizon = spec.horizon;
    cfg.y0 = 0.0;
    let stepper = cfg.stepper(false)?;
    let n = cfg.n_steps();
    let h = stepper.dt;
    let mut horizon_steps = Vec::with_capacity(times.len());
    for &t in times {
        let k = (spec.horizon - t) / h;
        if !(t >= 0.0 && t <= spec.horizon) || (k - k.round()).abs() > 1e-6 {
            return Err(Error::Usage(format!(
                "start time {t} is not on the simulation grid of step {h}"
            )));
        }
        horizon_steps.push(k.round() as usize);
    }
    let (nt, ny, nx) = (times.len(), ys.len(), xs.len());
    let (r, c) = (spec.r, spec.discount);
    let sqrt_h = h.sqrt();
    let sqrt2 = std::f64::consts::SQRT_2;
    let decay = stepper.decay();
    let seed = cfg.seed;

    let est = parallel_estimates(n_paths, nt * ny * nx, |i, out| {
        let mut jr = jump_stream(seed, i);
        let mut br = brownian_stream(seed, i);
        let mut log_m = vec![0.0; ny];
        let mut y0 = 0.0;
        let mut shift = 1.0;
        let record = |k: usize, log_m: &[f64], out: &mut [f64]| {
            for (ti, &steps) in horizon_steps.iter().enumerate() {
                if steps != k {
                    continue;
                }
                let disc = (-c * steps as f64 * h).exp();
                for yi in 0..ny {
                    let m = log_m[yi].exp();
                    for (xi, &x) in xs.iter().enumerate() {
                        out[(ti * ny + yi) * nx + xi] = disc * spec.payoff.eval(x * m);
                    }
                }
            }
        };
        record(0, &log_m, out);
        for k in 0..n {
            let z: f64 = StandardNormal.sample(&mut br);
            let dw = sqrt_h * z;
            for (yi, &y) in ys.iter().enumerate() {
                let s = spec.sigma.eval(y0 + y * shift);
                log_m[yi] += (r - s * s) * h + sqrt2 * s * dw;
            }
            y0 = stepper.step(y0, &mut jr);
            shift *= decay;
            record(k + 1, &log_m, out);
        }
    });
    Ok(PriceGrid {
        times: times.to_vec(),
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        estimates: est,
    })
}

/// Monte Carlo price at `t = 0`, `x = x0`, `y = fast.y0`.
pub fn price_mc(spec: &PricingSpec, epsilon: f64, fast: &FastProcessConfig, n_paths: usize) -> Result<Estimate> {
    let grid = price_mc_grid(spec, epsilon, fast, n_paths, &[0.0], &[spec.x0], &[fast.y0])?;
    Ok(grid.estimates[0])
}

fn check_driver(model: &LevyMeasureModel) -> Result<()> {
    let report = model.check_assumptions();
    if report.passes() {
        Ok(())
    } else {
        Err(Error::Assumption(report.summary()))
    }
}

/// Merton problem: wealth `dW = W (r + (alpha - r) u) dt + sqrt(2) sigma(Y) u W dB`,
/// fraction `u` in `[r1, r_max]`, utility `a w^gamma / gamma` at `T`.
#[derive(Debug, Clone)]
pub struct MertonSpec {
    pub r: f64,
    pub alpha: f64,
    pub sigma: VolatilityModel,
    pub r1: f64,
    pub r_max: f64,
    pub a: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub w0: f64,
    pub n_controls: usize,
}

impl MertonSpec {
    pub fn new(r: f64, alpha: f64, sigma: VolatilityModel, (r1, r_max): (f64, f64), a: f64, gamma: f64, horizon: f64) -> Result<Self> {
        let s = Self {
            r,
            alpha,
            sigma,
            r1,
            r_max,
            a,
            gamma,
            horizon,
            w0: 1.0,
            n_controls: DEFAULT_CONTROL_POINTS,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.sigma.validate()?;
        if !(self.alpha > self.r) {
            return Err(Error::invalid("problem.alpha", format!("need alpha > r, got {} <= {}", self.alpha, self.r)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("problem.gamma", format!("{} is outside (0, 1)", self.gamma)));
        }
        if !(self.a > 0.0) {
            return Err(Error::invalid("problem.a", format!("{} must be positive", self.a)));
        }
        if !(self.r_max > 0.0 && self.r1 <= 0.0 && self.r1 >= -self.r_max) {
            return Err(Error::invalid(
                "problem.controls",
                format!("need -R <= R1 <= 0 < R, got [{}, {}]", self.r1, self.r_max),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("problem.horizon", format!("{} must be positive", self.horizon)));
        }
        if self.n_controls < 2 {
            return Err(Error::invalid("problem.controls", "need at least two control points"));
        }
        Ok(())
    }

    /// `max_u {(alpha - r) u + (gamma - 1) s^2 u^2}` over `[r1, r_max]`:
    /// the vertex when it lies below `R`, the boundary value at `R`
    /// otherwise.
    pub fn node_growth(&self, s: f64) -> f64 {
        let ex = self.alpha - self.r;
        let k = 1.0 - self.gamma;
        if 2.0 * self.r_max * k * s * s >= ex {
            ex * ex / (4.0 * k * s * s)
        } else {
            ex * self.r_max - k * s * s * self.r_max * self.r_max
        }
    }

    /// Control problem with Dirichlet data `a (x)^gamma e^{gamma h tau} / gamma`
    /// at the far field, `h` being the growth rate to impose there.
    pub fn control_problem(&self, far_rate: f64) -> ControlProblemSpec {
        let (r, ex) = (self.r, self.alpha - self.r);
        let sigma = self.sigma.clone();
        let (a, g) = (self.a, self.gamma);
        ControlProblemSpec {
            name: "merton".into(),
            drift: Arc::new(move |w, _, u| w * (r + ex * u)),
            vol: Arc::new(move |w, y, u| std::f64::consts::SQRT_2 * sigma.eval(y) * u * w),
            controls: control_grid(self.r1, self.r_max, self.n_controls),
            payoff: Payoff::Hara { a, gamma: g },
            discount: 0.0,
            horizon: self.horizon,
            multiplicative: true,
            far_field: Arc::new(move |tau, w| a * w.max(0.0).powf(g) * (g * far_rate * tau).exp() / g),
        }
    }
}

/// `h_bar = r + sum_m w_m max_u {(alpha - r) u + (gamma - 1) sigma(y_m)^2 u^2}`.
pub fn merton_hbar(spec: &MertonSpec, mu: &InvariantMeasure) -> f64 {
    spec.r + mu.expectation(|y| spec.node_growth(spec.sigma.eval(y)))
}

/// Largest growth rate over all `y`, from the smallest volatility.
pub fn merton_hmax(spec: &MertonSpec) -> Option<f64> {
    spec.sigma.range().map(|(lo, _)| spec.r + spec.node_growth(lo))
}

/// `a exp(gamma h_bar (T - t)) w^gamma / gamma`.
pub fn merton_hara_closed_form(spec: &MertonSpec, mu: &InvariantMeasure, t: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::Domain(format!("wealth {w} must be positive")));
    }
    if !(0.0..=spec.horizon).contains(&t) {
        return Err(Error::Domain(format!("time {t} is outside [0, {}]", spec.horizon)));
    }
    let h = merton_hbar(spec, mu);
    Ok(spec.a * (spec.gamma * h * (spec.horizon - t)).exp() * w.powf(spec.gamma) / spec.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::hamiltonian_eval;

    fn two_atom() -> (VolatilityModel, InvariantMeasure) {
        // sigma = 0.1 at y = -1 and 0.3 at y = 1
        (
            VolatilityModel::Custom(Arc::new(|y| if y < 0.0 { 0.1 } else { 0.3 })),
            InvariantMeasure::two_atom(-1.0, 1.0),
        )
    }

    fn merton(sigma: VolatilityModel) -> MertonSpec {
        MertonSpec::new(0.05, 0.1, sigma, (-3.0, 3.0), 1.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn effective_vols_on_two_atoms() {
        let (s, mu) = two_atom();
        assert!((effective_vol_quadratic(&s, &mu) - 0.05f64.sqrt()).abs() < 1e-12);
        let h = effective_vol_harmonic(&s, &mu).unwrap();
        assert!((h - (0.5f64 * (100.0 + 1.0 / 0.09)).powf(-0.5)).abs() < 1e-12);
        assert!((h - 0.13416).abs() < 1e-5);
    }

    #[test]
    fn constant_vol_is_its_own_average() {
        let s = VolatilityModel::Constant(0.37);
        let mu = InvariantMeasure::two_atom(-2.0, 5.0);
        assert!((effective_vol_quadratic(&s, &mu) - 0.37).abs() < 1e-15);
        assert!((effective_vol_harmonic(&s, &mu).unwrap() - 0.37).abs() < 1e-15);
    }

    #[test]
    fn vanishing_vol_is_degenerate_for_the_harmonic_mean() {
        let s = VolatilityModel::AbsSin { scale: 1.0 };
        let mu = InvariantMeasure::two_atom(0.0, 1.0);
        assert!(matches!(effective_vol_harmonic(&s, &mu), Err(Error::DegenerateVolatility { .. })));
        assert!(effective_vol_quadratic(&s, &mu) > 0.0);
    }

    #[test]
    fn black_scholes_matches_lognormal_quadrature() {
        let spec = PricingSpec::new(0.05, VolatilityModel::Constant(0.2), Payoff::Call { strike: 1.0 }, 1.0);
        let closed = bs_oracle(&spec, 0.2, 0.0, 1.0);
        let v = std::f64::consts::SQRT_2 * 0.2;
        let quad = (-0.05f64).exp() * lognormal_expectation(&spec.payoff, 0.05f64.exp(), v);
        // the kink limits Gauss-Hermite accuracy
        assert!((closed - quad).abs() < 1e-3, "{closed} vs {quad}");
        // smooth payoff: E[(F e^{-v^2/2 + v Z})^g] = F^g e^{g (g - 1) v^2 / 2}
        let hara = Payoff::Hara { a: 0.5, gamma: 0.5 };
        let exact = 1.2f64.sqrt() * (-0.125 * v * v).exp();
        assert!((lognormal_expectation(&hara, 1.2, v) - exact).abs() < 1e-12);
        // textbook Black-Scholes with volatility sqrt(2) * 0.2
        let d1 = (0.05 + 0.5 * v * v) / v;
        let textbook = normal_cdf(d1) - (-0.05f64).exp() * normal_cdf(d1 - v);
        assert!((closed - textbook).abs() < 1e-14);
    }

    #[test]
    fn oracle_trivial_cases() {
        let spec = PricingSpec::new(0.03, VolatilityModel::Constant(0.2), Payoff::Identity, 2.0);
        assert!((bs_oracle(&spec, 0.2, 0.0, 1.7) - 1.7).abs() < 1e-12);
        let call = PricingSpec { payoff: Payoff::Call { strike: 0.9 }, ..spec };
        let expected = (-0.06f64).exp() * (1.0 * 0.06f64.exp() - 0.9);
        assert!((bs_oracle(&call, 0.0, 0.0, 1.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn put_call_parity() {
        let call = PricingSpec::new(0.02, VolatilityModel::Constant(0.3), Payoff::Call { strike: 1.1 }, 1.5);
        let put = PricingSpec { payoff: Payoff::Put { strike: 1.1 }, ..call.clone() };
        let lhs = bs_oracle(&call, 0.3, 0.0, 1.0) - bs_oracle(&put, 0.3, 0.0, 1.0);
        let rhs = 1.0 - 1.1 * (-0.03f64).exp();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn mc_identity_payoff_is_a_martingale() {
        let sigma = VolatilityModel::Tanh { base: 0.2, amplitude: 0.05 };
        let spec = PricingSpec::new(0.05, sigma, Payoff::Identity, 1.0).with_x0(1.3);
        let model = LevyMeasureModel::symmetric(1.5).unwrap();
        let fast = FastProcessConfig::new(model, 10.0, 0.5, 1.0, 3).with_dt(0.01);
        let e = price_mc(&spec, 0.1, &fast, 4000).unwrap();
        assert!((e.mean - 1.3).abs() < 3.0 * e.std_error + 1e-12, "{e:?}");
    }

    #[test]
    fn mc_without_noise_is_deterministic() {
        let spec = PricingSpec::new(0.05, VolatilityModel::Constant(0.0), Payoff::Call { strike: 0.8 }, 1.0);
        let model = LevyMeasureModel::symmetric(1.5).unwrap();
        let fast = FastProcessConfig::new(model, 1.0, 0.0, 1.0, 1).with_dt(0.01);
        let grid = price_mc_grid(&spec, 1.0, &fast, 1000, &[0.0, 0.5], &[1.0], &[0.0]).unwrap();
        for (ti, t) in [0.0f64, 0.5].iter().enumerate() {
            let tau = 1.0 - t;
            let expected = (-0.05 * tau).exp() * ((0.05 * tau).exp() - 0.8);
            let e = grid.at(ti, 0, 0);
            assert!((e.mean - expected).abs() < 1e-10 && e.std_error < 1e-7, "{e:?} vs {expected}");
        }
    }

    #[test]
    fn mc_refuses_off_grid_times_and_small_batches() {
        let spec = PricingSpec::new(0.05, VolatilityModel::Constant(0.2), Payoff::Identity, 1.0);
        let fast = FastProcessConfig::new(LevyMeasureModel::symmetric(1.5).unwrap(), 1.0, 0.0, 1.0, 1).with_dt(0.1);
        assert!(price_mc(&spec, 1.0, &fast, 10).is_err());
        assert!(matches!(
            price_mc_grid(&spec, 1.0, &fast, 1000, &[0.33], &[1.0], &[0.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn hbar_plug_in_value() {
        let spec = merton(VolatilityModel::Constant(0.2));
        let mu = InvariantMeasure::point_mass(0.0);
        assert!((merton_hbar(&spec, &mu) - 0.08125).abs() < 1e-15);
        let v = merton_hara_closed_form(&spec, &mu, 0.0, 1.0).unwrap();
        assert!((v - 2.0 * 0.040625f64.exp()).abs() < 1e-12);
        assert!((v - 2.08290).abs() < 5e-5);
    }

    #[test]
    fn hbar_small_control_set_tends_to_r() {
        let mut spec = merton(VolatilityModel::Constant(0.2));
        spec.r1 = 0.0;
        spec.r_max = 1e-9;
        let mu = InvariantMeasure::point_mass(0.0);
        assert!((merton_hbar(&spec, &mu) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn hbar_mixed_regimes() {
        // sigma = 0.1: vertex at 0.05 / (2 * 0.5 * 0.01) = 5 > R = 3, boundary regime
        let (s, mu) = two_atom();
        let spec = merton(s);
        let boundary = 0.05 * 3.0 - 0.5 * 0.01 * 9.0;
        let interior = 0.05 * 0.05 / (4.0 * 0.5 * 0.09);
        assert!((merton_hbar(&spec, &mu) - (0.05 + 0.5 * boundary + 0.5 * interior)).abs() < 1e-15);
    }

    #[test]
    fn closed_form_edges() {
        let spec = merton(VolatilityModel::Constant(0.2));
        let mu = InvariantMeasure::point_mass(0.0);
        assert!((merton_hara_closed_form(&spec, &mu, 1.0, 4.0).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(merton_hara_closed_form(&spec, &mu, 0.0, 0.0), Err(Error::Domain(_))));
        let a = merton_hara_closed_form(&spec, &mu, 0.5, 1.0).unwrap();
        let b = merton_hara_closed_form(&spec, &mu, 0.0, 1.0).unwrap();
        let c = merton_hara_closed_form(&spec, &mu, 0.0, 1.5).unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn effective_dynamics_reproduce_the_averaged_hamiltonian() {
        // with every node interior, averaging the frozen Hamiltonian equals
        // the Hamiltonian of constant volatility sigma_bar
        let sigma = VolatilityModel::Tanh { base: 0.2, amplitude: 0.05 };
        let mu = InvariantMeasure::two_atom(-1.0, 2.0);
        let spec = MertonSpec { n_controls: 4001, ..merton(sigma.clone()) };
        let bar = effective_vol_harmonic(&sigma, &mu).unwrap();
        let eff = MertonSpec { sigma: VolatilityModel::Constant(bar), ..spec.clone() };
        let (p1, p2) = (spec.control_problem(0.0), eff.control_problem(0.0));
        for &(w, p, xx) in &[(1.0, 1.0, -1.0), (0.5, 2.0, -3.0), (2.0, 0.3, -0.2)] {
            let avg = crate::generator::effective_hamiltonian_at(&mu, &p1, w, p, xx);
            let (h, _) = hamiltonian_eval(&p2, w, 0.0, p, xx);
            assert!((avg - h).abs() < 1e-5 * h.abs().max(1.0), "{avg} vs {h}");
        }
    }

    #[test]
    fn merton_validation() {
        assert!(MertonSpec::new(0.1, 0.05, VolatilityModel::Constant(0.2), (-1.0, 1.0), 1.0, 0.5, 1.0).is_err());
        assert!(MertonSpec::new(0.05, 0.1, VolatilityModel::Constant(0.2), (-1.0, 1.0), 1.0, 1.5, 1.0).is_err());
        assert!(MertonSpec::new(0.05, 0.1, VolatilityModel::Constant(0.2), (0.5, 1.0), 1.0, 0.5, 1.0).is_err());
    }
}
