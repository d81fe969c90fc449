//! Stable increments, the fast OU factor and the controlled slow state.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::control::ControlProblemSpec;
use crate::error::{Error, Result};
use crate::levy::{LevyMeasureModel, StableLaw};
use crate::rng::{brownian_stream, jump_stream, Rng};

/// Chambers–Mallows–Stuck sampler for the law of `Z(h)`.
///
/// With `V` uniform on `(-pi/2, pi/2)` and `W` standard exponential,
/// `S = (1 + b^2 tan^2(pi a/2))^{1/(2a)}`, `B = atan(b tan(pi a/2)) / a`,
///
/// `X = S sin(a (V + B)) / cos(V)^{1/a} * (cos(V - a (V + B)) / W)^{(1-a)/a}`
///
/// has characteristic function `exp(-|u|^a (1 - i b sign(u) tan(pi a/2)))`
/// (for `a = 1`, `b = 0` this reduces to `tan V`). Over internal time `h`,
/// `Z(h) = scale h^{1/a} X + drift h` by self-similarity, where
/// `scale` and `drift` come from [`LevyMeasureModel::stable_law`]. For the
/// one-sided family the drift is the compensator of the small jumps,
/// `c / (a - 1)` per unit time.
#[derive(Debug, Clone, Copy)]
pub struct StableSampler {
    law: StableLaw,
    shift: f64,
    factor: f64,
    null: bool,
}

impl StableSampler {
    pub fn new(model: &LevyMeasureModel, allow_subordinator: bool) -> Result<Self> {
        if model.is_subordinator_mode() && !allow_subordinator {
            return Err(Error::Usage(
                "sampling from a subordinator-mode measure must be requested explicitly".into(),
            ));
        }
        let law = model.stable_law();
        let a = law.alpha;
        let (shift, factor) = if law.skew == 0.0 {
            (0.0, 1.0)
        } else {
            let t = law.skew * (PI * a / 2.0).tan();
            (t.atan(), (1.0 + t * t).powf(1.0 / (2.0 * a)))
        };
        Ok(Self {
            law,
            shift,
            factor,
            null: model.is_null(),
        })
    }

    pub fn law(&self) -> StableLaw {
        self.law
    }

    /// One draw of the standardised variable `X`.
    pub fn standard(&self, rng: &mut Rng) -> f64 {
        let a = self.law.alpha;
        let v = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break PI * (u - 0.5);
            }
        };
        if self.law.skew == 0.0 && (a - 1.0).abs() < 1e-12 {
            return v.tan();
        }
        let w: f64 = Exp1.sample(rng);
        let av = a * v + self.shift;
        self.factor * av.sin() / v.cos().powf(1.0 / a)
            * ((v - av).cos() / w).powf((1.0 - a) / a)
    }

    /// Coefficients `(scale h^{1/a}, drift h)` of the increment over `h`.
    pub fn step_coefficients(&self, h: f64) -> (f64, f64) {
        if self.null {
            return (0.0, 0.0);
        }
        (self.law.scale * h.powf(1.0 / self.law.alpha), self.law.drift * h)
    }

    /// One increment `Z(t + h) - Z(t)`.
    pub fn increment(&self, h: f64, rng: &mut Rng) -> f64 {
        if self.null {
            return 0.0;
        }
        let (s, m) = self.step_coefficients(h);
        s * self.standard(rng) + m
    }
}

/// One increment of the driver over internal time `dt_scaled`.
pub fn sample_stable_increment(model: &LevyMeasureModel, dt_scaled: f64, rng: &mut Rng) -> Result<f64> {
    if !(dt_scaled > 0.0 && dt_scaled.is_finite()) {
        return Err(Error::invalid("dt_scaled", format!("{dt_scaled} must be positive")));
    }
    Ok(StableSampler::new(model, false)?.increment(dt_scaled, rng))
}

/// Parameters of the fast factor `dY = -lambda Y dt + dZ(lambda t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastProcessConfig {
    pub model: LevyMeasureModel,
    pub lambda: f64,
    pub y0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl FastProcessConfig {
    /// Default step `min(eps / 20, horizon / 2000)` with `eps = 1 / lambda`.
    pub fn new(model: LevyMeasureModel, lambda: f64, y0: f64, horizon: f64, seed: u64) -> Self {
        let dt = (1.0 / (20.0 * lambda)).min(horizon / 2000.0);
        Self {
            model,
            lambda,
            y0,
            dt,
            horizon,
            seed,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_y0(mut self, y0: f64) -> Self {
        self.y0 = y0;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / self.lambda
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("{} must be positive", self.lambda)));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.dt < self.horizon) {
            return Err(Error::invalid(
                "dt",
                format!("need 0 < dt < horizon, got dt={} horizon={}", self.dt, self.horizon),
            ));
        }
        if !self.y0.is_finite() {
            return Err(Error::invalid("y0", "initial state must be finite"));
        }
        Ok(())
    }

    /// Number of steps; the step is shrunk so that it divides the horizon.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps() as f64
    }

    pub fn stepper(&self, allow_subordinator: bool) -> Result<FastStepper> {
        self.validate()?;
        FastStepper::new(&self.model, self.lambda, self.step(), allow_subordinator)
    }
}

/// One step `Y <- exp(-lambda dt) Y + dZ(lambda dt)` with the jump
/// increment lumped at the end of the step.
#[derive(Debug, Clone, Copy)]
pub struct FastStepper {
    sampler: StableSampler,
    decay: f64,
    scale: f64,
    drift: f64,
    pub dt: f64,
}

impl FastStepper {
    pub fn new(model: &LevyMeasureModel, lambda: f64, dt: f64, allow_subordinator: bool) -> Result<Self> {
        let sampler = StableSampler::new(model, allow_subordinator)?;
        let (scale, drift) = sampler.step_coefficients(lambda * dt);
        Ok(Self {
            sampler,
            decay: (-lambda * dt).exp(),
            scale,
            drift,
            dt,
        })
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    #[inline]
    pub fn step(&self, y: f64, rng: &mut Rng) -> f64 {
        if self.scale == 0.0 {
            return self.decay * y + self.drift;
        }
        self.decay * y + self.scale * self.sampler.standard(rng) + self.drift
    }
}

/// A sampled trajectory on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl PathSample {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("paths are never empty")
    }

    /// Writes `time,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "time,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates path `index` of the fast factor.
pub fn simulate_fast_path_indexed(cfg: &FastProcessConfig, index: u64) -> Result<PathSample> {
    let stepper = cfg.stepper(cfg.model.is_subordinator_mode())?;
    let n = cfg.n_steps();
    let h = stepper.dt;
    let mut rng = jump_stream(cfg.seed, index);
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut y = cfg.y0;
    times.push(0.0);
    values.push(y);
    for k in 1..=n {
        y = stepper.step(y, &mut rng);
        times.push(if k == n { cfg.horizon } else { k as f64 * h });
        values.push(y);
    }
    Ok(PathSample {
        times,
        values,
        seed: cfg.seed,
    })
}

pub fn simulate_fast_path(cfg: &FastProcessConfig) -> Result<PathSample> {
    simulate_fast_path_indexed(cfg, 0)
}

/// Control as a function of `(t, x, y)`.
#[derive(Clone)]
pub enum ControlPolicy {
    Constant(f64),
    Feedback(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl ControlPolicy {
    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            ControlPolicy::Constant(u) => *u,
            ControlPolicy::Feedback(f) => f(t, x, y),
        }
    }
}

impl std::fmt::Debug for ControlPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlPolicy::Constant(u) => write!(f, "Constant({u})"),
            ControlPolicy::Feedback(_) => f.write_str("Feedback"),
        }
    }
}

/// Slow state driven by the fast factor.
#[derive(Debug, Clone)]
pub struct SlowSystemConfig {
    pub problem: ControlProblemSpec,
    pub fast: FastProcessConfig,
    pub x0: f64,
    pub policy: ControlPolicy,
}

impl SlowSystemConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.fast.validate()?;
        if !(self.x0 >= 0.0 && self.x0.is_finite()) {
            return Err(Error::invalid("x0", format!("{} must be nonnegative", self.x0)));
        }
        Ok(())
    }
}

/// Simulates path `index` of `(X, Y)`. The factor enters each step at its
/// left endpoint. Multiplicative models use the log-Euler step
/// `X <- X exp((a - b^2/2) dt + b dW)` with `a = f/x`, `b = sigma/x`, which
/// keeps `X >= 0` and is exact for constant coefficients; other models
/// use Euler–Maruyama.
pub fn simulate_slow_system_indexed(cfg: &SlowSystemConfig, index: u64) -> Result<(PathSample, PathSample)> {
    cfg.validate()?;
    let fast = &cfg.fast;
    let stepper = fast.stepper(false)?;
    let n = fast.n_steps();
    let h = stepper.dt;
    let sqrt_h = h.sqrt();
    let mut jr = jump_stream(fast.seed, index);
    let mut br = brownian_stream(fast.seed, index);
    let spec = &cfg.problem;

    let mut times = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    let (mut x, mut y) = (cfg.x0, fast.y0);
    times.push(0.0);
    xs.push(x);
    ys.push(y);
    for k in 0..n {
        let t = k as f64 * h;
        let u = cfg.policy.eval(t, x, y);
        if !u.is_finite() {
            return Err(Error::Simulation {
                step: k,
                reason: format!("control policy returned {u} at t={t}, x={x}, y={y}"),
            });
        }
        let z: f64 = StandardNormal.sample(&mut br);
        let dw = sqrt_h * z;
        x = if spec.multiplicative {
            if x > 0.0 {
                let a = (spec.drift)(x, y, u) / x;
                let b = (spec.vol)(x, y, u) / x;
                x * ((a - 0.5 * b * b) * h + b * dw).exp()
            } else {
                0.0
            }
        } else {
            x + (spec.drift)(x, y, u) * h + (spec.vol)(x, y, u) * dw
        };
        if !x.is_finite() {
            return Err(Error::Simulation {
                step: k,
                reason: "slow state became non-finite".into(),
            });
        }
        y = stepper.step(y, &mut jr);
        times.push(if k + 1 == n { fast.horizon } else { (k + 1) as f64 * h });
        xs.push(x);
        ys.push(y);
    }
    Ok((
        PathSample {
            times: times.clone(),
            values: xs,
            seed: fast.seed,
        },
        PathSample {
            times,
            values: ys,
            seed: fast.seed,
        },
    ))
}

pub fn simulate_slow_system(cfg: &SlowSystemConfig) -> Result<(PathSample, PathSample)> {
    simulate_slow_system_indexed(cfg, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{ControlProblemSpec, Payoff};
    use crate::rng::substream;
    use crate::stats::median;

    fn sym(alpha: f64) -> LevyMeasureModel {
        LevyMeasureModel::symmetric(alpha).unwrap()
    }

    #[test]
    fn null_driver_increment_is_zero() {
        let m = sym(1.5).null_driver();
        let mut rng = substream(1, 0);
        assert_eq!(sample_stable_increment(&m, 0.3, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn empirical_cf_matches_exponent() {
        let m = sym(1.5);
        let psi = m.levy_exponent(1.0).unwrap().re;
        let sampler = StableSampler::new(&m, false).unwrap();
        let mut rng = substream(11, 0);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += sampler.increment(1.0, &mut rng).cos();
        }
        let cf = acc / n as f64;
        assert!((cf - psi.exp()).abs() < 0.01, "{cf} vs {}", psi.exp());
    }

    #[test]
    fn one_sided_cf_matches_exponent() {
        let m = LevyMeasureModel::one_sided(1.5).unwrap();
        let psi = m.levy_exponent(1.0).unwrap();
        let sampler = StableSampler::new(&m, false).unwrap();
        let mut rng = substream(12, 0);
        let n = 400_000;
        let (mut re, mut im) = (0.0, 0.0);
        for _ in 0..n {
            let z = sampler.increment(1.0, &mut rng);
            re += z.cos();
            im += z.sin();
        }
        let target = psi.exp();
        assert!((re / n as f64 - target.re).abs() < 0.01);
        assert!((im / n as f64 - target.im).abs() < 0.01);
    }

    #[test]
    fn symmetric_median_is_zero() {
        let sampler = StableSampler::new(&sym(1.3), false).unwrap();
        let mut rng = substream(3, 0);
        let n = 40_000;
        let xs: Vec<f64> = (0..n).map(|_| sampler.increment(1.0, &mut rng)).collect();
        let med = median(&xs);
        // density at the median, from the standardised law
        let law = sampler.law();
        let f0 = stable_density_at_zero(law.alpha) / law.scale;
        let se = 1.0 / (2.0 * f0 * (n as f64).sqrt());
        assert!(med.abs() < 3.0 * se, "median {med}, se {se}");
    }

    // f(0) = Gamma(1 + 1/a) / pi for the standard symmetric stable law.
    fn stable_density_at_zero(a: f64) -> f64 {
        statrs::function::gamma::gamma(1.0 + 1.0 / a) / PI
    }

    #[test]
    fn subordinator_needs_explicit_opt_in() {
        let m = LevyMeasureModel::subordinator(0.5).unwrap();
        assert!(StableSampler::new(&m, false).is_err());
        assert!(StableSampler::new(&m, true).is_ok());
    }

    #[test]
    fn null_driver_decays_exactly() {
        let cfg = FastProcessConfig {
            model: sym(1.5).null_driver(),
            lambda: 2.0,
            y0: 3.0,
            dt: 0.01,
            horizon: 1.0,
            seed: 0,
        };
        let p = simulate_fast_path(&cfg).unwrap();
        assert!((p.terminal() - 3.0 * (-2.0f64).exp()).abs() < 1e-12);
        for (t, v) in p.times.iter().zip(&p.values) {
            assert!((v - 3.0 * (-2.0 * t).exp()).abs() < 1e-12);
        }
        let zero = simulate_fast_path(&cfg.with_y0(0.0)).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn paths_are_reproducible() {
        let cfg = FastProcessConfig::new(sym(1.5), 5.0, 0.5, 2.0, 99);
        let a = simulate_fast_path(&cfg).unwrap();
        let b = simulate_fast_path(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times[0], 0.0);
        assert!(a.times.windows(2).all(|w| w[0] < w[1]));
    }

    fn pricing(r: f64, sigma: f64) -> ControlProblemSpec {
        let s2 = std::f64::consts::SQRT_2 * sigma;
        ControlProblemSpec {
            name: "pricing".into(),
            drift: Arc::new(move |x, _, _| r * x),
            vol: Arc::new(move |x, _, _| s2 * x),
            controls: vec![0.0],
            payoff: Payoff::Identity,
            discount: r,
            horizon: 1.0,
            multiplicative: true,
            far_field: Arc::new(|_, x| x),
        }
    }

    #[test]
    fn deterministic_slow_state() {
        let fast = FastProcessConfig::new(sym(1.5), 10.0, 0.0, 1.0, 4);
        let cfg = SlowSystemConfig {
            problem: pricing(0.05, 0.0),
            fast,
            x0: 1.0,
            policy: ControlPolicy::Constant(0.0),
        };
        let (x, _) = simulate_slow_system(&cfg).unwrap();
        assert!((x.terminal() - 0.05f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn riskless_merton_wealth() {
        let (r, a) = (0.05, 0.1);
        let spec = ControlProblemSpec {
            name: "merton".into(),
            drift: Arc::new(move |w, _, u| w * (r + (a - r) * u)),
            vol: Arc::new(|w, y, u| std::f64::consts::SQRT_2 * w * u * (0.2 + 0.05 * f64::tanh(y))),
            controls: vec![0.0],
            payoff: Payoff::Hara { a: 1.0, gamma: 0.5 },
            discount: 0.0,
            horizon: 2.0,
            multiplicative: true,
            far_field: Arc::new(|_, _| 0.0),
        };
        let fast = FastProcessConfig::new(sym(1.2), 10.0, 0.0, 2.0, 4);
        let cfg = SlowSystemConfig {
            problem: spec,
            fast,
            x0: 1.0,
            policy: ControlPolicy::Constant(0.0),
        };
        let (w, _) = simulate_slow_system(&cfg).unwrap();
        assert!((w.terminal() - 0.1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn nan_policy_is_reported_with_step() {
        let fast = FastProcessConfig::new(sym(1.5), 10.0, 0.0, 1.0, 4);
        let cfg = SlowSystemConfig {
            problem: pricing(0.05, 0.2),
            fast,
            x0: 1.0,
            policy: ControlPolicy::Feedback(Arc::new(|t, _, _| if t > 0.5 { f64::NAN } else { 0.0 })),
        };
        match simulate_slow_system(&cfg) {
            Err(Error::Simulation { step, .. }) => assert!(step > 0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
