//! Control-problem data: coefficients, payoffs, control grids and the
//! Bellman Hamiltonian.
//!
//! The state is one-dimensional and lives on `[0, inf)`. Dynamics are
//! `dX = f(X, Y, u) dt + sigma(X, Y, u) dW` and the Hamiltonian is
//! `H(x, y, p, X) = min_u { -1/2 sigma^2 X - f p }`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type CoefficientFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type BoundaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Volatility profile `sigma(y)` of the fast factor.
#[derive(Clone)]
pub enum VolatilityModel {
    Constant(f64),
    /// `base + amplitude * tanh(y)`
    Tanh { base: f64, amplitude: f64 },
    /// `scale * |sin(y)|`
    AbsSin { scale: f64 },
    Custom(ScalarFn),
}

impl VolatilityModel {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            VolatilityModel::Constant(s) => *s,
            VolatilityModel::Tanh { base, amplitude } => base + amplitude * y.tanh(),
            VolatilityModel::AbsSin { scale } => scale * y.sin().abs(),
            VolatilityModel::Custom(f) => f(y),
        }
    }

    /// Lower and upper bounds over the real line.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            VolatilityModel::Constant(s) => Some((*s, *s)),
            VolatilityModel::Tanh { base, amplitude } => {
                Some((base - amplitude.abs(), base + amplitude.abs()))
            }
            VolatilityModel::AbsSin { scale } => Some((0.0, scale.abs())),
            VolatilityModel::Custom(_) => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, VolatilityModel::Constant(_))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.range() {
            if !(lo >= 0.0 && hi.is_finite()) {
                return Err(Error::invalid(
                    "problem.sigma",
                    format!("volatility must be bounded and nonnegative, range is [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for VolatilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VolatilityModel::Constant(s) => write!(f, "Constant({s})"),
            VolatilityModel::Tanh { base, amplitude } => write!(f, "Tanh({base} + {amplitude} tanh y)"),
            VolatilityModel::AbsSin { scale } => write!(f, "AbsSin({scale} |sin y|)"),
            VolatilityModel::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Terminal payoff `g(x)`.
#[derive(Clone)]
pub enum Payoff {
    Constant(f64),
    Identity,
    Call { strike: f64 },
    Put { strike: f64 },
    /// `a x^gamma / gamma`
    Hara { a: f64, gamma: f64 },
    Custom { g: ScalarFn, growth: f64 },
}

impl Payoff {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Payoff::Constant(k) => *k,
            Payoff::Identity => x,
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Put { strike } => (strike - x).max(0.0),
            Payoff::Hara { a, gamma } => a * x.max(0.0).powf(*gamma) / gamma,
            Payoff::Custom { g, .. } => g(x),
        }
    }

    /// A constant `K` with `|g(x)| <= K (1 + x^2)`.
    pub fn growth_constant(&self) -> f64 {
        match self {
            Payoff::Constant(k) => k.abs(),
            Payoff::Identity => 1.0,
            Payoff::Call { strike } => 1.0 + strike.abs(),
            Payoff::Put { strike } => strike.abs(),
            Payoff::Hara { a, gamma } => (a / gamma).abs(),
            Payoff::Custom { growth, .. } => *growth,
        }
    }

    pub fn strike(&self) -> Option<f64> {
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } => Some(*strike),
            _ => None,
        }
    }
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Constant(k) => write!(f, "Constant({k})"),
            Payoff::Identity => f.write_str("Identity"),
            Payoff::Call { strike } => write!(f, "Call({strike})"),
            Payoff::Put { strike } => write!(f, "Put({strike})"),
            Payoff::Hara { a, gamma } => write!(f, "Hara(a={a}, gamma={gamma})"),
            Payoff::Custom { growth, .. } => write!(f, "Custom(K={growth})"),
        }
    }
}

/// `n` equispaced points on `[lo, hi]`.
pub fn control_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi == lo {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

pub const DEFAULT_CONTROL_POINTS: usize = 41;

/// One-dimensional controlled diffusion with a fast factor `y`.
#[derive(Clone)]
pub struct ControlProblemSpec {
    pub name: String,
    /// `f(x, y, u)`
    pub drift: CoefficientFn,
    /// `sigma(x, y, u)`
    pub vol: CoefficientFn,
    pub controls: Vec<f64>,
    pub payoff: Payoff,
    pub discount: f64,
    pub horizon: f64,
    /// Coefficients are `x` times functions of `(y, u)`; enables the
    /// positivity-preserving log-Euler scheme.
    pub multiplicative: bool,
    /// Dirichlet data `(tau, x)` at the truncated far field, with `tau`
    /// the time to maturity.
    pub far_field: BoundaryFn,
}

impl fmt::Debug for ControlProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblemSpec")
            .field("name", &self.name)
            .field("controls", &self.controls.len())
            .field("payoff", &self.payoff)
            .field("discount", &self.discount)
            .field("horizon", &self.horizon)
            .field("multiplicative", &self.multiplicative)
            .finish()
    }
}

impl ControlProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.controls.is_empty() {
            return Err(Error::invalid("problem.controls", "control grid is empty"));
        }
        if !(self.discount >= 0.0 && self.discount.is_finite()) {
            return Err(Error::invalid(
                "problem.discount",
                format!("{} must be finite and nonnegative", self.discount),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(
                "problem.horizon",
                format!("{} must be positive", self.horizon),
            ));
        }
        Ok(())
    }

    /// Uncontrolled problem with zero coefficients: only discounting acts.
    pub fn trivial(payoff: Payoff, discount: f64, horizon: f64) -> Self {
        let c = discount;
        let g = payoff.clone();
        Self {
            name: "trivial".into(),
            drift: Arc::new(|_, _, _| 0.0),
            vol: Arc::new(|_, _, _| 0.0),
            controls: vec![0.0],
            payoff,
            discount,
            horizon,
            multiplicative: true,
            far_field: Arc::new(move |tau, x| (-c * tau).exp() * g.eval(x)),
        }
    }

    pub fn with_controls(mut self, controls: Vec<f64>) -> Self {
        self.controls = controls;
        self
    }

    pub fn with_payoff(mut self, payoff: Payoff) -> Self {
        self.payoff = payoff;
        self
    }

    /// `H(x, y, p, X)` with a frozen `y`, as a function of `y`.
    pub fn frozen_hamiltonian(&self, x: f64, p: f64, xx: f64) -> impl Fn(f64) -> f64 + Sync + '_ {
        move |y| hamiltonian_eval(self, x, y, p, xx).0
    }
}

/// `min_u { -1/2 sigma(x,y,u)^2 X - f(x,y,u) p }` over the control grid.
/// Returns the value and the index of the minimising control; ties go to
/// the smallest index.
pub fn hamiltonian_eval(spec: &ControlProblemSpec, x: f64, y: f64, p: f64, xx: f64) -> (f64, usize) {
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (k, &u) in spec.controls.iter().enumerate() {
        let s = (spec.vol)(x, y, u);
        let v = -0.5 * s * s * xx - (spec.drift)(x, y, u) * p;
        if v < best {
            best = v;
            arg = k;
        }
    }
    (best, arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn merton_like(sigma: f64) -> ControlProblemSpec {
        let (r, a) = (0.05, 0.1);
        ControlProblemSpec {
            name: "merton".into(),
            drift: Arc::new(move |w, _, u| w * (r + (a - r) * u)),
            vol: Arc::new(move |w, _, u| std::f64::consts::SQRT_2 * w * u * sigma),
            controls: control_grid(-3.0, 3.0, 601),
            payoff: Payoff::Hara { a: 1.0, gamma: 0.5 },
            discount: 0.0,
            horizon: 1.0,
            multiplicative: true,
            far_field: Arc::new(|_, _| 0.0),
        }
    }

    #[test]
    fn zero_gradient_gives_zero_and_first_control() {
        let spec = merton_like(0.2);
        assert_eq!(hamiltonian_eval(&spec, 1.0, 0.0, 0.0, 0.0), (0.0, 0));
    }

    #[test]
    fn interior_merton_maximiser() {
        let (r, a, s) = (0.05, 0.1, 0.2);
        let spec = merton_like(s);
        let (w, p, xx) = (1.0, 1.0, -1.0);
        let (h, _) = hamiltonian_eval(&spec, w, 0.0, p, xx);
        let expected = (a - r) * (a - r) * p * p / (4.0 * s * s * xx) - r * w * p;
        assert!((h - expected).abs() < 1e-6, "{h} vs {expected}");
    }

    #[test]
    fn single_control_is_linear() {
        let spec = merton_like(0.2).with_controls(vec![0.5]);
        let (h, k) = hamiltonian_eval(&spec, 2.0, 0.0, 1.5, -0.5);
        let s = std::f64::consts::SQRT_2 * 2.0 * 0.5 * 0.2;
        let expected = -0.5 * s * s * -0.5 - 2.0 * (0.05 + 0.05 * 0.5) * 1.5;
        assert_eq!(k, 0);
        assert!((h - expected).abs() < 1e-14);
    }

    #[test]
    fn hamiltonian_is_monotone_in_hessian() {
        let spec = merton_like(0.25);
        for &xx in &[-2.0, -1.0, -0.1] {
            let lo = hamiltonian_eval(&spec, 1.0, 0.0, 0.7, xx).0;
            let hi = hamiltonian_eval(&spec, 1.0, 0.0, 0.7, xx + 0.5).0;
            assert!(lo >= hi);
        }
    }

    #[test]
    fn payoffs_respect_growth() {
        let ps = [
            Payoff::Call { strike: 1.0 },
            Payoff::Put { strike: 1.0 },
            Payoff::Hara { a: 1.0, gamma: 0.5 },
            Payoff::Identity,
        ];
        for p in &ps {
            for &x in &[0.0, 0.3, 1.0, 7.0, 100.0] {
                assert!(p.eval(x).abs() <= p.growth_constant() * (1.0 + x * x) + 1e-12);
            }
        }
    }
}
