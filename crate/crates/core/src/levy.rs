//! Parametric Lévy measures of stable type and the integral functionals
//! used to certify the standing assumptions on the driver.
//!
//! Two families are supported, both with density `c |z|^{-1-alpha}`:
//! the symmetric one on `R \ {0}` and the one-sided one on `(0, inf)`.
//! All integrals over the measure are taken over its support.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{geometric_breakpoints, integrate, Tolerance};

/// Taylor split used by the exponent quadrature.
pub const SMALL_JUMP_SPLIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevyFamily {
    SymmetricStable,
    OneSidedStable,
}

impl fmt::Display for LevyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevyFamily::SymmetricStable => f.write_str("symmetric_stable"),
            LevyFamily::OneSidedStable => f.write_str("one_sided_stable"),
        }
    }
}

impl FromStr for LevyFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "symmetric" | "symmetric_stable" | "symmetricstable" => Ok(LevyFamily::SymmetricStable),
            "one_sided" | "one_sided_stable" | "onesidedstable" => Ok(LevyFamily::OneSidedStable),
            other => Err(format!(
                "unknown family `{other}` (expected symmetric_stable or one_sided_stable)"
            )),
        }
    }
}

/// Value of a possibly divergent integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn is_finite(&self) -> bool {
        matches!(self, Moment::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Moment::Finite(v) => Some(v),
            Moment::Infinite => None,
        }
    }
}

/// A Lévy measure `nu(dz) = intensity * |z|^{-1-alpha} dz` on the support
/// of the chosen family.
///
/// One-sided measures with `alpha < 1` generate subordinators; they are
/// accepted only when built through [`LevyMeasureModel::subordinator`].
/// An intensity of zero is the null driver (no jumps at all), used to test
/// the deterministic part of the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyMeasureModel {
    family: LevyFamily,
    alpha: f64,
    intensity: f64,
    subordinator: bool,
}

impl LevyMeasureModel {
    pub fn new(family: LevyFamily, alpha: f64, intensity: f64, subordinator: bool) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::invalid("levy.alpha", format!("{alpha} is outside (0, 2)")));
        }
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return Err(Error::invalid(
                "levy.intensity",
                format!("{intensity} must be a finite nonnegative number"),
            ));
        }
        match family {
            LevyFamily::SymmetricStable if subordinator => {
                return Err(Error::invalid(
                    "levy.subordinator",
                    "a symmetric measure cannot generate a subordinator",
                ))
            }
            LevyFamily::OneSidedStable if subordinator && alpha >= 1.0 => {
                return Err(Error::invalid(
                    "levy.alpha",
                    format!("subordinator mode needs alpha in (0, 1), got {alpha}"),
                ))
            }
            LevyFamily::OneSidedStable if !subordinator && alpha <= 1.0 => {
                return Err(Error::invalid(
                    "levy.alpha",
                    format!(
                        "one-sided driver needs alpha in (1, 2), got {alpha}; \
                         alpha < 1 is only available in subordinator mode"
                    ),
                ))
            }
            _ => {}
        }
        Ok(Self {
            family,
            alpha,
            intensity,
            subordinator,
        })
    }

    pub fn symmetric(alpha: f64) -> Result<Self> {
        Self::new(LevyFamily::SymmetricStable, alpha, 1.0, false)
    }

    pub fn one_sided(alpha: f64) -> Result<Self> {
        Self::new(LevyFamily::OneSidedStable, alpha, 1.0, false)
    }

    /// One-sided measure with `alpha in (0, 1)`: the counterexample driver.
    pub fn subordinator(alpha: f64) -> Result<Self> {
        Self::new(LevyFamily::OneSidedStable, alpha, 1.0, true)
    }

    pub fn with_intensity(self, intensity: f64) -> Result<Self> {
        Self::new(self.family, self.alpha, intensity, self.subordinator)
    }

    /// Same family and index with zero intensity.
    pub fn null_driver(self) -> Self {
        Self {
            intensity: 0.0,
            ..self
        }
    }

    pub fn family(&self) -> LevyFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn is_null(&self) -> bool {
        self.intensity == 0.0
    }

    pub fn is_subordinator_mode(&self) -> bool {
        self.subordinator
    }

    pub fn is_symmetric(&self) -> bool {
        self.family == LevyFamily::SymmetricStable
    }

    pub fn in_support(&self, z: f64) -> bool {
        match self.family {
            LevyFamily::SymmetricStable => z != 0.0,
            LevyFamily::OneSidedStable => z > 0.0,
        }
    }

    /// Number of half-lines carrying mass.
    fn sides(&self) -> f64 {
        match self.family {
            LevyFamily::SymmetricStable => 2.0,
            LevyFamily::OneSidedStable => 1.0,
        }
    }

    /// `d nu / dz` at `z != 0`.
    pub fn density(&self, z: f64) -> Result<f64> {
        if z == 0.0 || z.is_nan() {
            return Err(Error::Domain(
                "the Levy measure has no mass at the origin; density is undefined at z = 0".into(),
            ));
        }
        if !self.in_support(z) {
            return Ok(0.0);
        }
        Ok(self.intensity * z.abs().powf(-1.0 - self.alpha))
    }

    /// `int_{|z| <= delta} z^2 nu(dz)`, closed form.
    pub fn small_jump_variance(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid("delta", format!("{delta} is outside (0, 1]")));
        }
        Ok(self.second_moment_below(delta))
    }

    /// `int_{|z| <= r} z^2 nu(dz)` for any `r >= 0`.
    pub fn second_moment_below(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.sides() * self.intensity * r.powf(2.0 - self.alpha) / (2.0 - self.alpha)
    }

    /// `nu(|z| > r)` for `r > 0`.
    pub fn mass_beyond(&self, r: f64) -> f64 {
        debug_assert!(r > 0.0);
        self.sides() * self.intensity * r.powf(-self.alpha) / self.alpha
    }

    /// `nu((a, b))` on the positive half-line, `0 < a < b <= inf`.
    pub fn positive_mass_between(&self, a: f64, b: f64) -> f64 {
        let upper = if b.is_finite() { b.powf(-self.alpha) } else { 0.0 };
        self.intensity * (a.powf(-self.alpha) - upper) / self.alpha
    }

    /// `int_a^b z nu(dz)` on the positive half-line, `0 < a < b < inf`.
    pub fn positive_first_moment_between(&self, a: f64, b: f64) -> f64 {
        self.intensity * power_integral(a, b, -self.alpha)
    }

    /// `int_{|z| > 1} |z|^q nu(dz)`.
    pub fn tail_moment(&self, q: f64) -> Result<Moment> {
        if !(q > 0.0) {
            return Err(Error::invalid("q", format!("{q} must be positive")));
        }
        if self.is_null() {
            return Ok(Moment::Finite(0.0));
        }
        if q >= self.alpha {
            return Ok(Moment::Infinite);
        }
        Ok(Moment::Finite(self.sides() * self.intensity / (self.alpha - q)))
    }

    /// The Lévy–Khintchine exponent
    /// `psi(u) = int (e^{iuz} - 1 - iuz 1_{|z|<=1}) nu(dz)`,
    /// by quadrature: Taylor expansion below the small-jump split,
    /// adaptive Gauss–Kronrod on the body and an integration-by-parts
    /// series for the oscillatory tail.
    pub fn levy_exponent(&self, u: f64) -> Result<Complex64> {
        if u == 0.0 || self.is_null() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let half = half_line_exponent(self.alpha, u)?;
        let c = self.intensity;
        Ok(match self.family {
            LevyFamily::SymmetricStable => Complex64::new(2.0 * c * half.re, 0.0),
            LevyFamily::OneSidedStable => half * c,
        })
    }

    /// Parameters of the stable law of `Z(1)`.
    pub fn stable_law(&self) -> StableLaw {
        let a = self.alpha;
        let c = self.intensity;
        match self.family {
            LevyFamily::SymmetricStable => {
                let scale_pow = if (a - 1.0).abs() < 1e-12 {
                    c * PI
                } else {
                    -2.0 * c * gamma(-a) * (PI * a / 2.0).cos()
                };
                StableLaw {
                    alpha: a,
                    scale: scale_pow.powf(1.0 / a),
                    skew: 0.0,
                    drift: 0.0,
                }
            }
            LevyFamily::OneSidedStable => {
                // psi(u) = c [Gamma(-a) (-iu)^a + iu / (a - 1)] in both index ranges.
                let scale_pow = -c * gamma(-a) * (PI * a / 2.0).cos();
                StableLaw {
                    alpha: a,
                    scale: scale_pow.powf(1.0 / a),
                    skew: 1.0,
                    drift: c / (a - 1.0),
                }
            }
        }
    }

    /// Certifies the three standing assumptions for the stable family.
    pub fn check_assumptions(&self) -> AssumptionReport {
        let a = self.alpha;
        let c_witness = self.sides() * self.intensity / (2.0 - a);
        let two_sided = self.is_symmetric();
        let (a2_satisfied, a2_reason) = if self.is_null() {
            (false, A2Reason::None)
        } else if two_sided {
            (true, A2Reason::SupportCovers)
        } else if a > 1.0 {
            (true, A2Reason::PGreaterThanOne)
        } else {
            (false, A2Reason::None)
        };
        AssumptionReport {
            p_witness: a,
            c_witness,
            q_witness: a / 2.0,
            a2_satisfied,
            a2_reason,
            is_subordinator: !two_sided && a < 1.0,
        }
    }

    /// `key = value` lines of the `[levy]` config section.
    pub fn config_lines(&self) -> Vec<String> {
        vec![
            format!("family = {}", self.family),
            format!("alpha = {}", self.alpha),
            format!("intensity = {}", self.intensity),
            format!("subordinator = {}", self.subordinator),
        ]
    }
}

/// `int_a^b z^m dz` for `0 < a <= b`.
pub(crate) fn power_integral(a: f64, b: f64, m: f64) -> f64 {
    if (m + 1.0).abs() < 1e-14 {
        (b / a).ln()
    } else {
        (b.powf(m + 1.0) - a.powf(m + 1.0)) / (m + 1.0)
    }
}

/// `int_0^inf (e^{iuz} - 1 - iuz 1_{z<=1}) z^{-1-alpha} dz` for `u != 0`.
fn half_line_exponent(alpha: f64, u: f64) -> Result<Complex64> {
    let kappa = SMALL_JUMP_SPLIT / u.abs().max(1.0);
    let tol = Tolerance {
        abs: 1e-13,
        rel: 1e-10,
        max_intervals: 50_000,
    };

    // [0, kappa]: Taylor series of the compensated exponential.
    let k = |p: f64| kappa.powf(p - alpha) / (p - alpha);
    let re_small = -u.powi(2) / 2.0 * k(2.0) + u.powi(4) / 24.0 * k(4.0) - u.powi(6) / 720.0 * k(6.0);
    let im_small = -u.powi(3) / 6.0 * k(3.0) + u.powi(5) / 120.0 * k(5.0);

    // [kappa, 1]
    let inner = geometric_breakpoints(kappa, 1.0);
    let re_inner = integrate(
        |z: f64| -2.0 * (0.5 * u * z).sin().powi(2) * z.powf(-1.0 - alpha),
        &inner,
        tol,
    )?;
    let im_inner = integrate(
        |z: f64| ((u * z).sin() - u * z) * z.powf(-1.0 - alpha),
        &inner,
        tol,
    )?;

    // [1, A] split at half periods, A chosen so that |u| A >= 200.
    let half_period = PI / u.abs();
    let upper = (200.0 / u.abs()).max(2.0);
    let mut outer = vec![1.0];
    let mut z = half_period.ceil_to_multiple_above(1.0);
    while z < upper {
        outer.push(z);
        z += half_period;
    }
    outer.push(upper);
    let re_outer = integrate(
        |z: f64| ((u * z).cos() - 1.0) * z.powf(-1.0 - alpha),
        &outer,
        tol,
    )?;
    let im_outer = integrate(|z: f64| (u * z).sin() * z.powf(-1.0 - alpha), &outer, tol)?;

    // [A, inf): -int z^{-1-alpha} plus the oscillatory series.
    let tail = oscillatory_tail(u, upper, 1.0 + alpha);
    let re_tail = -upper.powf(-alpha) / alpha + tail.re;
    let im_tail = tail.im;

    Ok(Complex64::new(
        re_small + re_inner.value + re_outer.value + re_tail,
        im_small + im_inner.value + im_outer.value + im_tail,
    ))
}

trait CeilMultiple {
    fn ceil_to_multiple_above(self, floor: f64) -> f64;
}

impl CeilMultiple for f64 {
    /// Smallest positive multiple of `self` strictly above `floor`.
    fn ceil_to_multiple_above(self, floor: f64) -> f64 {
        let k = (floor / self).floor() + 1.0;
        k * self
    }
}

/// `int_A^inf e^{iuz} z^{-beta} dz` by repeated integration by parts.
fn oscillatory_tail(u: f64, a: f64, beta: f64) -> Complex64 {
    let iu = Complex64::new(0.0, u);
    let lead = -Complex64::from_polar(1.0, u * a) / iu;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(a.powf(-beta), 0.0);
    for k in 0..400 {
        sum += term;
        let next = term * (beta + k as f64) / (iu * a);
        if next.norm() > term.norm() || next.norm() < 1e-18 * sum.norm() {
            break;
        }
        term = next;
    }
    lead * sum
}

/// Stable law `S(alpha, skew, scale, drift)` in the standard
/// parameterisation with characteristic function
/// `exp(-scale^a |u|^a (1 - i skew sign(u) tan(pi a / 2)) + i drift u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableLaw {
    pub alpha: f64,
    pub scale: f64,
    pub skew: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum A2Reason {
    /// Singularity exponent above one.
    PGreaterThanOne,
    /// Translates of the support cover the line.
    SupportCovers,
    None,
}

/// Witnesses for the non-degeneracy, moment and maximum-principle
/// assumptions on the driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    pub p_witness: f64,
    pub c_witness: f64,
    pub q_witness: f64,
    pub a2_satisfied: bool,
    pub a2_reason: A2Reason,
    pub is_subordinator: bool,
}

impl AssumptionReport {
    pub fn a1_satisfied(&self) -> bool {
        self.c_witness > 0.0 && self.p_witness > 0.0 && self.p_witness < 2.0
    }

    pub fn passes(&self) -> bool {
        self.a1_satisfied() && self.a2_satisfied && !self.is_subordinator
    }

    pub fn summary(&self) -> String {
        format!(
            "p_witness={} C_witness={} q_witness={} a1={} a2={} ({:?}) subordinator={}",
            self.p_witness,
            self.c_witness,
            self.q_witness,
            self.a1_satisfied(),
            self.a2_satisfied,
            self.a2_reason,
            self.is_subordinator
        )
    }
}
