//! Service-time laws.
//!
//! Every analytic formula touches the service time `U` only through this
//! module: its density and CDF, and the exponential transforms
//!
//! | method | value |
//! |---|---|
//! | [`ServiceDistribution::exp_transform`] | `M(s) = E[e^{sU}]` |
//! | [`ServiceDistribution::exp_transform_deriv`] | `M'(s) = E[U e^{sU}]` |
//! | [`ServiceDistribution::survival_transform`] | `K(s) = ∫ e^{st} (1 − F(t)) dt = (M(s) − 1)/s` |
//!
//! `K` is the form that stays accurate near `s = 0`; it has the value `E[U]`
//! there. Closed forms are used where they exist. The log-normal transforms
//! are computed with a fixed Gauss–Kronrod rule in the standardized log
//! variable. The `*_quadrature` variants integrate the survival function
//! directly and serve as an independent route for every family.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{AoiError, Result};
use crate::quadrature::{self, Tolerance};

/// Family and parameters of a service-time law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Deterministic { value: f64 },
    Uniform { a: f64, b: f64 },
    LogNormal { alpha: f64, omega: f64 },
}

/// A validated service-time distribution.
///
/// Immutable after construction; sampling only mutates the caller's RNG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct ServiceDistribution {
    family: Family,
}

/// Region where `E[e^{sU}]` is finite: `s < sup_s`, plus `s = 0` always.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformDomain {
    pub sup_s: f64,
}

impl TransformDomain {
    pub fn contains(&self, s: f64) -> bool {
        s == 0.0 || s < self.sup_s
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(AoiError::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

impl TryFrom<Family> for ServiceDistribution {
    type Error = AoiError;

    fn try_from(family: Family) -> Result<Self> {
        match family {
            Family::Exponential { rate } => positive("rate", rate)?,
            Family::Gamma { shape, rate } => {
                positive("shape", shape)?;
                positive("rate", rate)?;
            }
            Family::Deterministic { value } => positive("value", value)?,
            Family::Uniform { a, b } => {
                if !(a.is_finite() && a >= 0.0) {
                    return Err(AoiError::InvalidParameter {
                        name: "a",
                        value: a,
                        reason: "must be finite and >= 0",
                    });
                }
                if !(b.is_finite() && b > a) {
                    return Err(AoiError::InvalidParameter {
                        name: "b",
                        value: b,
                        reason: "must be finite and > a",
                    });
                }
            }
            Family::LogNormal { alpha, omega } => {
                if !alpha.is_finite() {
                    return Err(AoiError::InvalidParameter {
                        name: "alpha",
                        value: alpha,
                        reason: "must be finite",
                    });
                }
                positive("omega", omega)?;
            }
        }
        Ok(Self { family })
    }
}

impl From<ServiceDistribution> for Family {
    fn from(d: ServiceDistribution) -> Self {
        d.family
    }
}

// ∫₀¹ e^{zv} dv = (e^z − 1)/z
fn phi1(z: f64) -> f64 {
    if z.abs() < 0.5 {
        series(z, |n| 1.0 / factorial(n + 1))
    } else {
        z.exp_m1() / z
    }
}

// ∫₀¹ (1 − v) e^{zv} dv = (e^z − 1 − z)/z²
fn phi2(z: f64) -> f64 {
    if z.abs() < 0.5 {
        series(z, |n| 1.0 / factorial(n + 2))
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

// ∫₀¹ v e^{zv} dv = (e^z (z − 1) + 1)/z²
fn psi(z: f64) -> f64 {
    if z.abs() < 0.5 {
        series(z, |n| 1.0 / (factorial(n) * (n as f64 + 2.0)))
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (z * z)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn series(z: f64, coeff: impl Fn(usize) -> f64) -> f64 {
    // |z| < 0.5: 24 terms are far below machine precision.
    let mut acc = 0.0;
    for n in (0..24).rev() {
        acc = acc * z + coeff(n);
    }
    acc
}

const STD_NORMAL_NORM: f64 = 0.398_942_280_401_432_7; // 1/√(2π)
const LOGNORMAL_RULE_REL_TOL: f64 = 1e-11;

/// `E[g(e^{α+ωZ})]` for standard normal `Z` on a node set fixed by `(ω, s)`.
fn lognormal_expectation(alpha: f64, omega: f64, s: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    // Below the transition point z_c the factor e^{sU} is ≈ 1; only extend
    // the lower limit when the transition itself sits in the Gaussian tail.
    let mut lo = -10.0;
    if s < 0.0 {
        let zc = (-(-s).ln() - alpha) / omega;
        if zc < -4.0 {
            lo = zc - 6.0;
        }
    }
    let hi = 10.0;
    let width = 0.2 * (1.0 / omega).min(1.0);
    let panels = ((hi - lo) / width).ceil() as usize;
    let est = quadrature::composite(
        |z| {
            let phi = STD_NORMAL_NORM * (-0.5 * z * z).exp();
            if phi == 0.0 {
                0.0
            } else {
                g((alpha + omega * z).exp()) * phi
            }
        },
        lo,
        hi,
        panels,
    );
    if !est.value.is_finite() || est.error > LOGNORMAL_RULE_REL_TOL * est.value.abs().max(1e-300) {
        return Err(AoiError::Quadrature {
            what: format!("log-normal transform at s={s}"),
            error: est.error,
        });
    }
    Ok(est.value)
}

impl ServiceDistribution {
    pub fn exponential(rate: f64) -> Result<Self> {
        Family::Exponential { rate }.try_into()
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Family::Gamma { shape, rate }.try_into()
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Family::Deterministic { value }.try_into()
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Family::Uniform { a, b }.try_into()
    }

    pub fn lognormal(alpha: f64, omega: f64) -> Result<Self> {
        Family::LogNormal { alpha, omega }.try_into()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn transform_domain(&self) -> TransformDomain {
        let sup_s = match self.family {
            Family::Exponential { rate } => rate,
            Family::Gamma { rate, .. } => rate,
            Family::Deterministic { .. } | Family::Uniform { .. } => f64::INFINITY,
            Family::LogNormal { .. } => 0.0,
        };
        TransformDomain { sup_s }
    }

    fn check_domain(&self, quantity: &'static str, s: f64) -> Result<()> {
        let dom = self.transform_domain();
        if s.is_nan() || !dom.contains(s) {
            return Err(AoiError::Domain {
                quantity,
                s,
                sup: dom.sup_s,
            });
        }
        Ok(())
    }

    fn finite(&self, quantity: &'static str, s: f64, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            // Only reachable through overflow for very large positive s.
            Err(AoiError::Domain {
                quantity,
                s,
                sup: self.transform_domain().sup_s,
            })
        }
    }

    /// `E[e^{sU}]`.
    pub fn exp_transform(&self, s: f64) -> Result<f64> {
        self.check_domain("E[exp(sU)]", s)?;
        if s == 0.0 {
            return Ok(1.0);
        }
        let v = match self.family {
            Family::Exponential { rate } => rate / (rate - s),
            Family::Gamma { shape, rate } => (-shape * (-s / rate).ln_1p()).exp(),
            Family::Deterministic { value } => (s * value).exp(),
            Family::Uniform { a, b } => (b * phi1(s * b) - a * phi1(s * a)) / (b - a),
            Family::LogNormal { alpha, omega } => {
                lognormal_expectation(alpha, omega, s, |u| (s * u).exp())?
            }
        };
        self.finite("E[exp(sU)]", s, v)
    }

    /// `E[U e^{sU}]`, the derivative of [`exp_transform`](Self::exp_transform).
    pub fn exp_transform_deriv(&self, s: f64) -> Result<f64> {
        self.check_domain("E[U exp(sU)]", s)?;
        let v = match self.family {
            Family::Exponential { rate } => rate / ((rate - s) * (rate - s)),
            Family::Gamma { shape, rate } => {
                shape / rate * (-(shape + 1.0) * (-s / rate).ln_1p()).exp()
            }
            Family::Deterministic { value } => value * (s * value).exp(),
            Family::Uniform { a, b } => (b * b * psi(s * b) - a * a * psi(s * a)) / (b - a),
            Family::LogNormal { alpha, omega } => {
                // U·f_U is the mean times the density of LogNormal(α+ω², ω).
                let shifted = alpha + omega * omega;
                self.mean() * lognormal_expectation(shifted, omega, s, |u| (s * u).exp())?
            }
        };
        self.finite("E[U exp(sU)]", s, v)
    }

    /// `∫₀^∞ e^{st} (1 − F(t)) dt`, equal to `(M(s) − 1)/s` and to `E[U]` at 0.
    pub fn survival_transform(&self, s: f64) -> Result<f64> {
        self.check_domain("(E[exp(sU)]-1)/s", s)?;
        let v = match self.family {
            Family::Exponential { rate } => 1.0 / (rate - s),
            Family::Gamma { shape, rate } => {
                if s == 0.0 {
                    shape / rate
                } else {
                    (-shape * (-s / rate).ln_1p()).exp_m1() / s
                }
            }
            Family::Deterministic { value } => value * phi1(s * value),
            Family::Uniform { a, b } => (b * b * phi2(s * b) - a * a * phi2(s * a)) / (b - a),
            Family::LogNormal { alpha, omega } => {
                let shifted = alpha + omega * omega;
                self.mean() * lognormal_expectation(shifted, omega, s, |u| phi1(s * u))?
            }
        };
        self.finite("(E[exp(sU)]-1)/s", s, v)
    }

    /// Points where the survival function is not smooth, plus the support end.
    fn breakpoints(&self) -> (Vec<f64>, Option<f64>) {
        match self.family {
            Family::Deterministic { value } => (vec![], Some(value)),
            Family::Uniform { a, b } if a > 0.0 => (vec![a], Some(b)),
            Family::Uniform { b, .. } => (vec![], Some(b)),
            _ => (vec![], None),
        }
    }

    /// `∫₀^∞ g(t) (1 − F(t)) dt` by adaptive quadrature.
    fn integrate_survival(&self, g: impl Fn(f64) -> f64, tol: Tolerance) -> Result<f64> {
        let (breaks, end) = self.breakpoints();
        let h = |t: f64| {
            let sv = self.survival(t);
            if sv == 0.0 {
                0.0
            } else {
                g(t) * sv
            }
        };
        let mut lo = 0.0;
        let mut total = 0.0;
        for b in breaks {
            total += quadrature::integrate(h, lo, b, tol)?.value;
            lo = b;
        }
        total += match end {
            Some(e) => quadrature::integrate(h, lo, e, tol)?.value,
            None => quadrature::integrate_to_infinity(h, lo, tol)?.value,
        };
        Ok(total)
    }

    /// [`exp_transform`](Self::exp_transform) from `1 + s ∫ e^{st}(1 − F(t)) dt`.
    pub fn exp_transform_quadrature(&self, s: f64, tol: Tolerance) -> Result<f64> {
        self.check_domain("E[exp(sU)]", s)?;
        Ok(1.0 + s * self.integrate_survival(|t| (s * t).exp(), tol)?)
    }

    /// [`exp_transform_deriv`](Self::exp_transform_deriv) from `∫ (1 + st) e^{st}(1 − F(t)) dt`.
    pub fn exp_transform_deriv_quadrature(&self, s: f64, tol: Tolerance) -> Result<f64> {
        self.check_domain("E[U exp(sU)]", s)?;
        self.integrate_survival(|t| (1.0 + s * t) * (s * t).exp(), tol)
    }

    /// [`survival_transform`](Self::survival_transform) by direct quadrature.
    pub fn survival_transform_quadrature(&self, s: f64, tol: Tolerance) -> Result<f64> {
        self.check_domain("(E[exp(sU)]-1)/s", s)?;
        self.integrate_survival(|t| (s * t).exp(), tol)
    }

    /// Density at `t`. The deterministic law has no density; it reports 0 off
    /// the atom and `+∞` on it.
    pub fn pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Exponential { rate } => rate * (-rate * t).exp(),
            Family::Gamma { shape, rate } => {
                if t == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => rate,
                        _ => 0.0,
                    };
                }
                (shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - ln_gamma(shape)).exp()
            }
            Family::Deterministic { value } => {
                if t == value {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Family::Uniform { a, b } => {
                if (a..=b).contains(&t) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Family::LogNormal { alpha, omega } => {
                if t == 0.0 {
                    return 0.0;
                }
                let z = (t.ln() - alpha) / omega;
                STD_NORMAL_NORM * (-0.5 * z * z).exp() / (t * omega)
            }
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Exponential { rate } => -(-rate * t).exp_m1(),
            Family::Gamma { shape, rate } => gamma_lr(shape, rate * t),
            Family::Deterministic { value } => {
                if t >= value {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Uniform { a, b } => ((t - a) / (b - a)).clamp(0.0, 1.0),
            Family::LogNormal { alpha, omega } => {
                0.5 * erfc(-(t.ln() - alpha) / (omega * std::f64::consts::SQRT_2))
            }
        }
    }

    /// `1 − F(t)`, evaluated without cancellation in the upper tail.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self.family {
            Family::Exponential { rate } => (-rate * t).exp(),
            Family::Gamma { shape, rate } => gamma_ur(shape, rate * t),
            Family::LogNormal { alpha, omega } => {
                0.5 * erfc((t.ln() - alpha) / (omega * std::f64::consts::SQRT_2))
            }
            _ => 1.0 - self.cdf(t),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.family {
            Family::Exponential { rate } => 1.0 / rate,
            Family::Gamma { shape, rate } => shape / rate,
            Family::Deterministic { value } => value,
            Family::Uniform { a, b } => 0.5 * (a + b),
            Family::LogNormal { alpha, omega } => (alpha + 0.5 * omega * omega).exp(),
        }
    }

    /// `E[U²]`.
    pub fn second_moment(&self) -> f64 {
        match self.family {
            Family::Exponential { rate } => 2.0 / (rate * rate),
            Family::Gamma { shape, rate } => shape * (shape + 1.0) / (rate * rate),
            Family::Deterministic { value } => value * value,
            Family::Uniform { a, b } => (a * a + a * b + b * b) / 3.0,
            Family::LogNormal { alpha, omega } => (2.0 * alpha + 2.0 * omega * omega).exp(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            Family::Gamma { shape, rate } => {
                Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng)
            }
            Family::Deterministic { value } => value,
            Family::Uniform { a, b } => rng.gen_range(a..b),
            Family::LogNormal { alpha, omega } => {
                LogNormal::new(alpha, omega).expect("validated").sample(rng)
            }
        }
    }

    /// A reusable sampler; avoids re-validating parameters on every draw.
    pub fn sampler(&self) -> Sampler {
        match self.family {
            Family::Exponential { rate } => Sampler::Exp(Exp::new(rate).expect("validated")),
            Family::Gamma { shape, rate } => {
                Sampler::Gamma(Gamma::new(shape, 1.0 / rate).expect("validated"))
            }
            Family::Deterministic { value } => Sampler::Fixed(value),
            Family::Uniform { a, b } => Sampler::Uniform(a, b),
            Family::LogNormal { alpha, omega } => {
                Sampler::LogNormal(LogNormal::new(alpha, omega).expect("validated"))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Sampler {
    Exp(Exp<f64>),
    Gamma(Gamma<f64>),
    Fixed(f64),
    Uniform(f64, f64),
    LogNormal(LogNormal<f64>),
}

impl Distribution<f64> for Sampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Exp(d) => d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::Fixed(v) => *v,
            Sampler::Uniform(a, b) => rng.gen_range(*a..*b),
            Sampler::LogNormal(d) => d.sample(rng),
        }
    }
}

impl fmt::Display for ServiceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Exponential { rate } => write!(f, "exp:rate={rate}"),
            Family::Gamma { shape, rate } => write!(f, "gamma:shape={shape},rate={rate}"),
            Family::Deterministic { value } => write!(f, "det:value={value}"),
            Family::Uniform { a, b } => write!(f, "uniform:a={a},b={b}"),
            Family::LogNormal { alpha, omega } => write!(f, "lognormal:alpha={alpha},omega={omega}"),
        }
    }
}

impl FromStr for ServiceDistribution {
    type Err = AoiError;

    /// Parses `exp:rate=1`, `gamma:shape=2,rate=2`, `det:value=1`,
    /// `uniform:a=0,b=2` or `lognormal:alpha=0.75,omega=0.75`.
    fn from_str(input: &str) -> Result<Self> {
        let err = |token: &str, reason: String| AoiError::Parse {
            input: input.to_string(),
            token: token.to_string(),
            reason,
        };
        let (name, rest) = input
            .split_once(':')
            .ok_or_else(|| err(input, "expected <family>:<key>=<value>,...".into()))?;
        let keys: &[&str] = match name {
            "exp" => &["rate"],
            "gamma" => &["shape", "rate"],
            "det" => &["value"],
            "uniform" => &["a", "b"],
            "lognormal" => &["alpha", "omega"],
            _ => {
                return Err(err(
                    name,
                    "unknown family (exp, gamma, det, uniform, lognormal)".into(),
                ))
            }
        };
        let mut values = vec![None; keys.len()];
        for token in rest.split(',') {
            let (key, raw) = token
                .split_once('=')
                .ok_or_else(|| err(token, "expected key=value".into()))?;
            let slot = keys
                .iter()
                .position(|k| *k == key.trim())
                .ok_or_else(|| err(token, format!("unknown key for {name}; expected {keys:?}")))?;
            if values[slot].is_some() {
                return Err(err(token, "duplicate key".into()));
            }
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| err(token, "not a number".into()))?;
            values[slot] = Some(v);
        }
        let mut got = Vec::with_capacity(keys.len());
        for (key, v) in keys.iter().zip(values) {
            got.push(v.ok_or_else(|| err(key, "missing key".into()))?);
        }
        let dist = match name {
            "exp" => Self::exponential(got[0]),
            "gamma" => Self::gamma(got[0], got[1]),
            "det" => Self::deterministic(got[0]),
            "uniform" => Self::uniform(got[0], got[1]),
            _ => Self::lognormal(got[0], got[1]),
        };
        dist.map_err(|e| match e {
            AoiError::InvalidParameter { name, value, reason } => {
                err(&format!("{name}={value}"), reason.to_string())
            }
            other => other,
        })
    }
}
