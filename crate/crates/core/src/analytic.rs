//! Exact AoI and PAoI statistics of the M/G/1/1 queue with probabilistic
//! preemption.
//!
//! Notation used throughout: `λ` is the arrival rate, `θ` the preemption
//! probability, `q = θλ` the rate of the thinned stream of preempting
//! arrivals seen by a busy server, `M(s) = E[e^{sU}]` the service transform,
//! `K(x) = (M(x) − 1)/x` its survival transform and `p = M(−q)` the
//! probability that a packet entering service is delivered.
//!
//! The interdeparture time decomposes over the two-state cycle
//! idle → busy (→ busy)* → idle as `Y = η̃ + V η̄ + η` with `η̃ ~ Exp(λ)`,
//! `V ~ Geometric(p)` preempted services of length `η̄` and one delivered
//! service of length `η`. Its transform is
//!
//! ```text
//! M_Y(s) = λ (q − s) M(s − q) / ((λ − s)(q M(s − q) − s))
//!        = λ M(s − q) / ((λ − s)(1 − q K(s − q)))
//! ```
//!
//! The second line cancels the removable singularity at `s = q` and is what
//! [`interdeparture_mgf`] evaluates. The AoI and PAoI transforms follow from
//! the system-time transform `M_T(s) = M(s − q)/p` as
//! `M_δ(s) = M_T(s)(M_Y(s) − 1)/(s Ȳ)` and `M_A(s) = M_T(s) M_Y(s)`.

use serde::{Deserialize, Serialize};

use crate::distributions::ServiceDistribution;
use crate::error::{AoiError, Result};
use crate::quadrature::{self, Tolerance};

/// Arrival rate, preemption probability and service law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystemConfig")]
pub struct SystemConfig {
    lambda: f64,
    theta: f64,
    service: ServiceDistribution,
    quad_tol: Tolerance,
}

#[derive(Deserialize)]
struct RawSystemConfig {
    lambda: f64,
    theta: f64,
    service: ServiceDistribution,
    #[serde(default)]
    quad_tol: Option<Tolerance>,
}

impl TryFrom<RawSystemConfig> for SystemConfig {
    type Error = AoiError;

    fn try_from(raw: RawSystemConfig) -> Result<Self> {
        let cfg = SystemConfig::new(raw.lambda, raw.theta, raw.service)?;
        Ok(match raw.quad_tol {
            Some(t) => cfg.with_quad_tol(t),
            None => cfg,
        })
    }
}

impl SystemConfig {
    pub fn new(lambda: f64, theta: f64, service: ServiceDistribution) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(AoiError::InvalidParameter {
                name: "lambda",
                value: lambda,
                reason: "must be finite and > 0",
            });
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(AoiError::InvalidParameter {
                name: "theta",
                value: theta,
                reason: "must lie in [0, 1]",
            });
        }
        Ok(Self {
            lambda,
            theta,
            service,
            quad_tol: Tolerance::default(),
        })
    }

    /// Tolerance for the adaptive quadratures (sojourn means and CDFs).
    pub fn with_quad_tol(mut self, tol: Tolerance) -> Self {
        self.quad_tol = tol;
        self
    }

    /// Same system with a different preemption probability.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Ok(Self::new(self.lambda, theta, self.service)?.with_quad_tol(self.quad_tol))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn service(&self) -> &ServiceDistribution {
        &self.service
    }

    pub fn quad_tol(&self) -> Tolerance {
        self.quad_tol
    }

    /// `θλ`, the rate of preempting arrivals while the server is busy.
    pub fn thinned_rate(&self) -> f64 {
        self.theta * self.lambda
    }
}

/// Analytic summary of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSummary {
    pub avg_aoi: f64,
    pub avg_paoi: f64,
    pub mean_interdeparture: f64,
    pub delivery_prob: f64,
    pub mean_system_time: f64,
    pub aoi_second_moment: f64,
    pub paoi_second_moment: f64,
    pub roc_sup: f64,
    pub quad_tol: Tolerance,
}

/// `Pr(D) = M(−θλ)`: no preempting arrival during the service time.
pub fn delivery_prob(cfg: &SystemConfig) -> Result<f64> {
    cfg.service.exp_transform(-cfg.thinned_rate())
}

/// `1 − Pr(D) = θλ K(−θλ)`, without cancellation for small `θλ`.
fn preemption_prob(cfg: &SystemConfig) -> Result<f64> {
    let q = cfg.thinned_rate();
    Ok(q * cfg.service.survival_transform(-q)?)
}

/// `M_T(s) = M(s − θλ) / M(−θλ)`.
pub fn system_time_mgf(cfg: &SystemConfig, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(1.0);
    }
    let q = cfg.thinned_rate();
    let num = cfg.service.exp_transform(s - q).map_err(|_| AoiError::Domain {
        quantity: "system-time MGF",
        s,
        sup: q + cfg.service.transform_domain().sup_s,
    })?;
    Ok(num / delivery_prob(cfg)?)
}

/// `E[T] = M'(−θλ) / M(−θλ)`.
pub fn mean_system_time(cfg: &SystemConfig) -> Result<f64> {
    let q = cfg.thinned_rate();
    Ok(cfg.service.exp_transform_deriv(-q)? / delivery_prob(cfg)?)
}

/// Density of the system time of a delivered packet, `f_U(t) e^{−θλt} / M(−θλ)`.
pub fn system_time_pdf(cfg: &SystemConfig, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Ok(0.0);
    }
    let f = cfg.service.pdf(t);
    if f == 0.0 {
        return Ok(0.0);
    }
    Ok(f * (-cfg.thinned_rate() * t).exp() / delivery_prob(cfg)?)
}

/// Density of the delivered-service sojourn `η`; identical to [`system_time_pdf`].
pub fn sojourn_pdf_eta(cfg: &SystemConfig, t: f64) -> Result<f64> {
    system_time_pdf(cfg, t)
}

fn require_preemption(cfg: &SystemConfig) -> Result<f64> {
    let q = cfg.thinned_rate();
    if q == 0.0 {
        return Err(AoiError::Degenerate {
            quantity: "preempted-service sojourn",
            reason: "theta*lambda = 0, preemption is impossible",
        });
    }
    let k = cfg.service.survival_transform(-q)?;
    if q * k == 0.0 {
        return Err(AoiError::Degenerate {
            quantity: "preempted-service sojourn",
            reason: "delivery probability is 1",
        });
    }
    Ok(k)
}

/// Density of the preempted-service sojourn `η̄`,
/// `θλ e^{−θλt} (1 − F(t)) / (1 − M(−θλ))`.
pub fn sojourn_pdf_etabar(cfg: &SystemConfig, t: f64) -> Result<f64> {
    let k = require_preemption(cfg)?;
    if t < 0.0 {
        return Ok(0.0);
    }
    // θλ / (1 − p) = 1 / K(−θλ)
    Ok((-cfg.thinned_rate() * t).exp() * cfg.service.survival(t) / k)
}

/// Running integrals of `g` at each point of `sorted`, starting from 0.
fn cumulative(g: impl Fn(f64) -> f64, sorted: &[f64], tol: Tolerance) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(sorted.len());
    for &t in sorted {
        let t = t.max(0.0);
        if t > prev {
            acc += quadrature::integrate(&g, prev, t, tol)?.value;
            prev = t;
        }
        out.push(acc);
    }
    Ok(out)
}

/// CDF of `η` at each of the ascending points `sorted`.
///
/// Uses `∫₀ᵗ e^{−qv} dF(v) = e^{−qt}F(t) + q ∫₀ᵗ e^{−qv}F(v) dv`, which also
/// covers laws without a density.
pub fn sojourn_cdf_eta_sorted(cfg: &SystemConfig, sorted: &[f64]) -> Result<Vec<f64>> {
    let q = cfg.thinned_rate();
    let p = delivery_prob(cfg)?;
    let d = cfg.service;
    let tail = cumulative(|v| (-q * v).exp() * d.cdf(v), sorted, cfg.quad_tol)?;
    Ok(sorted
        .iter()
        .zip(tail)
        .map(|(&t, i)| (((-q * t).exp() * d.cdf(t) + q * i) / p).min(1.0))
        .collect())
}

/// CDF of `η̄` at each of the ascending points `sorted`.
pub fn sojourn_cdf_etabar_sorted(cfg: &SystemConfig, sorted: &[f64]) -> Result<Vec<f64>> {
    let k = require_preemption(cfg)?;
    let q = cfg.thinned_rate();
    let d = cfg.service;
    let raw = cumulative(|v| (-q * v).exp() * d.survival(v), sorted, cfg.quad_tol)?;
    Ok(raw.into_iter().map(|i| (i / k).min(1.0)).collect())
}

pub fn sojourn_cdf_eta(cfg: &SystemConfig, t: f64) -> Result<f64> {
    Ok(sojourn_cdf_eta_sorted(cfg, &[t])?[0])
}

pub fn sojourn_cdf_etabar(cfg: &SystemConfig, t: f64) -> Result<f64> {
    Ok(sojourn_cdf_etabar_sorted(cfg, &[t])?[0])
}

/// `E[η̄]` by quadrature of `t f_η̄(t)`.
pub fn mean_etabar(cfg: &SystemConfig) -> Result<f64> {
    let k = require_preemption(cfg)?;
    let q = cfg.thinned_rate();
    let d = cfg.service;
    let g = |t: f64| {
        let sv = d.survival(t);
        if sv == 0.0 {
            0.0
        } else {
            t * (-q * t).exp() * sv
        }
    };
    let integral = match d.family() {
        crate::Family::Deterministic { value } => quadrature::integrate(g, 0.0, value, cfg.quad_tol)?.value,
        crate::Family::Uniform { a, b } => {
            quadrature::integrate(g, 0.0, a, cfg.quad_tol)?.value
                + quadrature::integrate(g, a, b, cfg.quad_tol)?.value
        }
        _ => quadrature::integrate_to_infinity(g, 0.0, cfg.quad_tol)?.value,
    };
    Ok(integral / k)
}

/// `E[e^{sη̃}] = λ/(λ − s)`: idle period before the next arrival.
pub fn sojourn_mgf_idle(cfg: &SystemConfig, s: f64) -> Result<f64> {
    if s >= cfg.lambda {
        return Err(AoiError::Domain {
            quantity: "idle sojourn MGF",
            s,
            sup: cfg.lambda,
        });
    }
    Ok(cfg.lambda / (cfg.lambda - s))
}

/// `E[e^{sη}] = M(s − θλ)/M(−θλ)`.
pub fn sojourn_mgf_eta(cfg: &SystemConfig, s: f64) -> Result<f64> {
    system_time_mgf(cfg, s)
}

/// `E[e^{sη̄}] = θλ(1 − M(s − θλ)) / ((M(−θλ) − 1)(s − θλ))`, evaluated as written.
pub fn sojourn_mgf_etabar(cfg: &SystemConfig, s: f64) -> Result<f64> {
    require_preemption(cfg)?;
    let q = cfg.thinned_rate();
    let m = cfg.service.exp_transform(s - q)?;
    let p = delivery_prob(cfg)?;
    Ok(q * (1.0 - m) / ((p - 1.0) * (s - q)))
}

fn roc_violation(cfg: &SystemConfig, quantity: &'static str, s: f64) -> AoiError {
    AoiError::Domain {
        quantity,
        s,
        sup: mgf_roc(cfg).unwrap_or(f64::NAN),
    }
}

/// Denominator factor `1 − θλ K(s − θλ)`; positive exactly on the ROC side of the pole.
fn renewal_denominator(cfg: &SystemConfig, s: f64) -> Result<f64> {
    let q = cfg.thinned_rate();
    Ok(1.0 - q * cfg.service.survival_transform(s - q)?)
}

fn in_roc(cfg: &SystemConfig, s: f64) -> bool {
    if s == 0.0 {
        return true;
    }
    if s.is_nan() || s >= cfg.lambda {
        return false;
    }
    let q = cfg.thinned_rate();
    if !cfg.service.transform_domain().contains(s - q) {
        return false;
    }
    matches!(renewal_denominator(cfg, s), Ok(d) if d > 0.0)
}

/// Supremum `s*` of the region where `M_Y`, `M_δ` and `M_A` are finite.
///
/// `s* = min(λ, θλ + sup_s, r)` where `r` is the smallest `s > 0` with
/// `θλ K(s − θλ) = 1`. The factor `1 − θλK` is decreasing in `s` and equals
/// `Pr(D) > 0` at the origin, so the root is located by bisection.
pub fn mgf_roc(cfg: &SystemConfig) -> Result<f64> {
    let q = cfg.thinned_rate();
    let sup = cfg.service.transform_domain().sup_s;
    let cap = cfg.lambda.min(q + sup);
    if q == 0.0 || cap <= 0.0 {
        return Ok(cap.max(0.0));
    }
    let positive_at = |s: f64| {
        s == 0.0
            || (cfg.service.transform_domain().contains(s - q)
                && matches!(renewal_denominator(cfg, s), Ok(d) if d > 0.0))
    };
    // The cap itself is attained when the transform is finite there (s − q = 0
    // for log-normal) and the denominator is still positive.
    if positive_at(cap) && cap.is_finite() {
        return Ok(cap);
    }
    let mut hi = if cap.is_finite() { cap } else { 1.0 };
    let mut lo = 0.0;
    if !cap.is_finite() {
        while positive_at(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(AoiError::Bracket {
                    quantity: "ROC of the interdeparture MGF",
                    lo: 0.0,
                    hi,
                });
            }
        }
    }
    while hi - lo > 1e-15 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if positive_at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `M_Y(s)`, interdeparture-time transform.
pub fn interdeparture_mgf(cfg: &SystemConfig, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(1.0);
    }
    if !in_roc(cfg, s) {
        return Err(roc_violation(cfg, "interdeparture MGF", s));
    }
    let lambda = cfg.lambda;
    let q = cfg.thinned_rate();
    if q == 0.0 {
        // No preemption: idle period plus one full service.
        return Ok(lambda * cfg.service.exp_transform(s)? / (lambda - s));
    }
    let m = cfg.service.exp_transform(s - q)?;
    Ok(lambda * m / ((lambda - s) * renewal_denominator(cfg, s)?))
}

/// `M_Y(s)` exactly as the uncancelled ratio
/// `λ(θλ − s)M(s − θλ) / ((λ − s)(θλ M(s − θλ) − s))`. Singular (0/0) at
/// `s = 0` and `s = θλ`; meant for cross-checks away from those points.
pub fn interdeparture_mgf_closed_form(cfg: &SystemConfig, s: f64) -> Result<f64> {
    let lambda = cfg.lambda;
    let q = cfg.thinned_rate();
    let m = cfg.service.exp_transform(s - q)?;
    Ok(lambda * (q - s) * m / ((lambda - s) * (q * m - s)))
}

/// `M_Y(s)` assembled from the cycle decomposition,
/// `p E[e^{sη̃}] E[e^{sη}] / (1 − (1 − p) E[e^{sη̄}])`.
pub fn interdeparture_mgf_geometric(cfg: &SystemConfig, s: f64) -> Result<f64> {
    let p = delivery_prob(cfg)?;
    let idle = sojourn_mgf_idle(cfg, s)?;
    let eta = sojourn_mgf_eta(cfg, s)?;
    let loop_term = if cfg.thinned_rate() == 0.0 {
        0.0
    } else {
        (1.0 - p) * sojourn_mgf_etabar(cfg, s)?
    };
    Ok(p * idle * eta / (1.0 - loop_term))
}

/// `Ȳ = E[η̃] + ((1 − p)/p) E[η̄] + E[η]`, with `E[η̄]` by quadrature.
pub fn mean_interdeparture(cfg: &SystemConfig) -> Result<f64> {
    let lambda = cfg.lambda;
    if cfg.thinned_rate() == 0.0 {
        return Ok(1.0 / lambda + cfg.service.mean());
    }
    let p = delivery_prob(cfg)?;
    let pbar = preemption_prob(cfg)?;
    let etabar = if pbar == 0.0 { 0.0 } else { mean_etabar(cfg)? };
    Ok(1.0 / lambda + pbar / p * etabar + mean_system_time(cfg)?)
}

/// `Ȳ = 1/λ + K(−θλ)/M(−θλ)`: the decomposition mean with `E[η̄]` integrated
/// in closed form.
fn mean_interdeparture_exact(cfg: &SystemConfig) -> Result<f64> {
    let q = cfg.thinned_rate();
    Ok(1.0 / cfg.lambda + cfg.service.survival_transform(-q)? / delivery_prob(cfg)?)
}

/// `(M_Y(s) − 1)/s = (1 + (λ − θλ)K(s − θλ)) / ((λ − s)(1 − θλK(s − θλ)))`.
fn interdeparture_difference_quotient(cfg: &SystemConfig, s: f64) -> Result<f64> {
    let lambda = cfg.lambda;
    let q = cfg.thinned_rate();
    let k = cfg.service.survival_transform(s - q)?;
    Ok((1.0 + (lambda - q) * k) / ((lambda - s) * (1.0 - q * k)))
}

/// `M_δ(s) = M_T(s)(M_Y(s) − 1)/(s Ȳ)`; 1 at the removable point `s = 0`.
pub fn aoi_mgf(cfg: &SystemConfig, s: f64) -> Result<f64> {
    if s.abs() < 1e-12 {
        return Ok(1.0);
    }
    if !in_roc(cfg, s) {
        return Err(roc_violation(cfg, "AoI MGF", s));
    }
    let mt = system_time_mgf(cfg, s)?;
    Ok(mt * interdeparture_difference_quotient(cfg, s)? / mean_interdeparture_exact(cfg)?)
}

/// `M_A(s) = M_T(s) M_Y(s)`.
pub fn paoi_mgf(cfg: &SystemConfig, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(1.0);
    }
    if !in_roc(cfg, s) {
        return Err(roc_violation(cfg, "PAoI MGF", s));
    }
    Ok(system_time_mgf(cfg, s)? * interdeparture_mgf(cfg, s)?)
}

/// `M_δ(s) = M(s − θλ)(M_Y(s) − 1)/(s M(−θλ) Ȳ)` with the uncancelled `M_Y`.
pub fn aoi_mgf_closed_form(cfg: &SystemConfig, s: f64) -> Result<f64> {
    let q = cfg.thinned_rate();
    let m = cfg.service.exp_transform(s - q)?;
    let my = interdeparture_mgf_closed_form(cfg, s)?;
    Ok(m * (my - 1.0) / (s * delivery_prob(cfg)? * mean_interdeparture_exact(cfg)?))
}

/// `M_A(s) = M(s − θλ) M_Y(s) / M(−θλ)` with the uncancelled `M_Y`.
pub fn paoi_mgf_closed_form(cfg: &SystemConfig, s: f64) -> Result<f64> {
    let q = cfg.thinned_rate();
    let m = cfg.service.exp_transform(s - q)?;
    Ok(m * interdeparture_mgf_closed_form(cfg, s)? / delivery_prob(cfg)?)
}

/// Limit of the average AoI as `θ → 0` (blocking, non-preemptive server):
/// `(λ²E[U]² + λ²E[U²]/2 + 2λE[U] + 1) / (λ(λE[U] + 1))`.
pub fn average_aoi_theta0_limit(lambda: f64, service: &ServiceDistribution) -> f64 {
    let m1 = service.mean();
    let m2 = service.second_moment();
    let lm = lambda * m1;
    (lm * lm + 0.5 * lambda * lambda * m2 + 2.0 * lm + 1.0) / (lambda * (lm + 1.0))
}

/// Limit of the average PAoI as `θ → 0`: `1/λ + 2E[U]`.
pub fn average_paoi_theta0_limit(lambda: f64, service: &ServiceDistribution) -> f64 {
    1.0 / lambda + 2.0 * service.mean()
}

/// Average AoI `Δ`.
pub fn average_aoi(cfg: &SystemConfig) -> Result<f64> {
    let (lambda, theta) = (cfg.lambda, cfg.theta);
    if theta == 0.0 {
        return Ok(average_aoi_theta0_limit(lambda, &cfg.service));
    }
    let q = cfg.thinned_rate();
    let p = delivery_prob(cfg)?;
    let dp = cfg.service.exp_transform_deriv(-q)?;
    let t2 = theta * theta - theta;
    let num = p * (t2 * (p + lambda * dp) + theta - 1.0) + 1.0;
    let den = lambda * p * p * t2 + lambda * p * theta;
    Ok(num / den)
}

/// Average PAoI `Ā`.
pub fn average_paoi(cfg: &SystemConfig) -> Result<f64> {
    let (lambda, theta) = (cfg.lambda, cfg.theta);
    if theta == 0.0 {
        return Ok(average_paoi_theta0_limit(lambda, &cfg.service));
    }
    let q = cfg.thinned_rate();
    let p = delivery_prob(cfg)?;
    let dp = cfg.service.exp_transform_deriv(-q)?;
    Ok((p * (theta - 1.0) + lambda * theta * dp + 1.0) / (theta * lambda * p))
}

#[derive(Clone, Copy)]
enum Stencil {
    Central,
    Backward,
}

fn difference(f: &impl Fn(f64) -> Result<f64>, m: u32, h: f64, stencil: Stencil) -> Result<f64> {
    Ok(match (stencil, m) {
        (Stencil::Central, 1) => (f(h)? - f(-h)?) / (2.0 * h),
        (Stencil::Central, 2) => (f(h)? - 2.0 * f(0.0)? + f(-h)?) / (h * h),
        (Stencil::Central, _) => {
            (f(2.0 * h)? - 2.0 * f(h)? + 2.0 * f(-h)? - f(-2.0 * h)?) / (2.0 * h * h * h)
        }
        (Stencil::Backward, 1) => (f(0.0)? - f(-h)?) / h,
        (Stencil::Backward, 2) => (f(0.0)? - 2.0 * f(-h)? + f(-2.0 * h)?) / (h * h),
        (Stencil::Backward, _) => {
            (f(0.0)? - 3.0 * f(-h)? + 3.0 * f(-2.0 * h)? - f(-3.0 * h)?) / (h * h * h)
        }
    })
}

/// m-th derivative at 0 by Ridders' extrapolation of a difference quotient.
fn derivative_at_zero(
    quantity: &'static str,
    f: impl Fn(f64) -> Result<f64>,
    m: u32,
    h0: f64,
    stencil: Stencil,
) -> Result<f64> {
    const SHRINK: f64 = 1.4;
    const LEVELS: usize = 12;
    // Error expansion is in h² for central quotients, in h for one-sided ones.
    let ratio = match stencil {
        Stencil::Central => SHRINK * SHRINK,
        Stencil::Backward => SHRINK,
    };
    let mut table = vec![vec![0.0; LEVELS]; LEVELS];
    let mut h = h0;
    table[0][0] = difference(&f, m, h, stencil)?;
    let mut best = table[0][0];
    let mut err = f64::INFINITY;
    for i in 1..LEVELS {
        h /= SHRINK;
        table[0][i] = difference(&f, m, h, stencil)?;
        let mut fac = ratio;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= ratio;
            let e = (table[j][i] - table[j - 1][i])
                .abs()
                .max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    if err.is_nan() || err > 1e-5 * best.abs() {
        return Err(AoiError::Precision { quantity, error: err });
    }
    Ok(best)
}

fn moment_from_mgf(
    cfg: &SystemConfig,
    quantity: &'static str,
    mgf: fn(&SystemConfig, f64) -> Result<f64>,
    m: u32,
) -> Result<f64> {
    if !(1..=3).contains(&m) {
        return Err(AoiError::InvalidParameter {
            name: "m",
            value: m as f64,
            reason: "moment order must be 1, 2 or 3",
        });
    }
    let scale = average_paoi(cfg)?;
    let roc = mgf_roc(cfg)?;
    let reach = if m == 3 { 2.0 } else { 1.0 };
    let h_scale = 0.2 / scale;
    let h_roc = 0.4 * roc / reach;
    let (h0, stencil) = if h_roc >= 0.1 * h_scale {
        (h_scale.min(h_roc), Stencil::Central)
    } else {
        (h_scale, Stencil::Backward)
    };
    derivative_at_zero(quantity, |s| mgf(cfg, s), m, h0, stencil)
}

/// m-th raw moment of the AoI, `E[δ^m]`, from derivatives of [`aoi_mgf`].
pub fn aoi_moment(cfg: &SystemConfig, m: u32) -> Result<f64> {
    moment_from_mgf(cfg, "AoI moment", aoi_mgf, m)
}

/// m-th raw moment of the PAoI, `E[A^m]`, from derivatives of [`paoi_mgf`].
pub fn paoi_moment(cfg: &SystemConfig, m: u32) -> Result<f64> {
    moment_from_mgf(cfg, "PAoI moment", paoi_mgf, m)
}

pub fn summary(cfg: &SystemConfig) -> Result<AnalyticSummary> {
    Ok(AnalyticSummary {
        avg_aoi: average_aoi(cfg)?,
        avg_paoi: average_paoi(cfg)?,
        mean_interdeparture: mean_interdeparture(cfg)?,
        delivery_prob: delivery_prob(cfg)?,
        mean_system_time: mean_system_time(cfg)?,
        aoi_second_moment: aoi_moment(cfg, 2)?,
        paoi_second_moment: paoi_moment(cfg, 2)?,
        roc_sup: mgf_roc(cfg)?,
        quad_tol: cfg.quad_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(rate: f64) -> ServiceDistribution {
        ServiceDistribution::exponential(rate).unwrap()
    }

    fn det(u: f64) -> ServiceDistribution {
        ServiceDistribution::deterministic(u).unwrap()
    }

    fn cfg(lambda: f64, theta: f64, d: ServiceDistribution) -> SystemConfig {
        SystemConfig::new(lambda, theta, d).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::new(0.0, 0.5, exp(1.0)).is_err());
        assert!(SystemConfig::new(1.0, -0.1, exp(1.0)).is_err());
        assert!(SystemConfig::new(1.0, 1.5, exp(1.0)).is_err());
        assert!(SystemConfig::new(1.0, f64::NAN, exp(1.0)).is_err());
        assert!(SystemConfig::new(1.0, 1.0, exp(1.0)).is_ok());
    }

    #[test]
    fn delivery_probability_spot_values() {
        assert_eq!(delivery_prob(&cfg(3.0, 0.0, det(2.0))).unwrap(), 1.0);
        let c = cfg(1.5, 0.4, exp(2.0));
        assert!(rel(delivery_prob(&c).unwrap(), 2.0 / (2.0 + 0.6)) < 1e-15);
        let c = cfg(1.5, 0.4, det(2.0));
        assert!(rel(delivery_prob(&c).unwrap(), (-1.2f64).exp()) < 1e-15);
    }

    #[test]
    fn system_time_spot_values() {
        let c = cfg(1.0, 1.0, exp(1.0));
        assert_eq!(system_time_mgf(&c, 0.0).unwrap(), 1.0);
        assert!(rel(system_time_mgf(&c, -1.0).unwrap(), 2.0 / 3.0) < 1e-15);
        let c = cfg(0.7, 0.3, det(1.5));
        for s in [-2.0, -0.1, 0.4, 3.0] {
            assert!(rel(system_time_mgf(&c, s).unwrap(), (1.5 * s).exp()) < 1e-13);
        }
        // Tilted exponential is exponential with rate μ + θλ.
        let c = cfg(2.0, 0.5, exp(1.5));
        for t in [0.0f64, 0.3, 1.0, 4.0] {
            let want = 2.5 * (-2.5 * t).exp();
            assert!(rel(system_time_pdf(&c, t).unwrap(), want) < 1e-14);
        }
        let c = cfg(2.0, 0.0, ServiceDistribution::lognormal(0.1, 0.5).unwrap());
        for t in [0.2, 1.0, 2.5] {
            assert_eq!(system_time_pdf(&c, t).unwrap(), c.service().pdf(t));
        }
    }

    #[test]
    fn sojourn_densities() {
        let c = cfg(2.0, 0.5, exp(1.0));
        for k in 0..100 {
            let t = k as f64 * 0.07;
            assert_eq!(sojourn_pdf_eta(&c, t).unwrap(), system_time_pdf(&c, t).unwrap());
        }
        let tol = Tolerance::new(1e-13, 1e-12);
        let total =
            quadrature::integrate_to_infinity(|t| sojourn_pdf_etabar(&c, t).unwrap(), 0.0, tol).unwrap();
        assert!((total.value - 1.0).abs() < 1e-10);
        let total =
            quadrature::integrate_to_infinity(|t| sojourn_pdf_eta(&c, t).unwrap(), 0.0, tol).unwrap();
        assert!((total.value - 1.0).abs() < 1e-10);

        // θλ = 1 with a unit deterministic service: truncated unit exponential.
        let c = cfg(2.0, 0.5, det(1.0));
        for t in [0.0f64, 0.25, 0.9, 1.2] {
            let want = if t < 1.0 { (-t).exp() / (1.0 - (-1.0f64).exp()) } else { 0.0 };
            assert!((sojourn_pdf_etabar(&c, t).unwrap() - want).abs() < 1e-14);
        }
        assert!(matches!(
            sojourn_pdf_etabar(&cfg(2.0, 0.0, det(1.0)), 0.5),
            Err(AoiError::Degenerate { .. })
        ));
    }

    #[test]
    fn sojourn_cdfs_reach_one() {
        let c = cfg(1.0, 0.34, ServiceDistribution::lognormal(0.75, 0.75).unwrap());
        let pts = [0.5, 2.0, 10.0, 200.0];
        let f = sojourn_cdf_eta_sorted(&c, &pts).unwrap();
        let g = sojourn_cdf_etabar_sorted(&c, &pts).unwrap();
        assert!(f.windows(2).all(|w| w[0] <= w[1]));
        assert!((f[3] - 1.0).abs() < 1e-9 && (g[3] - 1.0).abs() < 1e-9);
        let c = cfg(1.0, 0.5, det(1.0));
        assert_eq!(sojourn_cdf_eta(&c, 0.99).unwrap(), 0.0);
        assert!((sojourn_cdf_eta(&c, 1.0).unwrap() - 1.0).abs() < 1e-14);
        // Exponential: η̄ is the minimum-type tilt, Exp(μ + θλ) as well.
        let c = cfg(2.0, 0.5, exp(1.0));
        let got = sojourn_cdf_etabar(&c, 0.7).unwrap();
        assert!((got - (1.0 - (-1.4f64).exp())).abs() < 1e-11);
    }

    #[test]
    fn roc_examples() {
        // θ = 1, μ = λ = 1: λ M(s − λ) = s at s = 1 (double root), pole at λ = 1.
        assert!((mgf_roc(&cfg(1.0, 1.0, exp(1.0))).unwrap() - 1.0).abs() < 1e-12);
        // θ = 0: ROC cap is min(λ, sup_s).
        assert_eq!(mgf_roc(&cfg(0.5, 0.0, exp(2.0))).unwrap(), 0.5);
        assert_eq!(mgf_roc(&cfg(3.0, 0.0, exp(2.0))).unwrap(), 2.0);
        let ln = ServiceDistribution::lognormal(0.75, 0.75).unwrap();
        assert_eq!(mgf_roc(&cfg(1.0, 0.0, ln)).unwrap(), 0.0);
        // Exponential service, general θ: 1 − q/(μ + q − s) = 0 at s = μ, so s* = min(λ, μ).
        assert!((mgf_roc(&cfg(3.0, 0.5, exp(2.0))).unwrap() - 2.0).abs() < 1e-12);
        // Deterministic u: root of θλ(e^{x u} − 1)/x = 1 with x = s − θλ.
        let c = cfg(4.0, 0.5, det(1.0));
        let r = mgf_roc(&c).unwrap();
        let x = r - 2.0;
        assert!((2.0 * (x.exp() - 1.0) / x - 1.0).abs() < 1e-10, "{r}");
    }

    #[test]
    fn interdeparture_diverges_approaching_roc() {
        for c in [cfg(1.0, 1.0, exp(1.0)), cfg(4.0, 0.5, det(1.0)), cfg(2.0, 0.5, exp(1.0))] {
            let r = mgf_roc(&c).unwrap();
            let vals: Vec<f64> = (1..=10)
                .map(|k| interdeparture_mgf(&c, r * (1.0 - 0.5f64.powi(k))).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]));
            assert!(vals[9] > 100.0);
            assert!(interdeparture_mgf(&c, r * 1.001).is_err());
        }
    }

    #[test]
    fn interdeparture_closed_forms() {
        // θ = 1 or θ = 0, exponential service: λμ/((λ − s)(μ − s)).
        for theta in [0.0, 1.0] {
            let c = cfg(1.3, theta, exp(0.8));
            for s in [-2.0, -0.5, 0.3, 0.7] {
                let want = 1.3 * 0.8 / ((1.3 - s) * (0.8 - s));
                assert!(rel(interdeparture_mgf(&c, s).unwrap(), want) < 1e-14);
            }
        }
        let c = cfg(1.0, 1.0, exp(1.0));
        assert!(rel(interdeparture_mgf(&c, -1.0).unwrap(), 0.25) < 1e-15);
    }

    #[test]
    fn mean_interdeparture_values() {
        let c = cfg(0.7, 1.0, exp(1.9));
        assert!(rel(mean_interdeparture(&c).unwrap(), 1.0 / 0.7 + 1.0 / 1.9) < 1e-10);
        let ln = ServiceDistribution::lognormal(0.75, 0.75).unwrap();
        let c = cfg(0.7, 0.0, ln);
        assert_eq!(mean_interdeparture(&c).unwrap(), 1.0 / 0.7 + ln.mean());
        for c in [cfg(1.0, 1.0, det(1.0)), cfg(2.0, 0.5, ln), cfg(0.5, 0.3, det(2.0))] {
            let a = mean_interdeparture(&c).unwrap();
            let b = mean_interdeparture_exact(&c).unwrap();
            assert!(rel(a, b) < 1e-9, "{a} vs {b}");
        }
        // λ = 1, θ = 1, u = 1: 1 + (1 − e^{−1})/e^{−1} = e.
        let c = cfg(1.0, 1.0, det(1.0));
        assert!(rel(mean_interdeparture(&c).unwrap(), std::f64::consts::E) < 1e-10);
    }

    #[test]
    fn corollary_spot_values() {
        let c = cfg(1.0, 1.0, exp(1.0));
        assert!(rel(average_aoi(&c).unwrap(), 2.0) < 1e-15);
        assert!(rel(average_paoi(&c).unwrap(), 2.5) < 1e-15);
        let c = cfg(1.0, 1.0, det(1.0));
        assert!(rel(average_aoi(&c).unwrap(), std::f64::consts::E) < 1e-14);
        // Symbolic oracle (sympy) for λ = 13/10, θ = 3/7, exponential μ = 9/5.
        let c = cfg(1.3, 3.0 / 7.0, exp(1.8));
        assert!(rel(average_aoi(&c).unwrap(), 1.426_448_103_867_46) < 1e-13);
        assert!(rel(average_paoi(&c).unwrap(), 1.749_028_749_028_75) < 1e-13);
    }

    #[test]
    fn theta_zero_limits_match_small_theta_extrapolation() {
        let families = [
            exp(1.0),
            ServiceDistribution::gamma(2.0, 2.0).unwrap(),
            det(1.0),
            ServiceDistribution::uniform(0.0, 2.0).unwrap(),
            ServiceDistribution::lognormal(0.75, 0.75).unwrap(),
        ];
        for d in families {
            for lambda in [0.5, 2.0] {
                let at = |th: f64| {
                    let c = cfg(lambda, th, d);
                    (average_aoi(&c).unwrap(), average_paoi(&c).unwrap())
                };
                let (d1, a1) = at(1e-4);
                let (d2, a2) = at(2e-4);
                let c0 = cfg(lambda, 0.0, d);
                let (d0, a0) = (average_aoi(&c0).unwrap(), average_paoi(&c0).unwrap());
                assert!(rel(2.0 * d1 - d2, d0) < 1e-6, "{d} λ={lambda}: {d0} vs {}", 2.0 * d1 - d2);
                assert!(rel(2.0 * a1 - a2, a0) < 1e-6, "{d} λ={lambda}");
            }
        }
    }

    #[test]
    fn paoi_moments_theta1_exponential() {
        // From exact differentiation of M_A(s) = 2/((2 − s)(1 − s)²):
        // E[A] = 5/2, E[A²] = 17/2, E[A³] = 147/4; M_A(−1) = 1/6.
        let c = cfg(1.0, 1.0, exp(1.0));
        assert!(rel(paoi_mgf(&c, -1.0).unwrap(), 1.0 / 6.0) < 1e-14);
        assert!(rel(paoi_moment(&c, 1).unwrap(), 2.5) < 1e-8);
        assert!(rel(paoi_moment(&c, 2).unwrap(), 8.5) < 1e-7);
        assert!(rel(paoi_moment(&c, 3).unwrap(), 36.75) < 1e-5);
        // M_δ(s) = 1/(1 − s)²: E[δ²] = 6, M_δ(−1) = 1/4.
        assert!(rel(aoi_mgf(&c, -1.0).unwrap(), 0.25) < 1e-14);
        assert!(rel(aoi_moment(&c, 2).unwrap(), 6.0) < 1e-7);
        assert!(rel(aoi_moment(&c, 3).unwrap(), 24.0) < 1e-5);
    }

    #[test]
    fn moment_order_is_validated() {
        let c = cfg(1.0, 1.0, exp(1.0));
        assert!(aoi_moment(&c, 0).is_err());
        assert!(paoi_moment(&c, 4).is_err());
    }

    #[test]
    fn transforms_reject_points_outside_roc() {
        let c = cfg(1.0, 1.0, exp(1.0));
        for f in [aoi_mgf, paoi_mgf, interdeparture_mgf] {
            assert!(matches!(f(&c, 1.0), Err(AoiError::Domain { .. })));
            assert!(matches!(f(&c, 1.5), Err(AoiError::Domain { .. })));
        }
        let ln = cfg(1.0, 0.0, ServiceDistribution::lognormal(0.0, 1.0).unwrap());
        assert!(aoi_mgf(&ln, 1e-6).is_err());
        assert_eq!(aoi_mgf(&ln, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn summary_invariants() {
        let c = cfg(1.0, 0.34, ServiceDistribution::lognormal(0.75, 0.75).unwrap());
        let s = summary(&c).unwrap();
        assert!(s.avg_aoi > 0.0 && s.avg_aoi <= s.avg_paoi);
        assert!(s.delivery_prob > 0.0 && s.delivery_prob <= 1.0);
        assert!(rel(s.avg_paoi, s.mean_interdeparture + s.mean_system_time) < 1e-8);
        assert!(s.aoi_second_moment > s.avg_aoi * s.avg_aoi);
    }
}
