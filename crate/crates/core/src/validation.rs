//! End-to-end consistency checks between the analytic results and the
//! simulator, as run by `aoi validate`.

use std::fmt;

use serde::Serialize;

use crate::analytic::{self, SystemConfig};
use crate::distributions::ServiceDistribution;
use crate::error::Result;
use crate::simulator::{self, SimConfig};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// Outcome of one check. `tolerance` is an absolute bound on
/// `|observed − expected|`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: observed={:.12e} expected={:.12e} tol={:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.expected,
            self.tolerance
        )
    }
}

struct Checks {
    out: Vec<Check>,
    scale: f64,
}

impl Checks {
    fn close(&mut self, name: String, observed: f64, expected: f64, tolerance: f64) {
        let tolerance = tolerance * self.scale;
        let passed = (observed - expected).abs() <= tolerance;
        self.out.push(Check {
            name,
            observed,
            expected,
            tolerance,
            passed,
        });
    }

    fn error(&mut self, name: String, e: crate::AoiError) {
        self.out.push(Check {
            name: format!("{name}: {e}"),
            observed: f64::NAN,
            expected: f64::NAN,
            tolerance: 0.0,
            passed: false,
        });
    }
}

/// The three service laws of the reference grid.
pub fn reference_families() -> Vec<ServiceDistribution> {
    vec![
        ServiceDistribution::exponential(1.0).expect("valid"),
        ServiceDistribution::deterministic(1.0).expect("valid"),
        ServiceDistribution::lognormal(0.75, 0.75).expect("valid"),
    ]
}

/// Families × θ ∈ {0, 0.5, 1} × λ ∈ {0.5, 2}.
pub fn reference_grid() -> Vec<SystemConfig> {
    let mut grid = Vec::new();
    for d in reference_families() {
        for theta in [0.0, 0.5, 1.0] {
            for lambda in [0.5, 2.0] {
                grid.push(SystemConfig::new(lambda, theta, d).expect("valid"));
            }
        }
    }
    grid
}

/// The two log-normal operating points of the θ study.
pub fn operating_points() -> Vec<SystemConfig> {
    let d = ServiceDistribution::lognormal(0.75, 0.75).expect("valid");
    vec![
        SystemConfig::new(1.0, 0.34, d).expect("valid"),
        SystemConfig::new(0.2, 1.0, d).expect("valid"),
    ]
}

fn label(cfg: &SystemConfig) -> String {
    format!("λ={} θ={} {}", cfg.lambda(), cfg.theta(), cfg.service())
}

/// Points strictly inside the ROC, away from the removable points `s = 0`
/// and `s = θλ` where the uncancelled closed forms are 0/0.
pub fn roc_test_points(cfg: &SystemConfig, n: usize) -> Result<Vec<f64>> {
    let top = analytic::mgf_roc(cfg)? * 0.9;
    let q = cfg.thinned_rate();
    let mut pts = Vec::with_capacity(n);
    let mut k = 0;
    while pts.len() < n {
        let s = -3.0 + (top + 3.0) * k as f64 / (2 * n) as f64;
        k += 1;
        if k > 4 * n {
            break;
        }
        if s.abs() < 0.05 || (s - q).abs() < 0.05 || s >= top {
            continue;
        }
        pts.push(s);
    }
    Ok(pts)
}

fn analytic_checks(c: &mut Checks, cfg: &SystemConfig) -> Result<()> {
    let name = label(cfg);
    for (what, f) in [
        ("M_delta(0)", analytic::aoi_mgf as fn(&SystemConfig, f64) -> Result<f64>),
        ("M_A(0)", analytic::paoi_mgf),
        ("M_Y(0)", analytic::interdeparture_mgf),
        ("M_T(0)", analytic::system_time_mgf),
    ] {
        c.close(format!("{name}: {what}"), f(cfg, 0.0)?, 1.0, 0.0);
    }
    let mut worst_lemma = 0.0f64;
    let mut worst_geo = 0.0f64;
    for s in roc_test_points(cfg, 20)? {
        let a = analytic::aoi_mgf(cfg, s)?;
        let b = analytic::aoi_mgf_closed_form(cfg, s)?;
        worst_lemma = worst_lemma.max((a - b).abs() / b.abs());
        let a = analytic::paoi_mgf(cfg, s)?;
        let b = analytic::paoi_mgf_closed_form(cfg, s)?;
        worst_lemma = worst_lemma.max((a - b).abs() / b.abs());
        let g = analytic::interdeparture_mgf_geometric(cfg, s)?;
        let p = analytic::interdeparture_mgf_closed_form(cfg, s)?;
        worst_geo = worst_geo.max((g - p).abs() / p.abs());
    }
    c.close(format!("{name}: transform assembly (max rel diff)"), worst_lemma, 0.0, 1e-10);
    c.close(format!("{name}: cycle-sum M_Y (max rel diff)"), worst_geo, 0.0, 1e-9);

    let delta = analytic::average_aoi(cfg)?;
    let abar = analytic::average_paoi(cfg)?;
    c.close(format!("{name}: E[δ] from M_δ''"), analytic::aoi_moment(cfg, 1)?, delta, 1e-6 * delta);
    c.close(format!("{name}: E[A] from M_A'"), analytic::paoi_moment(cfg, 1)?, abar, 1e-6 * abar);
    let ident = analytic::mean_interdeparture(cfg)? + analytic::mean_system_time(cfg)?;
    c.close(format!("{name}: Ā = Ȳ + E[T]"), ident, abar, 1e-8 * abar);
    c.close(format!("{name}: Δ ≤ Ā"), delta.min(abar), delta, 0.0);
    Ok(())
}

fn endpoint_checks(c: &mut Checks, lambda: f64, d: ServiceDistribution) -> Result<()> {
    let base = SystemConfig::new(lambda, 0.0, d)?;
    let limit = analytic::average_aoi_theta0_limit(lambda, &d);
    let near0 = analytic::average_aoi(&base.with_theta(1e-4)?)?;
    c.close(format!("λ={lambda} {d}: Δ(1e-4) vs θ→0 limit"), near0, limit, 1e-3 * limit);
    let one = analytic::average_aoi(&base.with_theta(1.0)?)?;
    let near1 = analytic::average_aoi(&base.with_theta(1.0 - 1e-4)?)?;
    c.close(format!("λ={lambda} {d}: Δ(1-1e-4) vs Δ(1)"), near1, one, 1e-3 * one);
    Ok(())
}

fn simulation_checks(c: &mut Checks, cfgs: &[SystemConfig], deliveries: u64) {
    let sims: Vec<Result<simulator::SimSummary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .enumerate()
            .map(|(i, cfg)| {
                let sim = SimConfig::new(*cfg).deliveries(deliveries).seed(1000 + i as u64);
                scope.spawn(move || simulator::run(&sim))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation panicked")).collect()
    });
    for (cfg, sim) in cfgs.iter().zip(sims) {
        let name = label(cfg);
        let outcome = (|| -> Result<()> {
            let s = sim?;
            let tol = |se: f64, v: f64| (3.0 * se).max(0.005 * v);
            let delta = analytic::average_aoi(cfg)?;
            c.close(format!("{name}: sim Δ"), s.avg_aoi, delta, tol(s.se_avg_aoi, delta));
            let abar = analytic::average_paoi(cfg)?;
            c.close(format!("{name}: sim Ā"), s.avg_paoi, abar, tol(s.se_avg_paoi, abar));
            let ybar = analytic::mean_interdeparture(cfg)?;
            c.close(format!("{name}: sim Ȳ"), s.mean_y, ybar, tol(s.se_mean_y, ybar));
            let p = analytic::delivery_prob(cfg)?;
            c.close(format!("{name}: sim Pr(D)"), s.delivery_prob_hat, p, tol(s.se_delivery_prob, p));
            Ok(())
        })();
        if let Err(e) = outcome {
            c.error(name, e);
        }
    }
}

fn decomposition_checks(c: &mut Checks, cfg: &SystemConfig, deliveries: u64, seed: u64) -> Result<()> {
    let name = label(cfg);
    let (_, traj) = simulator::run_with_trajectory(&SimConfig::new(*cfg).deliveries(deliveries).seed(seed))?;
    let cycles = simulator::decompose_interdeparture(&traj);
    let n = cycles.len() as f64;
    let p = analytic::delivery_prob(cfg)?;
    for v in 0..=5usize {
        let hits = cycles.iter().filter(|c| c.preempted.len() == v).count() as f64;
        let expected = p * (1.0 - p).powi(v as i32);
        let se = (expected * (1.0 - expected) / n).sqrt();
        c.close(format!("{name}: Pr(V={v})"), hits / n, expected, 3.0 * se);
    }
    let worst = cycles
        .iter()
        .zip(&traj.records)
        .map(|(c, r)| (c.total() - r.interdeparture).abs() / r.interdeparture)
        .fold(0.0, f64::max);
    c.close(format!("{name}: η̃ + Ση̄ + η = Y"), worst, 0.0, 1e-12);

    let take = 100_000usize;
    let mut eta: Vec<f64> = cycles.iter().take(take).map(|c| c.delivered).collect();
    eta.sort_by(f64::total_cmp);
    let f = analytic::sojourn_cdf_eta_sorted(cfg, &eta)?;
    let d = stats::ks_statistic_from_cdf_values(&f);
    c.close(format!("{name}: KS η"), d, 0.0, stats::ks_critical_1pct(eta.len()));
    if cfg.thinned_rate() > 0.0 {
        let mut etabar: Vec<f64> = cycles.iter().flat_map(|c| c.preempted.iter().copied()).take(take).collect();
        etabar.sort_by(f64::total_cmp);
        let f = analytic::sojourn_cdf_etabar_sorted(cfg, &etabar)?;
        let d = stats::ks_statistic_from_cdf_values(&f);
        c.close(format!("{name}: KS η̄"), d, 0.0, stats::ks_critical_1pct(etabar.len()));
    }
    Ok(())
}

/// Runs the checks of `level`. `tolerance_scale` multiplies every tolerance
/// (1 for normal use).
pub fn run(level: Level, tolerance_scale: f64) -> Vec<Check> {
    let mut c = Checks {
        out: Vec::new(),
        scale: tolerance_scale,
    };
    for cfg in reference_grid().iter().chain(&operating_points()) {
        if let Err(e) = analytic_checks(&mut c, cfg) {
            c.error(label(cfg), e);
        }
    }
    let endpoint_families = [
        ServiceDistribution::exponential(1.0).expect("valid"),
        ServiceDistribution::gamma(2.0, 2.0).expect("valid"),
        ServiceDistribution::deterministic(1.0).expect("valid"),
        ServiceDistribution::lognormal(0.75, 0.75).expect("valid"),
    ];
    for d in endpoint_families {
        for lambda in [0.5, 2.0] {
            if let Err(e) = endpoint_checks(&mut c, lambda, d) {
                c.error(format!("λ={lambda} {d}: endpoints"), e);
            }
        }
    }
    let mut sim_cfgs = reference_grid();
    sim_cfgs.extend(operating_points());
    let (deliveries, decomposition_cfgs) = match level {
        Level::Quick => (100_000, vec![operating_points()[0]]),
        Level::Full => (
            1_000_000,
            vec![
                operating_points()[0],
                SystemConfig::new(2.0, 0.5, ServiceDistribution::exponential(1.0).expect("valid")).expect("valid"),
                SystemConfig::new(2.0, 0.5, ServiceDistribution::gamma(2.0, 2.0).expect("valid")).expect("valid"),
            ],
        ),
    };
    simulation_checks(&mut c, &sim_cfgs, deliveries);
    for (i, cfg) in decomposition_cfgs.iter().enumerate() {
        if let Err(e) = decomposition_checks(&mut c, cfg, deliveries.min(300_000), 77 + i as u64) {
            c.error(format!("{}: decomposition", label(cfg)), e);
        }
    }
    c.out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        assert_eq!(reference_grid().len(), 18);
        for cfg in reference_grid() {
            let pts = roc_test_points(&cfg, 20).unwrap();
            assert_eq!(pts.len(), 20, "{}", label(&cfg));
            let roc = analytic::mgf_roc(&cfg).unwrap();
            assert!(pts.iter().all(|&s| s < roc && s.abs() >= 0.05));
        }
    }

    #[test]
    fn zero_scale_fails_inexact_checks() {
        let mut c = Checks { out: Vec::new(), scale: 0.0 };
        endpoint_checks(&mut c, 1.0, ServiceDistribution::exponential(1.0).unwrap()).unwrap();
        assert!(c.out.iter().any(|x| !x.passed));
    }
}
