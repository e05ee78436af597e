//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion (visible with `--nocapture`) and fails on `FAIL`.

use std::time::{Duration, Instant};

use aoi_core::analytic;
use aoi_core::optimizer::{self, Objective};
use aoi_core::simulator::{self, decompose_interdeparture};
use aoi_core::stats;
use aoi_core::validation::{operating_points, reference_grid, roc_test_points};
use aoi_core::{ServiceDistribution, SimConfig, SystemConfig};

fn lognormal() -> ServiceDistribution {
    ServiceDistribution::lognormal(0.75, 0.75).unwrap()
}

fn label(cfg: &SystemConfig) -> String {
    format!("λ={} θ={} {}", cfg.lambda(), cfg.theta(), cfg.service())
}

/// Prints the verdict line and turns failures into a test failure.
fn report(id: u32, title: &str, failures: &[String], detail: String) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {id} [{verdict}] {title}: {detail}");
    for f in failures {
        println!("    {f}");
    }
    assert!(failures.is_empty(), "criterion {id} failed: {failures:#?}");
}

fn simulate_all(cfgs: &[SystemConfig], deliveries: u64) -> Vec<aoi_core::SimSummary> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let sim = SimConfig::new(*c).deliveries(deliveries).seed(2024 + i as u64);
                scope.spawn(move || simulator::run(&sim).unwrap())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn agreement_grid() -> Vec<SystemConfig> {
    let mut g = reference_grid();
    g.extend(operating_points());
    g
}

#[test]
fn criterion_1_interior_optimum() {
    let start = Instant::now();
    let opt = optimizer::optimize_theta(1.0, &lognormal(), Objective::Aoi).unwrap();
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    if !(0.32..=0.36).contains(&opt.theta_star) {
        failures.push(format!("θ* = {} outside [0.32, 0.36]", opt.theta_star));
    }
    if elapsed >= Duration::from_secs(10) {
        failures.push(format!("runtime {elapsed:?} ≥ 10 s"));
    }
    report(
        1,
        "optimum at λ=1, log-normal(0.75, 0.75)",
        &failures,
        format!("θ* = {:.4}, Δ(θ*) = {:.6}, {elapsed:.2?}", opt.theta_star, opt.objective_value),
    );
}

#[test]
fn criterion_2_endpoint_optimum() {
    let start = Instant::now();
    let opt = optimizer::optimize_theta(0.2, &lognormal(), Objective::Aoi).unwrap();
    let grid = optimizer::theta_grid(101).unwrap();
    let rows = optimizer::sweep_theta(0.2, &lognormal(), &grid, None).unwrap();
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    if opt.theta_star != 1.0 {
        failures.push(format!("θ* = {} ≠ 1", opt.theta_star));
    }
    for w in rows.windows(2) {
        if w[1].avg_aoi > w[0].avg_aoi {
            failures.push(format!(
                "Δ increases from θ={} ({}) to θ={} ({})",
                w[0].theta, w[0].avg_aoi, w[1].theta, w[1].avg_aoi
            ));
        }
    }
    if elapsed >= Duration::from_secs(10) {
        failures.push(format!("runtime {elapsed:?} ≥ 10 s"));
    }
    report(
        2,
        "endpoint optimum at λ=0.2, Δ non-increasing on 101 points",
        &failures,
        format!(
            "θ* = {}, Δ(0) = {:.6}, Δ(1) = {:.6}, {elapsed:.2?}",
            opt.theta_star,
            rows[0].avg_aoi,
            rows[100].avg_aoi
        ),
    );
}

#[test]
fn criterion_3_endpoint_recovery() {
    let families = [
        ServiceDistribution::exponential(1.0).unwrap(),
        ServiceDistribution::gamma(2.0, 2.0).unwrap(),
        ServiceDistribution::deterministic(1.0).unwrap(),
        lognormal(),
    ];
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for d in families {
        for lambda in [0.5, 2.0] {
            let at = |theta: f64| analytic::average_aoi(&SystemConfig::new(lambda, theta, d).unwrap()).unwrap();
            let limit = analytic::average_aoi_theta0_limit(lambda, &d);
            let r0 = (at(1e-4) - limit).abs() / limit;
            let one = at(1.0);
            let r1 = (at(1.0 - 1e-4) - one).abs() / one;
            worst = worst.max(r0).max(r1);
            if r0 > 1e-3 {
                failures.push(format!("λ={lambda} {d}: θ→0 rel diff {r0:.3e}"));
            }
            if r1 > 1e-3 {
                failures.push(format!("λ={lambda} {d}: θ→1 rel diff {r1:.3e}"));
            }
        }
    }
    report(
        3,
        "continuity at θ=0 and θ=1",
        &failures,
        format!("8 configs, worst rel diff {worst:.3e}"),
    );
}

#[test]
fn criterion_4_closed_form_spot_values() {
    let exp = SystemConfig::new(1.0, 1.0, ServiceDistribution::exponential(1.0).unwrap()).unwrap();
    let det = SystemConfig::new(1.0, 1.0, ServiceDistribution::deterministic(1.0).unwrap()).unwrap();
    let targets = [(exp, 2.0), (det, std::f64::consts::E)];
    let sims = simulate_all(&[exp, det], 1_000_000);
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for ((cfg, target), sim) in targets.iter().zip(&sims) {
        let delta = analytic::average_aoi(cfg).unwrap();
        let rel = (delta - target).abs() / target;
        if rel > 1e-9 {
            failures.push(format!("{}: Δ = {delta}, expected {target}", label(cfg)));
        }
        let z = (sim.avg_aoi - target).abs() / sim.se_avg_aoi;
        if z > 3.0 {
            failures.push(format!(
                "{}: simulated Δ = {} ± {} is {z:.2} SE from {target}",
                label(cfg),
                sim.avg_aoi,
                sim.se_avg_aoi
            ));
        }
        detail.push(format!("Δ = {delta:.12} (rel {rel:.1e}, sim {z:.2} SE)"));
    }
    report(4, "Δ = 2 (exp) and Δ = e (det)", &failures, detail.join("; "));
}

#[test]
fn criterion_5_simulation_agreement() {
    let start = Instant::now();
    let cfgs = agreement_grid();
    let sims = simulate_all(&cfgs, 1_000_000);
    let mut failures = Vec::new();
    let mut checks = 0;
    for (cfg, s) in cfgs.iter().zip(&sims) {
        let pairs = [
            ("Δ", s.avg_aoi, s.se_avg_aoi, analytic::average_aoi(cfg).unwrap()),
            ("Ā", s.avg_paoi, s.se_avg_paoi, analytic::average_paoi(cfg).unwrap()),
            ("Ȳ", s.mean_y, s.se_mean_y, analytic::mean_interdeparture(cfg).unwrap()),
            ("Pr(D)", s.delivery_prob_hat, s.se_delivery_prob, analytic::delivery_prob(cfg).unwrap()),
        ];
        for (what, sim, se, ana) in pairs {
            checks += 1;
            let tol = (3.0 * se).max(0.005 * ana);
            if (sim - ana).abs() > tol {
                failures.push(format!("{}: {what} sim {sim} vs {ana} (tol {tol:.3e})", label(cfg)));
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(300) {
        failures.push(format!("runtime {elapsed:?} ≥ 5 min"));
    }
    report(
        5,
        "analytic vs simulation, 10⁶ deliveries per config",
        &failures,
        format!("{} configs, {checks} comparisons, {elapsed:.2?}", cfgs.len()),
    );
}

#[test]
fn criterion_6_normalization_and_consistency() {
    let mut failures = Vec::new();
    let mut worst_lemma: f64 = 0.0;
    let mut worst_geo: f64 = 0.0;
    let mut points = 0;
    for cfg in agreement_grid() {
        let at_zero = [
            ("M_δ", analytic::aoi_mgf(&cfg, 0.0).unwrap()),
            ("M_A", analytic::paoi_mgf(&cfg, 0.0).unwrap()),
            ("M_Y", analytic::interdeparture_mgf(&cfg, 0.0).unwrap()),
            ("M_T", analytic::system_time_mgf(&cfg, 0.0).unwrap()),
        ];
        for (name, v) in at_zero {
            if v != 1.0 {
                failures.push(format!("{}: {name}(0) = {v}", label(&cfg)));
            }
        }
        let pts = roc_test_points(&cfg, 20).unwrap();
        if pts.len() != 20 {
            failures.push(format!("{}: only {} ROC points", label(&cfg), pts.len()));
        }
        for s in pts {
            points += 1;
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
            let l = rel(
                analytic::aoi_mgf(&cfg, s).unwrap(),
                analytic::aoi_mgf_closed_form(&cfg, s).unwrap(),
            )
            .max(rel(
                analytic::paoi_mgf(&cfg, s).unwrap(),
                analytic::paoi_mgf_closed_form(&cfg, s).unwrap(),
            ));
            let g = rel(
                analytic::interdeparture_mgf_geometric(&cfg, s).unwrap(),
                analytic::interdeparture_mgf_closed_form(&cfg, s).unwrap(),
            );
            worst_lemma = worst_lemma.max(l);
            worst_geo = worst_geo.max(g);
            if l > 1e-10 {
                failures.push(format!("{} s={s}: assembly rel diff {l:.3e}", label(&cfg)));
            }
            if g > 1e-9 {
                failures.push(format!("{} s={s}: cycle-sum rel diff {g:.3e}", label(&cfg)));
            }
        }
    }
    report(
        6,
        "transform normalization and form consistency",
        &failures,
        format!("{points} points, worst assembly {worst_lemma:.2e}, worst cycle-sum {worst_geo:.2e}"),
    );
}

#[test]
fn criterion_7_moment_extraction() {
    let cfgs = agreement_grid();
    let sims = simulate_all(&cfgs, 1_000_000);
    let mut failures = Vec::new();
    let mut worst_rel: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for (cfg, s) in cfgs.iter().zip(&sims) {
        let d1 = analytic::aoi_moment(cfg, 1).unwrap();
        let a1 = analytic::paoi_moment(cfg, 1).unwrap();
        let delta = analytic::average_aoi(cfg).unwrap();
        let abar = analytic::average_paoi(cfg).unwrap();
        for (name, m, v) in [("E[δ]", d1, delta), ("E[A]", a1, abar)] {
            let rel = (m - v).abs() / v;
            worst_rel = worst_rel.max(rel);
            if rel > 1e-6 {
                failures.push(format!("{}: {name} moment {m} vs {v} (rel {rel:.3e})", label(cfg)));
            }
        }
        let a2 = analytic::paoi_moment(cfg, 2).unwrap();
        let z = (s.paoi_second_moment - a2).abs() / s.se_paoi_second_moment;
        worst_z = worst_z.max(z);
        if z > 3.0 {
            failures.push(format!(
                "{}: E[A²] = {a2} vs sim {} ± {} ({z:.2} SE)",
                label(cfg),
                s.paoi_second_moment,
                s.se_paoi_second_moment
            ));
        }
    }
    report(
        7,
        "moments from transforms",
        &failures,
        format!("{} configs, worst first-moment rel {worst_rel:.2e}, worst E[A²] {worst_z:.2} SE", cfgs.len()),
    );
}

#[test]
fn criterion_8_semi_markov_decomposition() {
    let cfgs = [
        SystemConfig::new(1.0, 0.34, lognormal()).unwrap(),
        SystemConfig::new(2.0, 0.5, ServiceDistribution::exponential(1.0).unwrap()).unwrap(),
        SystemConfig::new(2.0, 0.5, ServiceDistribution::gamma(2.0, 2.0).unwrap()).unwrap(),
    ];
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for (i, cfg) in cfgs.iter().enumerate() {
        let sim = SimConfig::new(*cfg).deliveries(300_000).seed(808 + i as u64);
        let (_, traj) = simulator::run_with_trajectory(&sim).unwrap();
        let cycles = decompose_interdeparture(&traj);
        let n = cycles.len() as f64;
        let p = analytic::delivery_prob(cfg).unwrap();

        let mut worst_z: f64 = 0.0;
        for v in 0..=5usize {
            let hat = cycles.iter().filter(|c| c.preempted.len() == v).count() as f64 / n;
            let pmf = p * (1.0 - p).powi(v as i32);
            let se = (pmf * (1.0 - pmf) / n).sqrt();
            let z = (hat - pmf).abs() / se;
            worst_z = worst_z.max(z);
            if z > 3.0 {
                failures.push(format!("{}: Pr(V={v}) = {hat} vs {pmf} ({z:.2} SE)", label(cfg)));
            }
        }

        let mut worst_id: f64 = 0.0;
        for (c, r) in cycles.iter().zip(&traj.records) {
            let rel = (c.total() - r.interdeparture).abs() / r.interdeparture;
            worst_id = worst_id.max(rel);
        }
        if worst_id > 1e-12 {
            failures.push(format!("{}: per-cycle identity off by {worst_id:.3e}", label(cfg)));
        }

        let take = 100_000;
        let mut eta: Vec<f64> = cycles.iter().take(take).map(|c| c.delivered).collect();
        eta.sort_by(f64::total_cmp);
        let d_eta = stats::ks_statistic_from_cdf_values(&analytic::sojourn_cdf_eta_sorted(cfg, &eta).unwrap());
        let crit_eta = stats::ks_critical_1pct(eta.len());
        if d_eta > crit_eta {
            failures.push(format!("{}: KS η D = {d_eta:.4e} > {crit_eta:.4e}", label(cfg)));
        }
        let mut etabar: Vec<f64> = cycles
            .iter()
            .flat_map(|c| c.preempted.iter().copied())
            .take(take)
            .collect();
        etabar.sort_by(f64::total_cmp);
        let d_bar = stats::ks_statistic_from_cdf_values(&analytic::sojourn_cdf_etabar_sorted(cfg, &etabar).unwrap());
        let crit_bar = stats::ks_critical_1pct(etabar.len());
        if d_bar > crit_bar {
            failures.push(format!("{}: KS η̄ D = {d_bar:.4e} > {crit_bar:.4e}", label(cfg)));
        }
        detail.push(format!(
            "{}: V {worst_z:.2} SE, KS η {:.2}·crit, KS η̄ {:.2}·crit, identity {worst_id:.1e}",
            cfg.service(),
            d_eta / crit_eta,
            d_bar / crit_bar
        ));
    }
    report(8, "semi-Markov decomposition", &failures, detail.join("; "));
}
