//! Sweeps and minimization of the average AoI / PAoI over the preemption
//! probability.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::{self, SystemConfig};
use crate::distributions::ServiceDistribution;
use crate::error::{AoiError, Result};
use crate::simulator::{self, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Aoi,
    Paoi,
}

impl Objective {
    pub fn evaluate(self, cfg: &SystemConfig) -> Result<f64> {
        match self {
            Objective::Aoi => analytic::average_aoi(cfg),
            Objective::Paoi => analytic::average_paoi(cfg),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Aoi => "aoi",
            Objective::Paoi => "paoi",
        })
    }
}

impl FromStr for Objective {
    type Err = AoiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aoi" => Ok(Objective::Aoi),
            "paoi" => Ok(Objective::Paoi),
            _ => Err(AoiError::Parse {
                input: s.to_string(),
                token: s.to_string(),
                reason: "expected aoi or paoi".into(),
            }),
        }
    }
}

/// One θ of a sweep. Failed rows carry NaN analytic values and the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub avg_aoi: f64,
    pub avg_paoi: f64,
    pub sim_avg_aoi: Option<f64>,
    pub sim_avg_paoi: Option<f64>,
    pub sim_se_aoi: Option<f64>,
    pub sim_se_paoi: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub theta_star: f64,
    pub objective_value: f64,
    pub objective: Objective,
    pub grid_resolution: usize,
    pub refine_tolerance: f64,
}

/// Simulation settings for the optional sweep columns; `system` is replaced per row.
pub type SweepSim = SimConfig;

/// `n` equally spaced points on `[0, 1]`, endpoints exact.
pub fn theta_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(AoiError::InvalidParameter {
            name: "grid",
            value: n as f64,
            reason: "needs at least 2 points",
        });
    }
    let last = (n - 1) as f64;
    Ok((0..n).map(|k| k as f64 / last).collect())
}

fn sweep_row(base: &SystemConfig, theta: f64, sim: Option<&SweepSim>) -> SweepRow {
    let mut row = SweepRow {
        theta,
        avg_aoi: f64::NAN,
        avg_paoi: f64::NAN,
        sim_avg_aoi: None,
        sim_avg_paoi: None,
        sim_se_aoi: None,
        sim_se_paoi: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let cfg = base.with_theta(theta)?;
        row.avg_aoi = analytic::average_aoi(&cfg)?;
        row.avg_paoi = analytic::average_paoi(&cfg)?;
        if let Some(sim) = sim {
            let s = simulator::run(&SimConfig { system: cfg, ..*sim })?;
            row.sim_avg_aoi = Some(s.avg_aoi);
            row.sim_avg_paoi = Some(s.avg_paoi);
            row.sim_se_aoi = Some(s.se_avg_aoi);
            row.sim_se_paoi = Some(s.se_avg_paoi);
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

/// Analytic (and optionally simulated) averages at each θ of `grid`.
///
/// Rows are computed concurrently and returned in grid order. A failing row
/// is marked, not fatal.
pub fn sweep_theta(
    lambda: f64,
    service: &ServiceDistribution,
    grid: &[f64],
    sim: Option<&SweepSim>,
) -> Result<Vec<SweepRow>> {
    let base = SystemConfig::new(lambda, 0.0, *service)?;
    sweep_theta_with(&base, grid, sim)
}

/// [`sweep_theta`] keeping the quadrature settings of `base`.
pub fn sweep_theta_with(base: &SystemConfig, grid: &[f64], sim: Option<&SweepSim>) -> Result<Vec<SweepRow>> {
    if let Some(bad) = grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(AoiError::InvalidParameter {
            name: "theta",
            value: *bad,
            reason: "grid values must lie in [0, 1]",
        });
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AoiError::InvalidParameter {
            name: "grid",
            value: grid.len() as f64,
            reason: "grid must be sorted and distinct",
        });
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(grid.len().max(1));
    let chunk = grid.len().div_ceil(workers.max(1)).max(1);
    let rows = std::thread::scope(|scope| {
        let handles: Vec<_> = grid
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&t| sweep_row(base, t, sim)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    Ok(rows)
}

const GRID_POINTS: usize = 101;
const REFINE_TOL: f64 = 1e-4;
const TIE_REL: f64 = 1e-9;

fn golden_section(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Global minimizer of the objective over `θ ∈ [0, 1]`.
///
/// A 101-point grid locates the best cell, golden-section search refines it
/// to a bracket narrower than `1e-4`, and the result is compared against both
/// endpoints. Near-ties (within `1e-9` relative) go to the endpoint.
pub fn optimize_theta(lambda: f64, service: &ServiceDistribution, objective: Objective) -> Result<Optimum> {
    let base = SystemConfig::new(lambda, 0.0, *service)?;
    optimize_theta_with(&base, objective)
}

/// [`optimize_theta`] keeping the quadrature settings of `base`.
pub fn optimize_theta_with(base: &SystemConfig, objective: Objective) -> Result<Optimum> {
    let f = |theta: f64| objective.evaluate(&base.with_theta(theta)?);
    let grid = theta_grid(GRID_POINTS)?;
    let values = grid.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
    let (best_idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");

    let mut interior = (grid[best_idx], values[best_idx]);
    if best_idx > 0 && best_idx + 1 < grid.len() {
        let refined = golden_section(f, grid[best_idx - 1], grid[best_idx + 1], REFINE_TOL)?;
        if refined.1 < interior.1 {
            interior = refined;
        }
    }

    let mut best = interior;
    let endpoints = [(0.0, values[0]), (1.0, values[grid.len() - 1])];
    for (t, v) in endpoints {
        let best_is_endpoint = best.0 == 0.0 || best.0 == 1.0;
        let ties_or_wins = v <= best.1 * (1.0 + TIE_REL);
        if (ties_or_wins && !best_is_endpoint) || v < best.1 {
            best = (t, v);
        }
    }
    Ok(Optimum {
        theta_star: best.0,
        objective_value: best.1,
        objective,
        grid_resolution: GRID_POINTS,
        refine_tolerance: REFINE_TOL,
    })
}
