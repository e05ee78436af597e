//! Event-driven simulation of the single-source M/G/1/1 queue with
//! probabilistic preemption.
//!
//! Only two events are ever pending, the next arrival and the completion of
//! the packet in service, so the engine advances time by comparing them
//! directly. Delivery epochs leave the system empty and therefore regenerate
//! it; every statistic is accumulated per delivery cycle on a clock that is
//! reset at each delivery.
//!
//! The first delivery only starts AoI tracking (it provides `T₀`). The
//! `deliveries` cycles after it are simulated, the first `warmup_deliveries`
//! of them are discarded and the rest form the observation window.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::analytic::{self, SystemConfig};
use crate::error::{AoiError, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub system: SystemConfig,
    pub deliveries: u64,
    pub warmup_deliveries: u64,
    pub seed: u64,
    pub replications: u32,
    /// Batches for the batch-means standard errors.
    pub batches: usize,
}

impl SimConfig {
    pub fn new(system: SystemConfig) -> Self {
        Self {
            system,
            deliveries: 1_000_000,
            warmup_deliveries: 1_000,
            seed: 1,
            replications: 1,
            batches: stats::DEFAULT_BATCHES,
        }
    }

    pub fn deliveries(mut self, n: u64) -> Self {
        self.deliveries = n;
        self
    }

    pub fn warmup(mut self, n: u64) -> Self {
        self.warmup_deliveries = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn replications(mut self, k: u32) -> Self {
        self.replications = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.deliveries <= self.warmup_deliveries {
            return Err(AoiError::InvalidParameter {
                name: "deliveries",
                value: self.deliveries as f64,
                reason: "must exceed warmup_deliveries",
            });
        }
        if self.replications == 0 {
            return Err(AoiError::InvalidParameter {
                name: "replications",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if self.batches < 2 {
            return Err(AoiError::InvalidParameter {
                name: "batches",
                value: self.batches as f64,
                reason: "must be at least 2",
            });
        }
        Ok(())
    }

    fn window(&self) -> u64 {
        self.deliveries - self.warmup_deliveries
    }
}

/// One delivered packet in the observation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub index: u64,
    pub gen_time: f64,
    pub deliver_time: f64,
    /// `T_i = deliver_time − gen_time`.
    pub system_time: f64,
    /// `Y_i`, time since the previous delivery.
    pub interdeparture: f64,
    /// `A_i = Y_i + T_{i−1}`.
    pub peak: f64,
    /// Packets preempted during this cycle.
    pub preemptions: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub arrivals: u64,
    pub service_entries: u64,
    pub preemptions: u64,
    pub discards: u64,
    pub deliveries: u64,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.arrivals += o.arrivals;
        self.service_entries += o.service_entries;
        self.preemptions += o.preemptions;
        self.discards += o.discards;
        self.deliveries += o.deliveries;
    }
}

/// Empirical statistics over the observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub system: SystemConfig,
    pub seeds: Vec<u64>,
    /// Time-average AoI, `Σ area_i / Σ Y_i`.
    pub avg_aoi: f64,
    /// Time-average of the squared AoI.
    pub aoi_second_moment: f64,
    pub avg_paoi: f64,
    pub paoi_second_moment: f64,
    pub mean_y: f64,
    /// Mean of the `T_{i−1}` that enter the peaks of the window.
    pub mean_t: f64,
    pub delivery_prob_hat: f64,
    pub counts: Counts,
    pub se_avg_aoi: f64,
    pub se_aoi_second_moment: f64,
    pub se_avg_paoi: f64,
    pub se_paoi_second_moment: f64,
    pub se_mean_y: f64,
    pub se_mean_t: f64,
    pub se_delivery_prob: f64,
    /// Number of delivery cycles in the window.
    pub cycles: u64,
    /// `Σ Y_i` over the window.
    pub observation_time: f64,
}

/// Per-cycle sojourns of the two-state chain: the idle period, the preempted
/// services in order, and the delivered service.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSojourns<'a> {
    pub idle: f64,
    pub preempted: &'a [f64],
    pub delivered: f64,
}

impl CycleSojourns<'_> {
    pub fn total(&self) -> f64 {
        self.idle + self.preempted.iter().sum::<f64>() + self.delivered
    }
}

/// Delivery records plus the state-transition timing of every window cycle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<DeliveryRecord>,
    idle: Vec<f64>,
    delivered: Vec<f64>,
    preempted: Vec<f64>,
    // preempted[offsets[i]..offsets[i + 1]] belongs to cycle i
    offsets: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cycle(&self, i: usize) -> CycleSojourns<'_> {
        CycleSojourns {
            idle: self.idle[i],
            preempted: &self.preempted[self.offsets[i]..self.offsets[i + 1]],
            delivered: self.delivered[i],
        }
    }

    /// Build from hand-specified cycles; records are derived from the sojourns.
    pub fn from_cycles(initial_system_time: f64, cycles: &[(f64, Vec<f64>, f64)]) -> Self {
        let mut traj = Trajectory {
            offsets: vec![0],
            ..Default::default()
        };
        let mut clock = 0.0;
        let mut prev_t = initial_system_time;
        for (i, (idle, pre, del)) in cycles.iter().enumerate() {
            let y = idle + pre.iter().sum::<f64>() + del;
            let deliver = clock + y;
            traj.records.push(DeliveryRecord {
                index: i as u64 + 1,
                gen_time: deliver - del,
                deliver_time: deliver,
                system_time: *del,
                interdeparture: y,
                peak: y + prev_t,
                preemptions: pre.len() as u32,
            });
            traj.idle.push(*idle);
            traj.preempted.extend_from_slice(pre);
            traj.offsets.push(traj.preempted.len());
            traj.delivered.push(*del);
            clock = deliver;
            prev_t = *del;
        }
        traj
    }
}

/// The per-cycle `(η̃, [η̄…], η)` samples of a trajectory.
pub fn decompose_interdeparture(traj: &Trajectory) -> Vec<CycleSojourns<'_>> {
    (0..traj.len()).map(|i| traj.cycle(i)).collect()
}

#[derive(Default, Clone, Copy)]
struct Batch {
    area: f64,
    area_sq: f64,
    y: f64,
    peak: f64,
    peak_sq: f64,
    t_prev: f64,
    cycles: f64,
    entries: f64,
    deliveries: f64,
}

/// Accumulates window statistics cycle by cycle.
struct Accumulator {
    batches: Vec<Batch>,
    batch_size: u64,
    seen: u64,
    counts: Counts,
}

impl Accumulator {
    fn new(window: u64, n_batches: usize) -> Self {
        let n_batches = (n_batches as u64).min(window).max(1) as usize;
        Self {
            batches: vec![Batch::default(); n_batches],
            batch_size: window / n_batches as u64,
            seen: 0,
            counts: Counts::default(),
        }
    }

    fn push(&mut self, y: f64, t_prev: f64, cycle_counts: &Counts) {
        let idx = ((self.seen / self.batch_size) as usize).min(self.batches.len() - 1);
        let b = &mut self.batches[idx];
        let peak = y + t_prev;
        b.area += y * t_prev + 0.5 * y * y;
        b.area_sq += (peak * peak * peak - t_prev * t_prev * t_prev) / 3.0;
        b.y += y;
        b.peak += peak;
        b.peak_sq += peak * peak;
        b.t_prev += t_prev;
        b.cycles += 1.0;
        b.entries += cycle_counts.service_entries as f64;
        b.deliveries += cycle_counts.deliveries as f64;
        self.counts.add(cycle_counts);
        self.seen += 1;
    }

    fn finish(self, cfg: &SimConfig, seed: u64) -> SimSummary {
        let col = |f: fn(&Batch) -> f64| self.batches.iter().map(f).collect::<Vec<_>>();
        let nb = self.batches.len();
        let (y, cycles, entries) = (col(|b| b.y), col(|b| b.cycles), col(|b| b.entries));
        let ratio = |num: &[f64], den: &[f64]| stats::batch_ratio(num, den, nb);
        let (avg_aoi, se_avg_aoi) = ratio(&col(|b| b.area), &y);
        let (aoi_sq, se_aoi_sq) = ratio(&col(|b| b.area_sq), &y);
        let (avg_paoi, se_avg_paoi) = ratio(&col(|b| b.peak), &cycles);
        let (paoi_sq, se_paoi_sq) = ratio(&col(|b| b.peak_sq), &cycles);
        let (mean_y, se_mean_y) = ratio(&y, &cycles);
        let (mean_t, se_mean_t) = ratio(&col(|b| b.t_prev), &cycles);
        let (p_hat, se_p) = ratio(&col(|b| b.deliveries), &entries);
        SimSummary {
            system: cfg.system,
            seeds: vec![seed],
            avg_aoi,
            aoi_second_moment: aoi_sq,
            avg_paoi,
            paoi_second_moment: paoi_sq,
            mean_y,
            mean_t,
            delivery_prob_hat: p_hat,
            counts: self.counts,
            se_avg_aoi,
            se_aoi_second_moment: se_aoi_sq,
            se_avg_paoi,
            se_paoi_second_moment: se_paoi_sq,
            se_mean_y,
            se_mean_t,
            se_delivery_prob: se_p,
            cycles: self.seen,
            observation_time: y.iter().sum(),
        }
    }
}

/// Random stream for one replication: ChaCha8 keyed by the seed, one stream
/// per replication index.
pub fn replication_rng(seed: u64, replication: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

/// Simulates one replication; the trajectory is kept when `record` is set.
pub fn run_replication(cfg: &SimConfig, replication: u32, record: bool) -> Result<(SimSummary, Option<Trajectory>)> {
    cfg.validate()?;
    let system = &cfg.system;
    let lambda = system.lambda();
    let theta = system.theta();
    let mut rng = replication_rng(cfg.seed, replication);
    let interarrival = Exp::new(lambda).map_err(|_| AoiError::InvalidParameter {
        name: "lambda",
        value: lambda,
        reason: "invalid exponential rate",
    })?;
    let service = system.service().sampler();

    let mut acc = Accumulator::new(cfg.window(), cfg.batches);
    let mut traj = record.then(|| Trajectory {
        offsets: vec![0],
        ..Default::default()
    });

    let mut base = 0.0; // absolute time of the last delivery
    let mut prev_system_time = f64::NAN;
    let mut scratch_preempted: Vec<f64> = Vec::new();

    // Cycle 0 only establishes T₀.
    for cycle in 0..=cfg.deliveries {
        let mut counts = Counts::default();
        scratch_preempted.clear();

        // Idle: wait for an arrival; the clock restarts at each delivery.
        let idle = interarrival.sample(&mut rng);
        counts.arrivals += 1;
        counts.service_entries += 1;
        let mut clock = idle;
        let mut start = clock;
        let mut work = service.sample(&mut rng);

        loop {
            let next_arrival = clock + interarrival.sample(&mut rng);
            let completion = start + work;
            if next_arrival < completion {
                clock = next_arrival;
                counts.arrivals += 1;
                if rng.gen::<f64>() < theta {
                    counts.preemptions += 1;
                    counts.service_entries += 1;
                    scratch_preempted.push(clock - start);
                    start = clock;
                    work = service.sample(&mut rng);
                } else {
                    counts.discards += 1;
                }
            } else {
                clock = completion;
                counts.deliveries += 1;
                break;
            }
        }

        let y = clock;
        let system_time = clock - start;
        let deliver_time = base + y;
        if cycle > cfg.warmup_deliveries {
            acc.push(y, prev_system_time, &counts);
            if let Some(t) = traj.as_mut() {
                t.records.push(DeliveryRecord {
                    index: cycle,
                    gen_time: deliver_time - system_time,
                    deliver_time,
                    system_time,
                    interdeparture: y,
                    peak: y + prev_system_time,
                    preemptions: scratch_preempted.len() as u32,
                });
                t.idle.push(idle);
                t.preempted.extend_from_slice(&scratch_preempted);
                t.offsets.push(t.preempted.len());
                t.delivered.push(system_time);
            }
        }
        base = deliver_time;
        prev_system_time = system_time;
    }

    Ok((acc.finish(cfg, cfg.seed), traj))
}

/// Runs all replications (concurrently) and merges them in replication order.
pub fn run(cfg: &SimConfig) -> Result<SimSummary> {
    cfg.validate()?;
    if cfg.replications == 1 {
        return Ok(run_replication(cfg, 0, false)?.0);
    }
    let results: Vec<Result<SimSummary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.replications)
            .map(|r| scope.spawn(move || run_replication(cfg, r, false).map(|x| x.0)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("replication thread panicked"))
            .collect()
    });
    let summaries = results.into_iter().collect::<Result<Vec<_>>>()?;
    merge_replications(&summaries)
}

/// Single recorded replication (replication index 0).
pub fn run_with_trajectory(cfg: &SimConfig) -> Result<(SimSummary, Trajectory)> {
    let (s, t) = run_replication(cfg, 0, true)?;
    Ok((s, t.expect("recording requested")))
}

/// Pools replications of the same system.
///
/// Time averages are weighted by observation time, per-cycle means by cycle
/// count and the delivery ratio by service entries; standard errors combine
/// as `sqrt(Σ w_r² SE_r²)` with the same normalized weights.
pub fn merge_replications(summaries: &[SimSummary]) -> Result<SimSummary> {
    let first = summaries
        .first()
        .ok_or_else(|| AoiError::ConfigMismatch("no replications to merge".into()))?;
    if summaries.len() == 1 {
        return Ok(first.clone());
    }
    if let Some(other) = summaries.iter().find(|s| s.system != first.system) {
        return Err(AoiError::ConfigMismatch(format!(
            "{:?} vs {:?}",
            first.system, other.system
        )));
    }
    let pool = |weight: fn(&SimSummary) -> f64, value: fn(&SimSummary) -> f64, se: fn(&SimSummary) -> f64| {
        let total: f64 = summaries.iter().map(weight).sum();
        let mean = summaries.iter().map(|s| weight(s) / total * value(s)).sum();
        let var: f64 = summaries.iter().map(|s| (weight(s) / total * se(s)).powi(2)).sum();
        (mean, var.sqrt())
    };
    let by_time = |s: &SimSummary| s.observation_time;
    let by_cycles = |s: &SimSummary| s.cycles as f64;
    let by_entries = |s: &SimSummary| s.counts.service_entries as f64;

    let (avg_aoi, se_avg_aoi) = pool(by_time, |s| s.avg_aoi, |s| s.se_avg_aoi);
    let (aoi_sq, se_aoi_sq) = pool(by_time, |s| s.aoi_second_moment, |s| s.se_aoi_second_moment);
    let (avg_paoi, se_avg_paoi) = pool(by_cycles, |s| s.avg_paoi, |s| s.se_avg_paoi);
    let (paoi_sq, se_paoi_sq) = pool(by_cycles, |s| s.paoi_second_moment, |s| s.se_paoi_second_moment);
    let (mean_y, se_mean_y) = pool(by_cycles, |s| s.mean_y, |s| s.se_mean_y);
    let (mean_t, se_mean_t) = pool(by_cycles, |s| s.mean_t, |s| s.se_mean_t);
    let (p_hat, se_p) = pool(by_entries, |s| s.delivery_prob_hat, |s| s.se_delivery_prob);

    let mut counts = Counts::default();
    for s in summaries {
        counts.add(&s.counts);
    }
    Ok(SimSummary {
        system: first.system,
        seeds: summaries.iter().flat_map(|s| s.seeds.iter().copied()).collect(),
        avg_aoi,
        aoi_second_moment: aoi_sq,
        avg_paoi,
        paoi_second_moment: paoi_sq,
        mean_y,
        mean_t,
        delivery_prob_hat: p_hat,
        counts,
        se_avg_aoi,
        se_aoi_second_moment: se_aoi_sq,
        se_avg_paoi,
        se_paoi_second_moment: se_paoi_sq,
        se_mean_y,
        se_mean_t,
        se_delivery_prob: se_p,
        cycles: summaries.iter().map(|s| s.cycles).sum(),
        observation_time: summaries.iter().map(|s| s.observation_time).sum(),
    })
}

/// Which per-delivery quantity an empirical transform averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    SystemTime,
    Interdeparture,
    Peak,
}

/// Sample mean of `e^{sX}` over the records, with its standard error.
///
/// `s` must stay below 0.8 of the ROC supremum; closer to the pole the
/// estimator's variance is unbounded.
pub fn empirical_transform(
    system: &SystemConfig,
    records: &[DeliveryRecord],
    s: f64,
    which: Observable,
) -> Result<(f64, f64)> {
    if s == 0.0 {
        return Ok((1.0, 0.0));
    }
    let cap = 0.8 * analytic::mgf_roc(system)?;
    if !(s < cap || s < 0.0) {
        return Err(AoiError::Domain {
            quantity: "empirical transform",
            s,
            sup: cap,
        });
    }
    let xs: Vec<f64> = records
        .iter()
        .map(|r| {
            let x = match which {
                Observable::SystemTime => r.system_time,
                Observable::Interdeparture => r.interdeparture,
                Observable::Peak => r.peak,
            };
            (s * x).exp()
        })
        .collect();
    Ok(stats::batch_mean(&xs, stats::DEFAULT_BATCHES))
}

/// Writes `i,gen_time,deliver_time,T,Y,A,V` rows.
pub fn write_records_csv<W: Write>(records: &[DeliveryRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "i,gen_time,deliver_time,T,Y,A,V")?;
    for r in records {
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            r.index, r.gen_time, r.deliver_time, r.system_time, r.interdeparture, r.peak, r.preemptions
        )?;
    }
    Ok(())
}
