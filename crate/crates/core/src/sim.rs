//! Discrete-event simulation of the charging station.
//!
//! Each class arrives as a Poisson stream, holds `b_j` units for its service
//! time and is lost when fewer than `b_j` units are free. Replications run in
//! parallel; each is single-threaded and fully determined by the seed.
//!
//! Random streams: replication `r` and class `j` draw from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `(r << 32) | j`, so
//! adding a class leaves the other classes' draws untouched.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CustomerClass, Scenario, TimeProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceDistribution {
    #[default]
    Exponential,
    /// Every service lasts exactly `1/μ_j`.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Total simulated time for [`simulate`]; length of each period for
    /// [`simulate_profile`].
    pub horizon: f64,
    /// Initial stretch excluded from all tallies.
    pub warmup: f64,
    pub seed: u64,
    pub replications: usize,
    #[serde(default)]
    pub service: ServiceDistribution,
}

impl SimConfig {
    pub fn new(horizon: f64, warmup: f64, seed: u64, replications: usize) -> Result<Self> {
        let cfg = Self {
            horizon,
            warmup,
            seed,
            replications,
            service: ServiceDistribution::Exponential,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_service(self, service: ServiceDistribution) -> Self {
        Self { service, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            return Err(Error::InvalidArgument(format!(
                "warmup must lie in [0, horizon), got {}",
                self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument(
                "replications must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub arrivals: u64,
    pub blocked: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub capacity: u32,
    /// Blocked over offered arrivals, averaged over replications.
    pub beta_hat: Vec<f64>,
    /// Standard error of `beta_hat` across replications; the binomial
    /// estimate from the pooled counts when there is a single replication.
    pub stderr: Vec<f64>,
    /// Time-averaged fraction of capacity in use.
    pub utilization: f64,
    /// Arrival and blocking tallies summed over replications.
    pub counts: Vec<ClassCounts>,
    /// Time-averaged fraction with fewer than `b_j` free units.
    pub time_congestion: Vec<f64>,
    pub time_congestion_stderr: Vec<f64>,
    pub replications: usize,
}

/// A stretch of simulated time with fixed parameters.
struct Segment {
    end: f64,
    capacity: u32,
    lambdas: Vec<f64>,
    /// Period index the segment is tallied under, `None` during warmup.
    period: Option<usize>,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    counts: Vec<ClassCounts>,
    busy_area: f64,
    congested: Vec<f64>,
    duration: f64,
    capacity: u32,
}

#[derive(Debug, Clone, Copy)]
struct Departure {
    time: f64,
    seq: u64,
    units: u32,
}

impl PartialEq for Departure {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Departure {}

impl PartialOrd for Departure {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Departure {
    // Reversed so the max-heap pops the earliest departure.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn class_stream(seed: u64, rep: usize, class: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((rep as u64) << 32) | class as u64);
    rng
}

fn next_arrival(now: f64, rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rate > 0.0 {
        now + Exp::new(rate).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    }
}

fn run_replication(
    classes: &[CustomerClass],
    segments: &[Segment],
    periods: usize,
    cfg: &SimConfig,
    rep: usize,
) -> Vec<Tally> {
    let n = classes.len();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|j| class_stream(cfg.seed, rep, j)).collect();
    let service: Vec<Option<Exp<f64>>> = classes
        .iter()
        .map(|c| match cfg.service {
            ServiceDistribution::Exponential => Some(Exp::new(c.mu).expect("positive rate")),
            ServiceDistribution::Deterministic => None,
        })
        .collect();
    let mut tallies = vec![
        Tally {
            counts: vec![ClassCounts::default(); n],
            congested: vec![0.0; n],
            ..Tally::default()
        };
        periods
    ];

    let mut now = 0.0;
    let mut in_use: u32 = 0;
    let mut seq = 0u64;
    let mut departures = BinaryHeap::new();
    let mut arrivals: Vec<f64> = Vec::new();
    let peak = segments.iter().map(|s| s.capacity).max().unwrap_or(0);

    for (i, seg) in segments.iter().enumerate() {
        if i == 0 {
            arrivals = (0..n)
                .map(|j| next_arrival(0.0, seg.lambdas[j], &mut rngs[j]))
                .collect();
        } else if seg.lambdas != segments[i - 1].lambdas {
            // Interarrival times are memoryless, so redrawing at the boundary
            // is exact.
            for j in 0..n {
                arrivals[j] = next_arrival(now, seg.lambdas[j], &mut rngs[j]);
            }
        }
        if let Some(k) = seg.period {
            tallies[k].capacity = seg.capacity;
        }

        loop {
            let (arrival_class, arrival_time) = arrivals.iter().copied().enumerate().fold(
                (usize::MAX, f64::INFINITY),
                |best, (j, t)| {
                    if t < best.1 {
                        (j, t)
                    } else {
                        best
                    }
                },
            );
            let departure_time = departures
                .peek()
                .map_or(f64::INFINITY, |d: &Departure| d.time);
            let t = arrival_time.min(departure_time).min(seg.end);

            if let Some(k) = seg.period {
                let dt = t - now;
                let tally = &mut tallies[k];
                tally.duration += dt;
                tally.busy_area += dt * f64::from(in_use);
                let free = seg.capacity.saturating_sub(in_use);
                for (j, c) in classes.iter().enumerate() {
                    if free < c.b {
                        tally.congested[j] += dt;
                    }
                }
            }
            now = t;

            if t >= seg.end && arrival_time >= seg.end && departure_time >= seg.end {
                break;
            }
            if departure_time <= arrival_time {
                let d = departures.pop().expect("peeked");
                in_use -= d.units;
            } else {
                let j = arrival_class;
                let b = classes[j].b;
                let admitted = seg.capacity.saturating_sub(in_use) >= b;
                if let Some(k) = seg.period {
                    tallies[k].counts[j].arrivals += 1;
                    tallies[k].counts[j].blocked += u64::from(!admitted);
                }
                if admitted {
                    in_use += b;
                    assert!(in_use <= seg.capacity, "admission exceeded capacity");
                    let hold = match &service[j] {
                        Some(exp) => exp.sample(&mut rngs[j]),
                        None => 1.0 / classes[j].mu,
                    };
                    seq += 1;
                    departures.push(Departure {
                        time: now + hold,
                        seq,
                        units: b,
                    });
                }
                arrivals[j] = next_arrival(now, seg.lambdas[j], &mut rngs[j]);
            }
            assert!(in_use <= peak, "units in use exceed every capacity");
        }
    }
    tallies
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

fn summarize(per_rep: &[&Tally]) -> SimResult {
    let n = per_rep[0].counts.len();
    let reps = per_rep.len();
    let mut beta_hat = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    let mut time_congestion = Vec::with_capacity(n);
    let mut time_congestion_stderr = Vec::with_capacity(n);
    let mut counts = vec![ClassCounts::default(); n];

    for j in 0..n {
        for t in per_rep {
            counts[j].arrivals += t.counts[j].arrivals;
            counts[j].blocked += t.counts[j].blocked;
        }
        let fractions: Vec<f64> = per_rep
            .iter()
            .map(|t| {
                let c = t.counts[j];
                if c.arrivals == 0 {
                    0.0
                } else {
                    c.blocked as f64 / c.arrivals as f64
                }
            })
            .collect();
        let (m, mut se) = mean_and_stderr(&fractions);
        if reps == 1 {
            let a = counts[j].arrivals as f64;
            se = if a > 0.0 {
                (m * (1.0 - m) / a).sqrt()
            } else {
                0.0
            };
        }
        beta_hat.push(m);
        stderr.push(se);

        let occupied: Vec<f64> = per_rep
            .iter()
            .map(|t| {
                if t.duration > 0.0 {
                    t.congested[j] / t.duration
                } else {
                    0.0
                }
            })
            .collect();
        let (m, se) = mean_and_stderr(&occupied);
        time_congestion.push(m);
        time_congestion_stderr.push(se);
    }

    let utilization = per_rep
        .iter()
        .map(|t| {
            if t.duration > 0.0 && t.capacity > 0 {
                t.busy_area / (t.duration * f64::from(t.capacity))
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / reps as f64;

    SimResult {
        capacity: per_rep[0].capacity,
        beta_hat,
        stderr,
        utilization,
        counts,
        time_congestion,
        time_congestion_stderr,
        replications: reps,
    }
}

fn run(
    classes: &[CustomerClass],
    segments: &[Segment],
    periods: usize,
    cfg: &SimConfig,
) -> Vec<SimResult> {
    let reps: Vec<Vec<Tally>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(classes, segments, periods, cfg, r))
        .collect();
    (0..periods)
        .map(|k| {
            let per_rep: Vec<&Tally> = reps.iter().map(|t| &t[k]).collect();
            summarize(&per_rep)
        })
        .collect()
}

/// Simulates `scenario` over `[0, horizon]`, tallying only after `warmup`.
pub fn simulate(scenario: &Scenario, config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let lambdas = scenario.lambdas();
    let segments = [
        Segment {
            end: config.warmup,
            capacity: scenario.capacity,
            lambdas: lambdas.clone(),
            period: None,
        },
        Segment {
            end: config.horizon,
            capacity: scenario.capacity,
            lambdas,
            period: Some(0),
        },
    ];
    Ok(run(scenario.classes(), &segments, 1, config)
        .pop()
        .expect("one period"))
}

/// Simulates a piecewise-stationary profile: one warmup of length `warmup`
/// under the first period's parameters, then each period for `horizon` time
/// units. Customers in service carry over period boundaries and are never
/// preempted when capacity drops.
pub fn simulate_profile(
    classes: &[CustomerClass],
    profile: &TimeProfile,
    config: &SimConfig,
) -> Result<Vec<SimResult>> {
    config.validate()?;
    let scenarios = profile.scenarios(classes)?;
    let Some(first) = scenarios.first() else {
        return Ok(Vec::new());
    };
    let mut segments = vec![Segment {
        end: config.warmup,
        capacity: first.capacity,
        lambdas: first.lambdas(),
        period: None,
    }];
    segments.extend(scenarios.iter().enumerate().map(|(k, s)| Segment {
        end: config.warmup + (k + 1) as f64 * config.horizon,
        capacity: s.capacity,
        lambdas: s.lambdas(),
        period: Some(k),
    }));
    Ok(run(classes, &segments, scenarios.len(), config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Period;

    fn erlang_one() -> Scenario {
        Scenario::new(1, vec![CustomerClass::new(1, 1.0, 1.0).unwrap()]).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(10.0, 10.0, 0, 1).is_err());
        assert!(SimConfig::new(10.0, -1.0, 0, 1).is_err());
        assert!(SimConfig::new(0.0, 0.0, 0, 1).is_err());
        assert!(SimConfig::new(10.0, 1.0, 0, 0).is_err());
        assert!(SimConfig::new(10.0, 0.0, 0, 1).is_ok());
    }

    #[test]
    fn erlang_single_server_blocks_half() {
        let cfg = SimConfig::new(2e4, 100.0, 7, 8).unwrap();
        let r = simulate(&erlang_one(), &cfg).unwrap();
        assert!((r.beta_hat[0] - 0.5).abs() <= 3.0 * r.stderr[0], "{r:?}");
        // busy fraction of a single server equals the blocking probability
        assert!((r.utilization - 0.5).abs() < 0.02);
    }

    #[test]
    fn zero_rates_produce_no_arrivals() {
        let s = Scenario::new(
            10,
            vec![
                CustomerClass::new(2, 1.0, 0.0).unwrap(),
                CustomerClass::new(3, 1.0, 0.0).unwrap(),
            ],
        )
        .unwrap();
        let r = simulate(&s, &SimConfig::new(100.0, 1.0, 1, 3).unwrap()).unwrap();
        assert_eq!(r.beta_hat, vec![0.0, 0.0]);
        assert!(r.counts.iter().all(|c| c.arrivals == 0 && c.blocked == 0));
        assert_eq!(r.utilization, 0.0);
    }

    #[test]
    fn same_seed_same_tallies() {
        let s = Scenario::new(
            20,
            vec![
                CustomerClass::new(3, 1.0, 2.0).unwrap(),
                CustomerClass::new(1, 0.5, 4.0).unwrap(),
            ],
        )
        .unwrap();
        let cfg = SimConfig::new(500.0, 10.0, 99, 4).unwrap();
        let a = simulate(&s, &cfg).unwrap();
        let b = simulate(&s, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(&s, &SimConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn class_streams_are_independent_of_other_classes() {
        let one = Scenario::new(50, vec![CustomerClass::new(1, 1.0, 3.0).unwrap()]).unwrap();
        let two = Scenario::new(
            50,
            vec![
                CustomerClass::new(1, 1.0, 3.0).unwrap(),
                CustomerClass::new(1, 1.0, 2.0).unwrap(),
            ],
        )
        .unwrap();
        // Capacity is never reached, so class 1 sees the same arrivals.
        let cfg = SimConfig::new(200.0, 0.0, 5, 2).unwrap();
        let a = simulate(&one, &cfg).unwrap();
        let b = simulate(&two, &cfg).unwrap();
        assert_eq!(a.counts[0].arrivals, b.counts[0].arrivals);
    }

    #[test]
    fn single_replication_uses_binomial_stderr() {
        let r = simulate(&erlang_one(), &SimConfig::new(1000.0, 10.0, 3, 1).unwrap()).unwrap();
        let (m, a) = (r.beta_hat[0], r.counts[0].arrivals as f64);
        assert!((r.stderr[0] - (m * (1.0 - m) / a).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn profile_carries_customers_across_a_capacity_drop() {
        // Long services, capacity falls from 10 to 2: no one is preempted and
        // every second-period arrival is blocked while occupancy drains.
        let classes = vec![CustomerClass::new(1, 1e-4, 50.0).unwrap()];
        let profile = TimeProfile::new(vec![
            Period {
                capacity: 10,
                lambdas: None,
            },
            Period {
                capacity: 2,
                lambdas: None,
            },
        ]);
        let cfg = SimConfig::new(1.0, 0.5, 11, 2).unwrap();
        let r = simulate_profile(&classes, &profile, &cfg).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].capacity, 2);
        assert_eq!(r[1].beta_hat[0], 1.0);
        assert!(r[1].utilization > 1.0, "{}", r[1].utilization);
    }
}
