//! Exact event-driven simulation of the group mixture.
//!
//! Each group evolves on its own: with `n` patients the next event comes after
//! an exponential wait of rate `n (lambda + mu)` and is a batch infection with
//! probability `lambda / (lambda + mu)`, otherwise a removal. Rates only
//! change at day boundaries and change points, where the pending wait is
//! simply redrawn under the new rates.
//!
//! Replication `j` of seed `s` draws from ChaCha8 stream `j` of key `s`, so
//! every trace is reproducible on its own and the ensemble does not depend on
//! how replications are scheduled over threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{apportion, RegimeSchedule};
use crate::transient::phases;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub schedule: RegimeSchedule,
    /// Number of observation days; day 1 is the initial state.
    pub horizon: u32,
    pub replications: u32,
    pub seed: u64,
}

/// Daily per-group counts of one replication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicationTrace {
    /// `counts[day - 1]` holds the counts of the groups in force on that day.
    pub counts: Vec<Vec<u64>>,
    /// The total was 0 at the end of some whole day or regime interval.
    pub extinct: bool,
}

impl ReplicationTrace {
    pub fn totals(&self) -> Vec<u64> {
        self.counts.iter().map(|c| c.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub p05: Vec<f64>,
    pub p95: Vec<f64>,
    pub replications: u32,
    pub seed: u64,
}

pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Replication 0 of `seed`.
pub fn simulate_once(
    schedule: &RegimeSchedule,
    horizon: u32,
    seed: u64,
) -> Result<ReplicationTrace> {
    simulate_replication(schedule, horizon, seed, 0)
}

pub fn simulate_replication(
    schedule: &RegimeSchedule,
    horizon: u32,
    seed: u64,
    replication: u64,
) -> Result<ReplicationTrace> {
    if horizon < 1 {
        return Err(Error::InvalidParameters(
            "horizon must be at least 1 day".into(),
        ));
    }
    let mut rng = replication_rng(seed, replication);
    let end = f64::from(horizon - 1);
    let mut counts: Vec<u64> = Vec::new();
    let mut trace = Vec::with_capacity(horizon as usize);
    let mut extinct = false;
    let mut next_day = 0u32;

    for phase in phases(schedule, end) {
        let regime = phase.regime;
        let weights = regime.mixture.weights();
        if phase.resplit {
            counts = if counts.is_empty() {
                apportion(schedule.k(), &weights)
            } else {
                multinomial(counts.iter().sum(), &weights, &mut rng)
            };
        }
        let lambda = regime.event_rate()?;
        let mu = regime.params.mu();
        let tau = regime.params.tau();
        let batch: Vec<u64> = regime
            .mixture
            .groups()
            .iter()
            .map(|g| u64::from(g.d))
            .collect();

        let mut t = phase.from;
        loop {
            while next_day < horizon && f64::from(next_day) <= t {
                trace.push(counts.clone());
                next_day += 1;
            }
            if t >= phase.to {
                break;
            }
            let stop = (t.floor() + 1.0).min(phase.to);
            for (n, &d) in counts.iter_mut().zip(&batch) {
                run_group(n, d, lambda, mu, tau, t, stop, &mut rng)?;
            }
            if counts.iter().all(|&n| n == 0) {
                extinct = true;
            }
            t = stop;
        }
    }
    while next_day < horizon {
        trace.push(counts.clone());
        next_day += 1;
    }
    Ok(ReplicationTrace {
        counts: trace,
        extinct,
    })
}

/// Advances one group from `from` to `to` under constant rates.
#[allow(clippy::too_many_arguments)]
fn run_group(
    n: &mut u64,
    d: u64,
    lambda: f64,
    mu: f64,
    tau: f64,
    from: f64,
    to: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut t = from;
    let p_birth = if lambda + mu > 0.0 {
        lambda / (lambda + mu)
    } else {
        0.0
    };
    loop {
        let rate = if *n == 0 {
            if tau > 0.0 && d > 0 {
                tau
            } else {
                return Ok(());
            }
        } else {
            *n as f64 * (lambda + mu)
        };
        if rate <= 0.0 {
            return Ok(());
        }
        let wait: f64 = Exp1.sample(rng);
        t += wait / rate;
        if t > to {
            return Ok(());
        }
        if *n == 0 {
            *n = d;
        } else if rng.gen::<f64>() < p_birth {
            *n = n
                .checked_add(d)
                .filter(|v| *v <= i64::MAX as u64)
                .ok_or(Error::Overflow)?;
        } else {
            *n -= 1;
        }
    }
}

/// Multinomial split of `total` by `weights` via successive binomials.
fn multinomial(total: u64, weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out = vec![0; weights.len()];
    let mut left = total;
    let mut mass = 1.0;
    for (i, &w) in weights.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == weights.len() || mass <= w {
            out[i] = left;
            break;
        }
        let p = (w / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, p)
            .expect("probability clamped")
            .sample(rng);
        out[i] = draw;
        left -= draw;
        mass -= w;
    }
    out
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs the replications (in parallel) and summarises the daily totals.
pub fn simulate_ensemble(config: &SimulationConfig) -> Result<EnsembleSummary> {
    let traces = run_ensemble(config)?;
    Ok(summarize(&traces, config))
}

pub fn run_ensemble(config: &SimulationConfig) -> Result<Vec<ReplicationTrace>> {
    if config.replications < 1 {
        return Err(Error::InvalidParameters(
            "replications must be at least 1".into(),
        ));
    }
    (0..u64::from(config.replications))
        .into_par_iter()
        .map(|j| simulate_replication(&config.schedule, config.horizon, config.seed, j))
        .collect()
}

fn summarize(traces: &[ReplicationTrace], config: &SimulationConfig) -> EnsembleSummary {
    let days = config.horizon as usize;
    let reps = traces.len() as f64;
    let totals: Vec<Vec<u64>> = traces.iter().map(ReplicationTrace::totals).collect();
    let mut summary = EnsembleSummary {
        mean: Vec::with_capacity(days),
        var: Vec::with_capacity(days),
        p05: Vec::with_capacity(days),
        p95: Vec::with_capacity(days),
        replications: config.replications,
        seed: config.seed,
    };
    for day in 0..days {
        let mut column: Vec<f64> = totals.iter().map(|t| t[day] as f64).collect();
        let mean = column.iter().sum::<f64>() / reps;
        let var = if traces.len() > 1 {
            column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1.0)
        } else {
            0.0
        };
        column.sort_by(f64::total_cmp);
        summary.mean.push(mean);
        summary.var.push(var);
        summary.p05.push(quantile(&column, 0.05));
        summary.p95.push(quantile(&column, 0.95));
    }
    summary
}
