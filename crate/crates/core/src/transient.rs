//! Transient analysis of the truncated chain.
//!
//! `P(t) = w exp(Qt)` is evaluated by uniformization: with `L` at least the
//! largest exit rate, `exp(Qt) = sum_j Poisson(Lt; j) (I + Q/L)^j`. The
//! horizon is cut into chunks with `L * dt <= 64` so the Poisson weights stay
//! well inside the floating point range, and each chunk's series is stopped
//! once its tail bound drops below `tol / chunks`.

use crate::error::{Error, Result};
use crate::model::{apportion, GroupMixture, RegimeSchedule};
use crate::qbd::{build_generator, BoundaryPolicy, TruncatedGenerator};

const MAX_CHUNK_RATE: f64 = 64.0;
/// Entries below this are dropped when trimming the support; what is dropped
/// is added to the mass defect.
const TRIM: f64 = 1e-290;
const AUTO_MIN_STATES: usize = 1024;
const AUTO_MAX_STATES: usize = 1 << 24;
/// Boundary probability the automatic truncation must get under.
pub const AUTO_BOUNDARY_MASS: f64 = 1e-10;
const WARN_MASS: f64 = 1e-6;

/// Probability vector over `0..=n_max` at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionVector {
    pub probabilities: Vec<f64>,
    pub time: f64,
    /// Upper bound on probability lost to series truncation, trimming and the boundary.
    pub mass_defect: f64,
    /// Set when at least 1e-6 of the mass sits in the top 1% of states.
    pub truncation_warning: bool,
}

impl DistributionVector {
    pub fn point_mass(state: usize, n_max: usize) -> Self {
        let mut probabilities = vec![0.0; n_max + 1];
        probabilities[state] = 1.0;
        Self {
            probabilities,
            time: 0.0,
            mass_defect: 0.0,
            truncation_warning: false,
        }
    }

    pub fn n_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn total_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn boundary_mass(&self) -> f64 {
        *self.probabilities.last().unwrap_or(&0.0)
    }

    /// Same distribution on a larger state space.
    pub fn padded(&self, n_max: usize) -> Self {
        let mut out = self.clone();
        if n_max > self.n_max() {
            out.probabilities.resize(n_max + 1, 0.0);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassReport {
    pub mass_defect: f64,
    pub boundary_mass: f64,
}

pub fn mass_report(dist: &DistributionVector) -> MassReport {
    MassReport {
        mass_defect: dist.mass_defect,
        boundary_mass: dist.boundary_mass(),
    }
}

/// `sum_n n * p_n`.
pub fn expected_active(dist: &DistributionVector) -> f64 {
    dist.probabilities
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p)
        .sum()
}

/// Poisson weights `0..=J` for mean `a`, with `J` the first index past the
/// mode whose tail bound is below `tol`. Returns the weights and that bound.
fn poisson_weights(a: f64, tol: f64) -> (Vec<f64>, f64) {
    let mut w = vec![(-a).exp()];
    let mut j = 0usize;
    loop {
        let next = w[j] * a / (j + 1) as f64;
        // for j + 2 > a the remaining terms shrink at least geometrically
        if (j + 2) as f64 > a {
            let ratio = a / (j + 2) as f64;
            let tail = next / (1.0 - ratio);
            if tail < tol {
                return (w, tail);
            }
        }
        w.push(next);
        j += 1;
    }
}

/// One application of `P_u = I + Q / rate` to the row vector `v` on `[lo, hi]`.
fn uniformized_step(
    gen: &TruncatedGenerator,
    rate: f64,
    v: &[f64],
    out: &mut [f64],
    lo: usize,
    hi: usize,
) -> (usize, usize) {
    let d = gen.d as usize;
    let n_max = gen.n_max;
    let new_lo = lo.saturating_sub(1);
    let mut new_hi = (hi + d).min(n_max);
    if lo == 0 && gen.tau > 0.0 {
        new_hi = new_hi.max(d.min(n_max));
    }
    out[new_lo..=new_hi].iter_mut().for_each(|x| *x = 0.0);
    for n in lo..=hi {
        let p = v[n];
        if p == 0.0 {
            continue;
        }
        let row = gen.row(n);
        out[n] += p * (1.0 + row.diag / rate);
        if let Some((j, r)) = row.up {
            out[j] += p * r / rate;
        }
        if let Some((j, r)) = row.down {
            out[j] += p * r / rate;
        }
    }
    (new_lo, new_hi)
}

fn support(v: &[f64]) -> Option<(usize, usize)> {
    let lo = v.iter().position(|&p| p != 0.0)?;
    let hi = v.iter().rposition(|&p| p != 0.0)?;
    Some((lo, hi))
}

/// Zeroes negligible entries at both ends and returns the trimmed mass.
fn trim(v: &mut [f64], lo: &mut usize, hi: &mut usize) -> f64 {
    let mut dropped = 0.0;
    while *lo < *hi && v[*lo] < TRIM {
        dropped += v[*lo];
        v[*lo] = 0.0;
        *lo += 1;
    }
    while *hi > *lo && v[*hi] < TRIM {
        dropped += v[*hi];
        v[*hi] = 0.0;
        *hi -= 1;
    }
    dropped
}

fn top_percent_mass(v: &[f64]) -> f64 {
    let dim = v.len();
    let start = dim - (dim / 100).max(1);
    v[start..].iter().sum()
}

/// `init * exp(Q t)` by uniformization.
pub fn transient_distribution(
    gen: &TruncatedGenerator,
    init: &DistributionVector,
    t: f64,
    tol: f64,
) -> Result<DistributionVector> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(Error::InvalidTolerance(tol));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    if init.probabilities.len() != gen.dim() {
        return Err(Error::InvalidParameters(format!(
            "distribution has {} states, generator {}",
            init.probabilities.len(),
            gen.dim()
        )));
    }
    if t == 0.0 {
        return Ok(init.clone());
    }
    let rate = gen.max_exit_rate();
    let Some((mut lo, mut hi)) = support(&init.probabilities) else {
        let mut out = init.clone();
        out.time += t;
        return Ok(out);
    };
    if rate == 0.0 {
        let mut out = init.clone();
        out.time += t;
        return Ok(out);
    }

    let chunks = (rate * t / MAX_CHUNK_RATE).ceil().max(1.0);
    let chunk_tol = tol / chunks;
    if chunk_tol < 1e-280 {
        return Err(Error::ToleranceUnachievable(format!(
            "per-chunk tolerance {chunk_tol:e} below representable Poisson weights"
        )));
    }
    let n_chunks = chunks as u64;
    let a = rate * t / chunks;
    let (weights, tail) = poisson_weights(a, chunk_tol);

    let dim = gen.dim();
    let mut current = init.probabilities.clone();
    let mut power = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    let mut defect = init.mass_defect;

    for _ in 0..n_chunks {
        power[lo..=hi].copy_from_slice(&current[lo..=hi]);
        let (mut p_lo, mut p_hi) = (lo, hi);
        let (mut a_lo, mut a_hi) = (lo, hi);
        acc[lo..=hi]
            .iter_mut()
            .zip(&power[lo..=hi])
            .for_each(|(x, p)| *x = weights[0] * p);
        for &w in &weights[1..] {
            let (n_lo, n_hi) = uniformized_step(gen, rate, &power, &mut scratch, p_lo, p_hi);
            std::mem::swap(&mut power, &mut scratch);
            // stale entries outside the new support must not leak into later steps
            scratch[p_lo..=p_hi].iter_mut().for_each(|x| *x = 0.0);
            p_lo = n_lo;
            p_hi = n_hi;
            if p_lo < a_lo {
                acc[p_lo..a_lo].iter_mut().for_each(|x| *x = 0.0);
                a_lo = p_lo;
            }
            if p_hi > a_hi {
                acc[a_hi + 1..=p_hi].iter_mut().for_each(|x| *x = 0.0);
                a_hi = p_hi;
            }
            for n in p_lo..=p_hi {
                acc[n] += w * power[n];
            }
        }
        power[p_lo..=p_hi].iter_mut().for_each(|x| *x = 0.0);
        current[lo..=hi].iter_mut().for_each(|x| *x = 0.0);
        current[a_lo..=a_hi].copy_from_slice(&acc[a_lo..=a_hi]);
        lo = a_lo;
        hi = a_hi;
        defect += tail;
        defect += trim(&mut current, &mut lo, &mut hi);
    }

    let boundary = current[gen.n_max];
    let warning = top_percent_mass(&current) >= WARN_MASS;
    Ok(DistributionVector {
        probabilities: current,
        time: init.time + t,
        mass_defect: defect + boundary,
        truncation_warning: warning,
    })
}

/// Initial truncation for a group starting at `count` with batch size `d`.
pub fn auto_n_max_start(count: u64, d_eff: f64) -> usize {
    let guess = (4.0 * count as f64 * (d_eff + 1.0)).ceil() as usize;
    guess.max(AUTO_MIN_STATES)
}

/// Evolves `init` (on any truncation) under the chain with the given rates and
/// records the distribution at every time in `times` (relative to the start,
/// increasing, >= 0). The truncation is doubled until the boundary mass at the
/// last time is below [`AUTO_BOUNDARY_MASS`].
pub fn evolve_auto(
    lambda_event: f64,
    mu: f64,
    tau: f64,
    d: u32,
    init: &DistributionVector,
    times: &[f64],
    tol: f64,
) -> Result<Vec<DistributionVector>> {
    let mean = expected_active(init).max(1.0);
    // Re-seeding only adds mass, so this is a lower bound on the true mean,
    // and no truncation below it can hold the distribution.
    let horizon = times.last().copied().unwrap_or(0.0);
    let growth = lambda_event * f64::from(d) - mu;
    let mean_at_horizon = expected_active(init) * (growth * horizon).exp();
    if mean_at_horizon.is_nan() || mean_at_horizon >= AUTO_MAX_STATES as f64 {
        return Err(Error::ToleranceUnachievable(format!(
            "expected count {mean_at_horizon:e} exceeds the largest truncation {AUTO_MAX_STATES}"
        )));
    }
    let mut n_max = auto_n_max_start(mean.ceil() as u64, f64::from(d)).max(init.n_max());
    loop {
        let gen = build_generator(lambda_event, mu, tau, d, n_max, BoundaryPolicy::Redirect)?;
        let mut dist = init.padded(n_max);
        let mut out = Vec::with_capacity(times.len());
        let mut now = 0.0;
        for &t in times {
            dist = transient_distribution(&gen, &dist, t - now, tol)?;
            now = t;
            out.push(dist.clone());
        }
        let boundary = out.last().map_or(0.0, |d| d.boundary_mass());
        if boundary < AUTO_BOUNDARY_MASS {
            return Ok(out);
        }
        if n_max >= AUTO_MAX_STATES {
            return Err(Error::ToleranceUnachievable(format!(
                "boundary mass {boundary:e} still above {AUTO_BOUNDARY_MASS:e} at n_max = {n_max}"
            )));
        }
        n_max = (n_max * 2).min(AUTO_MAX_STATES);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanEngine {
    #[default]
    ClosedForm,
    Uniformization,
}

/// Expected active counts on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedTrajectory {
    /// Elapsed days since the first observation day.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Per grid point, the expectation of each group of the regime in force.
    pub per_group: Option<Vec<Vec<f64>>>,
    /// Per grid point, the summed mass defect over groups (uniformization only).
    pub mass_defect: Option<Vec<f64>>,
}

/// Elapsed-time grid `0, 1, ..., days - 1` for observation days `1..=days`.
pub fn day_grid(days: u32) -> Vec<f64> {
    (0..days).map(f64::from).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for (i, &t) in grid.iter().enumerate() {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::GridOutsideHorizon(t));
        }
        if i > 0 && t <= grid[i - 1] {
            return Err(Error::InvalidParameters(
                "grid must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// A maximal run of consecutive identical regimes.
pub(crate) struct Phase<'a> {
    pub(crate) regime: &'a crate::model::Regime,
    pub(crate) from: f64,
    pub(crate) to: f64,
    /// The mixture differs from the previous phase, so the total is pooled and re-split.
    pub(crate) resplit: bool,
}

pub(crate) fn phases(schedule: &RegimeSchedule, horizon: f64) -> Vec<Phase<'_>> {
    let mut out: Vec<Phase<'_>> = Vec::new();
    for (i, from, to) in schedule.segments(horizon) {
        let regime = &schedule.regimes()[i];
        if let Some(last) = out.last_mut() {
            if last.regime.params == regime.params && last.regime.mixture == regime.mixture {
                last.to = to;
                continue;
            }
        }
        let resplit = out
            .last()
            .is_none_or(|last| !same_groups(&last.regime.mixture, &regime.mixture));
        out.push(Phase {
            regime,
            from,
            to,
            resplit,
        });
    }
    out
}

fn same_groups(a: &GroupMixture, b: &GroupMixture) -> bool {
    a.groups() == b.groups()
}

/// Piecewise-exponential mean of the group mixture, or the per-group
/// uniformization engine. At a change point the mixture's groups keep their
/// expected counts if the new regime uses the same groups; otherwise the
/// total is pooled and re-split by the new weights.
pub fn mean_trajectory(
    schedule: &RegimeSchedule,
    grid: &[f64],
    engine: MeanEngine,
) -> Result<ExpectedTrajectory> {
    mean_trajectory_with_tol(schedule, grid, engine, 1e-12)
}

pub fn mean_trajectory_with_tol(
    schedule: &RegimeSchedule,
    grid: &[f64],
    engine: MeanEngine,
    tol: f64,
) -> Result<ExpectedTrajectory> {
    check_grid(grid)?;
    let horizon = *grid.last().expect("grid checked non-empty");
    match engine {
        MeanEngine::ClosedForm => closed_form(schedule, grid, horizon),
        MeanEngine::Uniformization => uniformized(schedule, grid, horizon, tol),
    }
}

fn closed_form(
    schedule: &RegimeSchedule,
    grid: &[f64],
    horizon: f64,
) -> Result<ExpectedTrajectory> {
    let mut values = Vec::with_capacity(grid.len());
    let mut per_group = Vec::with_capacity(grid.len());
    let mut start: Vec<f64> = Vec::new();
    let mut g = 0;
    for phase in phases(schedule, horizon) {
        let regime = phase.regime;
        if regime.params.tau() > 0.0 {
            return Err(Error::InvalidParameters(
                "closed-form engine requires tau = 0; use uniformization".into(),
            ));
        }
        let lambda = regime.event_rate()?;
        let mu = regime.params.mu();
        if phase.resplit {
            let total = if start.is_empty() {
                schedule.k() as f64
            } else {
                start.iter().sum()
            };
            start = regime.mixture.weights().iter().map(|r| total * r).collect();
        }
        let growth: Vec<f64> = regime
            .mixture
            .groups()
            .iter()
            .map(|grp| lambda * f64::from(grp.d) - mu)
            .collect();
        let at = |t: f64| -> Vec<f64> {
            start
                .iter()
                .zip(&growth)
                .map(|(m, rate)| m * (rate * (t - phase.from)).exp())
                .collect()
        };
        while g < grid.len() && grid[g] <= phase.to {
            let groups = at(grid[g]);
            values.push(groups.iter().sum());
            per_group.push(groups);
            g += 1;
        }
        start = at(phase.to);
    }
    Ok(ExpectedTrajectory {
        times: grid.to_vec(),
        values,
        per_group: Some(per_group),
        mass_defect: None,
    })
}

fn uniformized(
    schedule: &RegimeSchedule,
    grid: &[f64],
    horizon: f64,
    tol: f64,
) -> Result<ExpectedTrajectory> {
    let mut values = Vec::with_capacity(grid.len());
    let mut per_group = Vec::with_capacity(grid.len());
    let mut defects = Vec::with_capacity(grid.len());
    let mut dists: Vec<DistributionVector> = Vec::new();
    let mut g = 0;
    for phase in phases(schedule, horizon) {
        let regime = phase.regime;
        let lambda = regime.event_rate()?;
        if phase.resplit {
            let total: f64 = if dists.is_empty() {
                schedule.k() as f64
            } else {
                dists.iter().map(expected_active).sum()
            };
            let counts = apportion(total.round() as u64, &regime.mixture.weights());
            dists = counts
                .iter()
                .map(|&c| DistributionVector::point_mass(c as usize, c as usize))
                .collect();
        }
        let mut times: Vec<f64> = Vec::new();
        let first = g;
        while g < grid.len() && grid[g] <= phase.to {
            times.push(grid[g] - phase.from);
            g += 1;
        }
        let span = phase.to - phase.from;
        if times.last().is_none_or(|&t| t < span) {
            times.push(span);
        }
        let mut runs = Vec::with_capacity(dists.len());
        for (dist, grp) in dists.iter().zip(regime.mixture.groups()) {
            runs.push(evolve_auto(
                lambda,
                regime.params.mu(),
                regime.params.tau(),
                grp.d,
                dist,
                &times,
                tol,
            )?);
        }
        for idx in 0..(g - first) {
            let groups: Vec<f64> = runs.iter().map(|r| expected_active(&r[idx])).collect();
            values.push(groups.iter().sum());
            per_group.push(groups);
            defects.push(runs.iter().map(|r| r[idx].mass_defect).sum());
        }
        dists = runs
            .into_iter()
            .map(|mut r| r.pop().expect("at least one time per phase"))
            .collect();
    }
    Ok(ExpectedTrajectory {
        times: grid.to_vec(),
        values,
        per_group: Some(per_group),
        mass_defect: Some(defects),
    })
}
