//! Rate estimates from daily counts, change-point windows, mixture-weight
//! fitting and a change-point scan.

use rayon::prelude::*;

use crate::data::DailySeries;
use crate::error::{Error, Result};
use crate::model::{GroupMixture, RateConvention, Regime, RegimeParameters, RegimeSchedule};

/// Inclusive 1-based day range of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimationWindow {
    pub first_day: usize,
    pub last_day: usize,
}

impl EstimationWindow {
    pub fn new(first_day: usize, last_day: usize, series_len: usize) -> Result<Self> {
        if first_day < 1 || first_day > last_day || last_day > series_len {
            return Err(Error::InvalidWindow(format!(
                "[{first_day}, {last_day}] in a series of {series_len} days"
            )));
        }
        Ok(Self {
            first_day,
            last_day,
        })
    }

    pub fn full(series: &DailySeries) -> Self {
        Self {
            first_day: 1,
            last_day: series.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.last_day - self.first_day + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterEstimate {
    pub beta_hat: f64,
    pub mu_hat: f64,
    /// Active count on the window's first day.
    pub k: u64,
    pub window: EstimationWindow,
}

fn check_window(series: &DailySeries, window: EstimationWindow) -> Result<()> {
    EstimationWindow::new(window.first_day, window.last_day, series.len()).map(|_| ())
}

fn mean_ratio(
    series: &DailySeries,
    window: EstimationWindow,
    numerator: impl Fn(&crate::data::DailyRow) -> u64,
) -> Result<f64> {
    check_window(series, window)?;
    let rows = &series.rows()[window.first_day - 1..window.last_day];
    let mut sum = 0.0;
    for (i, row) in rows.iter().enumerate() {
        if row.active == 0 {
            return Err(Error::ZeroActive {
                day: window.first_day + i,
            });
        }
        sum += numerator(row) as f64 / row.active as f64;
    }
    Ok(sum / rows.len() as f64)
}

/// Mean over the window of `new_confirmed / active` (same-day active).
pub fn estimate_beta(series: &DailySeries, window: EstimationWindow) -> Result<f64> {
    mean_ratio(series, window, |r| r.new_confirmed)
}

/// Mean over the window of `new_disappeared / active`.
pub fn estimate_mu(series: &DailySeries, window: EstimationWindow) -> Result<f64> {
    mean_ratio(series, window, |r| r.new_disappeared)
}

pub fn estimate(series: &DailySeries, window: EstimationWindow) -> Result<ParameterEstimate> {
    Ok(ParameterEstimate {
        beta_hat: estimate_beta(series, window)?,
        mu_hat: estimate_mu(series, window)?,
        k: series.rows()[window.first_day - 1].active,
        window,
    })
}

/// Days `[1, t_c - 1]` and `[t_c, m]`.
pub fn split_at_change_point(
    series: &DailySeries,
    t_c: usize,
) -> Result<(EstimationWindow, EstimationWindow)> {
    let m = series.len();
    if t_c < 2 || t_c > m {
        return Err(Error::ChangePointOutOfRange { t_c, m });
    }
    Ok((
        EstimationWindow {
            first_day: 1,
            last_day: t_c - 1,
        },
        EstimationWindow {
            first_day: t_c,
            last_day: m,
        },
    ))
}

/// One estimate for the full series, or one per side of `change_point`.
pub fn estimate_regimes(
    series: &DailySeries,
    change_point: Option<usize>,
) -> Result<Vec<ParameterEstimate>> {
    match change_point {
        None => Ok(vec![estimate(series, EstimationWindow::full(series))?]),
        Some(t_c) => {
            let (pre, post) = split_at_change_point(series, t_c)?;
            Ok(vec![estimate(series, pre)?, estimate(series, post)?])
        }
    }
}

/// Pairs `(d1, d2)` the weight search may choose from.
pub const CANDIDATE_PAIRS: [(u32, u32); 3] = [(0, 1), (0, 2), (1, 2)];

/// Number of grid steps over `r2 in [0, 1]`.
pub const WEIGHT_STEPS: u32 = 1000;

/// Rates of one regime for the weight search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeRates {
    pub start_day: u32,
    pub beta: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    /// Chosen pair per regime.
    pub pairs: Vec<(u32, u32)>,
    pub mixtures: Vec<GroupMixture>,
    /// Root-mean-square relative error against the observations.
    pub objective: f64,
    pub schedule: RegimeSchedule,
}

struct Candidate {
    pair: usize,
    step: u32,
    r2: f64,
    /// Per-group rates `lambda * d - mu`.
    growth: [f64; 2],
}

impl Candidate {
    fn unit(&self, s: f64) -> f64 {
        (1.0 - self.r2) * (self.growth[0] * s).exp() + self.r2 * (self.growth[1] * s).exp()
    }
}

fn candidates(
    rates: &RegimeRates,
    pairs: &[(u32, u32)],
    convention: RateConvention,
) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(pairs.len() * (WEIGHT_STEPS as usize + 1));
    for step in 0..=WEIGHT_STEPS {
        let r2 = f64::from(step) / f64::from(WEIGHT_STEPS);
        for (p, &(d1, d2)) in pairs.iter().enumerate() {
            let lambda = match convention {
                RateConvention::Event => rates.beta,
                RateConvention::Flow => {
                    let d_eff = (1.0 - r2) * f64::from(d1) + r2 * f64::from(d2);
                    if d_eff > 0.0 {
                        rates.beta / d_eff
                    } else if rates.beta == 0.0 {
                        0.0
                    } else {
                        continue;
                    }
                }
            };
            out.push(Candidate {
                pair: p,
                step,
                r2,
                growth: [
                    lambda * f64::from(d1) - rates.mu,
                    lambda * f64::from(d2) - rates.mu,
                ],
            });
        }
    }
    out
}

fn check_pairs(pairs: &[(u32, u32)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameters("no candidate pairs".into()));
    }
    for &(d1, d2) in pairs {
        if d1 >= d2 || d2 == 0 {
            return Err(Error::InvalidParameters(format!(
                "pair ({d1}, {d2}) needs d1 < d2"
            )));
        }
    }
    Ok(())
}

/// Grid search over `r2` and candidate pairs for each regime, jointly when
/// there are two. `observed[j]` is the active count on day `j + 1`.
///
/// Ties go to the smaller pre-change `r2`, then the earlier pair, then the
/// same order for the post-change regime.
pub fn fit_weights_observed(
    observed: &[f64],
    k: u64,
    regimes: &[RegimeRates],
    pairs: &[(u32, u32)],
    convention: RateConvention,
) -> Result<WeightFit> {
    check_pairs(pairs)?;
    if observed.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(j) = observed.iter().position(|&o| o.is_nan() || o <= 0.0) {
        return Err(Error::ZeroActive { day: j + 1 });
    }
    if regimes.is_empty() || regimes.len() > 2 || regimes[0].start_day != 1 {
        return Err(Error::InvalidSchedule(
            "weight fitting takes one regime starting on day 1, or two".into(),
        ));
    }
    let k_f = k as f64;
    let m = observed.len();
    let pre = candidates(&regimes[0], pairs, convention);
    if pre.is_empty() {
        return Err(Error::ZeroEffectiveBatchSize);
    }

    let (best_pre, best_post, sum) = if regimes.len() == 1 {
        let mut best = (0, f64::INFINITY);
        for (i, c) in pre.iter().enumerate() {
            let s: f64 = observed
                .iter()
                .enumerate()
                .map(|(t, o)| {
                    let e = k_f * c.unit(t as f64) / o - 1.0;
                    e * e
                })
                .sum();
            if s < best.1 {
                best = (i, s);
            }
        }
        (best.0, None, best.1)
    } else {
        let post = candidates(&regimes[1], pairs, convention);
        if post.is_empty() {
            return Err(Error::ZeroEffectiveBatchSize);
        }
        if regimes[1].start_day <= 1 {
            return Err(Error::InvalidSchedule(
                "change day must be after day 1".into(),
            ));
        }
        let switch = (f64::from(regimes[1].start_day) - 2.0).max(0.0);
        // Days whose elapsed time is at or before the switch use the first regime.
        let split = observed
            .iter()
            .enumerate()
            .take_while(|(t, _)| (*t as f64) <= switch)
            .count()
            .min(m);
        let post_obs = &observed[split..];
        let post_s: Vec<f64> = (split..m).map(|t| t as f64 - switch).collect();
        let units: Vec<Vec<f64>> = post
            .iter()
            .map(|c| post_s.iter().map(|&s| c.unit(s)).collect())
            .collect();

        let per_pre: Vec<(usize, f64)> = pre
            .par_iter()
            .map(|a| {
                let mut pre_sum = 0.0;
                for (t, o) in observed[..split].iter().enumerate() {
                    let e = k_f * a.unit(t as f64) / o - 1.0;
                    pre_sum += e * e;
                }
                let end = [
                    k_f * (1.0 - a.r2) * (a.growth[0] * switch).exp(),
                    k_f * a.r2 * (a.growth[1] * switch).exp(),
                ];
                let total = end[0] + end[1];
                let mut best = (0, f64::INFINITY);
                for (b, (cand, unit)) in post.iter().zip(&units).enumerate() {
                    let carry = switch > 0.0 && cand.pair == a.pair && cand.step == a.step;
                    let mut s = pre_sum;
                    if carry {
                        for (o, &dt) in post_obs.iter().zip(&post_s) {
                            let v = end[0] * (cand.growth[0] * dt).exp()
                                + end[1] * (cand.growth[1] * dt).exp();
                            let e = v / o - 1.0;
                            s += e * e;
                        }
                    } else {
                        let base = if switch > 0.0 { total } else { k_f };
                        for (u, o) in unit.iter().zip(post_obs) {
                            let e = base * u / o - 1.0;
                            s += e * e;
                        }
                    }
                    if s < best.1 {
                        best = (b, s);
                    }
                }
                best
            })
            .collect();
        let mut best = (0, 0, f64::INFINITY);
        for (a, &(b, s)) in per_pre.iter().enumerate() {
            if s < best.2 {
                best = (a, b, s);
            }
        }
        let post_choice = &post[best.1];
        (best.0, Some((post_choice.pair, post_choice.r2)), best.2)
    };

    let mut chosen = vec![(pre[best_pre].pair, pre[best_pre].r2)];
    chosen.extend(best_post);
    let mut mixtures = Vec::with_capacity(chosen.len());
    let mut schedule_regimes = Vec::with_capacity(chosen.len());
    for (&(p, r2), rates) in chosen.iter().zip(regimes) {
        let (d1, d2) = pairs[p];
        let mixture = GroupMixture::pair(d1, d2, r2)?;
        schedule_regimes.push(Regime {
            start_day: rates.start_day,
            params: RegimeParameters::new(rates.beta, rates.mu, 0.0, convention)?,
            mixture: mixture.clone(),
        });
        mixtures.push(mixture);
    }
    Ok(WeightFit {
        pairs: chosen.iter().map(|&(p, _)| pairs[p]).collect(),
        mixtures,
        objective: (sum / m as f64).sqrt(),
        schedule: RegimeSchedule::new(k, schedule_regimes)?,
    })
}

/// Fits mixture weights for the regimes of `estimates` against the series.
pub fn fit_weights(
    series: &DailySeries,
    estimates: &[ParameterEstimate],
    pairs: &[(u32, u32)],
    convention: RateConvention,
) -> Result<WeightFit> {
    let regimes: Vec<RegimeRates> = estimates
        .iter()
        .map(|e| RegimeRates {
            start_day: e.window.first_day as u32,
            beta: e.beta_hat,
            mu: e.mu_hat,
        })
        .collect();
    fit_weights_observed(
        &series.active(),
        series.initial_active(),
        &regimes,
        pairs,
        convention,
    )
}

/// Minimum relative improvement a split must bring over the unsplit fit.
pub const SPLIT_GAIN: f64 = 0.15;

fn exponential_error(observed: &[f64], k: f64, segments: &[(f64, f64)]) -> f64 {
    // segments: (switch time, growth) in increasing switch time
    let mut err = 0.0;
    for (t, o) in observed.iter().enumerate() {
        let t = t as f64;
        let exponent: f64 = segments
            .iter()
            .enumerate()
            .map(|(i, &(start, growth))| {
                let end = segments.get(i + 1).map_or(f64::INFINITY, |s| s.0);
                growth * (t.min(end) - start).max(0.0)
            })
            .sum();
        let e = k * exponent.exp() / o - 1.0;
        err += e * e;
    }
    err
}

/// Scans `t_c` in `[4, m - 3]` for a split of the rates that fits a
/// single-group exponential mean clearly better than no split.
pub fn detect_change_point(series: &DailySeries) -> Result<Option<usize>> {
    let m = series.len();
    if m < 8 {
        return Err(Error::InvalidWindow(format!(
            "change-point scan needs at least 8 days, got {m}"
        )));
    }
    let observed = series.active();
    if let Some(j) = observed.iter().position(|&o| o == 0.0) {
        return Err(Error::ZeroActive { day: j + 1 });
    }
    let k = observed[0];
    let full = estimate(series, EstimationWindow::full(series))?;
    let base = exponential_error(&observed, k, &[(0.0, full.beta_hat - full.mu_hat)]);
    let mut best: Option<(usize, f64)> = None;
    for t_c in 4..=m - 3 {
        let (pre, post) = split_at_change_point(series, t_c)?;
        let a = estimate(series, pre)?;
        let b = estimate(series, post)?;
        let switch = (t_c as f64 - 2.0).max(0.0);
        let err = exponential_error(
            &observed,
            k,
            &[
                (0.0, a.beta_hat - a.mu_hat),
                (switch, b.beta_hat - b.mu_hat),
            ],
        );
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((t_c, err));
        }
    }
    Ok(best
        .filter(|&(_, e)| e < (1.0 - SPLIT_GAIN) * base)
        .map(|(t, _)| t))
}
