//! Parameter types for the batch-infection birth-death model.
//!
//! A patient population is split into independent groups. Every patient of a
//! group with batch size `d` triggers infection events at the per-event rate
//! and each event adds `d` new patients; every patient leaves the pool at rate
//! `mu`. A [`RegimeSchedule`] strings several parameter sets together at
//! change points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// How the stored `beta` maps to the per-event infection rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateConvention {
    /// `beta` is the per-patient batch-event rate.
    Event,
    /// `beta` is the per-patient new-case flow; the event rate is `beta / d_eff`.
    #[default]
    Flow,
}

impl RateConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            RateConvention::Event => "event",
            RateConvention::Flow => "flow",
        }
    }
}

impl std::str::FromStr for RateConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "event" => Ok(RateConvention::Event),
            "flow" => Ok(RateConvention::Flow),
            other => Err(Error::InvalidParameters(format!(
                "unknown convention `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParameters {
    beta: f64,
    mu: f64,
    tau: f64,
    convention: RateConvention,
}

impl RegimeParameters {
    pub fn new(beta: f64, mu: f64, tau: f64, convention: RateConvention) -> Result<Self> {
        for (name, v) in [("beta", beta), ("mu", mu), ("tau", tau)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameters(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(Self {
            beta,
            mu,
            tau,
            convention,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn convention(&self) -> RateConvention {
        self.convention
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchGroup {
    pub d: u32,
    pub r: f64,
}

/// Weighted decomposition of the infected population into batch-size groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMixture {
    groups: Vec<BatchGroup>,
    pure_decay: bool,
}

impl GroupMixture {
    /// Builds a mixture that must contain at least one group with `d >= 1`.
    pub fn new(groups: Vec<BatchGroup>) -> Result<Self> {
        Self::validate(&groups)?;
        if groups.iter().all(|g| g.d == 0) {
            return Err(Error::InvalidMixture(
                "no group with d >= 1; use GroupMixture::pure_decay".into(),
            ));
        }
        Ok(Self {
            groups,
            pure_decay: false,
        })
    }

    /// Builds a mixture that is allowed to have no infecting group at all.
    pub fn pure_decay(groups: Vec<BatchGroup>) -> Result<Self> {
        Self::validate(&groups)?;
        Ok(Self {
            groups,
            pure_decay: true,
        })
    }

    /// Single group carrying all the weight.
    pub fn single(d: u32) -> Self {
        Self {
            groups: vec![BatchGroup { d, r: 1.0 }],
            pure_decay: d == 0,
        }
    }

    /// Two-group mixture `(d1, 1 - r2), (d2, r2)`.
    pub fn pair(d1: u32, d2: u32, r2: f64) -> Result<Self> {
        Self::new(vec![
            BatchGroup { d: d1, r: 1.0 - r2 },
            BatchGroup { d: d2, r: r2 },
        ])
    }

    /// Picks [`GroupMixture::new`] or [`GroupMixture::pure_decay`] depending on the batch sizes.
    pub fn from_groups(groups: Vec<BatchGroup>) -> Result<Self> {
        if groups.iter().any(|g| g.d >= 1) {
            Self::new(groups)
        } else {
            Self::pure_decay(groups)
        }
    }

    fn validate(groups: &[BatchGroup]) -> Result<()> {
        if groups.is_empty() {
            return Err(Error::InvalidMixture("no groups".into()));
        }
        for g in groups {
            if !g.r.is_finite() || !(0.0..=1.0).contains(&g.r) {
                return Err(Error::InvalidMixture(format!(
                    "weight {} outside [0, 1]",
                    g.r
                )));
            }
        }
        let sum: f64 = groups.iter().map(|g| g.r).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixture(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        for (i, a) in groups.iter().enumerate() {
            if groups[..i].iter().any(|b| b.d == a.d) {
                return Err(Error::InvalidMixture(format!(
                    "batch size {} appears twice",
                    a.d
                )));
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> &[BatchGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn is_pure_decay(&self) -> bool {
        self.pure_decay
    }

    pub fn weights(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.r).collect()
    }

    pub fn batch_sizes(&self) -> Vec<u32> {
        self.groups.iter().map(|g| g.d).collect()
    }
}

/// `sum_i r_i * d_i`.
pub fn effective_batch_size(mixture: &GroupMixture) -> f64 {
    mixture.groups.iter().map(|g| g.r * f64::from(g.d)).sum()
}

/// Per-patient batch-event rate implied by `params` under its convention.
pub fn event_rate(params: &RegimeParameters, mixture: &GroupMixture) -> Result<f64> {
    match params.convention {
        RateConvention::Event => Ok(params.beta),
        RateConvention::Flow => {
            let d_eff = effective_batch_size(mixture);
            if d_eff > 0.0 {
                Ok(params.beta / d_eff)
            } else if params.beta == 0.0 {
                // no flow to distribute; any event rate reproduces it
                Ok(0.0)
            } else {
                Err(Error::ZeroEffectiveBatchSize)
            }
        }
    }
}

/// Active counts per group at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub counts: Vec<u64>,
    pub time: f64,
}

impl PopulationState {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Largest-remainder apportionment of `total` across `weights`.
///
/// Ties in the fractional part go to the lower index.
pub fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let raw: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<u64> = raw.iter().map(|x| x.floor().max(0.0) as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    if assigned <= total {
        let mut left = total - assigned;
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
    } else {
        // rounding pushed the floors over; take back from the smallest remainders
        let mut excess = assigned - total;
        for &i in order.iter().rev().cycle() {
            if excess == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}

pub fn apportion_initial(k: u64, mixture: &GroupMixture) -> PopulationState {
    PopulationState {
        counts: apportion(k, &mixture.weights()),
        time: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub start_day: u32,
    pub params: RegimeParameters,
    pub mixture: GroupMixture,
}

impl Regime {
    pub fn event_rate(&self) -> Result<f64> {
        event_rate(&self.params, &self.mixture)
    }
}

/// Ordered regimes separated by change points, plus the initial active count.
///
/// Day `j` sits at elapsed time `j - 1`. A regime starting on day `s > 1`
/// owns the daily increments reported on days `s, s+1, ...`, so it governs
/// the dynamics from elapsed time `s - 2` onward.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSchedule {
    k: u64,
    regimes: Vec<Regime>,
}

impl RegimeSchedule {
    pub fn new(k: u64, regimes: Vec<Regime>) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidSchedule("k must be at least 1".into()));
        }
        let Some(first) = regimes.first() else {
            return Err(Error::InvalidSchedule("no regimes".into()));
        };
        if first.start_day != 1 {
            return Err(Error::InvalidSchedule(format!(
                "first regime must start at day 1, got {}",
                first.start_day
            )));
        }
        for w in regimes.windows(2) {
            if w[1].start_day <= w[0].start_day {
                return Err(Error::InvalidSchedule(format!(
                    "start days must be strictly increasing ({} then {})",
                    w[0].start_day, w[1].start_day
                )));
            }
        }
        for r in &regimes {
            // surfaces flow-convention regimes that cannot produce an event rate
            r.event_rate()?;
        }
        Ok(Self { k, regimes })
    }

    pub fn single(k: u64, params: RegimeParameters, mixture: GroupMixture) -> Result<Self> {
        Self::new(
            k,
            vec![Regime {
                start_day: 1,
                params,
                mixture,
            }],
        )
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn regimes(&self) -> &[Regime] {
        &self.regimes
    }

    pub fn with_k(&self, k: u64) -> Result<Self> {
        Self::new(k, self.regimes.clone())
    }

    /// Elapsed time at which regime `index` takes over.
    pub fn switch_time(&self, index: usize) -> f64 {
        if index == 0 {
            0.0
        } else {
            (f64::from(self.regimes[index].start_day) - 2.0).max(0.0)
        }
    }

    /// Regime segments `(regime index, from, to)` covering `[0, horizon]`.
    ///
    /// Regimes whose span is empty are skipped; the first returned segment
    /// always starts at 0.
    pub fn segments(&self, horizon: f64) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for i in 0..self.regimes.len() {
            let from = self.switch_time(i);
            let next = if i + 1 < self.regimes.len() {
                self.switch_time(i + 1)
            } else {
                f64::INFINITY
            };
            if next <= from {
                continue;
            }
            if from > horizon || (from == horizon && !out.is_empty()) {
                break;
            }
            out.push((i, from, next.min(horizon)));
        }
        out
    }

    /// Largest number of groups over all regimes.
    pub fn max_groups(&self) -> usize {
        self.regimes
            .iter()
            .map(|r| r.mixture.len())
            .max()
            .unwrap_or(0)
    }
}

/// Elapsed time of observation day `day` (day 1 is time 0).
pub fn day_time(day: u32) -> f64 {
    f64::from(day) - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFile {
    pub start_day: u32,
    pub beta: f64,
    pub mu: f64,
    #[serde(default)]
    pub tau: f64,
    pub groups: Vec<BatchGroup>,
}

/// JSON parameters file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub k: u64,
    pub convention: RateConvention,
    pub regimes: Vec<RegimeFile>,
}

impl ParamsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn to_schedule(&self) -> Result<RegimeSchedule> {
        let regimes = self
            .regimes
            .iter()
            .map(|r| {
                Ok(Regime {
                    start_day: r.start_day,
                    params: RegimeParameters::new(r.beta, r.mu, r.tau, self.convention)?,
                    mixture: GroupMixture::from_groups(r.groups.clone())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RegimeSchedule::new(self.k, regimes)
    }

    /// Fails when the regimes of `schedule` mix conventions.
    pub fn from_schedule(schedule: &RegimeSchedule) -> Result<Self> {
        let convention = schedule.regimes[0].params.convention();
        if schedule
            .regimes
            .iter()
            .any(|r| r.params.convention() != convention)
        {
            return Err(Error::InvalidSchedule(
                "regimes use different conventions".into(),
            ));
        }
        Ok(Self {
            k: schedule.k,
            convention,
            regimes: schedule
                .regimes
                .iter()
                .map(|r| RegimeFile {
                    start_day: r.start_day,
                    beta: r.params.beta(),
                    mu: r.params.mu(),
                    tau: r.params.tau(),
                    groups: r.mixture.groups().to_vec(),
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn egypt() -> GroupMixture {
        GroupMixture::pair(1, 2, 0.054).unwrap()
    }

    #[test]
    fn effective_batch_size_examples() {
        assert_relative_eq!(effective_batch_size(&egypt()), 1.054, epsilon = 1e-12);
        assert_eq!(effective_batch_size(&GroupMixture::single(1)), 1.0);
        let korea_post = GroupMixture::pair(1, 2, 0.566).unwrap();
        assert_relative_eq!(effective_batch_size(&korea_post), 1.566, epsilon = 1e-12);
    }

    #[test]
    fn event_rate_examples() {
        let p = RegimeParameters::new(0.085434063, 0.0, 0.0, RateConvention::Event).unwrap();
        assert_eq!(event_rate(&p, &egypt()).unwrap(), 0.085434063);

        let p = RegimeParameters::new(0.1, 0.0, 0.0, RateConvention::Flow).unwrap();
        assert_eq!(event_rate(&p, &GroupMixture::single(1)).unwrap(), 0.1);

        let p = RegimeParameters::new(0.09774732, 0.0, 0.0, RateConvention::Flow).unwrap();
        let korea_post = GroupMixture::pair(1, 2, 0.566).unwrap();
        let rate = event_rate(&p, &korea_post).unwrap();
        assert_relative_eq!(rate, 0.09774732 / 1.566, epsilon = 1e-15);
        assert!((rate - 0.062418).abs() < 1e-6);
    }

    #[test]
    fn flow_with_zero_batch_is_an_error() {
        let p = RegimeParameters::new(0.1, 0.05, 0.0, RateConvention::Flow).unwrap();
        let m = GroupMixture::pair(0, 1, 0.0).unwrap();
        assert_eq!(event_rate(&p, &m), Err(Error::ZeroEffectiveBatchSize));
    }

    #[test]
    fn apportion_examples() {
        let s = apportion_initial(1903, &GroupMixture::pair(1, 2, 0.054).unwrap());
        assert_eq!(s.counts, vec![1800, 103]);
        assert_eq!(s.time, 0.0);
        assert_eq!(
            apportion_initial(7, &GroupMixture::single(1)).counts,
            vec![7]
        );
        assert_eq!(
            apportion_initial(2, &GroupMixture::pair(1, 2, 0.5).unwrap()).counts,
            vec![1, 1]
        );
    }

    #[test]
    fn mixture_validation() {
        assert!(GroupMixture::pair(1, 2, 1.5).is_err());
        assert!(GroupMixture::new(vec![
            BatchGroup { d: 1, r: 0.5 },
            BatchGroup { d: 1, r: 0.5 }
        ])
        .is_err());
        assert!(GroupMixture::new(vec![BatchGroup { d: 1, r: 0.5 }]).is_err());
        assert!(GroupMixture::new(vec![BatchGroup { d: 0, r: 1.0 }]).is_err());
        assert!(GroupMixture::pure_decay(vec![BatchGroup { d: 0, r: 1.0 }]).is_ok());
    }

    #[test]
    fn parameter_validation() {
        assert!(RegimeParameters::new(-0.1, 0.0, 0.0, RateConvention::Event).is_err());
        assert!(RegimeParameters::new(0.1, f64::NAN, 0.0, RateConvention::Event).is_err());
        assert!(RegimeParameters::new(0.1, 0.1, f64::INFINITY, RateConvention::Event).is_err());
    }

    #[test]
    fn schedule_validation_and_segments() {
        let p = RegimeParameters::new(0.1, 0.05, 0.0, RateConvention::Flow).unwrap();
        let r = |start_day| Regime {
            start_day,
            params: p,
            mixture: GroupMixture::single(1),
        };
        assert!(RegimeSchedule::new(0, vec![r(1)]).is_err());
        assert!(RegimeSchedule::new(5, vec![r(2)]).is_err());
        assert!(RegimeSchedule::new(5, vec![r(1), r(1)]).is_err());
        let s = RegimeSchedule::new(5, vec![r(1), r(11)]).unwrap();
        assert_eq!(s.switch_time(1), 9.0);
        assert_eq!(s.segments(19.0), vec![(0, 0.0, 9.0), (1, 9.0, 19.0)]);
        assert_eq!(s.segments(4.0), vec![(0, 0.0, 4.0)]);
        // a regime starting on day 2 owns everything after day 1
        let s = RegimeSchedule::new(5, vec![r(1), r(2)]).unwrap();
        assert_eq!(s.segments(3.0), vec![(1, 0.0, 3.0)]);
    }

    #[test]
    fn params_json_round_trip() {
        let text = r#"{ "k": 1825, "convention": "flow", "regimes": [
            { "start_day": 1, "beta": 0.062135947, "mu": 0.053096363, "groups": [ {"d": 1, "r": 0.94}, {"d": 2, "r": 0.06} ] },
            { "start_day": 11, "beta": 0.09774732, "mu": 0.038994525, "tau": 0, "groups": [ {"d": 1, "r": 0.434}, {"d": 2, "r": 0.566} ] } ] }"#;
        let file = ParamsFile::from_json(text).unwrap();
        assert_eq!(file.regimes[0].tau, 0.0);
        let schedule = file.to_schedule().unwrap();
        assert_eq!(schedule.k(), 1825);
        assert_eq!(schedule.regimes()[1].start_day, 11);
        let back = ParamsFile::from_schedule(&schedule).unwrap();
        assert_eq!(back, file);
        assert_eq!(ParamsFile::from_json(&back.to_json()).unwrap(), file);
    }

    proptest! {
        #[test]
        fn apportion_sums_to_total(k in 1u64..1_000_000, raw in prop::collection::vec(0.0f64..1.0, 1..5)) {
            let s: f64 = raw.iter().sum();
            prop_assume!(s > 1e-6);
            let weights: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let counts = apportion(k, &weights);
            prop_assert_eq!(counts.iter().sum::<u64>(), k);
            for (c, w) in counts.iter().zip(&weights) {
                prop_assert!((*c as f64 - w * k as f64).abs() < 1.0 + 1e-6);
            }
        }

        #[test]
        fn flow_rate_times_batch_is_beta(beta in 0.0f64..2.0, r2 in 0.0f64..=1.0) {
            let m = GroupMixture::pair(1, 2, r2).unwrap();
            let p = RegimeParameters::new(beta, 0.0, 0.0, RateConvention::Flow).unwrap();
            let rate = event_rate(&p, &m).unwrap();
            prop_assert!((rate * effective_batch_size(&m) - beta).abs() <= 4.0 * f64::EPSILON * beta.max(1.0));
        }

        #[test]
        fn batch_size_linear_in_weights(a in 0.0f64..=1.0, b in 0.0f64..=1.0, s in 0.0f64..=1.0) {
            let ma = GroupMixture::pair(1, 2, a).unwrap();
            let mb = GroupMixture::pair(1, 2, b).unwrap();
            let mixed = GroupMixture::pair(1, 2, s * a + (1.0 - s) * b).unwrap();
            let lhs = effective_batch_size(&mixed);
            let rhs = s * effective_batch_size(&ma) + (1.0 - s) * effective_batch_size(&mb);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
