//! Parameter-edit scenarios and the control-effect ratio
//! `rho(t) = E[N_baseline(t)] / E[N_scenario(t)]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BatchGroup, GroupMixture, RateConvention, Regime, RegimeParameters, RegimeSchedule,
};
use crate::transient::{mean_trajectory, MeanEngine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KTransform {
    #[default]
    None,
    /// `k -> ceil(k / 2)`.
    HalveCeiling,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Multiplies the per-event rate of every regime.
    #[serde(default = "one")]
    pub lambda_scale: f64,
    #[serde(default)]
    pub k_transform: KTransform,
    /// Added to every batch size, floored at 0.
    #[serde(default)]
    pub batch_shift: i32,
    /// Replacement weights per regime, in the order of the shifted groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_override: Option<Vec<Vec<f64>>>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::identity()
    }
}

impl Scenario {
    pub fn identity() -> Self {
        Self {
            lambda_scale: 1.0,
            k_transform: KTransform::None,
            batch_shift: 0,
            weight_override: None,
        }
    }

    pub fn lambda_half() -> Self {
        Self {
            lambda_scale: 0.5,
            ..Self::identity()
        }
    }

    pub fn k_half() -> Self {
        Self {
            k_transform: KTransform::HalveCeiling,
            ..Self::identity()
        }
    }

    pub fn d_shift(weight_override: Option<Vec<Vec<f64>>>) -> Self {
        Self {
            batch_shift: -1,
            weight_override,
            ..Self::identity()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameters(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_scale.is_finite() && self.lambda_scale > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "lambda_scale must be positive, got {}",
                self.lambda_scale
            )));
        }
        if self.batch_shift > 0 {
            return Err(Error::InvalidParameters(format!(
                "batch_shift must be <= 0, got {}",
                self.batch_shift
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.lambda_scale == 1.0
            && self.k_transform == KTransform::None
            && self.batch_shift == 0
            && self.weight_override.is_none()
    }

    /// The rate, batch-size (with weights) and initial-count parts of `self`.
    pub fn components(&self) -> [Scenario; 3] {
        [
            Self {
                lambda_scale: self.lambda_scale,
                ..Self::identity()
            },
            Self {
                batch_shift: self.batch_shift,
                weight_override: self.weight_override.clone(),
                ..Self::identity()
            },
            Self {
                k_transform: self.k_transform,
                ..Self::identity()
            },
        ]
    }
}

fn shifted_groups(mixture: &GroupMixture, shift: i32) -> Vec<BatchGroup> {
    let mut out: Vec<BatchGroup> = Vec::with_capacity(mixture.len());
    for g in mixture.groups() {
        let d = (i64::from(g.d) + i64::from(shift)).max(0) as u32;
        match out.iter_mut().find(|o| o.d == d) {
            Some(o) => o.r += g.r,
            None => out.push(BatchGroup { d, r: g.r }),
        }
    }
    out
}

/// Applies `scenario` to every regime of `baseline`. The death rate is never
/// touched. Edits to `d` or the weights move the regime to the per-event
/// convention so the per-event rate stays what the baseline implied.
pub fn apply_scenario(baseline: &RegimeSchedule, scenario: &Scenario) -> Result<RegimeSchedule> {
    scenario.validate()?;
    if scenario.is_identity() {
        return Ok(baseline.clone());
    }
    if let Some(w) = &scenario.weight_override {
        if w.len() != baseline.regimes().len() {
            return Err(Error::InvalidMixture(format!(
                "weight_override has {} entries for {} regimes",
                w.len(),
                baseline.regimes().len()
            )));
        }
    }
    let k = match scenario.k_transform {
        KTransform::None => baseline.k(),
        KTransform::HalveCeiling => baseline.k().div_ceil(2),
    };
    let edits_mixture = scenario.batch_shift != 0 || scenario.weight_override.is_some();
    let mut regimes = Vec::with_capacity(baseline.regimes().len());
    for (i, regime) in baseline.regimes().iter().enumerate() {
        let p = &regime.params;
        if !edits_mixture {
            regimes.push(Regime {
                start_day: regime.start_day,
                params: RegimeParameters::new(
                    p.beta() * scenario.lambda_scale,
                    p.mu(),
                    p.tau(),
                    p.convention(),
                )?,
                mixture: regime.mixture.clone(),
            });
            continue;
        }
        let lambda = regime.event_rate()? * scenario.lambda_scale;
        let mut groups = shifted_groups(&regime.mixture, scenario.batch_shift);
        if let Some(w) = scenario.weight_override.as_ref().map(|w| &w[i]) {
            if w.len() != groups.len() {
                return Err(Error::InvalidMixture(format!(
                    "regime {i}: {} override weights for {} groups",
                    w.len(),
                    groups.len()
                )));
            }
            for (g, &r) in groups.iter_mut().zip(w) {
                g.r = r;
            }
        }
        regimes.push(Regime {
            start_day: regime.start_day,
            params: RegimeParameters::new(lambda, p.mu(), p.tau(), RateConvention::Event)?,
            mixture: GroupMixture::from_groups(groups)?,
        });
    }
    RegimeSchedule::new(k, regimes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn rho_curve(
    baseline: &RegimeSchedule,
    scenario: &RegimeSchedule,
    grid: &[f64],
    engine: MeanEngine,
) -> Result<RhoCurve> {
    let base = mean_trajectory(baseline, grid, engine)?;
    let alt = mean_trajectory(scenario, grid, engine)?;
    let mut values = Vec::with_capacity(grid.len());
    for ((&t, b), a) in grid.iter().zip(&base.values).zip(&alt.values) {
        if a.is_nan() || *a <= 0.0 {
            return Err(Error::DegenerateScenario { t });
        }
        values.push(b / a);
    }
    Ok(RhoCurve {
        times: grid.to_vec(),
        values,
    })
}

/// Rho curves of the rate, batch-size and initial-count parts of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoReport {
    pub times: Vec<f64>,
    pub rho_lambda: Vec<f64>,
    pub rho_d: Vec<f64>,
    pub rho_k: Vec<f64>,
}

pub fn scenario_report(
    baseline: &RegimeSchedule,
    scenario: &Scenario,
    grid: &[f64],
    engine: MeanEngine,
) -> Result<RhoReport> {
    let [l, d, k] = scenario.components();
    let curve = |s: &Scenario| -> Result<Vec<f64>> {
        Ok(rho_curve(baseline, &apply_scenario(baseline, s)?, grid, engine)?.values)
    };
    Ok(RhoReport {
        times: grid.to_vec(),
        rho_lambda: curve(&l)?,
        rho_d: curve(&d)?,
        rho_k: curve(&k)?,
    })
}

/// Halved rate, batch sizes shifted down by one, halved initial count.
pub fn standard_scenario(weight_override: Option<Vec<Vec<f64>>>) -> Scenario {
    Scenario {
        lambda_scale: 0.5,
        k_transform: KTransform::HalveCeiling,
        batch_shift: -1,
        weight_override,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixture;
    use crate::transient::day_grid;
    use proptest::prelude::*;

    fn single(k: u64, beta: f64, mu: f64, d: u32) -> RegimeSchedule {
        RegimeSchedule::single(
            k,
            RegimeParameters::new(beta, mu, 0.0, RateConvention::Event).unwrap(),
            GroupMixture::single(d),
        )
        .unwrap()
    }

    #[test]
    fn korea_halving_and_shift() {
        let korea = fixture("south-korea")
            .unwrap()
            .schedule(RateConvention::Flow)
            .unwrap();
        assert_eq!(
            apply_scenario(&korea, &Scenario::k_half()).unwrap().k(),
            913
        );
        let shifted = apply_scenario(&korea, &Scenario::d_shift(None)).unwrap();
        for (a, b) in shifted.regimes().iter().zip(korea.regimes()) {
            assert_eq!(a.mixture.batch_sizes(), vec![0, 1]);
            assert_eq!(a.mixture.weights(), b.mixture.weights());
            assert_eq!(a.params.mu(), b.params.mu());
            assert!((a.event_rate().unwrap() - b.event_rate().unwrap()).abs() < 1e-15);
        }
        assert_eq!(
            apply_scenario(&korea, &Scenario::identity()).unwrap(),
            korea
        );
    }

    #[test]
    fn collided_groups_merge() {
        let s = RegimeSchedule::single(
            100,
            RegimeParameters::new(0.1, 0.05, 0.0, RateConvention::Event).unwrap(),
            GroupMixture::pair(0, 1, 0.3).unwrap(),
        )
        .unwrap();
        let out = apply_scenario(&s, &Scenario::d_shift(None)).unwrap();
        let m = &out.regimes()[0].mixture;
        assert_eq!(m.batch_sizes(), vec![0]);
        assert!(m.is_pure_decay());
        let traj = mean_trajectory(&out, &[0.0, 10.0], MeanEngine::ClosedForm).unwrap();
        assert!((traj.values[1] - 100.0 * (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let s = single(10, 0.1, 0.05, 1);
        let bad = Scenario {
            batch_shift: 1,
            ..Scenario::identity()
        };
        assert!(apply_scenario(&s, &bad).is_err());
        let bad = Scenario {
            lambda_scale: 0.0,
            ..Scenario::identity()
        };
        assert!(apply_scenario(&s, &bad).is_err());
        let bad = Scenario::d_shift(Some(vec![vec![0.5, 0.5]]));
        assert!(matches!(
            apply_scenario(&s, &bad),
            Err(Error::InvalidMixture(_))
        ));
        assert!(Scenario::from_json(r#"{"k_transform":"third"}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"lambda_scale":0.5,"k_transform":"halve_ceiling","batch_shift":-1,"weight_override":[[0.47,0.53],[0.217,0.783]]}"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.k_transform, KTransform::HalveCeiling);
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        assert_eq!(Scenario::from_json("{}").unwrap(), Scenario::identity());
    }

    #[test]
    fn identity_rho_is_one() {
        let korea = fixture("south-korea")
            .unwrap()
            .schedule(RateConvention::Flow)
            .unwrap();
        let grid = day_grid(20);
        let same = apply_scenario(&korea, &Scenario::identity()).unwrap();
        let rho = rho_curve(&korea, &same, &grid, MeanEngine::ClosedForm).unwrap();
        assert!(rho.values.iter().all(|&v| v == 1.0));
        let report =
            scenario_report(&korea, &Scenario::identity(), &grid, MeanEngine::ClosedForm).unwrap();
        for curve in [&report.rho_lambda, &report.rho_d, &report.rho_k] {
            assert!(curve.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn k_half_even_is_two() {
        let s = single(1000, 0.2, 0.1, 2);
        let alt = apply_scenario(&s, &Scenario::k_half()).unwrap();
        let rho = rho_curve(&s, &alt, &day_grid(30), MeanEngine::ClosedForm).unwrap();
        for v in rho.values {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_half_single_group() {
        let lambda = 0.12;
        let s = single(500, lambda, 0.05, 1);
        let alt = apply_scenario(&s, &Scenario::lambda_half()).unwrap();
        let rho = rho_curve(&s, &alt, &day_grid(25), MeanEngine::ClosedForm).unwrap();
        for (t, v) in rho.times.iter().zip(&rho.values) {
            let expect = (lambda * t / 2.0).exp();
            assert!((v / expect - 1.0).abs() < 1e-12);
        }
        assert!(rho.values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn degenerate_scenario() {
        let s = single(1, 0.0, 800.0, 1);
        let err = rho_curve(&s, &s, &[0.0, 1.0, 2.0], MeanEngine::ClosedForm).unwrap_err();
        assert_eq!(err, Error::DegenerateScenario { t: 1.0 });
    }

    fn ordering_at_day_20(key: &str, overrides: Option<Vec<Vec<f64>>>) {
        let base = fixture(key)
            .unwrap()
            .schedule(RateConvention::Flow)
            .unwrap();
        let report = scenario_report(
            &base,
            &standard_scenario(overrides),
            &day_grid(20),
            MeanEngine::ClosedForm,
        )
        .unwrap();
        let (l, d, k) = (report.rho_lambda[19], report.rho_d[19], report.rho_k[19]);
        assert!(d > k && l > k, "{key}: lambda {l} d {d} k {k}");
    }

    #[test]
    fn korea_and_egypt_ordering() {
        ordering_at_day_20("south-korea", None);
        ordering_at_day_20(
            "south-korea",
            Some(vec![vec![0.470, 0.530], vec![0.217, 0.783]]),
        );
        ordering_at_day_20("egypt", None);
        ordering_at_day_20("egypt", Some(vec![vec![0.518, 0.482]]));
    }

    proptest! {
        #[test]
        fn k_only_is_constant(k in 1u64..1_000_000, beta in 0.0f64..0.3, mu in 0.0f64..0.3, r2 in 0.0f64..1.0) {
            let s = RegimeSchedule::single(
                k,
                RegimeParameters::new(beta, mu, 0.0, RateConvention::Flow).unwrap(),
                GroupMixture::pair(1, 2, r2).unwrap(),
            ).unwrap();
            let alt = apply_scenario(&s, &Scenario::k_half()).unwrap();
            let rho = rho_curve(&s, &alt, &day_grid(20), MeanEngine::ClosedForm).unwrap();
            let expect = k as f64 / k.div_ceil(2) as f64;
            for v in rho.values {
                prop_assert!((v / expect - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn lambda_cut_never_helps_growth(scale in 0.05f64..1.0, beta in 0.0f64..0.3, mu in 0.0f64..0.3, r2 in 0.0f64..1.0) {
            let s = RegimeSchedule::single(
                1000,
                RegimeParameters::new(beta, mu, 0.0, RateConvention::Event).unwrap(),
                GroupMixture::pair(1, 3, r2).unwrap(),
            ).unwrap();
            let alt = apply_scenario(&s, &Scenario { lambda_scale: scale, ..Scenario::identity() }).unwrap();
            let rho = rho_curve(&s, &alt, &day_grid(20), MeanEngine::ClosedForm).unwrap();
            for w in rho.values.windows(2) {
                prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
            }
        }

        #[test]
        fn disjoint_edits_multiply(k in 2u64..100_000, lambda in 0.0f64..0.3, mu in 0.0f64..0.3, scale in 0.1f64..1.0) {
            let s = single(k, lambda, mu, 1);
            let grid = day_grid(15);
            let both = Scenario { lambda_scale: scale, ..Scenario::k_half() };
            let rho = |sc: &Scenario| rho_curve(&s, &apply_scenario(&s, sc).unwrap(), &grid, MeanEngine::ClosedForm).unwrap().values;
            let r_l = rho(&Scenario { lambda_scale: scale, ..Scenario::identity() });
            let r_k = rho(&Scenario::k_half());
            let r_both = rho(&both);
            for i in 0..grid.len() {
                prop_assert!((r_both[i] / (r_l[i] * r_k[i]) - 1.0).abs() < 1e-12);
            }
        }
    }
}
