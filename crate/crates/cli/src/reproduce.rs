//! Re-estimation and back-test checks against the bundled country fixtures.

use std::fmt::Write as _;

use epiqbd::data::{format_sig, render_svg, trajectory_csv, Chart, ChartSeries, Fixture};
use epiqbd::estimate::{
    estimate_regimes, fit_weights, ParameterEstimate, WeightFit, CANDIDATE_PAIRS,
};
use epiqbd::model::RateConvention;
use epiqbd::transient::{day_grid, mean_trajectory, ExpectedTrajectory, MeanEngine};
use epiqbd::Result;

/// Absolute tolerance for re-estimated rates against the reported ones.
pub const ESTIMATE_TOL: f64 = 1e-3;

/// Relative error allowed for the final-day back-test.
pub const BACKTEST_TOL: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct RateCheck {
    pub label: String,
    pub estimated: f64,
    pub reported: f64,
}

impl RateCheck {
    pub fn deviation(&self) -> f64 {
        (self.estimated - self.reported).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateCheck {
    pub estimates: Vec<ParameterEstimate>,
    pub rates: Vec<RateCheck>,
    /// Largest deviation over all rates for each change point tried, when
    /// the stated one misses [`ESTIMATE_TOL`].
    pub alternates: Vec<(usize, f64)>,
}

impl EstimateCheck {
    pub fn max_deviation(&self) -> f64 {
        self.rates
            .iter()
            .map(RateCheck::deviation)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_deviation() <= ESTIMATE_TOL
    }

    /// Change points under which every rate is within [`ESTIMATE_TOL`].
    pub fn reproducing_alternates(&self) -> Vec<usize> {
        self.alternates
            .iter()
            .filter(|(_, dev)| *dev <= ESTIMATE_TOL)
            .map(|(t, _)| *t)
            .collect()
    }
}

fn rate_checks(fixture: &Fixture, estimates: &[ParameterEstimate]) -> Vec<RateCheck> {
    let mut out = Vec::new();
    let two = estimates.len() == 2;
    for (i, (e, r)) in estimates.iter().zip(&fixture.regimes).enumerate() {
        let side = match (two, i) {
            (false, _) => "",
            (true, 0) => "pre ",
            (true, _) => "post ",
        };
        out.push(RateCheck {
            label: format!("{side}beta"),
            estimated: e.beta_hat,
            reported: r.beta,
        });
        out.push(RateCheck {
            label: format!("{side}mu"),
            estimated: e.mu_hat,
            reported: r.mu,
        });
    }
    out
}

pub fn check_estimates(fixture: &Fixture) -> Result<EstimateCheck> {
    let series = fixture.series()?;
    let change_point = fixture.change_point.map(|t| t as usize);
    let estimates = estimate_regimes(&series, change_point)?;
    let rates = rate_checks(fixture, &estimates);
    let mut check = EstimateCheck {
        estimates,
        rates,
        alternates: Vec::new(),
    };
    if !check.passes() && change_point.is_some() {
        for t_c in 2..=series.len() {
            let alt = estimate_regimes(&series, Some(t_c))?;
            let dev = rate_checks(fixture, &alt)
                .iter()
                .map(RateCheck::deviation)
                .fold(0.0, f64::max);
            check.alternates.push((t_c, dev));
        }
    }
    Ok(check)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backtest {
    pub convention: RateConvention,
    pub trajectory: ExpectedTrajectory,
    pub observed_final: f64,
    pub model_final: f64,
}

impl Backtest {
    pub fn relative_error(&self) -> f64 {
        self.model_final / self.observed_final - 1.0
    }

    pub fn passes(&self) -> bool {
        self.relative_error().abs() <= BACKTEST_TOL
    }
}

/// Closed-form mean under the reported rates, weights and change point.
pub fn backtest(fixture: &Fixture, convention: RateConvention) -> Result<Backtest> {
    let days = fixture.days();
    let schedule = fixture.schedule(convention)?;
    let trajectory = mean_trajectory(&schedule, &day_grid(days), MeanEngine::ClosedForm)?;
    let model_final = *trajectory.values.last().expect("non-empty grid");
    Ok(Backtest {
        convention,
        trajectory,
        observed_final: fixture.final_active as f64,
        model_final,
    })
}

pub struct Reproduction {
    pub report: String,
    pub trajectory_csv: String,
    pub svg: String,
    pub check: EstimateCheck,
    pub backtests: [Backtest; 2],
    pub fit: WeightFit,
}

fn pct(x: f64) -> String {
    format!("{:+.2}%", 100.0 * x)
}

fn pair_text(p: (u32, u32)) -> String {
    format!("({},{})", p.0, p.1)
}

pub fn reproduce(fixture: &Fixture, convention: RateConvention) -> Result<Reproduction> {
    let series = fixture.series()?;
    let check = check_estimates(fixture)?;
    let event = backtest(fixture, RateConvention::Event)?;
    let flow = backtest(fixture, RateConvention::Flow)?;
    let chosen = match convention {
        RateConvention::Event => &event,
        RateConvention::Flow => &flow,
    };
    let fit = fit_weights(&series, &check.estimates, &CANDIDATE_PAIRS, convention)?;
    let days = fixture.days();
    let fitted = mean_trajectory(&fit.schedule, &day_grid(days), MeanEngine::ClosedForm)?;

    let mut r = String::new();
    let _ = writeln!(r, "country: {} ({})", fixture.name, fixture.key);
    let _ = writeln!(r, "days: {days}");
    let _ = writeln!(r, "k: {}", series.initial_active());
    match fixture.change_point {
        Some(t) => {
            let _ = writeln!(r, "change point: day {t}");
        }
        None => {
            let _ = writeln!(r, "change point: none");
        }
    }
    let _ = writeln!(r, "\nre-estimated rates (tolerance {ESTIMATE_TOL}):");
    for e in &check.estimates {
        let _ = writeln!(
            r,
            "  days {}-{}: beta_hat={} mu_hat={}",
            e.window.first_day,
            e.window.last_day,
            format_sig(e.beta_hat),
            format_sig(e.mu_hat)
        );
    }
    for c in &check.rates {
        let _ = writeln!(
            r,
            "  {:<9} estimated {:<12} reported {:<12} |diff| {:.3e}",
            c.label,
            format_sig(c.estimated),
            format_sig(c.reported),
            c.deviation()
        );
    }
    if check.passes() {
        let _ = writeln!(r, "  estimates: PASS");
    } else {
        let _ = writeln!(
            r,
            "  estimates: MISMATCH (max |diff| {:.3e} at the reported change point)",
            check.max_deviation()
        );
        if !check.alternates.is_empty() {
            let tried: Vec<String> = check
                .alternates
                .iter()
                .map(|(t, d)| format!("{t}:{d:.1e}"))
                .collect();
            let _ = writeln!(
                r,
                "  change points tried (t_c:max |diff|): {}",
                tried.join(" ")
            );
            let ok = check.reproducing_alternates();
            if ok.is_empty() {
                let _ = writeln!(r, "  no change point reproduces every reported rate");
            } else {
                let list: Vec<String> = ok.iter().map(ToString::to_string).collect();
                let _ = writeln!(
                    r,
                    "  reported rates reproduce with t_c in {{{}}}",
                    list.join(", ")
                );
            }
        }
    }

    let _ = writeln!(
        r,
        "\nday {days} back-test with reported rates and weights (observed {}):",
        fixture.final_active
    );
    for b in [&event, &flow] {
        let _ = writeln!(
            r,
            "  {:<5} model {:<12} relative error {}{}",
            b.convention.as_str(),
            format_sig(b.model_final),
            pct(b.relative_error()),
            if b.passes() { "  (within 10%)" } else { "" }
        );
    }
    let passing: Vec<&str> = [&event, &flow]
        .iter()
        .filter(|b| b.passes())
        .map(|b| b.convention.as_str())
        .collect();
    let _ = writeln!(
        r,
        "  within 10%: {}",
        if passing.is_empty() {
            "none".to_string()
        } else {
            passing.join(", ")
        }
    );

    let _ = writeln!(
        r,
        "\nfitted weights ({} convention, re-estimated rates):",
        convention.as_str()
    );
    for (i, (p, m)) in fit.pairs.iter().zip(&fit.mixtures).enumerate() {
        let w = m.weights();
        let _ = writeln!(
            r,
            "  regime {}: pair {} weights {:.3}/{:.3}",
            i + 1,
            pair_text(*p),
            w[0],
            w[1]
        );
    }
    let fitted_final = *fitted.values.last().expect("non-empty grid");
    let _ = writeln!(
        r,
        "  rms relative error {}; day {days} model {} relative error {}",
        format_sig(fit.objective),
        format_sig(fitted_final),
        pct(fitted_final / fixture.final_active as f64 - 1.0)
    );

    let x: Vec<f64> = (1..=days).map(f64::from).collect();
    let chart = Chart {
        title: format!("{}: active cases", fixture.name),
        x_label: "day".into(),
        y_label: "active".into(),
        series: vec![
            ChartSeries {
                label: "observed".into(),
                x: x.clone(),
                y: series.active(),
            },
            ChartSeries {
                label: format!("reported ({})", convention.as_str()),
                x: x.clone(),
                y: chosen.trajectory.values.clone(),
            },
            ChartSeries {
                label: "fitted".into(),
                x,
                y: fitted.values.clone(),
            },
        ],
    };
    Ok(Reproduction {
        report: r,
        trajectory_csv: trajectory_csv(&chosen.trajectory),
        svg: render_svg(&chart)?,
        backtests: [event.clone(), flow.clone()],
        check,
        fit,
    })
}
