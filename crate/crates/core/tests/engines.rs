//! The simulator, the closed-form mean and the uniformization engine should
//! tell the same story on the bundled fixtures.

use epiqbd::data::fixture;
use epiqbd::model::{apportion, RateConvention};
use epiqbd::simulate::{simulate_ensemble, SimulationConfig};
use epiqbd::transient::{day_grid, mean_trajectory, MeanEngine};

fn ensemble_agrees(key: &str, replications: u32) {
    let f = fixture(key).unwrap();
    let schedule = f.schedule(RateConvention::Flow).unwrap();
    let exact = mean_trajectory(&schedule, &day_grid(20), MeanEngine::ClosedForm).unwrap();
    let summary = simulate_ensemble(&SimulationConfig {
        schedule,
        horizon: 20,
        replications,
        seed: 2020,
    })
    .unwrap();
    for day in [5, 10, 20] {
        let i = day - 1;
        let se = (summary.var[i] / f64::from(replications)).sqrt();
        let z = (summary.mean[i] - exact.values[i]) / se.max(1e-9);
        assert!(
            z.abs() < 4.0,
            "{key} day {day}: ensemble {} vs {} (z = {z:.2})",
            summary.mean[i],
            exact.values[i]
        );
    }
}

#[test]
fn egypt_ensemble() {
    ensemble_agrees("egypt", 4000);
}

#[test]
fn korea_ensemble() {
    ensemble_agrees("south-korea", 2000);
}

#[test]
fn new_york_ensemble() {
    ensemble_agrees("new-york", 200);
}

#[test]
fn mexico_ensemble() {
    ensemble_agrees("mexico", 100);
}

#[test]
fn italy_ensemble() {
    ensemble_agrees("italy", 40);
}

#[test]
fn india_ensemble() {
    ensemble_agrees("india", 20);
}

#[test]
fn uniformization_tracks_closed_form_on_egypt() {
    // The numeric engine starts from whole counts (1800, 103), so the oracle does too.
    let schedule = fixture("egypt")
        .unwrap()
        .schedule(RateConvention::Flow)
        .unwrap();
    let regime = &schedule.regimes()[0];
    let counts = apportion(schedule.k(), &regime.mixture.weights());
    assert_eq!(counts, vec![1800, 103]);
    let lambda = regime.event_rate().unwrap();
    let grid = day_grid(20);
    let numeric = mean_trajectory(&schedule, &grid, MeanEngine::Uniformization).unwrap();
    for (t, b) in grid.iter().zip(&numeric.values) {
        let a: f64 = counts
            .iter()
            .zip(regime.mixture.groups())
            .map(|(&c, g)| c as f64 * ((lambda * f64::from(g.d) - regime.params.mu()) * t).exp())
            .sum();
        assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
    }
    assert!(numeric.mass_defect.unwrap().iter().all(|&m| m < 1e-8));
}

#[test]
fn uniformization_tracks_closed_form_across_change_point() {
    // Korea switches pair weights, so the engines pool at the switch; the
    // numeric engine rounds the pooled mean to a whole count.
    let schedule = fixture("south-korea")
        .unwrap()
        .schedule(RateConvention::Flow)
        .unwrap();
    let grid = day_grid(20);
    let exact = mean_trajectory(&schedule, &grid, MeanEngine::ClosedForm).unwrap();
    let numeric = mean_trajectory(&schedule, &grid, MeanEngine::Uniformization).unwrap();
    for (a, b) in exact.values.iter().zip(&numeric.values) {
        assert!((a / b - 1.0).abs() < 1e-3, "{a} vs {b}");
    }
}
