//! Six 20-day country series (late 2020) with the rates, batch-size weights
//! and change points originally reported for them.

use crate::error::{Error, Result};
use crate::model::{
    BatchGroup, GroupMixture, RateConvention, Regime, RegimeParameters, RegimeSchedule,
};

use super::series::{parse_series, DailySeries, Strictness};

pub const FIXTURE_KEYS: [&str; 6] = [
    "new-york",
    "india",
    "egypt",
    "south-korea",
    "italy",
    "mexico",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportedRegime {
    pub start_day: u32,
    pub beta: f64,
    pub mu: f64,
    pub groups: Vec<BatchGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub key: &'static str,
    pub name: &'static str,
    pub csv: &'static str,
    /// Reported initial active count.
    pub k: u64,
    pub change_point: Option<u32>,
    pub regimes: Vec<ReportedRegime>,
    /// Observed active count on the last day.
    pub final_active: u64,
}

impl Fixture {
    pub fn series(&self) -> Result<DailySeries> {
        parse_series(self.csv.as_bytes(), Strictness::Strict)
    }

    /// The reported parameters read under `convention`.
    pub fn schedule(&self, convention: RateConvention) -> Result<RegimeSchedule> {
        let regimes = self
            .regimes
            .iter()
            .map(|r| {
                Ok(Regime {
                    start_day: r.start_day,
                    params: RegimeParameters::new(r.beta, r.mu, 0.0, convention)?,
                    mixture: GroupMixture::new(r.groups.clone())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RegimeSchedule::new(self.k, regimes)
    }

    pub fn days(&self) -> u32 {
        self.csv.lines().count() as u32 - 1
    }
}

fn groups(pairs: &[(u32, f64)]) -> Vec<BatchGroup> {
    pairs.iter().map(|&(d, r)| BatchGroup { d, r }).collect()
}

fn regime(start_day: u32, beta: f64, mu: f64, pairs: &[(u32, f64)]) -> ReportedRegime {
    ReportedRegime {
        start_day,
        beta,
        mu,
        groups: groups(pairs),
    }
}

pub fn fixture(key: &str) -> Result<Fixture> {
    let f = match key {
        "new-york" => Fixture {
            key: "new-york",
            name: "New York State",
            csv: include_str!("../../fixtures/new-york.csv"),
            k: 101_592,
            change_point: None,
            regimes: vec![regime(
                1,
                0.035073852,
                0.006084398,
                &[(1, 0.971), (2, 0.029)],
            )],
            final_active: 178_481,
        },
        "india" => Fixture {
            key: "india",
            name: "India",
            csv: include_str!("../../fixtures/india.csv"),
            k: 561_908,
            change_point: None,
            regimes: vec![regime(
                1,
                0.088146484,
                0.101284201,
                &[(0, 0.001), (1, 0.999)],
            )],
            final_active: 439_747,
        },
        "egypt" => Fixture {
            key: "egypt",
            name: "Egypt",
            csv: include_str!("../../fixtures/egypt.csv"),
            k: 1903,
            change_point: None,
            regimes: vec![regime(
                1,
                0.085434063,
                0.045978143,
                &[(1, 0.946), (2, 0.054)],
            )],
            final_active: 4112,
        },
        "south-korea" => Fixture {
            key: "south-korea",
            name: "South Korea",
            csv: include_str!("../../fixtures/south-korea.csv"),
            k: 1825,
            change_point: Some(11),
            regimes: vec![
                regime(1, 0.062135947, 0.053096363, &[(1, 0.940), (2, 0.060)]),
                regime(11, 0.09774732, 0.038994525, &[(1, 0.434), (2, 0.566)]),
            ],
            final_active: 3762,
        },
        "italy" => Fixture {
            key: "italy",
            name: "Italy",
            csv: include_str!("../../fixtures/italy.csv"),
            k: 613_358,
            change_point: Some(12),
            regimes: vec![
                regime(1, 0.049487386, 0.023181119, &[(1, 0.999), (2, 0.001)]),
                regime(12, 0.030904889, 0.031409968, &[(0, 0.550), (1, 0.450)]),
            ],
            final_active: 788_471,
        },
        "mexico" => Fixture {
            key: "mexico",
            name: "Mexico",
            csv: include_str!("../../fixtures/mexico.csv"),
            k: 158_429,
            change_point: Some(7),
            regimes: vec![
                regime(1, 0.027329732, 0.030691817, &[(0, 0.020), (1, 0.980)]),
                regime(7, 0.051140063, 0.034605204, &[(1, 0.500), (2, 0.500)]),
            ],
            final_active: 189_481,
        },
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    Ok(f)
}

pub fn fixtures() -> Vec<Fixture> {
    FIXTURE_KEYS
        .iter()
        .map(|k| fixture(k).expect("bundled fixture"))
        .collect()
}
