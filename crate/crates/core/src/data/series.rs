use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub const SERIES_HEADER: &str = "date,confirmed,new_confirmed,disappeared,new_disappeared,active";

/// One observation day. `new_*` are the day's increments, `active` the
/// currently infected count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyRow {
    pub date: NaiveDate,
    pub confirmed: u64,
    pub new_confirmed: u64,
    pub disappeared: u64,
    pub new_disappeared: u64,
    pub active: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Any broken identity is an error.
    #[default]
    Strict,
    /// Broken identities are kept as warnings.
    Lax,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailySeries {
    rows: Vec<DailyRow>,
    warnings: Vec<String>,
}

impl DailySeries {
    pub fn new(rows: Vec<DailyRow>) -> Result<Self> {
        Self::with_strictness(rows, Strictness::Strict)
    }

    pub fn with_strictness(rows: Vec<DailyRow>, strictness: Strictness) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut warnings = Vec::new();
        for i in 0..rows.len() {
            for violation in violations(&rows, i) {
                let err = Error::Validation {
                    row: i + 1,
                    identity: violation.to_string(),
                };
                match strictness {
                    Strictness::Strict => return Err(err),
                    Strictness::Lax => warnings.push(err.to_string()),
                }
            }
        }
        Ok(Self { rows, warnings })
    }

    pub fn rows(&self) -> &[DailyRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `active` of the first day.
    pub fn initial_active(&self) -> u64 {
        self.rows[0].active
    }

    pub fn active(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.active as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(SERIES_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.date, r.confirmed, r.new_confirmed, r.disappeared, r.new_disappeared, r.active
            ));
        }
        out
    }
}

fn violations(rows: &[DailyRow], i: usize) -> Vec<&'static str> {
    let row = &rows[i];
    let mut out = Vec::new();
    if row.confirmed.checked_sub(row.disappeared) != Some(row.active) {
        out.push("active ≠ confirmed − disappeared");
    }
    if i > 0 {
        let prev = &rows[i - 1];
        if row.confirmed.checked_sub(prev.confirmed) != Some(row.new_confirmed) {
            out.push("new_confirmed ≠ confirmed − previous confirmed");
        }
        if row.disappeared.checked_sub(prev.disappeared) != Some(row.new_disappeared) {
            out.push("new_disappeared ≠ disappeared − previous disappeared");
        }
        if prev.date.succ_opt() != Some(row.date) {
            out.push("date is not the day after the previous row");
        }
    }
    out
}

/// Parses a series CSV with the exact [`SERIES_HEADER`].
pub fn parse_series(bytes: &[u8], strictness: Strictness) -> Result<DailySeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?,
        None => return Err(Error::EmptyInput),
    };
    let found = header.iter().collect::<Vec<_>>().join(",");
    let found = found.trim_start_matches('\u{feff}');
    if found != SERIES_HEADER {
        return Err(Error::HeaderMismatch {
            expected: SERIES_HEADER.into(),
            found: found.into(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != 6 {
            return Err(Error::Parse {
                row,
                message: format!("expected 6 fields, found {}", record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::Parse {
            row,
            message: format!("bad date `{}`: {e}", &record[0]),
        })?;
        let int = |j: usize| -> Result<u64> {
            record[j].parse::<u64>().map_err(|_| Error::Parse {
                row,
                message: format!("non-integer cell `{}` in column {}", &record[j], j + 1),
            })
        };
        rows.push(DailyRow {
            date,
            confirmed: int(1)?,
            new_confirmed: int(2)?,
            disappeared: int(3)?,
            new_disappeared: int(4)?,
            active: int(5)?,
        });
    }
    DailySeries::with_strictness(rows, strictness)
}

pub fn parse_series_file(path: impl AsRef<Path>, strictness: Strictness) -> Result<DailySeries> {
    let bytes = std::fs::read(path)?;
    parse_series(&bytes, strictness)
}

/// Builds a series from cumulative confirmed, deaths and recovered counts.
///
/// The first row's daily increments are 0 since no earlier day is known.
pub fn from_cumulative(
    dates: &[NaiveDate],
    confirmed: &[u64],
    deaths: &[u64],
    recovered: &[u64],
) -> Result<DailySeries> {
    let n = dates.len();
    if n < 2 || confirmed.len() != n || deaths.len() != n || recovered.len() != n {
        return Err(Error::InvalidParameters(
            "cumulative inputs need equal lengths of at least 2".into(),
        ));
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0
            && (confirmed[i] < confirmed[i - 1]
                || deaths[i] < deaths[i - 1]
                || recovered[i] < recovered[i - 1])
        {
            return Err(Error::NonMonotoneCumulative { row: i + 1 });
        }
        let disappeared = deaths[i] + recovered[i];
        let active = confirmed[i]
            .checked_sub(disappeared)
            .ok_or(Error::Validation {
                row: i + 1,
                identity: "deaths + recovered exceed confirmed".into(),
            })?;
        let (new_confirmed, new_disappeared) = if i == 0 {
            (0, 0)
        } else {
            (
                confirmed[i] - confirmed[i - 1],
                disappeared - (deaths[i - 1] + recovered[i - 1]),
            )
        };
        rows.push(DailyRow {
            date: dates[i],
            confirmed: confirmed[i],
            new_confirmed,
            disappeared,
            new_disappeared,
            active,
        });
    }
    DailySeries::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NY_HEAD: &str = "date,confirmed,new_confirmed,disappeared,new_disappeared,active\n\
        2020-11-06,559161,3241,457569,721,101592\n\
        2020-11-07,562577,3416,458342,773,104235\n";

    #[test]
    fn accepts_consistent_rows() {
        let s = parse_series(NY_HEAD.as_bytes(), Strictness::Strict).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.initial_active(), 101_592);
    }

    #[test]
    fn rejects_tampered_active() {
        let bad = NY_HEAD.replace("457569,721,101592", "457569,721,101593");
        let err = parse_series(bad.as_bytes(), Strictness::Strict).unwrap_err();
        assert_eq!(err.to_string(), "active ≠ confirmed − disappeared at row 1");
        let lax = parse_series(bad.as_bytes(), Strictness::Lax).unwrap();
        assert_eq!(lax.warnings().len(), 1);
    }

    #[test]
    fn korea_last_row() {
        let text = format!(
            "{SERIES_HEADER}\n2020-11-20,30403,386,26868,104,3535\n2020-11-21,30733,330,26971,103,3762\n"
        );
        let s = parse_series(text.as_bytes(), Strictness::Strict).unwrap();
        assert_eq!(s.rows()[1].active, 3762);
    }

    #[test]
    fn header_and_cell_errors() {
        let err = parse_series(b"date,confirmed\n", Strictness::Strict).unwrap_err();
        assert!(matches!(err, Error::HeaderMismatch { .. }));
        let text = format!("{SERIES_HEADER}\n2020-11-06,1.5,0,0,0,1\n");
        let err = parse_series(text.as_bytes(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
        let text = format!("{SERIES_HEADER}\n2020-11-06,10,0,3,0,7\n2020-11-08,12,2,3,0,9\n");
        let err = parse_series(text.as_bytes(), Strictness::Strict).unwrap_err();
        assert_eq!(
            err,
            Error::Validation {
                row: 2,
                identity: "date is not the day after the previous row".into()
            }
        );
        assert!(matches!(
            parse_series(b"", Strictness::Strict),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn cumulative_conversion() {
        let d = NaiveDate::from_ymd_opt(2020, 11, 1).unwrap();
        let s = from_cumulative(&[d, d.succ_opt().unwrap()], &[10, 15], &[1, 2], &[2, 3]).unwrap();
        let active: Vec<u64> = s.rows().iter().map(|r| r.active).collect();
        assert_eq!(active, vec![7, 10]);
        assert_eq!(s.rows()[0].new_confirmed, 0);
        assert_eq!(s.rows()[1].new_confirmed, 5);
        assert_eq!(s.rows()[1].new_disappeared, 2);

        let zeros =
            from_cumulative(&[d, d.succ_opt().unwrap()], &[0, 0], &[0, 0], &[0, 0]).unwrap();
        assert!(zeros.rows().iter().all(|r| r.active == 0));

        let err =
            from_cumulative(&[d, d.succ_opt().unwrap()], &[10, 9], &[0, 0], &[0, 0]).unwrap_err();
        assert_eq!(err, Error::NonMonotoneCumulative { row: 2 });
    }

    proptest! {
        #[test]
        fn csv_round_trip(start in 0u64..1_000_000, steps in prop::collection::vec((0u64..5000, 0u64..5000), 1..30)) {
            let d0 = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
            let mut dates = vec![d0];
            let mut confirmed = vec![start + 10_000];
            let mut deaths = vec![start / 3];
            let mut recovered = vec![start / 3];
            for (i, (a, b)) in steps.iter().enumerate() {
                dates.push(dates[i].succ_opt().unwrap());
                confirmed.push(confirmed[i] + a + b);
                deaths.push(deaths[i] + b / 2);
                recovered.push(recovered[i] + b - b / 2);
            }
            let s = from_cumulative(&dates, &confirmed, &deaths, &recovered).unwrap();
            let back = parse_series(s.to_csv().as_bytes(), Strictness::Strict).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
