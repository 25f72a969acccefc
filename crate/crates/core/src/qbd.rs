//! Level partition and truncated generator of the single-group chain.
//!
//! State `n` is the number of active patients. From `n >= 1` the chain jumps
//! to `n + d` at rate `n * lambda` and to `n - 1` at rate `n * mu`; state 0
//! re-seeds to `d` at rate `tau`. Grouping states into levels
//! `[k(d+1)^(n-1), k(d+1)^n)` makes the generator block tridiagonal.

use std::ops::Range;

use crate::error::{Error, Result};

/// Contiguous levels `L_0 = [0, k)`, `L_n = [k(d+1)^(n-1), k(d+1)^n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelPartition {
    pub k: u64,
    pub d: u32,
    levels: Vec<Range<u64>>,
}

pub fn build_levels(k: u64, d: u32, n_levels: usize) -> Result<LevelPartition> {
    if k < 1 || d < 1 || n_levels < 1 {
        return Err(Error::InvalidParameters(
            "build_levels needs k >= 1, d >= 1 and at least one level".into(),
        ));
    }
    let base = u64::from(d) + 1;
    let mut levels = Vec::with_capacity(n_levels + 1);
    levels.push(0..k);
    let mut lo = k;
    for level in 1..=n_levels {
        let hi = lo
            .checked_mul(base)
            .filter(|&hi| hi <= i64::MAX as u64)
            .ok_or(Error::LevelOverflow { level })?;
        levels.push(lo..hi);
        lo = hi;
    }
    Ok(LevelPartition { k, d, levels })
}

impl LevelPartition {
    pub fn levels(&self) -> &[Range<u64>] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> Option<Range<u64>> {
        self.levels.get(i).cloned()
    }

    /// Index of the level holding `state`, if it is inside the partition.
    pub fn level_of(&self, state: u64) -> Option<usize> {
        self.levels.iter().position(|r| r.contains(&state))
    }

    pub fn upper_bound(&self) -> u64 {
        self.levels.last().map_or(0, |r| r.end)
    }
}

/// What happens to a birth jump that would leave `[0, n_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Land on `n_max` instead; rows keep summing to zero.
    #[default]
    Redirect,
    /// Remove the transition; probability leaks out of the truncation.
    Drop,
}

/// One generator row: at most two off-diagonal entries plus the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneratorRow {
    pub up: Option<(usize, f64)>,
    pub down: Option<(usize, f64)>,
    pub diag: f64,
}

impl GeneratorRow {
    pub fn exit_rate(&self) -> f64 {
        -self.diag
    }

    fn off_diagonal(&self) -> impl Iterator<Item = (usize, f64)> {
        self.up.into_iter().chain(self.down)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGenerator {
    pub lambda_event: f64,
    pub mu: f64,
    pub tau: f64,
    pub d: u32,
    pub n_max: usize,
    pub policy: BoundaryPolicy,
    rows: Vec<GeneratorRow>,
}

pub fn build_generator(
    lambda_event: f64,
    mu: f64,
    tau: f64,
    d: u32,
    n_max: usize,
    policy: BoundaryPolicy,
) -> Result<TruncatedGenerator> {
    for (name, v) in [("lambda", lambda_event), ("mu", mu), ("tau", tau)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParameters(format!(
                "{name} must be finite and non-negative, got {v}"
            )));
        }
    }
    if n_max < 1 {
        return Err(Error::InvalidParameters("n_max must be at least 1".into()));
    }
    let d = d as usize;
    let target = |to: usize| -> Option<usize> {
        if to <= n_max {
            Some(to)
        } else {
            match policy {
                BoundaryPolicy::Redirect => Some(n_max),
                BoundaryPolicy::Drop => None,
            }
        }
    };
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut row = GeneratorRow::default();
        let mut exit = 0.0;
        if n == 0 {
            if tau > 0.0 && d >= 1 {
                exit += tau;
                row.up = target(d).map(|to| (to, tau));
            }
        } else {
            let birth = n as f64 * lambda_event;
            // a jump of size 0, or one clipped back onto its own state, is no transition
            if d >= 1 && birth > 0.0 && n < n_max {
                exit += birth;
                row.up = target(n + d).map(|to| (to, birth));
            } else if d >= 1 && birth > 0.0 && policy == BoundaryPolicy::Drop {
                exit += birth;
            }
            let death = n as f64 * mu;
            if death > 0.0 {
                exit += death;
                row.down = Some((n - 1, death));
            }
        }
        row.diag = -exit;
        rows.push(row);
    }
    Ok(TruncatedGenerator {
        lambda_event,
        mu,
        tau,
        d: d as u32,
        n_max,
        policy,
        rows,
    })
}

impl TruncatedGenerator {
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn row(&self, n: usize) -> &GeneratorRow {
        &self.rows[n]
    }

    pub fn rows(&self) -> &[GeneratorRow] {
        &self.rows
    }

    /// Rate from `from` to `to`, including the diagonal.
    pub fn entry(&self, from: usize, to: usize) -> f64 {
        let row = &self.rows[from];
        let mut v = if from == to { row.diag } else { 0.0 };
        for (j, rate) in row.off_diagonal() {
            if j == to {
                v += rate;
            }
        }
        v
    }

    pub fn row_sum(&self, n: usize) -> f64 {
        let row = &self.rows[n];
        row.diag + row.off_diagonal().map(|(_, r)| r).sum::<f64>()
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.rows.iter().map(|r| r.exit_rate()).fold(0.0, f64::max)
    }

    /// Row-vector product `v * Q`.
    pub fn left_multiply(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        out.iter_mut().for_each(|x| *x = 0.0);
        for (n, row) in self.rows.iter().enumerate() {
            let p = v[n];
            if p == 0.0 {
                continue;
            }
            out[n] += p * row.diag;
            for (j, rate) in row.off_diagonal() {
                out[j] += p * rate;
            }
        }
    }

    /// Dense copy, for small desk checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let mut m = vec![vec![0.0; dim]; dim];
        for (n, row) in self.rows.iter().enumerate() {
            m[n][n] += row.diag;
            for (j, rate) in row.off_diagonal() {
                m[n][j] += rate;
            }
        }
        m
    }

    /// Sub-matrix with rows from level `i` and columns from level `j`.
    pub fn block_of(&self, part: &LevelPartition, i: usize, j: usize) -> Result<Vec<Vec<f64>>> {
        let rows = self.level_in_truncation(part, i)?;
        let cols = self.level_in_truncation(part, j)?;
        Ok(rows
            .map(|r| cols.clone().map(|c| self.entry(r, c)).collect())
            .collect())
    }

    fn level_in_truncation(&self, part: &LevelPartition, level: usize) -> Result<Range<usize>> {
        let range = part.level(level).ok_or(Error::BlockOutsideTruncation {
            level,
            last_state: part.upper_bound(),
            n_max: self.n_max,
        })?;
        let last_state = range.end - 1;
        if last_state > self.n_max as u64 {
            return Err(Error::BlockOutsideTruncation {
                level,
                last_state,
                n_max: self.n_max,
            });
        }
        Ok(range.start as usize..range.end as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_examples() {
        let p = build_levels(1, 1, 3).unwrap();
        assert_eq!(p.levels(), &[0..1, 1..2, 2..4, 4..8]);
        let p = build_levels(2, 1, 2).unwrap();
        assert_eq!(p.levels(), &[0..2, 2..4, 4..8]);
        let p = build_levels(1, 2, 2).unwrap();
        assert_eq!(p.levels(), &[0..1, 1..3, 3..9]);
        assert_eq!(p.level_of(5), Some(2));
        assert_eq!(p.level_of(9), None);
    }

    #[test]
    fn level_overflow() {
        assert_eq!(
            build_levels(1, 1, 64).unwrap_err(),
            Error::LevelOverflow { level: 63 }
        );
        assert!(build_levels(1, 1, 62).is_ok());
        assert!(build_levels(0, 1, 2).is_err());
        assert!(build_levels(1, 0, 2).is_err());
    }

    #[test]
    fn generator_row_example() {
        let g = build_generator(1.0, 1.0, 0.0, 1, 3, BoundaryPolicy::Redirect).unwrap();
        assert_eq!(g.entry(2, 3), 2.0);
        assert_eq!(g.entry(2, 1), 2.0);
        assert_eq!(g.entry(2, 2), -4.0);
        assert_eq!(g.entry(2, 0), 0.0);
    }

    #[test]
    fn redirect_clips_to_boundary() {
        let g = build_generator(0.5, 0.0, 0.0, 2, 10, BoundaryPolicy::Redirect).unwrap();
        assert_eq!(g.entry(9, 10), 4.5);
        assert_eq!(g.row_sum(9), 0.0);
        let g = build_generator(0.5, 0.0, 0.0, 2, 10, BoundaryPolicy::Drop).unwrap();
        assert_eq!(g.entry(9, 10), 0.0);
        assert_eq!(g.entry(9, 9), -4.5);
        assert_eq!(g.entry(8, 10), 4.0);
    }

    #[test]
    fn state_zero_absorbing_without_tau() {
        let g = build_generator(0.3, 0.7, 0.0, 2, 20, BoundaryPolicy::Redirect).unwrap();
        assert!((0..=20).all(|j| g.entry(0, j) == 0.0));
        let g = build_generator(0.3, 0.7, 0.25, 2, 20, BoundaryPolicy::Redirect).unwrap();
        assert_eq!(g.entry(0, 2), 0.25);
        assert_eq!(g.entry(0, 0), -0.25);
    }

    #[test]
    fn zero_batch_size_has_no_births() {
        let g = build_generator(0.5, 0.1, 0.3, 0, 5, BoundaryPolicy::Redirect).unwrap();
        for n in 0..=5 {
            assert!(g.row(n).up.is_none());
            assert_eq!(g.row_sum(n), 0.0);
        }
    }

    #[test]
    fn block_examples() {
        let lambda = 0.7;
        let g = build_generator(lambda, 0.4, 0.0, 1, 7, BoundaryPolicy::Redirect).unwrap();
        let p = build_levels(1, 1, 3).unwrap();
        let b23 = g.block_of(&p, 2, 3).unwrap();
        let nonzero: Vec<_> = b23
            .iter()
            .enumerate()
            .flat_map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(c, v)| (r, c, *v))
            })
            .collect();
        // state 3 (row 1 of L_2) -> state 4 (column 0 of L_3)
        assert_eq!(nonzero, vec![(1, 0, 3.0 * lambda)]);
        let b20 = g.block_of(&p, 2, 0).unwrap();
        assert!(b20.iter().flatten().all(|v| *v == 0.0));

        for i in 0..=3 {
            let diag = g.block_of(&p, i, i).unwrap();
            for (r, row) in diag.iter().enumerate() {
                let own: f64 = row.iter().sum();
                let other: f64 = (0..=3)
                    .filter(|&j| j != i)
                    .map(|j| g.block_of(&p, i, j).unwrap()[r].iter().sum::<f64>())
                    .sum();
                assert!((own + other).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_outside_truncation() {
        let g = build_generator(0.5, 0.5, 0.0, 1, 5, BoundaryPolicy::Redirect).unwrap();
        let p = build_levels(1, 1, 3).unwrap();
        assert!(g.block_of(&p, 2, 2).is_ok());
        assert!(matches!(
            g.block_of(&p, 2, 3),
            Err(Error::BlockOutsideTruncation { level: 3, .. })
        ));
        assert!(g.block_of(&p, 0, 7).is_err());
    }

    #[test]
    fn block_tridiagonal_and_conservative() {
        for k in 1..=3u64 {
            for d in 1..=2u32 {
                let p = build_levels(k, d, 4).unwrap();
                let n_max = p.upper_bound() as usize - 1;
                let g =
                    build_generator(0.37, 0.21, 0.05, d, n_max, BoundaryPolicy::Redirect).unwrap();
                for n in 0..=n_max {
                    assert!(g.row_sum(n).abs() < 1e-12);
                    let row = g.row(n);
                    assert!(row.diag <= 0.0);
                    assert!(row.up.is_none_or(|(_, r)| r >= 0.0));
                }
                for i in 0..p.levels().len() {
                    for j in 0..p.levels().len() {
                        if i.abs_diff(j) >= 2 {
                            let b = g.block_of(&p, i, j).unwrap();
                            assert!(
                                b.iter().flatten().all(|v| *v == 0.0),
                                "k={k} d={d} block ({i},{j})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn enlarging_truncation_only_touches_old_boundary_rows() {
        let small = build_generator(0.3, 0.2, 0.0, 2, 40, BoundaryPolicy::Redirect).unwrap();
        let large = build_generator(0.3, 0.2, 0.0, 2, 80, BoundaryPolicy::Redirect).unwrap();
        for n in 0..40 {
            let clipped = n + 2 > 40;
            for j in 0..=40 {
                if !clipped {
                    assert_eq!(small.entry(n, j), large.entry(n, j), "row {n} col {j}");
                }
            }
        }
    }
}
