//! Two-way within transformation (removal of unit and period means).

use crate::error::{Error, Result};

/// Convergence tolerance for alternating projections, relative to the largest
/// absolute input value.
pub const DEMEAN_TOLERANCE: f64 = 1e-12;
pub const DEMEAN_MAX_ITERATIONS: usize = 10_000;

/// Group and period membership of the observations entering a regression.
#[derive(Debug, Clone)]
pub struct TwoWayIndex {
    groups: Vec<usize>,
    periods: Vec<usize>,
    n_groups: usize,
    n_periods: usize,
    group_counts: Vec<f64>,
    period_counts: Vec<f64>,
    balanced: bool,
}

fn compress(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let codes = labels.iter().map(|l| distinct.binary_search(l).unwrap()).collect();
    (codes, distinct.len())
}

impl TwoWayIndex {
    /// Labels may be arbitrary indices; they are compressed to consecutive codes.
    pub fn new(groups: &[usize], periods: &[usize]) -> Self {
        assert_eq!(groups.len(), periods.len());
        let (groups, n_groups) = compress(groups);
        let (periods, n_periods) = compress(periods);
        let mut group_counts = vec![0.0; n_groups];
        let mut period_counts = vec![0.0; n_periods];
        let mut seen = vec![false; n_groups * n_periods];
        let mut duplicate = false;
        for (&g, &t) in groups.iter().zip(&periods) {
            group_counts[g] += 1.0;
            period_counts[t] += 1.0;
            duplicate |= std::mem::replace(&mut seen[g * n_periods + t], true);
        }
        let balanced = !duplicate && groups.len() == n_groups * n_periods;
        Self { groups, periods, n_groups, n_periods, group_counts, period_counts, balanced }
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    /// Consecutive group code of each observation.
    pub fn group_codes(&self) -> &[usize] {
        &self.groups
    }

    fn means(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g_sum = vec![0.0; self.n_groups];
        let mut t_sum = vec![0.0; self.n_periods];
        for ((&g, &t), v) in self.groups.iter().zip(&self.periods).zip(x) {
            g_sum[g] += v;
            t_sum[t] += v;
        }
        g_sum.iter_mut().zip(&self.group_counts).for_each(|(s, c)| *s /= c);
        t_sum.iter_mut().zip(&self.period_counts).for_each(|(s, c)| *s /= c);
        (g_sum, t_sum)
    }

    /// Residual of `x` after projecting out group and period effects.
    pub fn demean(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.balanced {
            let (g_mean, t_mean) = self.means(x);
            let grand = x.iter().sum::<f64>() / x.len() as f64;
            return Ok(x
                .iter()
                .zip(self.groups.iter().zip(&self.periods))
                .map(|(v, (&g, &t))| v - g_mean[g] - t_mean[t] + grand)
                .collect());
        }
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(x.to_vec());
        }
        let threshold = DEMEAN_TOLERANCE * scale;
        let mut out = x.to_vec();
        let mut change = f64::INFINITY;
        for _ in 0..DEMEAN_MAX_ITERATIONS {
            change = 0.0;
            let mut g_sum = vec![0.0; self.n_groups];
            for (&g, v) in self.groups.iter().zip(&out) {
                g_sum[g] += v;
            }
            for (s, c) in g_sum.iter_mut().zip(&self.group_counts) {
                *s /= c;
                change = change.max(s.abs());
            }
            out.iter_mut().zip(&self.groups).for_each(|(v, &g)| *v -= g_sum[g]);
            let mut t_sum = vec![0.0; self.n_periods];
            for (&t, v) in self.periods.iter().zip(&out) {
                t_sum[t] += v;
            }
            for (s, c) in t_sum.iter_mut().zip(&self.period_counts) {
                *s /= c;
                change = change.max(s.abs());
            }
            out.iter_mut().zip(&self.periods).for_each(|(v, &t)| *v -= t_sum[t]);
            if change <= threshold {
                return Ok(out);
            }
        }
        Err(Error::DemeanNotConverged { iterations: DEMEAN_MAX_ITERATIONS, change })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(g: usize, t: usize) -> (Vec<usize>, Vec<usize>) {
        let groups = (0..g).flat_map(|i| std::iter::repeat_n(i, t)).collect();
        let periods = (0..g).flat_map(|_| 0..t).collect();
        (groups, periods)
    }

    fn max_means(index: &TwoWayIndex, x: &[f64]) -> f64 {
        let (g, t) = index.means(x);
        g.iter().chain(&t).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn additive_effects_vanish() {
        let (groups, periods) = grid(4, 5);
        let x: Vec<f64> = groups.iter().zip(&periods).map(|(&g, &t)| 3.0 * g as f64 - 0.5 * (t * t) as f64).collect();
        let index = TwoWayIndex::new(&groups, &periods);
        assert!(index.is_balanced());
        assert!(index.demean(&x).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn unbalanced_matches_balanced_limit() {
        let (mut groups, mut periods) = grid(4, 6);
        groups.remove(7);
        periods.remove(7);
        let x: Vec<f64> = (0..groups.len()).map(|i| ((i * 37) % 11) as f64 - 4.0).collect();
        let index = TwoWayIndex::new(&groups, &periods);
        assert!(!index.is_balanced());
        let out = index.demean(&x).unwrap();
        assert!(max_means(&index, &out) < 1e-10);
    }

    proptest! {
        #[test]
        fn demeaning_is_idempotent(values in proptest::collection::vec(-100.0f64..100.0, 12), drop in 0usize..12) {
            let (mut groups, mut periods) = grid(3, 4);
            let mut x = values.clone();
            for balanced in [true, false] {
                if !balanced {
                    groups.remove(drop);
                    periods.remove(drop);
                    x.remove(drop);
                }
                let index = TwoWayIndex::new(&groups, &periods);
                let once = index.demean(&x).unwrap();
                let twice = index.demean(&once).unwrap();
                for (a, b) in once.iter().zip(&twice) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
                prop_assert!(max_means(&index, &once) < 1e-9);
            }
        }
    }
}
