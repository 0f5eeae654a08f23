//! Timing-group descriptive statistics: mean windowed growth and mean cumulative
//! cases per 10,000 inhabitants, by adoption cohort.

use serde::{Deserialize, Serialize};

use super::PanelDataset;
use crate::error::{Error, Result};

/// Series whose log growth is summarised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthBase {
    #[default]
    NewCases,
    CumulativeCases,
}

/// Adoption cohorts `[b0, b1), [b1, b2), ...` plus a never-treated group.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingGroups {
    bounds: Vec<i64>,
}

impl TimingGroups {
    pub fn from_bounds(bounds: &[i64]) -> Result<Self> {
        if bounds.len() < 2 || bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("group bounds need at least two strictly increasing periods".into()));
        }
        Ok(Self { bounds: bounds.to_vec() })
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.bounds.windows(2).map(|w| format!("[{},{})", w[0], w[1])).collect();
        labels.push("never".into());
        labels
    }

    /// Group index of a treatment date; the never group is last. Dates outside every
    /// cohort return `None`.
    fn group_of(&self, treat_time: Option<i64>) -> Option<usize> {
        match treat_time {
            None => Some(self.bounds.len() - 1),
            Some(t) => self.bounds.windows(2).position(|w| t >= w[0] && t < w[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub label: String,
    pub n_regions: usize,
    /// Regions contributing a defined growth rate.
    pub n_growth: usize,
    /// `None` when no region in the group has a defined value.
    pub mean_growth: Option<f64>,
    pub mean_cumulative_per_10k: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-cohort means of `log X_at - log X_(at - window)` and of cumulative cases per
/// 10,000 inhabitants at `at`.
pub fn timing_group_summary(
    panel: &PanelDataset,
    groups: &TimingGroups,
    at: i64,
    window: i64,
    base: GrowthBase,
) -> Result<Vec<GroupSummary>> {
    if window < 1 {
        return Err(Error::InvalidParameter("growth window must be at least one period".into()));
    }
    let n_groups = groups.bounds.len();
    let mut members = vec![0usize; n_groups];
    let mut growth: Vec<Vec<f64>> = vec![Vec::new(); n_groups];
    let mut cumulative: Vec<Vec<f64>> = vec![Vec::new(); n_groups];
    let spans = panel.region_spans();
    for (index, region) in panel.regions().iter().enumerate() {
        let Some(group) = groups.group_of(region.treat_time) else {
            continue;
        };
        members[group] += 1;
        let rows = &panel.observations()[spans[index].clone()];
        let find = |t: i64| rows.iter().find(|o| o.t == t);
        let value = |t: i64| {
            find(t).map(|o| match base {
                GrowthBase::NewCases => o.new_cases,
                GrowthBase::CumulativeCases => o.cum_cases,
            })
        };
        if let (Some(now), Some(then)) = (value(at), value(at - window)) {
            if now > 0.0 && then > 0.0 {
                growth[group].push(now.ln() - then.ln());
            }
        }
        if let Some(obs) = find(at) {
            cumulative[group].push(obs.cum_cases / region.population * 10_000.0);
        }
    }
    Ok(groups
        .labels()
        .into_iter()
        .enumerate()
        .map(|(g, label)| GroupSummary {
            label,
            n_regions: members[g],
            n_growth: growth[g].len(),
            mean_growth: mean(&growth[g]),
            mean_cumulative_per_10k: mean(&cumulative[g]),
        })
        .collect())
}
