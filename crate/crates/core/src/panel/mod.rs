//! Long-format region × period panels.
//!
//! A [`PanelDataset`] holds one row per (region, period), sorted by region and
//! then period, with raw case counts and treatment status. Dependent variables
//! are attached with [`PanelDataset::apply_outcome`], which always returns a new
//! dataset.

mod io;
mod summary;

pub use io::{export_csv, ingest_csv, read_csv, write_csv, IngestOptions, Ingested};
pub use summary::{timing_group_summary, GroupSummary, GrowthBase, TimingGroups};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::epidemic::Trajectory;
use crate::error::{Error, Result};
use crate::scenario::RegionRoster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Cumulative,
    Log,
    DeltaLog,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 3] = [OutcomeKind::Cumulative, OutcomeKind::Log, OutcomeKind::DeltaLog];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeKind::Cumulative => "cumulative",
            OutcomeKind::Log => "log",
            OutcomeKind::DeltaLog => "delta_log",
        }
    }

    /// Row label used in the simulation table.
    pub fn display_name(self) -> &'static str {
        match self {
            OutcomeKind::Cumulative => "Cumulative",
            OutcomeKind::Log => "Log",
            OutcomeKind::DeltaLog => "Delta Log",
        }
    }
}

impl std::str::FromStr for OutcomeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cumulative" => Ok(OutcomeKind::Cumulative),
            "log" => Ok(OutcomeKind::Log),
            "delta_log" | "delta-log" => Ok(OutcomeKind::DeltaLog),
            other => Err(Error::InvalidParameter(format!(
                "unknown outcome kind `{other}` (expected cumulative|log|delta-log)"
            ))),
        }
    }
}

/// What to do with log transforms of non-positive case counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPolicy {
    /// Leave the outcome missing.
    #[default]
    Drop,
    /// Use `log(C + 1)`.
    Offset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CumulativeScale {
    /// Running sum of new cases.
    #[default]
    Raw,
    /// Running sum divided by the region's population.
    PerCapita,
    /// Running sum of `log C`.
    SumLog,
}

/// A dependent-variable definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub zero_policy: ZeroPolicy,
    pub cumulative_scale: CumulativeScale,
}

impl Outcome {
    pub fn new(kind: OutcomeKind) -> Self {
        Self { kind, zero_policy: ZeroPolicy::Drop, cumulative_scale: CumulativeScale::Raw }
    }

    pub fn with_zero_policy(mut self, policy: ZeroPolicy) -> Self {
        self.zero_policy = policy;
        self.normalized()
    }

    pub fn with_cumulative_scale(mut self, scale: CumulativeScale) -> Self {
        self.cumulative_scale = scale;
        self.normalized()
    }

    pub fn cumulative() -> Self {
        Self::new(OutcomeKind::Cumulative)
    }

    pub fn cumulative_per_capita() -> Self {
        Self::cumulative().with_cumulative_scale(CumulativeScale::PerCapita)
    }

    pub fn log() -> Self {
        Self::new(OutcomeKind::Log)
    }

    pub fn delta_log() -> Self {
        Self::new(OutcomeKind::DeltaLog)
    }

    // Options that do not affect the transform are reset so equal transforms compare equal.
    fn normalized(mut self) -> Self {
        let uses_logs = match self.kind {
            OutcomeKind::Cumulative => self.cumulative_scale == CumulativeScale::SumLog,
            _ => true,
        };
        if !uses_logs {
            self.zero_policy = ZeroPolicy::Drop;
        }
        if self.kind != OutcomeKind::Cumulative {
            self.cumulative_scale = CumulativeScale::Raw;
        }
        self
    }

    /// Stable label, also used for the `y_<label>` CSV column.
    pub fn label(&self) -> String {
        let mut label = self.kind.name().to_string();
        if self.kind == OutcomeKind::Cumulative {
            match self.cumulative_scale {
                CumulativeScale::Raw => {}
                CumulativeScale::PerCapita => label.push_str("_per_capita"),
                CumulativeScale::SumLog => label.push_str("_sum_log"),
            }
        }
        if self.zero_policy == ZeroPolicy::Offset {
            label.push_str("_offset");
        }
        label
    }

    pub fn from_label(label: &str) -> Result<Self> {
        let (base, policy) = match label.strip_suffix("_offset") {
            Some(base) => (base, ZeroPolicy::Offset),
            None => (label, ZeroPolicy::Drop),
        };
        let outcome = match base {
            "cumulative" => Outcome::cumulative(),
            "cumulative_per_capita" => Outcome::cumulative_per_capita(),
            "cumulative_sum_log" => Outcome::cumulative().with_cumulative_scale(CumulativeScale::SumLog),
            "log" => Outcome::log(),
            "delta_log" => Outcome::delta_log(),
            _ => return Err(Error::Schema(format!("unknown outcome label `{label}`"))),
        };
        Ok(outcome.with_zero_policy(policy))
    }

    /// Whether a region's outcome is defined once its cases are known; log outcomes
    /// are undefined for zero counts under the drop policy.
    fn log_of(&self, cases: f64) -> Option<f64> {
        match self.zero_policy {
            ZeroPolicy::Drop if cases > 0.0 => Some(cases.ln()),
            ZeroPolicy::Drop => None,
            ZeroPolicy::Offset => Some((cases + 1.0).ln()),
        }
    }

    /// Transforms one region's series. `periods` must be sorted; `delta_log` needs the
    /// immediately preceding period to be present.
    pub fn transform(
        &self,
        periods: &[i64],
        new_cases: &[f64],
        cum_cases: &[f64],
        population: f64,
    ) -> Vec<Option<f64>> {
        match self.kind {
            OutcomeKind::Cumulative => match self.cumulative_scale {
                CumulativeScale::Raw => cum_cases.iter().map(|&c| Some(c)).collect(),
                CumulativeScale::PerCapita => cum_cases.iter().map(|&c| Some(c / population)).collect(),
                CumulativeScale::SumLog => {
                    let mut acc = Some(0.0);
                    new_cases
                        .iter()
                        .map(|&c| {
                            acc = acc.and_then(|a| self.log_of(c).map(|l| a + l));
                            acc
                        })
                        .collect()
                }
            },
            OutcomeKind::Log => new_cases.iter().map(|&c| self.log_of(c)).collect(),
            OutcomeKind::DeltaLog => (0..new_cases.len())
                .map(|j| {
                    if j == 0 || periods[j - 1] != periods[j] - 1 {
                        return None;
                    }
                    Some(self.log_of(new_cases[j])? - self.log_of(new_cases[j - 1])?)
                })
                .collect(),
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionInfo {
    pub id: String,
    pub population: f64,
    /// First treated period; `None` for never treated.
    pub treat_time: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelObservation {
    /// Index into [`PanelDataset::regions`].
    pub region: usize,
    pub t: i64,
    pub new_cases: f64,
    pub cum_cases: f64,
    pub treated: bool,
    /// `t - treat_time`; `None` for never-treated regions.
    pub rel_time: Option<i64>,
}

/// Input row for [`PanelDataset::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRow {
    pub region: usize,
    pub t: i64,
    pub new_cases: f64,
    pub cum_cases: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    regions: Vec<RegionInfo>,
    periods: Vec<i64>,
    observations: Vec<PanelObservation>,
    outcome: Option<Outcome>,
    outcome_values: Option<Vec<Option<f64>>>,
    covariates: Vec<(String, Vec<Option<f64>>)>,
}

impl PanelDataset {
    /// Builds a panel from raw rows. Rows are sorted by region then period; a
    /// missing (region, period) cell is an error unless `allow_unbalanced`.
    pub fn new(regions: Vec<RegionInfo>, mut rows: Vec<RawRow>, allow_unbalanced: bool) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::Panel("panel has no regions".into()));
        }
        let mut ids = BTreeSet::new();
        for region in &regions {
            if !ids.insert(region.id.as_str()) {
                return Err(Error::Panel(format!("duplicate region id `{}`", region.id)));
            }
            if !(region.population.is_finite() && region.population > 0.0) {
                return Err(Error::Panel(format!(
                    "region `{}` has non-positive population {}",
                    region.id, region.population
                )));
            }
        }
        rows.sort_by_key(|r| (r.region, r.t));
        for pair in rows.windows(2) {
            if pair[0].region == pair[1].region && pair[0].t == pair[1].t {
                return Err(Error::Panel(format!(
                    "duplicate cell: region {}, period {}",
                    regions[pair[0].region].id, pair[0].t
                )));
            }
        }
        let mut previous_cum: Option<(usize, f64)> = None;
        for row in &rows {
            if row.region >= regions.len() {
                return Err(Error::Panel(format!("row references unknown region index {}", row.region)));
            }
            if !(row.new_cases.is_finite() && row.new_cases >= 0.0 && row.cum_cases.is_finite()) {
                return Err(Error::Panel(format!(
                    "invalid case counts at region {}, period {}",
                    regions[row.region].id, row.t
                )));
            }
            if let Some((region, cum)) = previous_cum {
                if region == row.region && row.cum_cases < cum {
                    return Err(Error::Panel(format!(
                        "cumulative cases decrease at region {}, period {}",
                        regions[row.region].id, row.t
                    )));
                }
            }
            previous_cum = Some((row.region, row.cum_cases));
        }
        let periods: Vec<i64> = rows.iter().map(|r| r.t).collect::<BTreeSet<_>>().into_iter().collect();
        if !allow_unbalanced && rows.len() != regions.len() * periods.len() {
            let present: BTreeSet<(usize, i64)> = rows.iter().map(|r| (r.region, r.t)).collect();
            for (index, region) in regions.iter().enumerate() {
                for &t in &periods {
                    if !present.contains(&(index, t)) {
                        return Err(Error::MissingCell { region: region.id.clone(), period: t });
                    }
                }
            }
        }
        let observations = rows
            .iter()
            .map(|row| {
                let treat_time = regions[row.region].treat_time;
                PanelObservation {
                    region: row.region,
                    t: row.t,
                    new_cases: row.new_cases,
                    cum_cases: row.cum_cases,
                    treated: treat_time.is_some_and(|start| row.t >= start),
                    rel_time: treat_time.map(|start| row.t - start),
                }
            })
            .collect();
        Ok(Self { regions, periods, observations, outcome: None, outcome_values: None, covariates: Vec::new() })
    }

    /// Balanced panel whose outcome is given directly, one row of values per
    /// region. Case counts are zero; useful for estimator checks on constructed data.
    pub fn from_outcome_grid(regions: Vec<RegionInfo>, periods: &[i64], values: &[Vec<f64>]) -> Result<Self> {
        if values.len() != regions.len() || values.iter().any(|row| row.len() != periods.len()) {
            return Err(Error::Panel("outcome grid does not match regions × periods".into()));
        }
        let rows = (0..regions.len())
            .flat_map(|region| periods.iter().map(move |&t| RawRow { region, t, new_cases: 0.0, cum_cases: 0.0 }))
            .collect();
        let panel = Self::new(regions, rows, false)?;
        // Rows are region-major and periods sorted, so the grid can be read in order
        // once periods are sorted the same way.
        let mut order: Vec<usize> = (0..periods.len()).collect();
        order.sort_by_key(|&j| periods[j]);
        let flat = values.iter().flat_map(|row| order.iter().map(move |&j| Some(row[j]))).collect();
        panel.with_custom_outcome(flat)
    }

    pub fn regions(&self) -> &[RegionInfo] {
        &self.regions
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn observations(&self) -> &[PanelObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn region_id(&self, obs: &PanelObservation) -> &str {
        &self.regions[obs.region].id
    }

    pub fn is_balanced(&self) -> bool {
        self.observations.len() == self.regions.len() * self.periods.len()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn outcome_values(&self) -> Option<&[Option<f64>]> {
        self.outcome_values.as_deref()
    }

    pub fn covariates(&self) -> &[(String, Vec<Option<f64>>)] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Option<&[Option<f64>]> {
        self.covariates.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Index ranges of each region's rows.
    pub fn region_spans(&self) -> Vec<std::ops::Range<usize>> {
        let mut spans = vec![0..0; self.regions.len()];
        let mut start = 0;
        while start < self.observations.len() {
            let region = self.observations[start].region;
            let mut end = start;
            while end < self.observations.len() && self.observations[end].region == region {
                end += 1;
            }
            spans[region] = start..end;
            start = end;
        }
        spans
    }

    /// Sets outcome values that do not come from a known transform.
    pub fn with_custom_outcome(mut self, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != self.observations.len() {
            return Err(Error::Panel(format!(
                "outcome has {} values for {} observations",
                values.len(),
                self.observations.len()
            )));
        }
        self.outcome = None;
        self.outcome_values = Some(values);
        Ok(self)
    }

    pub fn with_covariate(mut self, name: &str, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != self.observations.len() {
            return Err(Error::Panel(format!("covariate `{name}` has the wrong length")));
        }
        let reserved = ["region_id", "t", "new_cases", "cum_cases", "population", "treat_time", "treated"];
        if name.is_empty() || name.starts_with("y_") || name == "y" || reserved.contains(&name) {
            return Err(Error::Panel(format!("`{name}` is not a valid covariate name")));
        }
        self.covariates.retain(|(n, _)| n != name);
        self.covariates.push((name.to_string(), values));
        Ok(self)
    }

    /// Returns a copy carrying the requested dependent variable.
    pub fn apply_outcome(&self, outcome: Outcome) -> PanelDataset {
        let outcome = outcome.normalized();
        let mut values = vec![None; self.observations.len()];
        for span in self.region_spans() {
            let rows = &self.observations[span.clone()];
            if rows.is_empty() {
                continue;
            }
            let periods: Vec<i64> = rows.iter().map(|o| o.t).collect();
            let new_cases: Vec<f64> = rows.iter().map(|o| o.new_cases).collect();
            let cum: Vec<f64> = rows.iter().map(|o| o.cum_cases).collect();
            let population = self.regions[rows[0].region].population;
            let series = outcome.transform(&periods, &new_cases, &cum, population);
            values[span].copy_from_slice(&series);
        }
        PanelDataset { outcome: Some(outcome), outcome_values: Some(values), ..self.clone() }
    }

    /// Parses an outcome from its label and applies it.
    pub fn apply_outcome_label(&self, label: &str) -> Result<PanelDataset> {
        Ok(self.apply_outcome(Outcome::from_label(label)?))
    }

    /// Regions whose treatment date is set, keyed by id.
    pub fn treat_times(&self) -> HashMap<&str, Option<i64>> {
        self.regions.iter().map(|r| (r.id.as_str(), r.treat_time)).collect()
    }
}

/// Assembles a balanced panel from simulated trajectories, one per roster region.
pub fn build_panel(roster: &RegionRoster, trajectories: &[Trajectory]) -> Result<PanelDataset> {
    if roster.len() != trajectories.len() {
        return Err(Error::Panel(format!("{} trajectories for {} regions", trajectories.len(), roster.len())));
    }
    roster.validate().map_err(|e| Error::Panel(e.to_string()))?;
    let horizon = trajectories.first().map(|t| t.horizon).unwrap_or(0);
    if trajectories.iter().any(|t| t.horizon != horizon || t.states.len() != horizon + 1) {
        return Err(Error::Panel("trajectories have mismatched horizons".into()));
    }
    let regions = roster
        .regions
        .iter()
        .zip(trajectories)
        .map(|(region, traj)| RegionInfo {
            id: region.id.clone(),
            population: traj.params.population,
            treat_time: traj.params.treat_time.map(|t| t as i64),
        })
        .collect();
    let mut rows = Vec::with_capacity(trajectories.len() * (horizon + 1));
    for (index, traj) in trajectories.iter().enumerate() {
        let cum = traj.cumulative_cases();
        for (t, state) in traj.states.iter().enumerate() {
            rows.push(RawRow { region: index, t: t as i64, new_cases: state.new_cases, cum_cases: cum[t] });
        }
    }
    PanelDataset::new(regions, rows, false)
}
