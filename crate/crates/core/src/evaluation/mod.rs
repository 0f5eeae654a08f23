//! Ground truth from potential-outcome simulations, counterfactual reconstruction
//! and scoring.

mod figures;
mod table1;

pub use figures::{default_outcome, figure_data, write_event_path_csv, FigureData, FigureSeries};
pub use table1::{table1_run, table1_run_with_se, EventPathSet, ModelKind, PolicyScenario, Table1Report, Table1Row};

use serde::Serialize;

use crate::epidemic::{PotentialOutcomes, SimulationMode, Trajectory};
use crate::error::{Error, Result};
use crate::estimators::{did_estimator, predict_counterfactual, FitResult};
use crate::panel::{build_panel, CumulativeScale, Outcome, OutcomeKind, PanelDataset, PanelObservation, ZeroPolicy};
use crate::scenario::{draw_roster, simulate_roster, ExperimentDesign, RegionRoster};

/// Observed and untreated trajectories of every region, with matching panels.
/// The counterfactual panel keeps the observed treatment labels so that treated
/// region-periods line up row for row.
#[derive(Debug, Clone)]
pub struct TruthBundle {
    roster: RegionRoster,
    observed: Vec<Trajectory>,
    counterfactual: Vec<Trajectory>,
    observed_panel: PanelDataset,
    counterfactual_panel: PanelDataset,
}

impl TruthBundle {
    pub fn new(roster: RegionRoster, outcomes: Vec<PotentialOutcomes>) -> Result<Self> {
        let (observed, counterfactual): (Vec<Trajectory>, Vec<Trajectory>) = outcomes
            .into_iter()
            .map(|po| {
                let mut untreated = po.untreated;
                untreated.params.treat_time = po.treated.params.treat_time;
                (po.treated, untreated)
            })
            .unzip();
        let observed_panel = build_panel(&roster, &observed)?;
        let counterfactual_panel = build_panel(&roster, &counterfactual)?;
        Ok(Self { roster, observed, counterfactual, observed_panel, counterfactual_panel })
    }

    pub fn simulate(roster: RegionRoster, horizon: usize, mode: SimulationMode, master_seed: u64) -> Result<Self> {
        let outcomes = simulate_roster(&roster, horizon, mode, master_seed)?;
        Self::new(roster, outcomes)
    }

    pub fn from_design(design: &ExperimentDesign) -> Result<Self> {
        let roster = draw_roster(design)?;
        Self::simulate(roster, design.horizon, design.mode, design.master_seed)
    }

    pub fn roster(&self) -> &RegionRoster {
        &self.roster
    }

    pub fn observed(&self) -> &[Trajectory] {
        &self.observed
    }

    pub fn counterfactual(&self) -> &[Trajectory] {
        &self.counterfactual
    }

    pub fn observed_panel(&self) -> &PanelDataset {
        &self.observed_panel
    }

    pub fn counterfactual_panel(&self) -> &PanelDataset {
        &self.counterfactual_panel
    }

    fn outcome_panels(&self, outcome: Outcome) -> (PanelDataset, PanelDataset) {
        (self.observed_panel.apply_outcome(outcome), self.counterfactual_panel.apply_outcome(outcome))
    }
}

fn mean_effect(
    observed: &PanelDataset,
    counterfactual: &PanelDataset,
    include: impl Fn(&PanelObservation) -> bool,
) -> Option<f64> {
    let y1 = observed.outcome_values()?;
    let y0 = counterfactual.outcome_values()?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, obs) in observed.observations().iter().enumerate() {
        if let (true, Some(a), Some(b)) = (obs.treated && include(obs), y1[i], y0[i]) {
            sum += a - b;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mean of `Y_t(1) - Y_t(0)` over regions treated at `t`.
pub fn true_att(truth: &TruthBundle, outcome: Outcome, t: i64) -> Result<f64> {
    let (y1, y0) = truth.outcome_panels(outcome);
    mean_effect(&y1, &y0, |o| o.t == t)
        .ok_or_else(|| Error::Evaluation(format!("no treated region has a defined {outcome} outcome at period {t}")))
}

/// Mean effect `k` periods after adoption, over treated regions observed then.
pub fn true_att_event(truth: &TruthBundle, outcome: Outcome, k: i64) -> Result<f64> {
    let (y1, y0) = truth.outcome_panels(outcome);
    mean_effect(&y1, &y0, |o| o.rel_time == Some(k)).ok_or_else(|| {
        Error::Evaluation(format!("no treated region has a defined {outcome} outcome at event time {k}"))
    })
}

/// Mean effect over every treated region-period.
pub fn true_att_overall(truth: &TruthBundle, outcome: Outcome) -> Result<f64> {
    let (y1, y0) = truth.outcome_panels(outcome);
    mean_effect(&y1, &y0, |_| true).ok_or_else(|| Error::Evaluation("no treated region-period".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasPoint {
    pub t: i64,
    pub did: f64,
    pub att: f64,
    /// Differential untreated trend of treated and control regions since the base period.
    pub trend_gap: f64,
    /// `(did - att) - trend_gap`; zero up to rounding.
    pub residual: f64,
}

/// Checks `DID_t - ATT_t = E[Y_t(0) - Y_b(0) | D=1] - E[Y_t(0) - Y_b(0) | D=0]` for
/// every period from adoption on. The base `b` is the last period before the
/// common adoption date.
pub fn did_bias_identity(truth: &TruthBundle, outcome: Outcome) -> Result<Vec<BiasPoint>> {
    let (y1, y0) = truth.outcome_panels(outcome);
    let adoption =
        y1.regions().iter().find_map(|r| r.treat_time).ok_or_else(|| Error::Evaluation("no treated region".into()))?;
    let base = adoption - 1;
    let did = did_estimator(&y1, base)?;
    let gap = did_estimator(&y0, base)?;
    let mut points = Vec::new();
    for point in did.path.iter().filter(|p| p.t >= adoption) {
        let Some(trend_gap) = gap.at(point.t) else { continue };
        let Some(att) = mean_effect(&y1, &y0, |o| o.t == point.t) else { continue };
        points.push(BiasPoint {
            t: point.t,
            did: point.estimate,
            att,
            trend_gap,
            residual: (point.estimate - att) - trend_gap,
        });
    }
    Ok(points)
}

/// Cumulative-case path of one region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionPath {
    pub id: String,
    pub treat_time: Option<i64>,
    pub periods: Vec<i64>,
    pub cumulative: Vec<Option<f64>>,
}

/// Predicted untreated cumulative cases: observed before adoption and for
/// never-treated regions, reconstructed from the model afterwards.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualPaths {
    pub regions: Vec<RegionPath>,
}

impl CounterfactualPaths {
    /// Paths read off a panel's cumulative cases.
    pub fn from_panel(panel: &PanelDataset) -> Self {
        let observations = panel.observations();
        let regions = panel
            .region_spans()
            .into_iter()
            .zip(panel.regions())
            .map(|(span, info)| RegionPath {
                id: info.id.clone(),
                treat_time: info.treat_time,
                periods: observations[span.clone()].iter().map(|o| o.t).collect(),
                cumulative: observations[span].iter().map(|o| Some(o.cum_cases)).collect(),
            })
            .collect();
        Self { regions }
    }

    /// The reconstruction a perfect model would produce.
    pub fn oracle(truth: &TruthBundle) -> Self {
        Self::from_panel(truth.counterfactual_panel())
    }

    pub fn region(&self, id: &str) -> Option<&RegionPath> {
        self.regions.iter().find(|r| r.id == id)
    }
}

fn invert_log(value: f64, policy: ZeroPolicy) -> f64 {
    match policy {
        ZeroPolicy::Drop => value.exp(),
        ZeroPolicy::Offset => value.exp() - 1.0,
    }
}

/// Inverts the fitted outcome transform on the predicted untreated values.
///
/// Cumulative outcomes map back directly. Log outcomes give predicted new cases,
/// accumulated from the observed cumulative level just before adoption.
/// Delta-log outcomes are chained from the observed new cases just before
/// adoption.
pub fn reconstruct_counterfactual_cases(fit: &FitResult, panel: &PanelDataset) -> Result<CounterfactualPaths> {
    let outcome = fit
        .outcome
        .ok_or_else(|| Error::Evaluation("fit was made on a custom outcome with no known inverse".into()))?;
    let predicted = predict_counterfactual(fit, panel)?;
    let observed_outcome = match (outcome.kind, outcome.cumulative_scale) {
        (OutcomeKind::Cumulative, CumulativeScale::SumLog) => Some(panel.apply_outcome(outcome)),
        _ => None,
    };
    let observations = panel.observations();
    let mut paths = CounterfactualPaths::from_panel(panel);
    for (path, span) in paths.regions.iter_mut().zip(panel.region_spans()) {
        let Some(adoption) = path.treat_time else { continue };
        let rows = &observations[span.clone()];
        let Some(first) = rows.iter().position(|o| o.t >= adoption) else { continue };
        let population = panel.regions()[rows[0].region].population;
        let needs_anchor = !matches!(
            (outcome.kind, outcome.cumulative_scale),
            (OutcomeKind::Cumulative, CumulativeScale::Raw | CumulativeScale::PerCapita)
        );
        let anchor = (first > 0 && rows[first - 1].t == adoption - 1).then(|| first - 1);
        if needs_anchor && anchor.is_none() {
            return Err(Error::Evaluation(format!(
                "region `{}` has no observation at period {} to anchor its counterfactual",
                path.id,
                adoption - 1
            )));
        }
        // Running state of the chained reconstructions.
        let mut cumulative = anchor.map(|a| rows[a].cum_cases);
        let mut new_cases = anchor.map(|a| rows[a].new_cases);
        let mut level =
            anchor.and_then(|a| observed_outcome.as_ref().and_then(|p| p.outcome_values().unwrap()[span.start + a]));
        let mut previous_t = adoption - 1;
        for (j, row) in rows.iter().enumerate().skip(first) {
            let prediction = predicted[span.start + j];
            let consecutive = row.t == previous_t + 1;
            previous_t = row.t;
            let value = match (outcome.kind, outcome.cumulative_scale) {
                (OutcomeKind::Cumulative, CumulativeScale::Raw) => prediction,
                (OutcomeKind::Cumulative, CumulativeScale::PerCapita) => prediction.map(|p| p * population),
                (OutcomeKind::Cumulative, CumulativeScale::SumLog) => {
                    let step = match (consecutive, prediction, level) {
                        (true, Some(p), Some(l)) => Some(invert_log(p - l, outcome.zero_policy)),
                        _ => None,
                    };
                    level = prediction.filter(|_| step.is_some());
                    cumulative = cumulative.zip(step).map(|(c, s)| c + s);
                    cumulative
                }
                (OutcomeKind::Log, _) => {
                    let step = prediction.filter(|_| consecutive).map(|p| invert_log(p, outcome.zero_policy));
                    cumulative = cumulative.zip(step).map(|(c, s)| c + s);
                    cumulative
                }
                (OutcomeKind::DeltaLog, _) => {
                    new_cases = match (consecutive, prediction, new_cases) {
                        (true, Some(p), Some(c)) => Some(match outcome.zero_policy {
                            ZeroPolicy::Drop => c * p.exp(),
                            ZeroPolicy::Offset => (c + 1.0) * p.exp() - 1.0,
                        }),
                        _ => None,
                    };
                    cumulative = cumulative.zip(new_cases).map(|(c, s)| c + s);
                    cumulative
                }
            };
            path.cumulative[j] = value;
        }
    }
    Ok(paths)
}

/// Root mean squared difference from `reference`'s cumulative cases over treated
/// regions and periods from adoption on.
pub fn rmse_against(paths: &CounterfactualPaths, reference: &PanelDataset) -> Result<f64> {
    let reference_paths = CounterfactualPaths::from_panel(reference);
    let (mut sum, mut n) = (0.0, 0usize);
    for path in &paths.regions {
        let Some(adoption) = path.treat_time else { continue };
        let Some(truth) = reference_paths.region(&path.id) else {
            return Err(Error::Evaluation(format!("region `{}` is missing from the reference", path.id)));
        };
        for (t, value) in path.periods.iter().zip(&path.cumulative) {
            if *t < adoption {
                continue;
            }
            let Some(value) = value else { continue };
            let Some(k) = truth.periods.iter().position(|s| s == t) else { continue };
            if let Some(target) = truth.cumulative[k] {
                sum += (value - target).powi(2);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Evaluation("no treated region-period to evaluate".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// RMSE of a reconstruction against the true untreated cumulative cases.
pub fn counterfactual_rmse(paths: &CounterfactualPaths, truth: &TruthBundle) -> Result<f64> {
    rmse_against(paths, truth.counterfactual_panel())
}

#[cfg(test)]
mod tests;
