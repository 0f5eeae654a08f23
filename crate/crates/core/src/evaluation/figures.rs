//! Plot data for the four illustrative two- and three-region scenarios.

use std::io::Write;

use super::{reconstruct_counterfactual_cases, TruthBundle};
use crate::epidemic::SimulationMode;
use crate::error::Result;
use crate::estimators::{twfe_fit, EventPoint, FitResult, RegressionSpec, SeKind};
use crate::panel::{Outcome, PanelDataset};
use crate::scenario::{figure_scenario, Figure};

/// One named series of one region, in long format.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureSeries {
    pub region_id: String,
    pub series: String,
    pub t: Vec<i64>,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct FigureData {
    pub figure: Figure,
    pub truth: TruthBundle,
    pub outcome: Option<Outcome>,
    pub fit: Option<FitResult>,
    pub series: Vec<FigureSeries>,
}

/// Outcome a figure is drawn on unless overridden.
pub fn default_outcome(figure: Figure) -> Option<Outcome> {
    match figure {
        Figure::Fig1 => None,
        Figure::Fig2 | Figure::Fig3 => Some(Outcome::log()),
        Figure::Fig4 => Some(Outcome::cumulative()),
    }
}

fn per_region(panel: &PanelDataset, name: &str, values: &[Option<f64>]) -> Vec<FigureSeries> {
    let observations = panel.observations();
    panel
        .region_spans()
        .into_iter()
        .zip(panel.regions())
        .map(|(span, info)| FigureSeries {
            region_id: info.id.clone(),
            series: name.to_string(),
            t: observations[span.clone()].iter().map(|o| o.t).collect(),
            values: values[span].to_vec(),
        })
        .collect()
}

/// Simulates a figure scenario and fits the model the figure illustrates:
/// an event study for fig2, fixed effects alone for fig3 and a constant effect
/// for fig4. `outcome` overrides the figure's dependent variable.
pub fn figure_data(figure: Figure, outcome: Option<Outcome>, se_kind: SeKind) -> Result<FigureData> {
    let scenario = figure_scenario(figure);
    let truth = TruthBundle::simulate(scenario.roster, scenario.horizon, SimulationMode::Deterministic, 0)?;
    let observed = truth.observed_panel();
    let counterfactual = truth.counterfactual_panel();
    let outcome = match figure {
        Figure::Fig1 => None,
        _ => outcome.or(default_outcome(figure)),
    };

    let column = |panel: &PanelDataset, f: fn(&crate::panel::PanelObservation) -> f64| -> Vec<Option<f64>> {
        panel.observations().iter().map(|o| Some(f(o))).collect()
    };
    let mut series = Vec::new();
    series.extend(per_region(observed, "new_cases", &column(observed, |o| o.new_cases)));
    series.extend(per_region(observed, "cum_cases", &column(observed, |o| o.cum_cases)));
    series.extend(per_region(counterfactual, "untreated_new_cases", &column(counterfactual, |o| o.new_cases)));
    series.extend(per_region(counterfactual, "untreated_cum_cases", &column(counterfactual, |o| o.cum_cases)));
    if figure == Figure::Fig2 {
        for extra in [Outcome::log(), Outcome::delta_log()] {
            let panel = observed.apply_outcome(extra);
            series.extend(per_region(observed, &format!("y_{}", extra.label()), panel.outcome_values().unwrap()));
        }
    }

    let spec = match figure {
        Figure::Fig1 => None,
        Figure::Fig2 => Some(RegressionSpec::dynamic()),
        Figure::Fig3 => Some(RegressionSpec::fixed_effects_only()),
        Figure::Fig4 => Some(RegressionSpec::constant()),
    };
    let fit = match (spec, outcome) {
        (Some(spec), Some(outcome)) => Some(twfe_fit(observed, &spec.with_outcome(outcome).with_se(se_kind))?),
        _ => None,
    };
    if let (Some(fit), Some(outcome)) = (&fit, outcome) {
        let panel = observed.apply_outcome(outcome);
        if figure != Figure::Fig2 {
            series.extend(per_region(observed, &format!("y_{}", outcome.label()), panel.outcome_values().unwrap()));
        }
        let mut fitted = vec![None; observed.len()];
        for (m, &row) in fit.observation_index.iter().enumerate() {
            fitted[row] = Some(fit.fitted[m]);
        }
        series.extend(per_region(observed, &format!("fitted_{}", outcome.label()), &fitted));
        if figure == Figure::Fig4 {
            let paths = reconstruct_counterfactual_cases(fit, observed)?;
            for path in paths.regions {
                series.push(FigureSeries {
                    region_id: path.id,
                    series: "predicted_untreated_cum_cases".into(),
                    t: path.periods,
                    values: path.cumulative,
                });
            }
        }
    }
    Ok(FigureData { figure, truth, outcome, fit, series })
}

impl FigureData {
    pub fn series(&self, region_id: &str, name: &str) -> Option<&FigureSeries> {
        self.series.iter().find(|s| s.region_id == region_id && s.series == name)
    }

    pub fn event_path(&self) -> Option<Vec<EventPoint>> {
        self.fit.as_ref().filter(|f| f.reference_period.is_some()).map(|f| f.event_path())
    }

    /// Long-format CSV: `figure, region_id, t, series, value` (empty value when undefined).
    pub fn write_series_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["figure", "region_id", "t", "series", "value"])?;
        for s in &self.series {
            for (t, v) in s.t.iter().zip(&s.values) {
                csv.write_record([
                    self.figure.name(),
                    &s.region_id,
                    &t.to_string(),
                    &s.series,
                    &v.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    }
}

/// Writes an event-study path with 95% bounds.
pub fn write_event_path_csv<W: Write>(points: &[EventPoint], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["rel_time", "estimate", "se", "ci_low", "ci_high"])?;
    for p in points {
        csv.write_record([
            p.rel_time.to_string(),
            p.estimate.to_string(),
            p.se.to_string(),
            p.ci_low.to_string(),
            p.ci_high.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
