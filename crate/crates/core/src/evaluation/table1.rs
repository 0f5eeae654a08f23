//! The simulation table: two policy scenarios × two models × three dependent
//! variables, each with estimate, standard error and counterfactual RMSE.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    counterfactual_rmse, reconstruct_counterfactual_cases, rmse_against, true_att_event, true_att_overall, TruthBundle,
};
use crate::epidemic::SimulationMode;
use crate::error::{Error, Result};
use crate::estimators::{twfe_fit, EventPoint, RegressionSpec, SeKind};
use crate::panel::{Outcome, OutcomeKind};
use crate::scenario::{draw_roster, ExperimentDesign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    /// Constant-effect two-way fixed effects.
    Did,
    EventStudy,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Did, ModelKind::EventStudy];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Did => "DID",
            ModelKind::EventStudy => "Event Study",
        }
    }

    fn spec(self) -> RegressionSpec {
        match self {
            ModelKind::Did => RegressionSpec::constant(),
            ModelKind::EventStudy => RegressionSpec::dynamic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyScenario {
    pub name: String,
    pub tau: f64,
}

impl PolicyScenario {
    pub fn new(tau: f64) -> Self {
        let change = (tau.exp() - 1.0) * 100.0;
        let kind = if tau < 0.0 { "Efficient" } else { "Inefficient" };
        // Avoid printing "-0%".
        let change = if change.abs() < 0.5 { 0.0 } else { change };
        Self { name: format!("{kind} ({change:.0}%)"), tau }
    }

    pub fn is_effective(&self) -> bool {
        self.tau != 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub policy: PolicyScenario,
    pub model: ModelKind,
    pub outcome: OutcomeKind,
    /// Treatment coefficient, or the on-impact (`k = 0`) coefficient of the event study.
    pub estimate: f64,
    /// Standard error of the requested kind.
    pub se: f64,
    pub se_classical: f64,
    pub se_cluster: f64,
    /// Simulated effect the estimate targets: mean over treated region-periods for
    /// the constant-effect model, mean at adoption for the event study.
    pub true_effect: f64,
    /// Against the true untreated cumulative cases.
    pub rmse: f64,
    /// Against the observed cumulative cases.
    pub rmse_observed: f64,
    /// Same model on cumulative cases per inhabitant (cumulative rows only).
    pub estimate_per_capita: Option<f64>,
    pub se_per_capita: Option<f64>,
    pub dropped_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventPathSet {
    pub policy: PolicyScenario,
    pub outcome: OutcomeKind,
    pub points: Vec<EventPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Report {
    pub master_seed: u64,
    pub mode: SimulationMode,
    pub se_kind: SeKind,
    pub rows: Vec<Table1Row>,
    /// Full event-study coefficient paths behind the event-study rows.
    pub event_paths: Vec<EventPathSet>,
}

struct CellOutput {
    row: Table1Row,
    path: Option<EventPathSet>,
}

fn run_cell(
    truth: &TruthBundle,
    policy: &PolicyScenario,
    model: ModelKind,
    kind: OutcomeKind,
    se_kind: SeKind,
) -> Result<CellOutput> {
    let panel = truth.observed_panel();
    let outcome = Outcome::new(kind);
    let fit = twfe_fit(panel, &model.spec().with_outcome(outcome).with_se(se_kind))?;
    let pick = |fit: &crate::estimators::FitResult| {
        match model {
            ModelKind::Did => fit.treatment_effect(),
            ModelKind::EventStudy => fit.event_coefficient(0),
        }
        .cloned()
        .ok_or_else(|| {
            Error::Evaluation(format!("{} on {}: effect coefficient was dropped", model.name(), kind.name()))
        })
    };
    let coefficient = pick(&fit)?;
    let true_effect = match model {
        ModelKind::Did => true_att_overall(truth, outcome)?,
        ModelKind::EventStudy => true_att_event(truth, outcome, 0)?,
    };
    let paths = reconstruct_counterfactual_cases(&fit, panel)?;
    let (estimate_per_capita, se_per_capita) = if kind == OutcomeKind::Cumulative {
        let spec = model.spec().with_outcome(Outcome::cumulative_per_capita()).with_se(se_kind);
        let per_capita = pick(&twfe_fit(panel, &spec)?)?;
        (Some(per_capita.estimate), Some(per_capita.se(se_kind)))
    } else {
        (None, None)
    };
    let path = (model == ModelKind::EventStudy).then(|| EventPathSet {
        policy: policy.clone(),
        outcome: kind,
        points: fit.event_path(),
    });
    Ok(CellOutput {
        row: Table1Row {
            policy: policy.clone(),
            model,
            outcome: kind,
            estimate: coefficient.estimate,
            se: coefficient.se(se_kind),
            se_classical: coefficient.se_classical,
            se_cluster: coefficient.se_cluster,
            true_effect,
            rmse: counterfactual_rmse(&paths, truth)?,
            rmse_observed: rmse_against(&paths, truth.observed_panel())?,
            estimate_per_capita,
            se_per_capita,
            dropped_columns: fit.dropped_columns.clone(),
        },
        path,
    })
}

/// Runs the twelve specifications on one draw of the design with classical
/// standard errors as the headline; clustered ones are kept alongside.
pub fn table1_run(design: &ExperimentDesign) -> Result<Table1Report> {
    table1_run_with_se(design, SeKind::Classical)
}

pub fn table1_run_with_se(design: &ExperimentDesign, se_kind: SeKind) -> Result<Table1Report> {
    let roster = draw_roster(design)?;
    let policies = [PolicyScenario::new(0.0), PolicyScenario::new(design.tau)];
    let truths: Vec<TruthBundle> = policies
        .par_iter()
        .map(|p| TruthBundle::simulate(roster.with_tau(p.tau), design.horizon, design.mode, design.master_seed))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, ModelKind, OutcomeKind)> = (0..policies.len())
        .flat_map(|p| {
            ModelKind::ALL.into_iter().flat_map(move |m| OutcomeKind::ALL.into_iter().map(move |k| (p, m, k)))
        })
        .collect();
    let outputs: Vec<CellOutput> = cells
        .par_iter()
        .map(|&(p, model, kind)| run_cell(&truths[p], &policies[p], model, kind, se_kind))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(outputs.len());
    let mut event_paths = Vec::new();
    for output in outputs {
        rows.push(output.row);
        event_paths.extend(output.path);
    }
    Ok(Table1Report { master_seed: design.master_seed, mode: design.mode, se_kind, rows, event_paths })
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

impl Table1Report {
    pub fn row(&self, effective_policy: bool, model: ModelKind, outcome: OutcomeKind) -> Option<&Table1Row> {
        self.rows
            .iter()
            .find(|r| r.policy.is_effective() == effective_policy && r.model == model && r.outcome == outcome)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record([
            "policy",
            "tau",
            "model",
            "dependent_variable",
            "estimate",
            "se",
            "se_classical",
            "se_cluster",
            "true_effect",
            "rmse",
            "rmse_observed",
            "estimate_per_capita",
            "se_per_capita",
            "dropped_columns",
        ])?;
        for r in &self.rows {
            csv.write_record([
                r.policy.name.clone(),
                r.policy.tau.to_string(),
                r.model.name().to_string(),
                r.outcome.display_name().to_string(),
                r.estimate.to_string(),
                r.se.to_string(),
                r.se_classical.to_string(),
                r.se_cluster.to_string(),
                r.true_effect.to_string(),
                r.rmse.to_string(),
                r.rmse_observed.to_string(),
                opt(r.estimate_per_capita),
                opt(r.se_per_capita),
                r.dropped_columns.join(" "),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_event_paths_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["policy", "dependent_variable", "rel_time", "estimate", "se", "ci_low", "ci_high"])?;
        for set in &self.event_paths {
            for p in &set.points {
                csv.write_record([
                    set.policy.name.clone(),
                    set.outcome.display_name().to_string(),
                    p.rel_time.to_string(),
                    p.estimate.to_string(),
                    p.se.to_string(),
                    p.ci_low.to_string(),
                    p.ci_high.to_string(),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    }

    /// Aligned plain-text rendering of the main columns.
    pub fn to_text(&self) -> String {
        let se_label = match self.se_kind {
            SeKind::Classical => "S.E.",
            SeKind::Cluster => "S.E. (cl.)",
        };
        let header =
            ["Policy", "Model", "Dependent Variable", "Estimate", se_label, "RMSE", "True effect", "RMSE (obs.)"];
        let body: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.policy.name.clone(),
                    r.model.name().to_string(),
                    r.outcome.display_name().to_string(),
                    format!("{:.4}", r.estimate),
                    format!("{:.4}", r.se),
                    format!("{:.4}", r.rmse),
                    format!("{:.4}", r.true_effect),
                    format!("{:.4}", r.rmse_observed),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |cells: &[&str], out: &mut String| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        let _ = writeln!(
            out,
            "master seed {}, {} mode",
            self.master_seed,
            match self.mode {
                SimulationMode::Deterministic => "deterministic",
                SimulationMode::Poisson => "poisson",
            }
        );
        line(&header, &mut out);
        let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        let _ = writeln!(out, "{}", "-".repeat(total));
        for row in &body {
            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
            line(&cells, &mut out);
        }
        out
    }
}
