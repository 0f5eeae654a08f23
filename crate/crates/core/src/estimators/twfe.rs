//! Two-way fixed-effects regressions: constant treatment effect, event study, or
//! fixed effects alone.

use std::borrow::Cow;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::lstsq::{cluster_meat, least_squares_scaled, norm, sandwich, RANK_TOLERANCE};
use super::within::TwoWayIndex;
use crate::error::{Error, Result};
use crate::panel::{Outcome, PanelDataset};

/// Two-sided normal quantile for 95% intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    /// Unit and period effects only.
    None,
    /// A single post-adoption indicator.
    #[default]
    Constant,
    /// Relative-time indicators around adoption.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    Classical,
    /// Clustered by region.
    #[default]
    Cluster,
}

impl std::str::FromStr for SeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Self::Classical),
            "cluster" => Ok(Self::Cluster),
            other => Err(Error::InvalidParameter(format!("unknown standard-error kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSpec {
    /// Applied to the panel first; `None` uses the outcome already attached.
    pub outcome: Option<Outcome>,
    pub effect: EffectKind,
    /// Largest lead kept; defaults to the widest observed.
    pub leads: Option<usize>,
    /// Largest lag kept; defaults to the widest observed.
    pub lags: Option<usize>,
    pub reference_period: i64,
    /// Fold relative times beyond the window into the endpoint indicators instead
    /// of pooling them with the reference period.
    pub bin_endpoints: bool,
    pub se_kind: SeKind,
    pub covariates: Vec<String>,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            outcome: None,
            effect: EffectKind::Constant,
            leads: None,
            lags: None,
            reference_period: -1,
            bin_endpoints: false,
            se_kind: SeKind::Cluster,
            covariates: Vec::new(),
        }
    }
}

impl RegressionSpec {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn dynamic() -> Self {
        Self { effect: EffectKind::Dynamic, ..Self::default() }
    }

    pub fn fixed_effects_only() -> Self {
        Self { effect: EffectKind::None, ..Self::default() }
    }

    pub fn with_outcome(mut self, outcome: Outcome) -> Self {
        self.outcome = Some(outcome);
        self
    }

    pub fn with_window(mut self, leads: usize, lags: usize) -> Self {
        self.leads = Some(leads);
        self.lags = Some(lags);
        self
    }

    pub fn with_se(mut self, kind: SeKind) -> Self {
        self.se_kind = kind;
        self
    }

    pub fn with_covariate(mut self, name: &str) -> Self {
        self.covariates.push(name.to_string());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.effect == EffectKind::Dynamic {
            if self.reference_period >= 0 {
                return Err(Error::InvalidParameter(format!(
                    "reference period must be a lead (negative), got {}",
                    self.reference_period
                )));
            }
            if let Some(leads) = self.leads {
                if -self.reference_period > leads as i64 {
                    return Err(Error::InvalidParameter(format!(
                        "reference period {} lies outside {leads} leads",
                        self.reference_period
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se_classical: f64,
    pub se_cluster: f64,
    /// Relative time for event-study indicators.
    pub rel_time: Option<i64>,
}

impl Coefficient {
    pub fn se(&self, kind: SeKind) -> f64 {
        match kind {
            SeKind::Classical => self.se_classical,
            SeKind::Cluster => self.se_cluster,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventPoint {
    pub rel_time: i64,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub outcome: Option<Outcome>,
    pub effect: EffectKind,
    pub se_kind: SeKind,
    pub reference_period: Option<i64>,
    /// Retained regressors: treatment terms by relative time, then covariates.
    pub coefficients: Vec<Coefficient>,
    /// Row-major, aligned with `coefficients`.
    pub vcov_classical: Vec<f64>,
    pub vcov_cluster: Vec<f64>,
    pub dropped_columns: Vec<String>,
    pub nobs: usize,
    /// Residual degrees of freedom after absorbing both sets of effects.
    pub dof: i64,
    pub n_regions: usize,
    pub n_periods: usize,
    /// Panel row of each used observation.
    pub observation_index: Vec<usize>,
    pub outcome_values: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Contribution of the treatment terms to each fitted value.
    pub treatment_component: Vec<f64>,
    panel_len: usize,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn treatment_effect(&self) -> Option<&Coefficient> {
        self.coefficient("treatment")
    }

    pub fn event_coefficient(&self, k: i64) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.rel_time == Some(k))
    }

    /// Standard errors of the headline kind, aligned with `coefficients`.
    pub fn standard_errors(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.se(self.se_kind)).collect()
    }

    pub fn vcov(&self) -> &[f64] {
        match self.se_kind {
            SeKind::Classical => &self.vcov_classical,
            SeKind::Cluster => &self.vcov_cluster,
        }
    }

    /// Event-study path including a zero at the reference period.
    pub fn event_path(&self) -> Vec<EventPoint> {
        let mut points: Vec<EventPoint> = self
            .coefficients
            .iter()
            .filter_map(|c| {
                let k = c.rel_time?;
                let se = c.se(self.se_kind);
                Some(EventPoint {
                    rel_time: k,
                    estimate: c.estimate,
                    se,
                    ci_low: c.estimate - Z_95 * se,
                    ci_high: c.estimate + Z_95 * se,
                })
            })
            .collect();
        if let Some(reference) = self.reference_period {
            points.push(EventPoint { rel_time: reference, estimate: 0.0, se: 0.0, ci_low: 0.0, ci_high: 0.0 });
        }
        points.sort_by_key(|p| p.rel_time);
        points
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        let effect = match self.effect {
            EffectKind::None => "fixed effects only",
            EffectKind::Constant => "constant effect",
            EffectKind::Dynamic => "event study",
        };
        let outcome = self.outcome.map(|o| o.label()).unwrap_or_else(|| "custom".into());
        let se = match self.se_kind {
            SeKind::Classical => "classical",
            SeKind::Cluster => "clustered by region",
        };
        let _ = writeln!(out, "Two-way fixed effects, {effect}; outcome: {outcome}");
        let _ = writeln!(
            out,
            "observations: {}  regions: {}  periods: {}  residual dof: {}  std. errors: {se}",
            self.nobs, self.n_regions, self.n_periods, self.dof
        );
        if !self.coefficients.is_empty() {
            let _ = writeln!(out, "{:<14} {:>14} {:>12} {:>9}", "term", "estimate", "std.err", "t");
            for c in &self.coefficients {
                let s = c.se(self.se_kind);
                let _ = writeln!(out, "{:<14} {:>14.6} {:>12.6} {:>9.3}", c.name, c.estimate, s, c.estimate / s);
            }
        }
        if !self.dropped_columns.is_empty() {
            let _ = writeln!(out, "dropped as collinear: {}", self.dropped_columns.join(", "));
        }
        out
    }
}

struct Regressor {
    name: String,
    rel_time: Option<i64>,
    treatment: bool,
    values: Vec<f64>,
}

fn event_regressors(panel: &PanelDataset, used: &[usize], spec: &RegressionSpec) -> Result<(Vec<Regressor>, i64)> {
    let observations = panel.observations();
    let rel: Vec<Option<i64>> = used.iter().map(|&i| observations[i].rel_time).collect();
    let min_rel = rel.iter().flatten().copied().min();
    let max_rel = rel.iter().flatten().copied().max();
    let (Some(min_rel), Some(max_rel)) = (min_rel, max_rel) else {
        return Err(Error::NoIdentifyingVariation);
    };
    let leads = spec.leads.map(|l| l as i64).unwrap_or((-min_rel).max(0));
    let lags = spec.lags.map(|l| l as i64).unwrap_or(max_rel.max(0));
    let reference = spec.reference_period;
    if -reference > leads {
        return Err(Error::InvalidParameter(format!(
            "reference period {reference} lies outside the observed {leads} leads"
        )));
    }
    // Rank priority: lags outward from adoption, then leads outward from the
    // reference, so the most distant lead is the one given up under collinearity.
    let keys: Vec<i64> = (0..=lags).chain((1..=leads).map(|l| -l)).filter(|&k| k != reference).collect();
    let regressors = keys
        .iter()
        .map(|&k| {
            let values = rel
                .iter()
                .map(|r| {
                    let hit = r.is_some_and(|r| {
                        let r = if spec.bin_endpoints { r.clamp(-leads, lags) } else { r };
                        r == k
                    });
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            Regressor { name: format!("rel[{k}]"), rel_time: Some(k), treatment: true, values }
        })
        .collect();
    Ok((regressors, reference))
}

/// Fits `Y_it = alpha_i + lambda_t + X_it b + e_it` by the within transformation.
pub fn twfe_fit(panel: &PanelDataset, spec: &RegressionSpec) -> Result<FitResult> {
    spec.validate()?;
    let panel: Cow<PanelDataset> = match spec.outcome {
        Some(o) if panel.outcome() != Some(o) => Cow::Owned(panel.apply_outcome(o)),
        _ => Cow::Borrowed(panel),
    };
    let values = panel.outcome_values().ok_or_else(|| Error::Estimation("panel has no outcome attached".into()))?;
    let covariates: Vec<&[Option<f64>]> = spec
        .covariates
        .iter()
        .map(|name| panel.covariate(name).ok_or_else(|| Error::Estimation(format!("unknown covariate `{name}`"))))
        .collect::<Result<_>>()?;
    let observations = panel.observations();
    let used: Vec<usize> = (0..panel.len())
        .filter(|&i| values[i].is_some_and(f64::is_finite) && covariates.iter().all(|c| c[i].is_some()))
        .collect();
    if used.is_empty() {
        return Err(Error::Estimation("no observation has a defined outcome".into()));
    }
    let groups: Vec<usize> = used.iter().map(|&i| observations[i].region).collect();
    let period_index: Vec<usize> =
        used.iter().map(|&i| panel.periods().binary_search(&observations[i].t).unwrap()).collect();
    let index = TwoWayIndex::new(&groups, &period_index);
    let (n_groups, n_periods) = (index.n_groups(), index.n_periods());
    if n_groups < 2 || n_periods < 2 {
        return Err(Error::Estimation(format!(
            "need at least two regions and two periods, have {n_groups} and {n_periods}"
        )));
    }

    let (mut regressors, reference) = match spec.effect {
        EffectKind::None => (Vec::new(), None),
        EffectKind::Constant => {
            let values = used.iter().map(|&i| if observations[i].treated { 1.0 } else { 0.0 }).collect();
            (vec![Regressor { name: "treatment".into(), rel_time: None, treatment: true, values }], None)
        }
        EffectKind::Dynamic => {
            let (r, reference) = event_regressors(&panel, &used, spec)?;
            (r, Some(reference))
        }
    };
    for (name, column) in spec.covariates.iter().zip(&covariates) {
        regressors.push(Regressor {
            name: name.clone(),
            rel_time: None,
            treatment: false,
            values: used.iter().map(|&i| column[i].unwrap()).collect(),
        });
    }

    let y: Vec<f64> = used.iter().map(|&i| values[i].unwrap()).collect();
    let y_dm = index.demean(&y)?;
    let x_dm: Vec<Vec<f64>> = regressors.iter().map(|r| index.demean(&r.values)).collect::<Result<_>>()?;
    let raw_norms: Vec<f64> = regressors.iter().map(|r| norm(&r.values)).collect();
    let solution = least_squares_scaled(&x_dm, &raw_norms, &y_dm, RANK_TOLERANCE);
    if spec.effect != EffectKind::None && !solution.kept.iter().any(|&j| regressors[j].treatment) {
        return Err(Error::NoIdentifyingVariation);
    }

    let n = y.len();
    let k = solution.rank();
    let residuals: Vec<f64> = (0..n)
        .map(|i| y_dm[i] - solution.kept.iter().zip(&solution.coefficients).map(|(&j, b)| x_dm[j][i] * b).sum::<f64>())
        .collect();
    let fitted: Vec<f64> = y.iter().zip(&residuals).map(|(y, u)| y - u).collect();
    let treatment_component: Vec<f64> = (0..n)
        .map(|i| {
            solution
                .kept
                .iter()
                .zip(&solution.coefficients)
                .filter(|(&j, _)| regressors[j].treatment)
                .map(|(&j, b)| regressors[j].values[i] * b)
                .sum()
        })
        .collect();

    let dof = n as i64 - k as i64 - (n_groups as i64 - 1) - (n_periods as i64 - 1) - 1;
    let bread = solution.xtx_inverse();
    let rss: f64 = residuals.iter().map(|u| u * u).sum();
    let sigma2 = if dof > 0 { rss / dof as f64 } else { f64::NAN };
    let vcov_basis_classical: Vec<f64> = bread.iter().map(|v| v * sigma2).collect();
    let kept_columns: Vec<&[f64]> = solution.kept.iter().map(|&j| x_dm[j].as_slice()).collect();
    let meat = cluster_meat(&kept_columns, &residuals, index.group_codes(), n_groups);
    // Region effects are nested within clusters and do not count against the
    // degrees of freedom; period effects do.
    let denominator = n as f64 - k as f64 - (n_periods as f64 - 1.0) - 1.0;
    let cluster_scale = if denominator > 0.0 {
        n_groups as f64 / (n_groups as f64 - 1.0) * (n as f64 - 1.0) / denominator
    } else {
        f64::NAN
    };
    let vcov_basis_cluster = sandwich(&bread, &meat, k, cluster_scale);

    // Report treatment terms by relative time, then covariates in request order.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&m| {
        let r = &regressors[solution.kept[m]];
        (!r.treatment, r.rel_time.unwrap_or(0), solution.kept[m])
    });
    let reorder =
        |v: &[f64]| -> Vec<f64> { order.iter().flat_map(|&a| order.iter().map(move |&b| v[a * k + b])).collect() };
    let coefficients = order
        .iter()
        .map(|&m| {
            let r = &regressors[solution.kept[m]];
            Coefficient {
                name: r.name.clone(),
                estimate: solution.coefficients[m],
                se_classical: vcov_basis_classical[m * k + m].sqrt(),
                se_cluster: vcov_basis_cluster[m * k + m].sqrt(),
                rel_time: r.rel_time,
            }
        })
        .collect();

    Ok(FitResult {
        outcome: panel.outcome(),
        effect: spec.effect,
        se_kind: spec.se_kind,
        reference_period: reference,
        coefficients,
        vcov_classical: reorder(&vcov_basis_classical),
        vcov_cluster: reorder(&vcov_basis_cluster),
        dropped_columns: solution.dropped.iter().map(|&j| regressors[j].name.clone()).collect(),
        nobs: n,
        dof,
        n_regions: n_groups,
        n_periods,
        observation_index: used,
        outcome_values: y,
        fitted,
        residuals,
        treatment_component,
        panel_len: panel.len(),
    })
}

/// Fitted untreated outcome `Y_hat(0) = fitted - treatment terms` for every panel
/// row used in the fit; `None` elsewhere.
pub fn predict_counterfactual(fit: &FitResult, panel: &PanelDataset) -> Result<Vec<Option<f64>>> {
    if panel.len() != fit.panel_len {
        return Err(Error::Estimation(format!(
            "panel has {} rows but the fit was made on {}",
            panel.len(),
            fit.panel_len
        )));
    }
    let mut out = vec![None; panel.len()];
    for (m, &row) in fit.observation_index.iter().enumerate() {
        out[row] = Some(fit.fitted[m] - fit.treatment_component[m]);
    }
    Ok(out)
}
