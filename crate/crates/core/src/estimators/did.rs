//! Difference-in-differences in means against a fixed base period.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DidPoint {
    pub t: i64,
    pub estimate: f64,
    pub n_treated: usize,
    pub n_control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DidResult {
    pub base_period: i64,
    pub adoption_period: i64,
    /// One point per period from the base onward with at least one complete pair
    /// in each arm.
    pub path: Vec<DidPoint>,
    /// Region-period differences skipped because an outcome was missing.
    pub excluded: usize,
}

impl DidResult {
    pub fn at(&self, t: i64) -> Option<f64> {
        self.path.iter().find(|p| p.t == t).map(|p| p.estimate)
    }

    /// Mean of the path over periods at or after adoption.
    pub fn post_mean(&self) -> Option<f64> {
        let post: Vec<f64> = self.path.iter().filter(|p| p.t >= self.adoption_period).map(|p| p.estimate).collect();
        (!post.is_empty()).then(|| post.iter().sum::<f64>() / post.len() as f64)
    }
}

/// `DID_t = mean_treated(Y_t - Y_b) - mean_control(Y_t - Y_b)` for every `t >= b`.
///
/// Requires a single common adoption date among treated regions and at least one
/// never-treated region.
pub fn did_estimator(panel: &PanelDataset, base_period: i64) -> Result<DidResult> {
    let values = panel.outcome_values().ok_or_else(|| Error::Estimation("panel has no outcome attached".into()))?;
    let mut adoption: Option<i64> = None;
    for region in panel.regions() {
        if let Some(t) = region.treat_time {
            match adoption {
                None => adoption = Some(t),
                Some(a) if a != t => {
                    return Err(Error::Estimation(format!(
                        "treated regions adopt at different periods ({a} and {t}); use the event-study estimator"
                    )))
                }
                _ => {}
            }
        }
    }
    let adoption = adoption.ok_or_else(|| Error::Estimation("panel has no treated region".into()))?;
    if panel.regions().iter().all(|r| r.treat_time.is_some()) {
        return Err(Error::Estimation("panel has no never-treated control region".into()));
    }
    if !panel.periods().contains(&base_period) {
        return Err(Error::Estimation(format!("base period {base_period} is not in the panel")));
    }

    let observations = panel.observations();
    let mut excluded = 0;
    let spans = panel.region_spans();
    let base_values: Vec<Option<f64>> = spans
        .iter()
        .map(|span| span.clone().find(|&i| observations[i].t == base_period).and_then(|i| values[i]))
        .collect();

    let mut path = Vec::new();
    for &t in panel.periods().iter().filter(|&&t| t >= base_period) {
        let (mut sum_treated, mut n_treated, mut sum_control, mut n_control) = (0.0, 0usize, 0.0, 0usize);
        for (r, span) in spans.iter().enumerate() {
            let Some(row) = span.clone().find(|&i| observations[i].t == t) else {
                excluded += 1;
                continue;
            };
            let (Some(now), Some(base)) = (values[row], base_values[r]) else {
                excluded += 1;
                continue;
            };
            if panel.regions()[r].treat_time.is_some() {
                sum_treated += now - base;
                n_treated += 1;
            } else {
                sum_control += now - base;
                n_control += 1;
            }
        }
        if n_treated > 0 && n_control > 0 {
            path.push(DidPoint {
                t,
                estimate: sum_treated / n_treated as f64 - sum_control / n_control as f64,
                n_treated,
                n_control,
            });
        }
    }
    Ok(DidResult { base_period, adoption_period: adoption, path, excluded })
}
