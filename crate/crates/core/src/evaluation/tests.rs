use super::*;
use crate::epidemic::{EpidemicParams, SimulationMode};
use crate::estimators::{twfe_fit, RegressionSpec};
use crate::panel::{RawRow, RegionInfo};
use crate::scenario::Region;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TEN_PERCENT_CUT: f64 = -0.105_360_515_657_826_3;

fn region(id: &str, params: EpidemicParams) -> Region {
    Region { id: id.into(), params }
}

fn base() -> EpidemicParams {
    EpidemicParams::new(0.3, 0.1, 0.01, 1e6, 10.0)
}

fn simultaneous(deltas: &[f64], treated: usize, t_star: usize, tau: f64) -> TruthBundle {
    let regions = deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let policy = (i < treated).then_some(t_star);
            region(&format!("r{i}"), base().with_delta(d).with_policy(policy, tau))
        })
        .collect();
    TruthBundle::simulate(RegionRoster::new(regions).unwrap(), 80, SimulationMode::Deterministic, 1).unwrap()
}

#[test]
fn null_policy_has_zero_att() {
    let truth = simultaneous(&[0.0, 0.1, 0.2], 2, 20, 0.0);
    for kind in OutcomeKind::ALL {
        for t in [20, 40, 80] {
            assert_eq!(true_att(&truth, Outcome::new(kind), t).unwrap(), 0.0);
        }
    }
}

#[test]
fn delta_log_att_on_impact_is_tau() {
    let truth = simultaneous(&[0.0, 0.3, 0.1], 2, 25, TEN_PERCENT_CUT);
    let att = true_att(&truth, Outcome::delta_log(), 25).unwrap();
    assert_relative_eq!(att, TEN_PERCENT_CUT, epsilon = 1e-12);
    assert_relative_eq!(true_att_event(&truth, Outcome::delta_log(), 0).unwrap(), att, epsilon = 1e-15);
}

#[test]
fn cumulative_att_is_negative_and_falling() {
    let truth = simultaneous(&[0.0, 0.2], 1, 20, TEN_PERCENT_CUT);
    let path: Vec<f64> = (20..=80).map(|t| true_att(&truth, Outcome::cumulative(), t).unwrap()).collect();
    assert!(path.iter().all(|&a| a <= 0.0));
    // The gap widens while the untreated epidemic grows; once it saturates the
    // slower treated epidemic catches up part of the way.
    let cases = truth.counterfactual()[0].new_cases();
    let peak = (0..cases.len()).max_by(|&a, &b| cases[a].total_cmp(&cases[b])).unwrap();
    assert!(path[..=peak - 20].windows(2).all(|w| w[1] <= w[0]));
    assert!(path[path.len() - 1] > path.iter().copied().fold(0.0, f64::min));
}

#[test]
fn att_requires_treated_regions() {
    let truth = simultaneous(&[0.0, 0.2], 0, 20, TEN_PERCENT_CUT);
    assert!(true_att(&truth, Outcome::log(), 30).is_err());
}

#[test]
fn bias_identity_holds_on_random_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let n = rng.random_range(2..12);
        let deltas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
        let treated = rng.random_range(1..n);
        let t_star = rng.random_range(2..60);
        let truth = simultaneous(&deltas, treated, t_star, TEN_PERCENT_CUT);
        for kind in OutcomeKind::ALL {
            let points = did_bias_identity(&truth, Outcome::new(kind)).unwrap();
            assert!(!points.is_empty());
            for p in points {
                let scale = 1.0f64.max(p.did.abs()).max(p.att.abs());
                assert!(p.residual.abs() <= 1e-9 * scale, "{kind:?} t={} residual {}", p.t, p.residual);
            }
        }
    }
}

#[test]
fn identical_regions_have_no_bias() {
    let truth = simultaneous(&[0.2, 0.2, 0.2], 1, 30, TEN_PERCENT_CUT);
    for p in did_bias_identity(&truth, Outcome::log()).unwrap() {
        assert_eq!(p.trend_gap, 0.0);
        assert_eq!(p.residual, 0.0);
    }
}

#[test]
fn one_period_cumulative_bias_is_the_flow_gap() {
    let t_star = 30usize;
    let deltas = [0.18, 0.0];
    let truth = simultaneous(&deltas, 1, t_star, TEN_PERCENT_CUT);
    let points = did_bias_identity(&truth, Outcome::cumulative()).unwrap();
    let first = points.iter().find(|p| p.t == t_star as i64).unwrap();
    let flow = |r: usize| {
        let s = &truth.counterfactual()[r].states[t_star];
        0.3 * deltas[r].exp() * s.i * s.s / 1e6
    };
    assert_relative_eq!(first.trend_gap, flow(0) - flow(1), max_relative = 1e-12);
    assert_relative_eq!(first.did - first.att, flow(0) - flow(1), max_relative = 1e-9);
}

#[test]
fn oracle_reconstruction_scores_zero_and_shifts_score_their_size() {
    let truth = simultaneous(&[0.0, 0.4, 0.2], 2, 20, TEN_PERCENT_CUT);
    let mut paths = CounterfactualPaths::oracle(&truth);
    assert_eq!(counterfactual_rmse(&paths, &truth).unwrap(), 0.0);
    for path in &mut paths.regions {
        path.cumulative.iter_mut().for_each(|v| *v = v.map(|x| x + 2.5));
    }
    assert_relative_eq!(counterfactual_rmse(&paths, &truth).unwrap(), 2.5, epsilon = 1e-9);
}

#[test]
fn rmse_of_an_empty_set_is_an_error() {
    let truth = simultaneous(&[0.0, 0.4], 0, 20, TEN_PERCENT_CUT);
    assert!(counterfactual_rmse(&CounterfactualPaths::oracle(&truth), &truth).is_err());
}

/// Two regions whose log new cases are exactly additive.
fn additive_panel(tau: f64) -> (PanelDataset, Vec<Vec<f64>>) {
    let alpha = [2.0, 3.0, 2.5];
    let lambda: Vec<f64> = (0..12).map(|t| 0.3 * t as f64 - 0.01 * (t * t) as f64).collect();
    let treat = [Some(6), None, Some(6)];
    let mut rows = Vec::new();
    let mut untreated_cum = Vec::new();
    for r in 0..3 {
        let (mut cum, mut cum0) = (0.0, 0.0);
        let mut path0 = Vec::new();
        for (t, l) in lambda.iter().enumerate() {
            let d = treat[r].is_some_and(|s| t as i64 >= s);
            let c0 = (alpha[r] + l).exp();
            let c = (alpha[r] + l + if d { tau } else { 0.0 }).exp();
            cum += c;
            cum0 += c0;
            path0.push(cum0);
            rows.push(RawRow { region: r, t: t as i64, new_cases: c, cum_cases: cum });
        }
        untreated_cum.push(path0);
    }
    let regions = (0..3).map(|r| RegionInfo { id: format!("r{r}"), population: 1e5, treat_time: treat[r] }).collect();
    (PanelDataset::new(regions, rows, false).unwrap(), untreated_cum)
}

#[test]
fn log_reconstruction_recovers_the_generating_path() {
    let (panel, truth) = additive_panel(-0.2);
    let fit = twfe_fit(&panel, &RegressionSpec::constant().with_outcome(Outcome::log())).unwrap();
    assert_relative_eq!(fit.treatment_effect().unwrap().estimate, -0.2, epsilon = 1e-10);
    let paths = reconstruct_counterfactual_cases(&fit, &panel).unwrap();
    for (r, path) in paths.regions.iter().enumerate() {
        for (value, target) in path.cumulative.iter().zip(&truth[r]) {
            assert_relative_eq!(value.unwrap(), *target, max_relative = 1e-6);
        }
    }
}

#[test]
fn untreated_regions_keep_their_observed_path() {
    let (panel, _) = additive_panel(-0.2);
    let fit = twfe_fit(&panel, &RegressionSpec::constant().with_outcome(Outcome::delta_log())).unwrap();
    let paths = reconstruct_counterfactual_cases(&fit, &panel).unwrap();
    let observed: Vec<Option<f64>> = panel.observations()[12..24].iter().map(|o| Some(o.cum_cases)).collect();
    assert_eq!(paths.regions[1].cumulative, observed);
}

#[test]
fn zero_delta_log_prediction_is_flat() {
    let rows: Vec<RawRow> = (0..2)
        .flat_map(|r| (0..8).map(move |t| RawRow { region: r, t, new_cases: 4.0, cum_cases: 4.0 * (t + 1) as f64 }))
        .collect();
    let regions = vec![
        RegionInfo { id: "a".into(), population: 100.0, treat_time: Some(4) },
        RegionInfo { id: "b".into(), population: 100.0, treat_time: None },
    ];
    let panel = PanelDataset::new(regions, rows, false).unwrap();
    let fit = twfe_fit(&panel, &RegressionSpec::constant().with_outcome(Outcome::delta_log())).unwrap();
    let paths = reconstruct_counterfactual_cases(&fit, &panel).unwrap();
    let expected: Vec<Option<f64>> = (0..8).map(|t| Some(4.0 * (t + 1) as f64)).collect();
    assert_eq!(paths.regions[0].cumulative, expected);
}

#[test]
fn homogeneous_regions_give_exact_event_study() {
    let deltas = [0.0; 6];
    let truth = simultaneous(&deltas, 3, 25, TEN_PERCENT_CUT);
    let fit = twfe_fit(truth.observed_panel(), &RegressionSpec::dynamic().with_outcome(Outcome::delta_log())).unwrap();
    assert!(fit.dropped_columns.is_empty());
    assert!((fit.event_coefficient(0).unwrap().estimate - TEN_PERCENT_CUT).abs() < 1e-8);
    for c in fit.coefficients.iter().filter(|c| c.rel_time.unwrap() < 0) {
        assert!(c.estimate.abs() < 1e-8, "{} = {}", c.name, c.estimate);
    }
}

#[test]
fn small_table_has_twelve_rows() {
    let design = ExperimentDesign {
        n_regions: 12,
        horizon: 60,
        treat_time_range: [5, 50],
        never_treated_fraction: 0.3,
        ..ExperimentDesign::default()
    };
    let report = table1_run(&design).unwrap();
    assert_eq!(report.rows.len(), 12);
    assert_eq!(report.rows[0].policy.name, "Inefficient (0%)");
    assert_eq!(report.rows[11].policy.name, "Efficient (-10%)");
    for row in report.rows.iter().filter(|r| !r.policy.is_effective()) {
        assert_eq!(row.true_effect, 0.0);
    }
    assert!(report.rows.iter().all(|r| r.rmse >= 0.0));
    assert_eq!(report.event_paths.len(), 6);
    assert!(report.to_text().lines().count() >= 14);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 13);
}

#[test]
fn figure_four_prediction_is_wrong_despite_common_trends() {
    let data = figure_data(crate::scenario::Figure::Fig4, None, crate::estimators::SeKind::Cluster).unwrap();
    let predicted = data.series("region_1", "predicted_untreated_cum_cases").unwrap();
    let truth = data.series("region_1", "untreated_cum_cases").unwrap();
    let last = predicted.values.len() - 1;
    let gap = (predicted.values[last].unwrap() - truth.values[last].unwrap()).abs();
    assert!(gap > 0.01 * truth.values[last].unwrap());
}
