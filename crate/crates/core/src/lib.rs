//! Simulation-and-estimation laboratory for epidemic panel data.
//!
//! Regions follow a discrete-time SIRD process with staggered mitigation
//! policies. The crate turns those trajectories into long-format panels, fits
//! difference-in-differences, two-way fixed-effects and event-study models, and
//! scores the fits against the exact untreated counterfactual that only a
//! simulator can observe.
//!
//! Modules map onto the workflow:
//!
//! - [`epidemic`]: single-region SIRD recursion and potential-outcome pairs.
//! - [`scenario`]: random multi-region designs and the fixed figure scenarios.
//! - [`panel`]: panel construction, outcome transforms, CSV I/O, timing-group summaries.
//! - [`estimators`]: DID, TWFE and event-study estimation.
//! - [`evaluation`]: true ATT, bias identity, counterfactual reconstruction and RMSE, simulation-table runs.
//! - [`cli`]: configuration-driven command-line front end.

pub mod cli;
pub mod epidemic;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod panel;
pub mod scenario;

pub use epidemic::{
    potential_outcomes, simulate, step, CompartmentState, EpidemicParams, PotentialOutcomes, SimulationMode, Trajectory,
};
pub use error::{Error, ErrorCategory, Result};
pub use estimators::{
    did_estimator, predict_counterfactual, twfe_fit, DidResult, EffectKind, FitResult, RegressionSpec, SeKind,
};
pub use evaluation::{
    counterfactual_rmse, did_bias_identity, reconstruct_counterfactual_cases, table1_run, true_att,
    CounterfactualPaths, Table1Report, TruthBundle,
};
pub use panel::{build_panel, Outcome, OutcomeKind, PanelDataset, PanelObservation};
pub use scenario::{draw_roster, figure_scenario, ExperimentDesign, Figure, RegionRoster};
