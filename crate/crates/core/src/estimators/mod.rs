//! Panel estimators: difference in means, two-way fixed effects and event studies.

mod did;
pub mod lstsq;
mod twfe;
pub mod within;

pub use did::{did_estimator, DidPoint, DidResult};
pub use twfe::{
    predict_counterfactual, twfe_fit, Coefficient, EffectKind, EventPoint, FitResult, RegressionSpec, SeKind, Z_95,
};
