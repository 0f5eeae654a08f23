//! Discrete-time SIRD dynamics for a single region.
//!
//! The infection rate is log-linear in a region effect and a policy indicator,
//! `beta0 * exp(delta + tau * D_t - drift * t)`. Confirmed cases in period `t`
//! are the flow out of the susceptible pool, `beta_t * I_t * S_t / N`.
//! Treatment is absorbing: once adopted at `treat_time`, the indicator stays on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compartments below `-NEGATIVE_TOLERANCE * N` are an error; anything between that and
/// zero is clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulationMode {
    #[default]
    Deterministic,
    Poisson,
}

impl std::str::FromStr for SimulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(SimulationMode::Deterministic),
            "poisson" => Ok(SimulationMode::Poisson),
            other => Err(Error::InvalidParameter(format!(
                "unknown simulation mode `{other}` (expected deterministic|poisson)"
            ))),
        }
    }
}

/// Structural parameters of one region's epidemic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    pub beta0: f64,
    /// Region heterogeneity in the log infection rate.
    pub delta: f64,
    /// Policy effect on the log infection rate; `ln 0.9` is a 10% cut.
    pub tau: f64,
    pub gamma: f64,
    pub mu: f64,
    pub population: f64,
    pub initial_infected: f64,
    /// First treated period, `None` for never treated.
    pub treat_time: Option<usize>,
    /// Exogenous decay of the log infection rate per period (a time-varying confounder).
    #[serde(default)]
    pub drift: f64,
}

impl EpidemicParams {
    /// Untreated, homogeneous region with the given shared rates.
    pub fn new(beta0: f64, gamma: f64, mu: f64, population: f64, initial_infected: f64) -> Self {
        Self { beta0, delta: 0.0, tau: 0.0, gamma, mu, population, initial_infected, treat_time: None, drift: 0.0 }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_policy(mut self, treat_time: Option<usize>, tau: f64) -> Self {
        self.treat_time = treat_time;
        self.tau = tau;
        self
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let finite =
            [self.beta0, self.delta, self.tau, self.gamma, self.mu, self.population, self.initial_infected, self.drift]
                .iter()
                .all(|v| v.is_finite());
        if !finite {
            return bad("epidemic parameters must be finite".into());
        }
        if self.beta0 <= 0.0 {
            return bad(format!("beta0 must be positive, got {}", self.beta0));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("mu must lie in [0, 1], got {}", self.mu));
        }
        if self.population <= 0.0 {
            return bad(format!("population must be positive, got {}", self.population));
        }
        if !(self.initial_infected > 0.0 && self.initial_infected <= self.population) {
            return bad(format!("initial infected must lie in (0, population], got {}", self.initial_infected));
        }
        Ok(())
    }

    pub fn is_treated(&self, t: usize) -> bool {
        self.treat_time.is_some_and(|start| t >= start)
    }

    /// `beta0 * exp(delta + tau * [treated] - drift * t)`.
    pub fn infection_rate(&self, t: usize, treated: bool) -> f64 {
        let policy = if treated { self.tau } else { 0.0 };
        self.beta0 * (self.delta + policy - self.drift * t as f64).exp()
    }

    /// Infection rate actually in force at period `t`.
    pub fn effective_rate(&self, t: usize) -> f64 {
        self.infection_rate(t, self.is_treated(t))
    }

    pub fn basic_reproduction_number(&self, t: usize, treated: bool) -> f64 {
        self.infection_rate(t, treated) / self.gamma
    }

    pub fn initial_state(&self) -> CompartmentState {
        CompartmentState {
            s: self.population - self.initial_infected,
            i: self.initial_infected,
            r: 0.0,
            d: 0.0,
            new_cases: 0.0,
        }
    }
}

/// Compartment counts at the start of a period, plus the confirmed-case flow
/// associated with it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompartmentState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub d: f64,
    pub new_cases: f64,
}

impl CompartmentState {
    pub fn total(&self) -> f64 {
        self.s + self.i + self.r + self.d
    }
}

/// Expected new infections `beta * I * S / N`.
pub fn expected_new_cases(state: &CompartmentState, beta: f64, population: f64) -> f64 {
    beta * state.i * state.s / population
}

/// Applies one period of dynamics given the realised infection flow. The returned
/// state carries `new_cases = flow`.
fn advance(state: &CompartmentState, params: &EpidemicParams, flow: f64, t: usize) -> Result<CompartmentState> {
    let resolving = params.gamma * state.i;
    let next = CompartmentState {
        s: state.s - flow,
        i: state.i + flow - resolving,
        r: state.r + (1.0 - params.mu) * resolving,
        d: state.d + params.mu * resolving,
        new_cases: flow,
    };
    let floor = -NEGATIVE_TOLERANCE * params.population;
    let guard = |name: &'static str, value: f64| -> Result<f64> {
        if value < floor || !value.is_finite() {
            Err(Error::NegativeCompartment { compartment: name, value, period: t + 1, population: params.population })
        } else {
            Ok(value.max(0.0))
        }
    };
    Ok(CompartmentState {
        s: guard("S", next.s)?,
        i: guard("I", next.i)?,
        r: guard("R", next.r)?,
        d: guard("D", next.d)?,
        new_cases: next.new_cases,
    })
}

/// One deterministic period: the returned state holds the compartments at `t + 1`
/// and the new cases that arose during `t`.
pub fn step(state: &CompartmentState, params: &EpidemicParams, t: usize) -> Result<CompartmentState> {
    let beta = params.effective_rate(t);
    let flow = expected_new_cases(state, beta, params.population);
    advance(state, params, flow, t)
}

/// A simulated region. `states[t]` holds the compartments at the start of period
/// `t` and `new_cases` is the flow `beta_t * I_t * S_t / N` realised during `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: EpidemicParams,
    pub horizon: usize,
    pub states: Vec<CompartmentState>,
}

impl Trajectory {
    pub fn new_cases(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.new_cases).collect()
    }

    pub fn cumulative_cases(&self) -> Vec<f64> {
        self.states
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s.new_cases;
                Some(*acc)
            })
            .collect()
    }

    pub fn infected(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.i).collect()
    }

    pub fn total_cases(&self) -> f64 {
        self.states.iter().map(|s| s.new_cases).sum()
    }
}

fn draw_flow<R: Rng>(rng: &mut R, mean: f64, susceptible: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    // Poisson::new only rejects non-positive or non-finite means, handled above.
    let draw: f64 = Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0);
    draw.min(susceptible.floor().max(0.0))
}

/// Runs the recursion with an explicit random source (only consulted in Poisson mode).
pub fn simulate_with_rng<R: Rng>(
    params: &EpidemicParams,
    horizon: usize,
    mode: SimulationMode,
    rng: &mut R,
) -> Result<Trajectory> {
    params.validate()?;
    if horizon < 1 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if let Some(start) = params.treat_time {
        if start > horizon {
            return Err(Error::InvalidParameter(format!("treatment period {start} lies beyond the horizon {horizon}")));
        }
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut current = params.initial_state();
    for t in 0..=horizon {
        let mean = expected_new_cases(&current, params.effective_rate(t), params.population);
        let flow = match mode {
            SimulationMode::Deterministic => mean,
            SimulationMode::Poisson => draw_flow(rng, mean, current.s),
        };
        let next = advance(&current, params, flow, t)?;
        current.new_cases = flow;
        states.push(current);
        current = next;
    }
    Ok(Trajectory { params: params.clone(), horizon, states })
}

/// Simulates periods `0..=horizon`. Deterministic mode ignores `seed`.
pub fn simulate(params: &EpidemicParams, horizon: usize, mode: SimulationMode, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(params, horizon, mode, &mut rng)
}

/// Observed (treated) and untreated potential-outcome trajectories of one region.
/// Both arms share the random stream, so their draws agree until the policy starts.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub treated: Trajectory,
    pub untreated: Trajectory,
}

pub fn potential_outcomes_with_rng(
    params: &EpidemicParams,
    horizon: usize,
    mode: SimulationMode,
    rng: &ChaCha8Rng,
) -> Result<PotentialOutcomes> {
    let treated = simulate_with_rng(params, horizon, mode, &mut rng.clone())?;
    let untreated_params = EpidemicParams { treat_time: None, ..params.clone() };
    let untreated = simulate_with_rng(&untreated_params, horizon, mode, &mut rng.clone())?;
    Ok(PotentialOutcomes { treated, untreated })
}

pub fn potential_outcomes(
    params: &EpidemicParams,
    horizon: usize,
    mode: SimulationMode,
    seed: u64,
) -> Result<PotentialOutcomes> {
    potential_outcomes_with_rng(params, horizon, mode, &ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn default_region() -> EpidemicParams {
        EpidemicParams::new(0.12, 0.1, 0.01, 1e6, 10.0)
    }

    #[test]
    fn infection_rate_examples() {
        let p = EpidemicParams::new(0.12, 0.1, 0.01, 1e5, 10.0).with_policy(Some(5), 0.9f64.ln());
        assert_eq!(p.infection_rate(0, false), 0.12);
        assert_relative_eq!(p.infection_rate(0, true), 0.108, max_relative = 1e-14);
        let q = p.clone().with_delta(0.5);
        assert_relative_eq!(q.infection_rate(3, false), 0.12 * 0.5f64.exp(), max_relative = 1e-15);
        assert_relative_eq!(q.infection_rate(3, false), 0.197_846_552_484, epsilon = 1e-12);
    }

    #[test]
    fn reproduction_number_examples() {
        let p = EpidemicParams::new(0.12, 0.1, 0.01, 1e5, 10.0).with_policy(Some(0), 0.9f64.ln());
        assert_relative_eq!(p.basic_reproduction_number(0, false), 1.2, max_relative = 1e-14);
        assert_relative_eq!(p.basic_reproduction_number(0, true), 1.08, max_relative = 1e-14);
        let threshold = EpidemicParams::new(0.1, 0.1, 0.0, 1e5, 10.0);
        assert_eq!(threshold.basic_reproduction_number(0, false), 1.0);
    }

    #[test]
    fn step_matches_hand_evaluation() {
        let p = EpidemicParams::new(0.12, 0.1, 0.01, 100_000.0, 1000.0);
        let state = CompartmentState { s: 99_000.0, i: 1000.0, r: 0.0, d: 0.0, new_cases: 0.0 };
        let next = step(&state, &p, 0).unwrap();
        assert_relative_eq!(next.new_cases, 118.8, max_relative = 1e-14);
        assert_relative_eq!(next.s, 98_881.2, max_relative = 1e-14);
        assert_relative_eq!(next.i, 1018.8, max_relative = 1e-14);
        assert_relative_eq!(next.r, 99.0, max_relative = 1e-14);
        assert_relative_eq!(next.d, 1.0, max_relative = 1e-14);
        assert_relative_eq!(next.total(), 100_000.0, max_relative = 1e-15);
    }

    #[test]
    fn step_pure_recovery_and_fixed_point() {
        // beta0 must be positive, so zero transmission is modelled with a huge negative delta.
        let p = EpidemicParams::new(0.12, 0.1, 0.0, 100_000.0, 1000.0).with_delta(-800.0);
        let state = p.initial_state();
        let next = step(&state, &p, 0).unwrap();
        assert_eq!(next.new_cases, 0.0);
        assert_eq!(next.s, state.s);
        assert_relative_eq!(next.i, 900.0, max_relative = 1e-15);

        let q = EpidemicParams::new(0.12, 0.1, 0.01, 100_000.0, 1000.0);
        let free = CompartmentState { s: 99_000.0, i: 0.0, r: 900.0, d: 100.0, new_cases: 0.0 };
        let next = step(&free, &q, 0).unwrap();
        assert_eq!(next, free);
    }

    #[test]
    fn negative_compartment_is_an_error() {
        // beta I / N > 1 drains more than the susceptible pool.
        let p = EpidemicParams::new(3.0, 0.1, 0.0, 1000.0, 900.0);
        let err = step(&p.initial_state(), &p, 0).unwrap_err();
        assert!(matches!(err, Error::NegativeCompartment { compartment: "S", .. }));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = default_region();
        p.gamma = 0.0;
        assert!(p.validate().is_err());
        let mut p = default_region();
        p.initial_infected = 2e6;
        assert!(p.validate().is_err());
        let p = default_region().with_policy(Some(200), 0.0);
        assert!(simulate(&p, 150, SimulationMode::Deterministic, 0).is_err());
        assert!(simulate(&default_region(), 0, SimulationMode::Deterministic, 0).is_err());
    }

    #[test]
    fn threshold_epidemic_never_grows() {
        let p = EpidemicParams::new(0.1, 0.1, 0.01, 1e6, 5.0);
        let traj = simulate(&p, 150, SimulationMode::Deterministic, 0).unwrap();
        assert_eq!(traj.states.len(), 151);
        for w in traj.states.windows(2) {
            assert!(w[1].i <= w[0].i);
        }
    }

    #[test]
    fn early_growth_matches_closed_form() {
        let traj = simulate(&default_region(), 150, SimulationMode::Deterministic, 0).unwrap();
        let expected = 1.02f64.ln();
        let mut checked = 0;
        for w in traj.states.windows(2) {
            if w[0].s / 1e6 <= 0.999 {
                break;
            }
            let growth = w[1].i.ln() - w[0].i.ln();
            assert!((growth - expected).abs() < 1e-3, "growth {growth}");
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn poisson_mode_is_seeded() {
        let p = EpidemicParams::new(0.2, 0.1, 0.01, 1e5, 50.0);
        let a = simulate(&p, 100, SimulationMode::Poisson, 42).unwrap();
        let b = simulate(&p, 100, SimulationMode::Poisson, 42).unwrap();
        let c = simulate(&p, 100, SimulationMode::Poisson, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.new_cases().iter().all(|c| c.fract() == 0.0));
    }

    #[test]
    fn deterministic_mode_ignores_seed() {
        let a = simulate(&default_region(), 50, SimulationMode::Deterministic, 1).unwrap();
        let b = simulate(&default_region(), 50, SimulationMode::Deterministic, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn potential_outcomes_null_effects() {
        let zero_tau = default_region().with_policy(Some(30), 0.0);
        let po = potential_outcomes(&zero_tau, 150, SimulationMode::Deterministic, 0).unwrap();
        assert_eq!(po.treated.states, po.untreated.states);

        let never = default_region().with_policy(None, 0.9f64.ln());
        let po = potential_outcomes(&never, 150, SimulationMode::Deterministic, 0).unwrap();
        assert_eq!(po.treated.states, po.untreated.states);
    }

    #[test]
    fn on_impact_ratio_is_exact() {
        let p = default_region().with_policy(Some(40), 0.9f64.ln());
        let po = potential_outcomes(&p, 150, SimulationMode::Deterministic, 0).unwrap();
        for t in 0..40 {
            assert_eq!(po.treated.states[t], po.untreated.states[t]);
        }
        let ratio = po.treated.states[40].new_cases / po.untreated.states[40].new_cases;
        assert_relative_eq!(ratio, 0.9, max_relative = 1e-14);
    }

    #[test]
    fn poisson_arms_share_draws_before_treatment() {
        let p = EpidemicParams::new(0.2, 0.1, 0.01, 1e5, 50.0).with_policy(Some(25), 0.9f64.ln());
        let po = potential_outcomes(&p, 80, SimulationMode::Poisson, 9).unwrap();
        assert_eq!(po.treated.states[..25], po.untreated.states[..25]);
    }

    #[test]
    fn hump_shape_and_unimodal_cases() {
        let p = EpidemicParams::new(0.3, 0.1, 0.01, 1e6, 10.0);
        let traj = simulate(&p, 200, SimulationMode::Deterministic, 0).unwrap();
        let cases = traj.new_cases();
        let peak = cases.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap();
        assert!(peak > 0 && peak < 200);
        assert!(cases[..=peak].windows(2).all(|w| w[1] >= w[0]));
        assert!(cases[peak..].windows(2).all(|w| w[1] <= w[0]));
        let infected = traj.infected();
        assert!(infected[peak] > infected[0] && infected[200] < infected[peak]);
    }

    fn arb_params() -> impl Strategy<Value = EpidemicParams> {
        (
            0.05f64..0.6,
            -0.5f64..0.5,
            -0.5f64..0.0,
            0.05f64..1.0,
            0.0f64..1.0,
            1e3f64..1e7,
            1e-5f64..0.05,
            proptest::option::of(0usize..150),
        )
            .prop_map(|(beta0, delta, tau, gamma, mu, n, frac, ts)| {
                EpidemicParams::new(beta0, gamma, mu, n, n * frac).with_delta(delta).with_policy(ts, tau)
            })
    }

    proptest! {
        #[test]
        fn conservation_and_monotonicity(p in arb_params()) {
            let traj = simulate(&p, 150, SimulationMode::Deterministic, 0).unwrap();
            for s in &traj.states {
                prop_assert!(((s.total() - p.population) / p.population).abs() <= 1e-9);
                prop_assert!(s.s >= 0.0 && s.i >= 0.0 && s.r >= 0.0 && s.d >= 0.0 && s.new_cases >= 0.0);
                if s.d + s.r > 0.0 {
                    prop_assert!((s.d / (s.d + s.r) - p.mu).abs() <= 1e-12);
                }
            }
            for w in traj.states.windows(2) {
                prop_assert!(w[1].s <= w[0].s);
                prop_assert!(w[1].r >= w[0].r);
                prop_assert!(w[1].d >= w[0].d);
            }
            let cum = traj.cumulative_cases();
            prop_assert!(cum.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn flow_is_linear_in_beta(p in arb_params(), ratio in 0.1f64..3.0) {
            let state = p.initial_state();
            let base = expected_new_cases(&state, 0.2, p.population);
            let scaled = expected_new_cases(&state, 0.2 * ratio, p.population);
            prop_assert!((scaled / base - ratio).abs() <= 1e-14 * ratio);
        }
    }
}
