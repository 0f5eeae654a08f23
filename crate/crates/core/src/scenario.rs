//! Multi-region experiment designs.
//!
//! [`draw_roster`] implements the randomized protocol: shared structural rates,
//! uniform draws for region heterogeneity, population, seed fraction and
//! adoption date. [`figure_scenario`] returns the small fixed configurations used
//! for the illustrative figures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epidemic::{potential_outcomes_with_rng, EpidemicParams, PotentialOutcomes, SimulationMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentDesign {
    pub n_regions: usize,
    pub horizon: usize,
    pub beta0: f64,
    pub gamma: f64,
    pub mu: f64,
    pub delta_range: [f64; 2],
    pub population_range: [f64; 2],
    /// Initial infected as a fraction of the population.
    pub seed_fraction_range: [f64; 2],
    /// Inclusive bounds of the adoption period.
    pub treat_time_range: [usize; 2],
    pub never_treated_fraction: f64,
    pub tau: f64,
    pub mode: SimulationMode,
    pub master_seed: u64,
}

impl Default for ExperimentDesign {
    fn default() -> Self {
        Self {
            n_regions: 100,
            horizon: 150,
            beta0: 0.12,
            gamma: 0.1,
            mu: 0.01,
            delta_range: [0.0, 0.5],
            population_range: [1e5, 1e6],
            seed_fraction_range: [0.001, 0.01],
            treat_time_range: [1, 150],
            never_treated_fraction: 0.0,
            tau: 0.9f64.ln(),
            mode: SimulationMode::Deterministic,
            master_seed: 2020,
        }
    }
}

impl ExperimentDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_regions < 2 {
            return bad(format!("n_regions must be at least 2, got {}", self.n_regions));
        }
        if self.horizon < 2 {
            return bad(format!("horizon must be at least 2, got {}", self.horizon));
        }
        for (name, [lo, hi]) in [
            ("delta_range", self.delta_range),
            ("population_range", self.population_range),
            ("seed_fraction_range", self.seed_fraction_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} must be finite and ordered, got [{lo}, {hi}]"));
            }
        }
        if self.population_range[0] <= 0.0 {
            return bad("population_range must be positive".into());
        }
        if !(self.seed_fraction_range[0] > 0.0 && self.seed_fraction_range[1] <= 1.0) {
            return bad("seed_fraction_range must lie in (0, 1]".into());
        }
        let [lo, hi] = self.treat_time_range;
        if lo > hi || hi > self.horizon {
            return bad(format!(
                "treat_time_range [{lo}, {hi}] must be ordered and within the horizon {}",
                self.horizon
            ));
        }
        if !(0.0..=1.0).contains(&self.never_treated_fraction) {
            return bad("never_treated_fraction must lie in [0, 1]".into());
        }
        EpidemicParams::new(self.beta0, self.gamma, self.mu, 1.0, 1.0).validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: String,
    pub params: EpidemicParams,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionRoster {
    pub regions: Vec<Region>,
}

impl RegionRoster {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        let roster = Self { regions };
        roster.validate()?;
        Ok(roster)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for region in &self.regions {
            if !seen.insert(region.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate region id `{}`", region.id)));
            }
            region.params.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Replaces the policy effect of every region, keeping adoption dates.
    pub fn with_tau(&self, tau: f64) -> Self {
        let mut out = self.clone();
        for region in &mut out.regions {
            region.params.tau = tau;
        }
        out
    }
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    lo + u * (hi - lo)
}

pub fn region_id(index: usize) -> String {
    format!("region_{:03}", index + 1)
}

/// Draws one parameter set per region. The roster uses its own stream of the
/// master seed, so it does not depend on the simulation mode.
pub fn draw_roster(design: &ExperimentDesign) -> Result<RegionRoster> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.master_seed);
    let regions = (0..design.n_regions)
        .map(|index| {
            let delta = uniform(&mut rng, design.delta_range);
            let population = uniform(&mut rng, design.population_range);
            let seed_fraction = uniform(&mut rng, design.seed_fraction_range);
            let [lo, hi] = design.treat_time_range;
            let treat_time = rng.random_range(lo..=hi);
            let never: f64 = rng.random();
            let treat_time = (never >= design.never_treated_fraction).then_some(treat_time);
            Region {
                id: region_id(index),
                params: EpidemicParams::new(
                    design.beta0,
                    design.gamma,
                    design.mu,
                    population,
                    seed_fraction * population,
                )
                .with_delta(delta)
                .with_policy(treat_time, design.tau),
            }
        })
        .collect();
    RegionRoster::new(regions)
}

/// Random stream for region `index`; stream 0 is reserved for roster draws.
pub fn region_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Potential-outcome pairs for every region of a roster, in roster order.
pub fn simulate_roster(
    roster: &RegionRoster,
    horizon: usize,
    mode: SimulationMode,
    master_seed: u64,
) -> Result<Vec<PotentialOutcomes>> {
    roster
        .regions
        .par_iter()
        .enumerate()
        .map(|(index, region)| {
            potential_outcomes_with_rng(&region.params, horizon, mode, &region_rng(master_seed, index))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::Fig4];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        }
    }
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown figure `{s}` (expected fig1..fig4)")))
    }
}

pub const FIGURE_BETA: f64 = 0.3;
pub const FIGURE_GAMMA: f64 = 0.1;
pub const FIGURE_MU: f64 = 0.01;
pub const FIGURE_POPULATION: f64 = 1e6;
pub const FIGURE_INITIAL_INFECTED: f64 = 10.0;
pub const FIGURE_TREAT_TIME: usize = 20;
pub const FIGURE_HORIZON: usize = 100;
/// Log infection-rate decay per period of the figure-1 confounder.
pub const FIGURE1_DRIFT: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct FigureScenario {
    pub figure: Figure,
    pub roster: RegionRoster,
    pub horizon: usize,
}

pub fn figure_scenario(figure: Figure) -> FigureScenario {
    let base = EpidemicParams::new(FIGURE_BETA, FIGURE_GAMMA, FIGURE_MU, FIGURE_POPULATION, FIGURE_INITIAL_INFECTED);
    let ten_percent_cut = 0.9f64.ln();
    let twenty_percent_higher = 1.2f64.ln();
    let region = |id: &str, params: EpidemicParams| Region { id: id.to_string(), params };
    let regions = match figure {
        Figure::Fig1 => vec![
            region(
                "policy_confounder",
                base.clone().with_policy(Some(FIGURE_TREAT_TIME), ten_percent_cut).with_drift(FIGURE1_DRIFT),
            ),
            region("no_policy_confounder", base.clone().with_drift(FIGURE1_DRIFT)),
            region("no_policy", base),
        ],
        Figure::Fig2 => vec![
            region("unit_1", base.clone().with_policy(Some(FIGURE_TREAT_TIME), 0.0)),
            region("unit_2", base.with_delta(twenty_percent_higher)),
        ],
        Figure::Fig3 => {
            vec![region("region_1", base.clone()), region("region_2", base.with_delta(twenty_percent_higher))]
        }
        Figure::Fig4 => vec![
            region("region_1", base.clone().with_policy(Some(FIGURE_TREAT_TIME), ten_percent_cut)),
            region("region_2", base),
        ],
    };
    FigureScenario { figure, roster: RegionRoster { regions }, horizon: FIGURE_HORIZON }
}
