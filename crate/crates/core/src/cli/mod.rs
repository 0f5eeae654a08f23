//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical error. Files written before a failure are removed.

mod config;

pub use config::{parse_outcome, FiguresConfig, FitConfig, RunConfig, SummaryConfig, Table1Config};

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, ErrorCategory, Result};
use crate::estimators::{twfe_fit, EffectKind, FitResult, SeKind, Z_95};
use crate::evaluation::{figure_data, table1_run_with_se, write_event_path_csv, TruthBundle};
use crate::panel::{ingest_csv, timing_group_summary, IngestOptions, Outcome, PanelDataset, TimingGroups};
use crate::scenario::ExperimentDesign;

#[derive(Debug, Parser)]
#[command(name = "sirdlab", version, about = "Simulate epidemic panels and evaluate fixed-effects policy estimators")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the design's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["deterministic", "poisson"])]
    pub mode: Option<String>,
    #[arg(long, global = true, value_parser = ["classical", "cluster"])]
    pub se: Option<String>,
    /// cumulative, log, delta-log, or a full outcome label.
    #[arg(long, global = true)]
    pub outcome: Option<String>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the design and write observed and untreated panels.
    Simulate,
    /// Fit a fixed-effects model on a panel CSV.
    Fit {
        /// Panel CSV (overrides fit.input).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_parser = ["none", "constant", "dynamic"])]
        effect: Option<String>,
        #[arg(long)]
        leads: Option<usize>,
        #[arg(long)]
        lags: Option<usize>,
        /// Covariate column to control for; repeatable.
        #[arg(long = "covariate")]
        covariates: Vec<String>,
        #[arg(long)]
        allow_unbalanced: bool,
    },
    /// Run the twelve-row simulation table.
    Table1 {
        /// Run this many consecutive master seeds.
        #[arg(long)]
        sweep: Option<u64>,
    },
    /// Write plot data for the illustrative figures and the appendix event studies.
    Figures {
        /// Restrict to one figure; repeatable.
        #[arg(long = "figure")]
        figures: Vec<String>,
        /// Skip the appendix event studies.
        #[arg(long)]
        no_appendix: bool,
    },
    /// Growth and cumulative-case means by adoption cohort.
    Summary {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Comma-separated cohort boundaries.
        #[arg(long, value_delimiter = ',')]
        bounds: Vec<i64>,
        #[arg(long)]
        at: Option<i64>,
        #[arg(long)]
        window: Option<i64>,
    },
}

/// Files created by the current run, removed again if it fails.
#[derive(Debug, Default)]
struct Artifacts {
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn write(&mut self, path: PathBuf, fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let file = File::create(&path)?;
        self.written.push(path);
        let mut writer = BufWriter::new(file);
        fill(&mut writer)?;
        writer.flush()?;
        Ok(())
    }

    fn write_text(&mut self, path: PathBuf, text: &str) -> Result<()> {
        self.write(path, |w| Ok(w.write_all(text.as_bytes())?))
    }

    fn remove_all(&self) {
        for path in &self.written {
            let _ = std::fs::remove_file(path);
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.design.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(mode) = &cli.mode {
        config.design.mode = mode.parse()?;
    }
    if let Some(se) = &cli.se {
        config.se = Some(se.parse()?);
    }
    if let Some(outcome) = &cli.outcome {
        config.outcome = Some(outcome.clone());
    }
    match &cli.command {
        Some(Command::Fit { input, effect, leads, lags, covariates, allow_unbalanced }) => {
            if input.is_some() {
                config.fit.input = input.clone();
            }
            if let Some(effect) = effect {
                config.fit.effect = match effect.as_str() {
                    "none" => EffectKind::None,
                    "constant" => EffectKind::Constant,
                    _ => EffectKind::Dynamic,
                };
            }
            config.fit.leads = leads.or(config.fit.leads);
            config.fit.lags = lags.or(config.fit.lags);
            config.fit.covariates.extend(covariates.iter().cloned());
            config.fit.allow_unbalanced |= allow_unbalanced;
        }
        Some(Command::Table1 { sweep }) => config.table1.sweep = sweep.or(config.table1.sweep),
        Some(Command::Figures { figures, no_appendix }) => {
            if !figures.is_empty() {
                config.figures.which = figures.iter().map(|f| f.parse()).collect::<Result<_>>()?;
            }
            config.figures.appendix &= !no_appendix;
        }
        Some(Command::Summary { input, bounds, at, window }) => {
            if input.is_some() {
                config.summary.input = input.clone();
            }
            if !bounds.is_empty() {
                config.summary.bounds = bounds.clone();
            }
            config.summary.at = at.or(config.summary.at);
            config.summary.window = window.unwrap_or(config.summary.window);
        }
        Some(Command::Simulate) | None => {}
    }
    config.validate()?;
    Ok(config)
}

fn fit_outputs(fit: &FitResult, prefix: &str, out: &Path, artifacts: &mut Artifacts) -> Result<()> {
    artifacts.write_text(out.join(format!("{prefix}_report.txt")), &fit.report())?;
    artifacts.write(out.join(format!("{prefix}_coefficients.csv")), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["term", "rel_time", "estimate", "se", "se_classical", "se_cluster", "ci_low", "ci_high"])?;
        for c in &fit.coefficients {
            let se = c.se(fit.se_kind);
            csv.write_record([
                c.name.clone(),
                c.rel_time.map(|k| k.to_string()).unwrap_or_default(),
                c.estimate.to_string(),
                se.to_string(),
                c.se_classical.to_string(),
                c.se_cluster.to_string(),
                (c.estimate - Z_95 * se).to_string(),
                (c.estimate + Z_95 * se).to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    if fit.reference_period.is_some() {
        artifacts
            .write(out.join(format!("{prefix}_event_study.csv")), |w| write_event_path_csv(&fit.event_path(), w))?;
    }
    Ok(())
}

fn simulated_truth(design: &ExperimentDesign) -> Result<TruthBundle> {
    TruthBundle::from_design(design)
}

fn run_simulate(config: &RunConfig, artifacts: &mut Artifacts) -> Result<String> {
    let truth = simulated_truth(&config.design)?;
    let out = &config.out;
    artifacts.write(out.join("panel.csv"), |w| crate::panel::write_csv(truth.observed_panel(), w))?;
    artifacts.write(out.join("panel_untreated.csv"), |w| crate::panel::write_csv(truth.counterfactual_panel(), w))?;
    Ok(format!(
        "simulated {} regions over {} periods (seed {}) into {}\n",
        truth.roster().len(),
        config.design.horizon + 1,
        config.design.master_seed,
        out.display()
    ))
}

fn load_panel(path: &Path, allow_unbalanced: bool) -> Result<PanelDataset> {
    let ingested = ingest_csv(path, IngestOptions { allow_unbalanced })?;
    for warning in &ingested.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(ingested.panel)
}

fn run_fit(config: &RunConfig, artifacts: &mut Artifacts) -> Result<String> {
    let input = config
        .fit
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("fit needs an input panel (--input or fit.input)".into()))?;
    let spec = config.regression_spec()?;
    let panel = load_panel(input, config.fit.allow_unbalanced)?;
    let fit = twfe_fit(&panel, &spec)?;
    fit_outputs(&fit, "fit", &config.out, artifacts)?;
    Ok(fit.report())
}

fn run_table1(config: &RunConfig, artifacts: &mut Artifacts) -> Result<String> {
    let sweep = config.table1.sweep.unwrap_or(1);
    let out = &config.out;
    let mut text = String::new();
    let mut reports = Vec::new();
    for offset in 0..sweep {
        let design = ExperimentDesign { master_seed: config.design.master_seed + offset, ..config.design.clone() };
        reports.push(table1_run_with_se(&design, config.se.unwrap_or(SeKind::Classical))?);
    }
    let first = &reports[0];
    artifacts.write(out.join("table1.csv"), |w| first.write_csv(w))?;
    artifacts.write(out.join("table1_event_paths.csv"), |w| first.write_event_paths_csv(w))?;
    text.push_str(&first.to_text());
    artifacts.write_text(out.join("table1.txt"), &text)?;
    if sweep > 1 {
        artifacts.write(out.join("table1_sweep.csv"), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record([
                "seed",
                "policy",
                "model",
                "dependent_variable",
                "estimate",
                "se",
                "se_classical",
                "true_effect",
                "rmse",
            ])?;
            for report in &reports {
                for r in &report.rows {
                    csv.write_record([
                        report.master_seed.to_string(),
                        r.policy.name.clone(),
                        r.model.name().into(),
                        r.outcome.display_name().into(),
                        r.estimate.to_string(),
                        r.se.to_string(),
                        r.se_classical.to_string(),
                        r.true_effect.to_string(),
                        r.rmse.to_string(),
                    ])?;
                }
            }
            csv.flush()?;
            Ok(())
        })?;
    }
    Ok(text)
}

fn run_figures(config: &RunConfig, artifacts: &mut Artifacts) -> Result<String> {
    let out = &config.out;
    let outcome: Option<Outcome> = config.outcome.as_deref().map(parse_outcome).transpose()?;
    let mut text = String::new();
    for &figure in &config.figures.which {
        let data = figure_data(figure, outcome, config.se.unwrap_or(SeKind::Cluster))?;
        artifacts.write(out.join(format!("{}_series.csv", figure.name())), |w| data.write_series_csv(w))?;
        if let Some(fit) = &data.fit {
            fit_outputs(fit, figure.name(), out, artifacts)?;
        }
        text.push_str(&format!("{}: {} series\n", figure.name(), data.series.len()));
    }
    if config.figures.appendix {
        let report = table1_run_with_se(&config.design, config.se.unwrap_or(SeKind::Classical))?;
        artifacts.write(out.join("appendix_event_paths.csv"), |w| report.write_event_paths_csv(w))?;
        text.push_str(&format!("appendix: {} event-study paths\n", report.event_paths.len()));
    }
    Ok(text)
}

fn run_summary(config: &RunConfig, artifacts: &mut Artifacts) -> Result<String> {
    let settings = &config.summary;
    let panel = match &settings.input {
        Some(path) => load_panel(path, settings.allow_unbalanced)?,
        None => simulated_truth(&config.design)?.observed_panel().clone(),
    };
    let first = panel
        .regions()
        .iter()
        .filter_map(|r| r.treat_time)
        .min()
        .ok_or_else(|| Error::Panel("panel has no treated region to group".into()))?;
    let bounds = if settings.bounds.is_empty() {
        vec![first, first + 7, first + 14, first + 21]
    } else {
        settings.bounds.clone()
    };
    let groups = TimingGroups::from_bounds(&bounds).map_err(|e| Error::Config(e.to_string()))?;
    let at = settings.at.unwrap_or(first + 6);
    let summary = timing_group_summary(&panel, &groups, at, settings.window, settings.growth_base)?;
    let mut text = format!("{:<14} {:>8} {:>14} {:>22}\n", "group", "regions", "mean growth", "cumulative per 10k");
    for g in &summary {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "NA".into());
        text.push_str(&format!(
            "{:<14} {:>8} {:>14} {:>22}\n",
            g.label,
            g.n_regions,
            fmt(g.mean_growth),
            fmt(g.mean_cumulative_per_10k)
        ));
    }
    artifacts.write(config.out.join("summary.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["group", "n_regions", "n_growth", "mean_growth", "mean_cumulative_per_10k", "at", "window"])?;
        for g in &summary {
            let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            csv.write_record([
                g.label.clone(),
                g.n_regions.to_string(),
                g.n_growth.to_string(),
                opt(g.mean_growth),
                opt(g.mean_cumulative_per_10k),
                at.to_string(),
                settings.window.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(text)
}

fn execute(
    cli: &Cli,
    config: &RunConfig,
    artifacts: &mut Artifacts,
) -> std::result::Result<String, (&'static str, Error)> {
    let Some(command) = &cli.command else {
        return Err(("usage", Error::Config("no command given (simulate, fit, table1, figures, summary)".into())));
    };
    std::fs::create_dir_all(&config.out).map_err(|e| ("output", Error::Io(e)))?;
    let stage = match command {
        Command::Simulate => "simulate",
        Command::Fit { .. } => "fit",
        Command::Table1 { .. } => "table1",
        Command::Figures { .. } => "figures",
        Command::Summary { .. } => "summary",
    };
    let result = match command {
        Command::Simulate => run_simulate(config, artifacts),
        Command::Fit { .. } => run_fit(config, artifacts),
        Command::Table1 { .. } => run_table1(config, artifacts),
        Command::Figures { .. } => run_figures(config, artifacts),
        Command::Summary { .. } => run_summary(config, artifacts),
    };
    result.map_err(|e| (stage, e))
}

pub fn exit_code(category: ErrorCategory) -> i32 {
    match category {
        ErrorCategory::Usage => 1,
        ErrorCategory::Data => 2,
        ErrorCategory::Numerical => 3,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let config = match resolve(&cli) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(e.category());
        }
    };
    if cli.print_config {
        return match config.to_toml() {
            Ok(text) => {
                print!("{text}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(e.category())
            }
        };
    }
    let mut artifacts = Artifacts::default();
    match execute(&cli, &config, &mut artifacts) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err((stage, e)) => {
            artifacts.remove_all();
            eprintln!("error in {stage}: {e}");
            exit_code(e.category())
        }
    }
}
