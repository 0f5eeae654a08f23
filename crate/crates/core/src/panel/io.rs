//! CSV exchange format.
//!
//! Columns: `region_id, t, new_cases, cum_cases, population, treat_time`, then an
//! optional outcome column (`y_<label>` for a known transform, `y` otherwise),
//! then any covariate columns. Missing values are empty fields. Numbers are
//! written in shortest round-trip form, so export followed by ingest is lossless
//! and repeated exports are byte-identical.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Outcome, PanelDataset, RawRow, RegionInfo};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Accept panels with missing (region, period) cells.
    pub allow_unbalanced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub panel: PanelDataset,
    pub warnings: Vec<String>,
}

fn fmt_num(value: f64) -> String {
    format!("{value}")
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(fmt_num).unwrap_or_default()
}

pub fn write_csv<W: Write>(panel: &PanelDataset, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["region_id", "t", "new_cases", "cum_cases", "population", "treat_time"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if panel.outcome_values().is_some() {
        header.push(match panel.outcome() {
            Some(outcome) => format!("y_{}", outcome.label()),
            None => "y".to_string(),
        });
    }
    header.extend(panel.covariates().iter().map(|(name, _)| name.clone()));
    out.write_record(&header)?;
    for (index, obs) in panel.observations().iter().enumerate() {
        let region = &panel.regions()[obs.region];
        let mut record = vec![
            region.id.clone(),
            obs.t.to_string(),
            fmt_num(obs.new_cases),
            fmt_num(obs.cum_cases),
            fmt_num(region.population),
            region.treat_time.map(|t| t.to_string()).unwrap_or_default(),
        ];
        if let Some(values) = panel.outcome_values() {
            record.push(fmt_opt(values[index]));
        }
        record.extend(panel.covariates().iter().map(|(_, v)| fmt_opt(v[index])));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_csv(panel: &PanelDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(panel, std::io::BufWriter::new(file))
}

pub fn ingest_csv(path: impl AsRef<Path>, options: IngestOptions) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    read_csv(file, options)
}

struct ParsedRow {
    region: usize,
    t: i64,
    new_cases: Option<f64>,
    cum_cases: Option<f64>,
    treated_flag: Option<bool>,
    outcome: Option<f64>,
    covariates: Vec<Option<f64>>,
    line: u64,
}

fn parse_f64(field: &str, column: &str, line: u64) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::Schema(format!("line {line}: `{field}` in column `{column}` is not a finite number")))
}

fn parse_i64(field: &str, column: &str, line: u64) -> Result<Option<i64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<i64>()
        .map(Some)
        .map_err(|_| Error::Schema(format!("line {line}: `{field}` in column `{column}` is not an integer")))
}

fn parse_flag(field: &str, line: u64) -> Result<Option<bool>> {
    match field.trim() {
        "" => Ok(None),
        "1" | "true" | "TRUE" | "True" => Ok(Some(true)),
        "0" | "false" | "FALSE" | "False" => Ok(Some(false)),
        other => Err(Error::Schema(format!("line {line}: `{other}` is not a treatment flag"))),
    }
}

pub fn read_csv<R: Read>(reader: R, options: IngestOptions) -> Result<Ingested> {
    let mut input = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = input.headers()?.iter().map(|h| h.to_string()).collect();
    let position = |name: &str| header.iter().position(|h| h == name);
    let require = |name: &str| position(name).ok_or_else(|| Error::Schema(format!("missing required column `{name}`")));
    let region_col = require("region_id")?;
    let t_col = require("t")?;
    let population_col = require("population")?;
    let new_col = position("new_cases");
    let cum_col = position("cum_cases");
    if new_col.is_none() && cum_col.is_none() {
        return Err(Error::Schema("need a `new_cases` or `cum_cases` column".into()));
    }
    let treat_time_col = position("treat_time");
    let treated_col = position("treated");
    if treat_time_col.is_none() && treated_col.is_none() {
        return Err(Error::Schema("need a `treat_time` or `treated` column".into()));
    }
    let known = ["region_id", "t", "new_cases", "cum_cases", "population", "treat_time", "treated"];
    let mut outcome_col: Option<(usize, Option<Outcome>)> = None;
    let mut covariate_cols = Vec::new();
    for (index, name) in header.iter().enumerate() {
        if known.contains(&name.as_str()) {
            continue;
        }
        let parsed = if name == "y" {
            Some(None)
        } else if let Some(label) = name.strip_prefix("y_") {
            Some(Some(Outcome::from_label(label)?))
        } else {
            None
        };
        match parsed {
            Some(outcome) => {
                if outcome_col.is_some() {
                    return Err(Error::Schema("more than one outcome column".into()));
                }
                outcome_col = Some((index, outcome));
            }
            None => covariate_cols.push(index),
        }
    }

    let mut regions: Vec<RegionInfo> = Vec::new();
    let mut region_index: HashMap<String, usize> = HashMap::new();
    let mut declared_treat: Vec<Option<Option<i64>>> = Vec::new();
    let mut rows = Vec::new();
    for record in input.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |col: usize| record.get(col).unwrap_or("");
        let id = get(region_col).to_string();
        if id.is_empty() {
            return Err(Error::Schema(format!("line {line}: empty region_id")));
        }
        let t =
            parse_i64(get(t_col), "t", line)?.ok_or_else(|| Error::Schema(format!("line {line}: missing period")))?;
        let population = parse_f64(get(population_col), "population", line)?
            .ok_or_else(|| Error::Schema(format!("line {line}: missing population")))?;
        let treat_time = match treat_time_col {
            Some(col) => Some(parse_i64(get(col), "treat_time", line)?),
            None => None,
        };
        let region = match region_index.get(&id) {
            Some(&index) => {
                if regions[index].population != population {
                    return Err(Error::Schema(format!("line {line}: population of `{id}` changes over time")));
                }
                if treat_time.is_some() && declared_treat[index] != treat_time {
                    return Err(Error::Schema(format!("line {line}: treat_time of `{id}` changes over time")));
                }
                index
            }
            None => {
                region_index.insert(id.clone(), regions.len());
                regions.push(RegionInfo { id, population, treat_time: None });
                declared_treat.push(treat_time);
                regions.len() - 1
            }
        };
        let new_cases = match new_col {
            Some(col) => parse_f64(get(col), "new_cases", line)?,
            None => None,
        };
        if new_cases.is_some_and(|c| c < 0.0) {
            return Err(Error::Schema(format!("line {line}: negative new_cases")));
        }
        rows.push(ParsedRow {
            region,
            t,
            new_cases,
            cum_cases: match cum_col {
                Some(col) => parse_f64(get(col), "cum_cases", line)?,
                None => None,
            },
            treated_flag: match treated_col {
                Some(col) => parse_flag(get(col), line)?,
                None => None,
            },
            outcome: match outcome_col {
                Some((col, _)) => parse_f64(get(col), &header[col], line)?,
                None => None,
            },
            covariates: covariate_cols
                .iter()
                .map(|&col| parse_f64(get(col), &header[col], line))
                .collect::<Result<_>>()?,
            line,
        });
    }
    if rows.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    rows.sort_by_key(|r| (r.region, r.t));

    let mut warnings = Vec::new();
    let mut raw_rows = Vec::with_capacity(rows.len());
    let mut start = 0;
    while start < rows.len() {
        let region = rows[start].region;
        let end = start + rows[start..].iter().take_while(|r| r.region == region).count();
        let block = &rows[start..end];
        let id = regions[region].id.clone();

        regions[region].treat_time = match (treat_time_col, treated_col) {
            (Some(_), _) => declared_treat[region].flatten(),
            (None, _) => {
                let first = block.iter().find(|r| r.treated_flag == Some(true)).map(|r| r.t);
                if let Some(first) = first {
                    if let Some(bad) = block.iter().find(|r| r.t > first && r.treated_flag == Some(false)) {
                        return Err(Error::Schema(format!(
                            "line {}: treatment of `{id}` switches off at period {} (treatment must be absorbing)",
                            bad.line, bad.t
                        )));
                    }
                }
                first
            }
        };

        let all_new = block.iter().all(|r| r.new_cases.is_some());
        let all_cum = block.iter().all(|r| r.cum_cases.is_some());
        let cum_envelope = |warnings: &mut Vec<String>| -> Vec<f64> {
            let mut running = f64::NEG_INFINITY;
            let mut flagged = Vec::new();
            let out = block
                .iter()
                .map(|r| {
                    let c = r.cum_cases.unwrap_or(0.0);
                    if c < running {
                        flagged.push(r.t);
                    }
                    running = running.max(c);
                    running
                })
                .collect();
            if !flagged.is_empty() {
                warnings.push(format!(
                    "region `{id}`: cumulative cases decrease at periods {flagged:?}; using the running maximum"
                ));
            }
            out
        };
        let (new_cases, cum_cases): (Vec<f64>, Vec<f64>) = if all_new {
            let new: Vec<f64> = block.iter().map(|r| r.new_cases.unwrap_or(0.0)).collect();
            let cum = if all_cum {
                cum_envelope(&mut warnings)
            } else {
                new.iter()
                    .scan(0.0, |acc, c| {
                        *acc += c;
                        Some(*acc)
                    })
                    .collect()
            };
            (new, cum)
        } else if all_cum {
            let cum = cum_envelope(&mut warnings);
            let new = cum.iter().enumerate().map(|(j, &c)| if j == 0 { c } else { c - cum[j - 1] }).collect();
            warnings.push(format!("region `{id}`: new_cases recovered by differencing cumulative cases"));
            (new, cum)
        } else {
            let bad = block.iter().find(|r| r.new_cases.is_none() && r.cum_cases.is_none());
            return Err(Error::Schema(format!(
                "region `{id}`: line {} has neither new_cases nor cum_cases",
                bad.map(|r| r.line).unwrap_or(0)
            )));
        };
        if new_cases.first().is_some_and(|c| *c < 0.0) {
            return Err(Error::Schema(format!("region `{id}`: negative cumulative cases")));
        }
        for (j, r) in block.iter().enumerate() {
            raw_rows.push(RawRow { region, t: r.t, new_cases: new_cases[j], cum_cases: cum_cases[j] });
        }
        start = end;
    }

    let mut panel = PanelDataset::new(regions, raw_rows, options.allow_unbalanced)?;
    if let Some((_, outcome)) = outcome_col {
        panel.outcome = outcome;
        panel.outcome_values = Some(rows.iter().map(|r| r.outcome).collect());
    }
    for (k, &col) in covariate_cols.iter().enumerate() {
        let values = rows.iter().map(|r| r.covariates[k]).collect();
        panel = panel.with_covariate(&header[col], values)?;
    }
    Ok(Ingested { panel, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::SimulationMode;
    use crate::panel::build_panel;
    use crate::scenario::{draw_roster, simulate_roster, ExperimentDesign};

    fn small_panel() -> PanelDataset {
        let design = ExperimentDesign { n_regions: 4, horizon: 30, treat_time_range: [5, 25], ..Default::default() };
        let roster = draw_roster(&design).unwrap();
        let sims = simulate_roster(&roster, design.horizon, SimulationMode::Deterministic, 1).unwrap();
        let observed: Vec<_> = sims.into_iter().map(|p| p.treated).collect();
        build_panel(&roster, &observed).unwrap()
    }

    fn to_string(panel: &PanelDataset) -> String {
        let mut buf = Vec::new();
        write_csv(panel, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn ingest(text: &str) -> Result<Ingested> {
        read_csv(text.as_bytes(), IngestOptions::default())
    }

    #[test]
    fn round_trip_is_lossless() {
        let panel = small_panel().apply_outcome(Outcome::delta_log());
        let panel = panel
            .clone()
            .with_covariate(
                "x",
                (0..panel.len()).map(|i| if i % 7 == 0 { None } else { Some(i as f64 / 3.0) }).collect(),
            )
            .unwrap();
        let text = to_string(&panel);
        let back = ingest(&text).unwrap();
        assert!(back.warnings.is_empty());
        assert_eq!(back.panel, panel);
        assert_eq!(to_string(&back.panel), text);
    }

    #[test]
    fn header_and_never_treated_encoding() {
        let text = "region_id,t,new_cases,cum_cases,population,treat_time\na,0,1,1,10,\na,1,2,3,10,\n";
        let panel = ingest(text).unwrap().panel;
        assert_eq!(panel.regions()[0].treat_time, None);
        let out = to_string(&panel);
        assert_eq!(out, text);
    }

    #[test]
    fn missing_cell_error_names_cell() {
        let text = "region_id,t,new_cases,population,treat_time\na,0,1,10,\na,1,1,10,\nb,0,1,10,1\n";
        match ingest(text).unwrap_err() {
            Error::MissingCell { region, period } => assert_eq!((region.as_str(), period), ("b", 1)),
            other => panic!("unexpected {other}"),
        }
        let ok = read_csv(text.as_bytes(), IngestOptions { allow_unbalanced: true }).unwrap();
        assert_eq!(ok.panel.len(), 3);
    }

    #[test]
    fn new_cases_recovered_from_cumulative() {
        let text = "region_id,t,cum_cases,population,treat_time\na,0,1,10,\na,1,3,10,\na,2,6,10,\n";
        let ingested = ingest(text).unwrap();
        let new: Vec<f64> = ingested.panel.observations().iter().map(|o| o.new_cases).collect();
        assert_eq!(new, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn non_monotone_cumulative_warns() {
        let text = "region_id,t,cum_cases,population,treat_time\na,0,5,10,\na,1,4,10,\na,2,8,10,\n";
        let ingested = ingest(text).unwrap();
        assert!(ingested.warnings.iter().any(|w| w.contains("decrease")));
        let new: Vec<f64> = ingested.panel.observations().iter().map(|o| o.new_cases).collect();
        assert_eq!(new, vec![5.0, 0.0, 3.0]);
    }

    #[test]
    fn treated_flag_column() {
        let text = "region_id,t,new_cases,population,treated\na,0,1,10,0\na,1,1,10,1\na,2,1,10,1\nb,0,1,10,0\nb,1,1,10,0\nb,2,1,10,0\n";
        let panel = ingest(text).unwrap().panel;
        assert_eq!(panel.regions()[0].treat_time, Some(1));
        assert_eq!(panel.regions()[1].treat_time, None);
        let flipping = "region_id,t,new_cases,population,treated\na,0,1,10,1\na,1,1,10,0\n";
        assert!(matches!(ingest(flipping).unwrap_err(), Error::Schema(_)));
    }

    #[test]
    fn schema_violations() {
        assert!(matches!(ingest("t,new_cases,population,treat_time\n0,1,1,\n").unwrap_err(), Error::Schema(_)));
        assert!(matches!(
            ingest("region_id,t,new_cases,population,treat_time\na,x,1,1,\n").unwrap_err(),
            Error::Schema(_)
        ));
        assert!(matches!(
            ingest("region_id,t,new_cases,population,treat_time\na,0,1,1,\na,1,1,2,\n").unwrap_err(),
            Error::Schema(_)
        ));
        assert!(matches!(ingest("region_id,t,population,treat_time\na,0,1,\n").unwrap_err(), Error::Schema(_)));
        assert!(matches!(
            ingest("region_id,t,new_cases,population,treat_time,y_bogus\na,0,1,1,,\n").unwrap_err(),
            Error::Schema(_)
        ));
    }
}
