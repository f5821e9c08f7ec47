//! Loading and validating the four tabular inputs.
//!
//! ```text
//! areas.csv       area_id,name,large_area_id,latitude,longitude
//! estimates.csv   area_id,time_index,rate_pct,design_sd_pct
//! covariates.csv  area_id,year,<covariate_1>,...,<covariate_p>
//! adjacency.csv   area_id_a,area_id_b
//! ```
//!
//! Areas are held in ascending `area_id` order so that every downstream
//! result is independent of input row order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("{file}: {message}")]
    Io { file: String, message: String },
    #[error("{file}: missing column '{column}'")]
    MissingColumn { file: String, column: String },
    #[error("{file} line {line}: duplicate key {key}")]
    DuplicateKey {
        file: String,
        line: usize,
        key: String,
    },
    #[error("{file} line {line}: unresolved area id '{id}'")]
    UnresolvedAreaId {
        file: String,
        line: usize,
        id: String,
    },
    #[error("{file} line {line}: design standard deviation {value} for area '{id}' is not positive and finite")]
    NonPositiveVariance {
        file: String,
        line: usize,
        id: String,
        value: f64,
    },
    #[error("{file} line {line}: missing value in column '{column}'")]
    MissingValue {
        file: String,
        line: usize,
        column: String,
    },
    #[error("{file} line {line}: invalid value '{value}' in column '{column}'")]
    InvalidValue {
        file: String,
        line: usize,
        column: String,
        value: String,
    },
    #[error("{file} line {line}: area '{id}' is paired with itself")]
    SelfPair {
        file: String,
        line: usize,
        id: String,
    },
    #[error("no covariate rows fall inside the window {0}")]
    EmptyWindow(YearWindow),
    #[error("covariate '{0}' is constant across areas and cannot be standardized")]
    ConstantCovariate(String),
    #[error("no area has a direct estimate at the target time index {0}")]
    EmptyDataset(i64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaRecord {
    pub area_id: String,
    pub name: String,
    pub large_area_id: String,
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectEstimate {
    pub area_id: String,
    pub time_index: i64,
    pub rate: f64,
    pub design_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateRow {
    pub area_id: String,
    pub year: i32,
    pub values: Vec<f64>,
}

/// Unordered neighbour pairs, stored with the smaller id first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdjacencyList {
    pub pairs: BTreeSet<(String, String)>,
}

impl AdjacencyList {
    pub fn insert(&mut self, a: &str, b: &str) {
        let pair = if a <= b { (a, b) } else { (b, a) };
        self.pairs.insert((pair.0.to_string(), pair.1.to_string()));
    }
}

/// Covariate panel restricted to its header names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariatePanel {
    pub names: Vec<String>,
    pub rows: Vec<CovariateRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Aggregation {
    Mean,
    LastYear,
    /// Weights `1, 2, ..` increasing toward the window end.
    LinearLag,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::LastYear => "last",
            Aggregation::LinearLag => "linear_lag",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mean" => Ok(Aggregation::Mean),
            "last" | "last_year" => Ok(Aggregation::LastYear),
            "linear_lag" => Ok(Aggregation::LinearLag),
            other => Err(format!("unknown aggregation '{other}'")),
        }
    }
}

/// Half-open year window `(start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct YearWindow {
    pub start_exclusive: i32,
    pub end: i32,
}

impl YearWindow {
    pub fn contains(&self, year: i32) -> bool {
        year > self.start_exclusive && year <= self.end
    }
}

impl fmt::Display for YearWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}]", self.start_exclusive, self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    /// Defaults to the largest time index present.
    pub target_time_index: Option<i64>,
    /// Defaults to every year up to the window end.
    pub window_years: Option<u32>,
    /// Defaults to the latest covariate year present.
    pub window_end_year: Option<i32>,
    pub aggregation: Aggregation,
    pub covariate_whitelist: Option<Vec<String>>,
    /// Center and scale each covariate column across areas.
    pub standardize: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            target_time_index: None,
            window_years: None,
            window_end_year: None,
            aggregation: Aggregation::Mean,
            covariate_whitelist: None,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedArea {
    pub area_id: String,
    pub reason: String,
}

/// One direct estimate in the analysis dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub area: usize,
    /// Index into [`Dataset::times`].
    pub time: usize,
    pub rate: f64,
    pub variance: f64,
}

/// The joined analysis dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub areas: Vec<AreaRecord>,
    pub large_areas: Vec<String>,
    /// Large-area index of each area.
    pub area_large: Vec<usize>,
    /// Distinct time indices, ascending; the last is the target.
    pub times: Vec<i64>,
    /// Sorted by (area, time); at most one per cell.
    pub observations: Vec<Observation>,
    pub covariate_names: Vec<String>,
    /// m × p, row per area.
    pub x: Vec<Vec<f64>>,
    /// Area index pairs with `a < b`.
    pub adjacency: Vec<(usize, usize)>,
    pub dropped: Vec<DroppedArea>,
}

impl Dataset {
    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn n_large_areas(&self) -> usize {
        self.large_areas.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn target_time_index(&self) -> i64 {
        *self
            .times
            .last()
            .expect("dataset has at least one time level")
    }

    pub fn area_ids(&self) -> Vec<String> {
        self.areas.iter().map(|a| a.area_id.clone()).collect()
    }

    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        self.areas
            .iter()
            .map(|a| (a.latitude, a.longitude))
            .collect()
    }

    /// Observation index of each area at the target time.
    pub fn target_observations(&self) -> Vec<usize> {
        let t = self.times.len() - 1;
        let mut idx = vec![usize::MAX; self.areas.len()];
        for (o, obs) in self.observations.iter().enumerate() {
            if obs.time == t {
                idx[obs.area] = o;
            }
        }
        idx
    }

    pub fn target_rates(&self) -> Vec<f64> {
        self.target_observations()
            .into_iter()
            .map(|o| self.observations[o].rate)
            .collect()
    }

    /// Keep only the listed areas (in the dataset's own order). Covariates are
    /// carried over unchanged.
    pub fn restrict_to(&self, keep_ids: &[String]) -> Dataset {
        let keep: BTreeSet<&str> = keep_ids.iter().map(String::as_str).collect();
        let old_to_new: Vec<Option<usize>> = {
            let mut next = 0;
            self.areas
                .iter()
                .map(|a| {
                    keep.contains(a.area_id.as_str()).then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        let areas: Vec<AreaRecord> = self
            .areas
            .iter()
            .filter(|a| keep.contains(a.area_id.as_str()))
            .cloned()
            .collect();
        let large_areas: Vec<String> = areas
            .iter()
            .map(|a| a.large_area_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let area_large = areas
            .iter()
            .map(|a| large_areas.binary_search(&a.large_area_id).unwrap())
            .collect();
        let observations = self
            .observations
            .iter()
            .filter_map(|o| old_to_new[o.area].map(|area| Observation { area, ..*o }))
            .collect();
        let x = self
            .x
            .iter()
            .zip(&old_to_new)
            .filter(|(_, k)| k.is_some())
            .map(|(row, _)| row.clone())
            .collect();
        let adjacency = self
            .adjacency
            .iter()
            .filter_map(|&(a, b)| Some((old_to_new[a]?, old_to_new[b]?)))
            .collect();
        let mut dropped = self.dropped.clone();
        dropped.extend(
            self.areas
                .iter()
                .filter(|a| !keep.contains(a.area_id.as_str()))
                .map(|a| DroppedArea {
                    area_id: a.area_id.clone(),
                    reason: "pruned from spatial weight system".into(),
                }),
        );
        Dataset {
            areas,
            large_areas,
            area_large,
            times: self.times.clone(),
            observations,
            covariate_names: self.covariate_names.clone(),
            x,
            adjacency,
            dropped,
        }
    }
}

// ---------------------------------------------------------------------------
// CSV parsing

struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Table, IngestError> {
        let file = path.display().to_string();
        let io = |e: csv::Error| IngestError::Io {
            file: file.clone(),
            message: e.to_string(),
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(io)?;
        let headers = rdr
            .headers()
            .map_err(io)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(io)?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
            rows.push((line, rec));
        }
        Ok(Table {
            file,
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize, IngestError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn {
                file: self.file.clone(),
                column: name.to_string(),
            })
    }

    fn text<'r>(
        &self,
        line: usize,
        rec: &'r csv::StringRecord,
        col: usize,
    ) -> Result<&'r str, IngestError> {
        match rec.get(col) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(IngestError::MissingValue {
                file: self.file.clone(),
                line,
                column: self.headers[col].clone(),
            }),
        }
    }

    fn value<T: FromStr>(
        &self,
        line: usize,
        rec: &csv::StringRecord,
        col: usize,
    ) -> Result<T, IngestError> {
        let s = self.text(line, rec, col)?;
        s.parse().map_err(|_| IngestError::InvalidValue {
            file: self.file.clone(),
            line,
            column: self.headers[col].clone(),
            value: s.to_string(),
        })
    }

    fn finite(&self, line: usize, rec: &csv::StringRecord, col: usize) -> Result<f64, IngestError> {
        let v: f64 = self.value(line, rec, col)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(IngestError::InvalidValue {
                file: self.file.clone(),
                line,
                column: self.headers[col].clone(),
                value: v.to_string(),
            })
        }
    }
}

pub fn read_areas(path: &Path) -> Result<Vec<AreaRecord>, IngestError> {
    let t = Table::read(path)?;
    let cols = ["area_id", "name", "large_area_id", "latitude", "longitude"]
        .map(|c| t.column(c))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let area_id = t.text(line, rec, cols[0])?.to_string();
        if !seen.insert(area_id.clone()) {
            return Err(IngestError::DuplicateKey {
                file: t.file.clone(),
                line,
                key: area_id,
            });
        }
        let latitude = t.finite(line, rec, cols[3])?;
        let longitude = t.finite(line, rec, cols[4])?;
        let out_of_range = |col: usize, v: f64| IngestError::InvalidValue {
            file: t.file.clone(),
            line,
            column: t.headers[col].clone(),
            value: v.to_string(),
        };
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(out_of_range(cols[3], latitude));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(out_of_range(cols[4], longitude));
        }
        out.push(AreaRecord {
            area_id,
            name: rec.get(cols[1]).unwrap_or("").to_string(),
            large_area_id: t.text(line, rec, cols[2])?.to_string(),
            latitude,
            longitude,
        });
    }
    Ok(out)
}

fn resolve(t: &Table, line: usize, id: &str, known: &BTreeSet<String>) -> Result<(), IngestError> {
    if known.contains(id) {
        Ok(())
    } else {
        Err(IngestError::UnresolvedAreaId {
            file: t.file.clone(),
            line,
            id: id.to_string(),
        })
    }
}

pub fn read_estimates(
    path: &Path,
    known: &BTreeSet<String>,
) -> Result<Vec<DirectEstimate>, IngestError> {
    let t = Table::read(path)?;
    let cols = ["area_id", "time_index", "rate_pct", "design_sd_pct"]
        .map(|c| t.column(c))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let area_id = t.text(line, rec, cols[0])?.to_string();
        resolve(&t, line, &area_id, known)?;
        let time_index: i64 = t.value(line, rec, cols[1])?;
        if !seen.insert((area_id.clone(), time_index)) {
            return Err(IngestError::DuplicateKey {
                file: t.file.clone(),
                line,
                key: format!("({area_id}, {time_index})"),
            });
        }
        let rate = t.finite(line, rec, cols[2])?;
        let design_sd: f64 = t.value(line, rec, cols[3])?;
        if !(design_sd > 0.0) || !(design_sd * design_sd).is_finite() {
            return Err(IngestError::NonPositiveVariance {
                file: t.file.clone(),
                line,
                id: area_id,
                value: design_sd,
            });
        }
        out.push(DirectEstimate {
            area_id,
            time_index,
            rate,
            design_sd,
        });
    }
    Ok(out)
}

pub fn read_covariates(
    path: &Path,
    known: &BTreeSet<String>,
    whitelist: Option<&[String]>,
) -> Result<CovariatePanel, IngestError> {
    let t = Table::read(path)?;
    let id_col = t.column("area_id")?;
    let year_col = t.column("year")?;
    let names: Vec<String> = match whitelist {
        Some(w) => w.to_vec(),
        None => t
            .headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != id_col && *i != year_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let value_cols = names
        .iter()
        .map(|n| t.column(n))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = BTreeSet::new();
    let mut rows = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let area_id = t.text(line, rec, id_col)?.to_string();
        resolve(&t, line, &area_id, known)?;
        let year: i32 = t.value(line, rec, year_col)?;
        if !seen.insert((area_id.clone(), year)) {
            return Err(IngestError::DuplicateKey {
                file: t.file.clone(),
                line,
                key: format!("({area_id}, {year})"),
            });
        }
        let values = value_cols
            .iter()
            .map(|&c| t.finite(line, rec, c))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(CovariateRow {
            area_id,
            year,
            values,
        });
    }
    Ok(CovariatePanel { names, rows })
}

pub fn read_adjacency(path: &Path, known: &BTreeSet<String>) -> Result<AdjacencyList, IngestError> {
    let t = Table::read(path)?;
    let a_col = t.column("area_id_a")?;
    let b_col = t.column("area_id_b")?;
    let mut adj = AdjacencyList::default();
    for (line, rec) in &t.rows {
        let line = *line;
        let a = t.text(line, rec, a_col)?;
        let b = t.text(line, rec, b_col)?;
        resolve(&t, line, a, known)?;
        resolve(&t, line, b, known)?;
        if a == b {
            return Err(IngestError::SelfPair {
                file: t.file.clone(),
                line,
                id: a.to_string(),
            });
        }
        adj.insert(a, b);
    }
    Ok(adj)
}

// ---------------------------------------------------------------------------
// Covariate summary

/// Result of aggregating the covariate panel over the window.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSummary {
    pub names: Vec<String>,
    pub window: YearWindow,
    /// Aggregated values per area id; areas with no rows inside the window
    /// are absent.
    pub by_area: BTreeMap<String, Vec<f64>>,
}

impl CovariatePanel {
    /// The window implied by the config, or every year up to the latest one.
    pub fn window(&self, config: &IngestConfig) -> Option<YearWindow> {
        let end = config
            .window_end_year
            .or_else(|| self.rows.iter().map(|r| r.year).max())?;
        let start_exclusive = match config.window_years {
            Some(w) => end - w as i32,
            None => {
                self.rows
                    .iter()
                    .map(|r| r.year)
                    .min()
                    .unwrap_or(end)
                    .min(end)
                    - 1
            }
        };
        Some(YearWindow {
            start_exclusive,
            end,
        })
    }
}

/// Aggregate each area's covariate rows inside `window`. The result does not
/// depend on row or year order.
pub fn summarize_covariates(
    panel: &CovariatePanel,
    window: YearWindow,
    aggregation: Aggregation,
) -> Result<CovariateSummary, IngestError> {
    let mut per_area: BTreeMap<&str, Vec<&CovariateRow>> = BTreeMap::new();
    for row in panel.rows.iter().filter(|r| window.contains(r.year)) {
        per_area.entry(row.area_id.as_str()).or_default().push(row);
    }
    if per_area.is_empty() {
        return Err(IngestError::EmptyWindow(window));
    }
    let p = panel.names.len();
    let by_area = per_area
        .into_iter()
        .map(|(id, mut rows)| {
            rows.sort_by_key(|r| r.year);
            let agg = match aggregation {
                Aggregation::Mean => {
                    let k = rows.len() as f64;
                    (0..p)
                        .map(|c| rows.iter().map(|r| r.values[c]).sum::<f64>() / k)
                        .collect()
                }
                Aggregation::LastYear => rows.last().unwrap().values.clone(),
                Aggregation::LinearLag => {
                    let weights: Vec<f64> = rows
                        .iter()
                        .map(|r| (r.year - window.start_exclusive) as f64)
                        .collect();
                    let total: f64 = weights.iter().sum();
                    (0..p)
                        .map(|c| {
                            rows.iter()
                                .zip(&weights)
                                .map(|(r, w)| w * r.values[c])
                                .sum::<f64>()
                                / total
                        })
                        .collect()
                }
            };
            (id.to_string(), agg)
        })
        .collect();
    Ok(CovariateSummary {
        names: panel.names.clone(),
        window,
        by_area,
    })
}

/// Center and scale each column (sample standard deviation).
pub fn standardize_columns(names: &[String], x: &mut [Vec<f64>]) -> Result<(), IngestError> {
    let m = x.len();
    if m < 2 {
        return Ok(());
    }
    for (c, name) in names.iter().enumerate() {
        let mean = x.iter().map(|r| r[c]).sum::<f64>() / m as f64;
        let var = x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(IngestError::ConstantCovariate(name.clone()));
        }
        for row in x.iter_mut() {
            row[c] = (row[c] - mean) / sd;
        }
    }
    Ok(())
}

/// Join validated tables into a [`Dataset`]. Areas without a direct estimate
/// at the target time, or without covariates when covariates exist, are
/// dropped and reported.
pub fn assemble(
    areas: Vec<AreaRecord>,
    estimates: &[DirectEstimate],
    covariates: &CovariateSummary,
    adjacency: &AdjacencyList,
    target_time_index: Option<i64>,
    standardize: bool,
) -> Result<Dataset, IngestError> {
    let target = match target_time_index.or_else(|| estimates.iter().map(|e| e.time_index).max()) {
        Some(t) => t,
        None => return Err(IngestError::EmptyDataset(0)),
    };
    let mut est_by_area: BTreeMap<&str, Vec<&DirectEstimate>> = BTreeMap::new();
    for e in estimates.iter().filter(|e| e.time_index <= target) {
        est_by_area.entry(e.area_id.as_str()).or_default().push(e);
    }

    let mut areas = areas;
    areas.sort_by(|a, b| a.area_id.cmp(&b.area_id));
    let p = covariates.names.len();
    let mut dropped = Vec::new();
    let mut kept = Vec::new();
    for area in areas {
        let has_target = est_by_area
            .get(area.area_id.as_str())
            .is_some_and(|es| es.iter().any(|e| e.time_index == target));
        if !has_target {
            dropped.push(DroppedArea {
                area_id: area.area_id.clone(),
                reason: format!("no direct estimate at time index {target}"),
            });
            continue;
        }
        if p > 0 && !covariates.by_area.contains_key(&area.area_id) {
            dropped.push(DroppedArea {
                area_id: area.area_id.clone(),
                reason: format!("no covariates inside window {}", covariates.window),
            });
            continue;
        }
        kept.push(area);
    }
    if kept.is_empty() {
        return Err(IngestError::EmptyDataset(target));
    }

    let times: Vec<i64> = kept
        .iter()
        .flat_map(|a| est_by_area[a.area_id.as_str()].iter().map(|e| e.time_index))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let large_areas: Vec<String> = kept
        .iter()
        .map(|a| a.large_area_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let area_large = kept
        .iter()
        .map(|a| large_areas.binary_search(&a.large_area_id).unwrap())
        .collect();

    let mut observations = Vec::new();
    for (i, area) in kept.iter().enumerate() {
        let mut es = est_by_area[area.area_id.as_str()].clone();
        es.sort_by_key(|e| e.time_index);
        for e in es {
            observations.push(Observation {
                area: i,
                time: times.binary_search(&e.time_index).unwrap(),
                rate: e.rate,
                variance: e.design_sd * e.design_sd,
            });
        }
    }

    let mut x: Vec<Vec<f64>> = kept
        .iter()
        .map(|a| {
            covariates
                .by_area
                .get(&a.area_id)
                .cloned()
                .unwrap_or_default()
        })
        .collect();
    if standardize && p > 0 {
        standardize_columns(&covariates.names, &mut x)?;
    }

    let index: HashMap<&str, usize> = kept
        .iter()
        .enumerate()
        .map(|(i, a)| (a.area_id.as_str(), i))
        .collect();
    let adjacency = adjacency
        .pairs
        .iter()
        .filter_map(|(a, b)| {
            let (i, j) = (*index.get(a.as_str())?, *index.get(b.as_str())?);
            Some((i.min(j), i.max(j)))
        })
        .collect();

    Ok(Dataset {
        areas: kept,
        large_areas,
        area_large,
        times,
        observations,
        covariate_names: covariates.names.clone(),
        x,
        adjacency,
        dropped,
    })
}

/// Paths of the four input tables.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPaths {
    pub areas: std::path::PathBuf,
    pub estimates: std::path::PathBuf,
    pub covariates: std::path::PathBuf,
    pub adjacency: std::path::PathBuf,
}

impl InputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            areas: dir.join("areas.csv"),
            estimates: dir.join("estimates.csv"),
            covariates: dir.join("covariates.csv"),
            adjacency: dir.join("adjacency.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [
            &self.areas,
            &self.estimates,
            &self.covariates,
            &self.adjacency,
        ]
    }
}

pub fn load_dataset(paths: &InputPaths, config: &IngestConfig) -> Result<Dataset, IngestError> {
    let areas = read_areas(&paths.areas)?;
    let known: BTreeSet<String> = areas.iter().map(|a| a.area_id.clone()).collect();
    let estimates = read_estimates(&paths.estimates, &known)?;
    let panel = read_covariates(
        &paths.covariates,
        &known,
        config.covariate_whitelist.as_deref(),
    )?;
    let adjacency = read_adjacency(&paths.adjacency, &known)?;

    let summary = match panel.window(config) {
        Some(window) => summarize_covariates(&panel, window, config.aggregation)?,
        None if panel.names.is_empty() => CovariateSummary {
            names: Vec::new(),
            window: YearWindow {
                start_exclusive: 0,
                end: 0,
            },
            by_area: BTreeMap::new(),
        },
        None => {
            return Err(IngestError::EmptyWindow(YearWindow {
                start_exclusive: 0,
                end: 0,
            }))
        }
    };
    assemble(
        areas,
        &estimates,
        &summary,
        &adjacency,
        config.target_time_index,
        config.standardize,
    )
}
