//! Datasets simulated from a model variant with known parameters.
//!
//! Areas sit on a regular grid with queen adjacency; large areas are vertical
//! strips of columns. The spatial kernel comes from the grid itself, not from
//! the signs of the simulated rates.

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::gibbs::effective_model;
use crate::ingest::{AreaRecord, Dataset, Observation};
use crate::linalg::sample_zero_mean;
use crate::model::{irw_structure, linear_predictor, CellIndex, ModelVariant, ParameterState};
use crate::spatial::{distance_matrix, raw_weights, WeightConfig, WeightSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("grid {rows}x{cols} has fewer than 4 areas")]
    TooFewAreas { rows: usize, cols: usize },
    #[error("{n_large} large areas cannot be cut from {cols} columns")]
    LargeAreas { n_large: usize, cols: usize },
    #[error("{name} has length {got}, expected {expected}")]
    ParameterLength {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("spatial precision is not positive definite")]
    NotPositiveDefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub n_large: usize,
    /// Distance between neighbouring centroids, in coordinate degrees.
    pub spacing: f64,
}

impl GridLayout {
    pub fn new(rows: usize, cols: usize, n_large: usize) -> Self {
        Self {
            rows,
            cols,
            n_large,
            spacing: 0.5,
        }
    }

    pub fn n_areas(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.n_areas() < 4 {
            return Err(LayoutError::TooFewAreas {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if self.n_large == 0 || self.n_large > self.cols {
            return Err(LayoutError::LargeAreas {
                n_large: self.n_large,
                cols: self.cols,
            });
        }
        if !(self.spacing > 0.0) {
            return Err(LayoutError::InvalidParameter {
                name: "spacing",
                value: self.spacing,
            });
        }
        Ok(())
    }

    pub fn area_id(&self, index: usize) -> String {
        format!("A{index:05}")
    }

    pub fn large_area_of(&self, index: usize) -> usize {
        (index % self.cols) * self.n_large / self.cols
    }

    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        (0..self.n_areas())
            .map(|i| {
                (
                    (i / self.cols) as f64 * self.spacing,
                    (i % self.cols) as f64 * self.spacing,
                )
            })
            .collect()
    }

    /// Queen-contiguity pairs `(a, b)` with `a < b`.
    pub fn adjacency(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for a in 0..self.n_areas() {
            let (ra, ca) = (a / self.cols, a % self.cols);
            for b in a + 1..self.n_areas() {
                let (rb, cb) = (b / self.cols, b % self.cols);
                if ra.abs_diff(rb) <= 1 && ca.abs_diff(cb) <= 1 {
                    pairs.push((a, b));
                }
            }
        }
        pairs
    }

    /// Weight system of the grid with the exponential distance kernel on
    /// queen neighbours.
    pub fn weight_system(&self, cfg: &WeightConfig) -> Result<WeightSystem, LayoutError> {
        self.validate()?;
        let n = self.n_areas();
        let mut delta = DMatrix::zeros(n, n);
        for (a, b) in self.adjacency() {
            delta[(a, b)] = 1.0;
            delta[(b, a)] = 1.0;
        }
        let w_star = raw_weights(&distance_matrix(&self.coordinates()), &delta, cfg);
        let ids = (0..n).map(|i| self.area_id(i)).collect();
        WeightSystem::from_kernel(ids, w_star).map_err(|_| LayoutError::TooFewAreas {
            rows: self.rows,
            cols: self.cols,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DesignSdProfile {
    Constant(f64),
    /// Each area draws its design sd uniformly from `[low, high]`.
    Uniform {
        low: f64,
        high: f64,
    },
}

/// Generating values of the parameters. Entries for blocks the variant does
/// not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueParameters {
    pub mu: f64,
    /// One per large area; centered before use, the mean moving into `mu`.
    pub lambda: Vec<f64>,
    /// Covariate coefficients; their count sets the number of covariates.
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub sigma2_gamma: f64,
    pub sigma2_u: f64,
    pub rho: f64,
    pub sigma2_delta: f64,
    pub irw_order: usize,
}

impl Default for TrueParameters {
    fn default() -> Self {
        Self {
            mu: 2.0,
            lambda: vec![-0.5, 0.5],
            beta: vec![0.5],
            tau2: 0.25,
            sigma2_gamma: 0.1,
            sigma2_u: 0.5,
            rho: 0.8,
            sigma2_delta: 0.05,
            irw_order: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub layout: GridLayout,
    pub variant: ModelVariant,
    pub truth: TrueParameters,
    pub design_sd: DesignSdProfile,
    pub n_times: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub spec: SyntheticSpec,
    /// Generating state, with `lambda` centered and `mu` adjusted.
    pub state: ParameterState,
    pub dataset: Dataset,
    /// Grid weight system; built only when the variant has a spatial field.
    pub weights: Option<WeightSystem>,
    /// True linear predictor per observation.
    pub theta: Vec<f64>,
    /// Design standard deviation per area.
    pub design_sd: Vec<f64>,
}

fn check_variance(name: &'static str, value: f64) -> Result<(), LayoutError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(LayoutError::InvalidParameter { name, value })
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// One draw of a CAR field with covariance `sigma2_u (I - rho W)^-1 M`.
pub fn car_field<R: Rng + ?Sized>(
    weights: &WeightSystem,
    sigma2_u: f64,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<f64>, LayoutError> {
    let q = weights.unscaled_precision(rho) / sigma2_u;
    sample_zero_mean(q, rng)
        .map(|v| v.as_slice().to_vec())
        .ok_or(LayoutError::NotPositiveDefinite)
}

/// Simulate a dataset. The same spec always yields the same dataset.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticTruth, LayoutError> {
    let layout = spec.layout;
    layout.validate()?;
    let tp = &spec.truth;
    let m = layout.n_areas();
    let n_times = spec.n_times.max(1);
    let p = tp.beta.len();
    let terms = effective_model(spec.variant, n_times).terms;
    if tp.lambda.len() != layout.n_large {
        return Err(LayoutError::ParameterLength {
            name: "lambda",
            got: tp.lambda.len(),
            expected: layout.n_large,
        });
    }
    for (name, v) in [
        ("tau2", tp.tau2),
        ("sigma2_gamma", tp.sigma2_gamma),
        ("sigma2_u", tp.sigma2_u),
        ("sigma2_delta", tp.sigma2_delta),
    ] {
        check_variance(name, v)?;
    }
    if !(tp.rho.abs() < 1.0) {
        return Err(LayoutError::InvalidParameter {
            name: "rho",
            value: tp.rho,
        });
    }
    match spec.design_sd {
        DesignSdProfile::Constant(s) => check_variance("design_sd", s)?,
        DesignSdProfile::Uniform { low, high } => {
            check_variance("design_sd", low)?;
            if !(high >= low && high.is_finite()) {
                return Err(LayoutError::InvalidParameter {
                    name: "design_sd",
                    value: high,
                });
            }
        }
    }

    let weights = if terms.space {
        Some(layout.weight_system(&WeightConfig::default())?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_cells = m * n_times;
    let mut state = ParameterState::zeros(m, layout.n_large, p, n_times, n_cells);

    let lambda_mean = tp.lambda.iter().sum::<f64>() / layout.n_large as f64;
    state.mu = if terms.large_area {
        tp.mu + lambda_mean
    } else {
        tp.mu
    };
    if terms.large_area {
        state.lambda = tp.lambda.iter().map(|l| l - lambda_mean).collect();
    }
    state.beta_coef = tp.beta.clone();
    state.tau2 = tp.tau2;
    state.sigma2_gamma = tp.sigma2_gamma;
    state.sigma2_u = tp.sigma2_u;
    state.rho = tp.rho;
    state.sigma2_delta = tp.sigma2_delta;

    // covariates: iid normal columns, exactly standardized
    let mut x: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..p).map(|_| normal(&mut rng)).collect())
        .collect();
    for c in 0..p {
        let mean = x.iter().map(|r| r[c]).sum::<f64>() / m as f64;
        let sd = (x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        for r in x.iter_mut() {
            r[c] = (r[c] - mean) / sd;
        }
    }

    let design_sd: Vec<f64> = (0..m)
        .map(|_| match spec.design_sd {
            DesignSdProfile::Constant(s) => s,
            DesignSdProfile::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        })
        .collect();

    for a in 0..m {
        let xb: f64 = x[a].iter().zip(&tp.beta).map(|(x, b)| x * b).sum();
        state.beta_re[a] = xb + tp.tau2.sqrt() * normal(&mut rng);
    }

    if terms.time && tp.sigma2_gamma > 0.0 {
        let k =
            irw_structure(n_times, tp.irw_order).map_err(|_| LayoutError::InvalidParameter {
                name: "irw_order",
                value: tp.irw_order as f64,
            })?;
        let eig = k.symmetric_eigen();
        let tol = 1e-9 * eig.eigenvalues.amax();
        for (j, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev > tol {
                let z = normal(&mut rng) * (tp.sigma2_gamma / ev).sqrt();
                for t in 0..n_times {
                    state.gamma[t] += z * eig.eigenvectors[(t, j)];
                }
            }
        }
    }

    if terms.space && tp.sigma2_u > 0.0 {
        let ws = weights.as_ref().expect("built for spatial variants");
        let phi = car_field(ws, tp.sigma2_u, tp.rho, &mut rng)?;
        state.phi.copy_from_slice(&phi);
    }

    if terms.interaction {
        let s = tp.sigma2_delta.sqrt();
        for d in state.delta.iter_mut() {
            *d = s * normal(&mut rng);
        }
    }

    let mut observations = Vec::with_capacity(n_cells);
    let mut theta = Vec::with_capacity(n_cells);
    for a in 0..m {
        for t in 0..n_times {
            let cell = CellIndex {
                area: a,
                large_area: layout.large_area_of(a),
                time: t,
                cell: a * n_times + t,
            };
            let th = linear_predictor(&state, &terms, cell);
            theta.push(th);
            observations.push(Observation {
                area: a,
                time: t,
                rate: th + design_sd[a] * normal(&mut rng),
                variance: design_sd[a] * design_sd[a],
            });
        }
    }

    let coords = layout.coordinates();
    let dataset = Dataset {
        areas: (0..m)
            .map(|i| AreaRecord {
                area_id: layout.area_id(i),
                name: format!("cell {} {}", i / layout.cols, i % layout.cols),
                large_area_id: format!("S{:02}", layout.large_area_of(i)),
                latitude: coords[i].0,
                longitude: coords[i].1,
            })
            .collect(),
        large_areas: (0..layout.n_large).map(|l| format!("S{l:02}")).collect(),
        area_large: (0..m).map(|i| layout.large_area_of(i)).collect(),
        times: (1..=n_times as i64).collect(),
        observations,
        covariate_names: (1..=p).map(|c| format!("x{c}")).collect(),
        x,
        adjacency: layout.adjacency(),
        dropped: Vec::new(),
    };

    Ok(SyntheticTruth {
        spec: spec.clone(),
        state,
        dataset,
        weights,
        theta,
        design_sd,
    })
}

/// Year stamped on the synthetic covariate rows.
pub const COVARIATE_YEAR: i32 = 2010;

#[derive(Serialize)]
struct TruthRecord<'a> {
    spec: &'a SyntheticSpec,
    state: &'a ParameterState,
    theta: Vec<AreaTheta<'a>>,
}

#[derive(Serialize)]
struct AreaTheta<'a> {
    area_id: &'a str,
    time_index: i64,
    theta: f64,
}

impl SyntheticTruth {
    /// True theta of each area at the last time.
    pub fn target_theta(&self) -> Vec<f64> {
        self.dataset
            .target_observations()
            .into_iter()
            .map(|o| self.theta[o])
            .collect()
    }

    pub fn truth_json(&self) -> String {
        let d = &self.dataset;
        let record = TruthRecord {
            spec: &self.spec,
            state: &self.state,
            theta: d
                .observations
                .iter()
                .zip(&self.theta)
                .map(|(o, th)| AreaTheta {
                    area_id: &d.areas[o.area].area_id,
                    time_index: d.times[o.time],
                    theta: *th,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&record).expect("truth serializes")
    }

    /// Contents of `areas.csv`, `estimates.csv`, `covariates.csv` and
    /// `adjacency.csv`, in that order.
    pub fn input_tables(&self) -> [(&'static str, String); 4] {
        let d = &self.dataset;
        let mut areas = String::from("area_id,name,large_area_id,latitude,longitude\n");
        for a in &d.areas {
            areas.push_str(&format!(
                "{},{},{},{},{}\n",
                a.area_id, a.name, a.large_area_id, a.latitude, a.longitude
            ));
        }
        let mut est = String::from("area_id,time_index,rate_pct,design_sd_pct\n");
        for o in &d.observations {
            est.push_str(&format!(
                "{},{},{},{}\n",
                d.areas[o.area].area_id, d.times[o.time], o.rate, self.design_sd[o.area]
            ));
        }
        let mut cov = String::from("area_id,year");
        for n in &d.covariate_names {
            cov.push(',');
            cov.push_str(n);
        }
        cov.push('\n');
        for (a, row) in d.areas.iter().zip(&d.x) {
            cov.push_str(&format!("{},{COVARIATE_YEAR}", a.area_id));
            for v in row {
                cov.push_str(&format!(",{v}"));
            }
            cov.push('\n');
        }
        let mut adj = String::from("area_id_a,area_id_b\n");
        for &(a, b) in &d.adjacency {
            adj.push_str(&format!("{},{}\n", d.areas[a].area_id, d.areas[b].area_id));
        }
        [
            ("areas.csv", areas),
            ("estimates.csv", est),
            ("covariates.csv", cov),
            ("adjacency.csv", adj),
        ]
    }

    /// Write the four input tables and `truth.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, body) in self.input_tables() {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("truth.json"), self.truth_json())
    }
}
