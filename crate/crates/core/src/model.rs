//! Model variants, priors and the parameter state shared with the sampler.
//!
//! Every variant is a sub-model of
//!
//! ```text
//! theta_it = mu + lambda_l(i) + beta_i + gamma_t + phi_i + delta_it
//! ```
//!
//! with `beta_i ~ N(x_i' b, tau2)`, an intrinsic random walk on `gamma`, a
//! proper CAR on `phi` and iid `delta`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model variant '{0}' (expected one of I, II, III, IV, V, VI, VII)")]
    UnknownVariant(String),
    #[error("dimension mismatch: covariate row has {x} entries, coefficients {beta}")]
    DimensionMismatch { x: usize, beta: usize },
    #[error("random walk of order {order} needs at least {} time points, got {t}", order + 1)]
    WindowTooShort { t: usize, order: usize },
    #[error("random walk order must be 1 or 2, got {0}")]
    UnsupportedOrder(usize),
    #[error("rho = {0} is outside the open interval (-1, 1)")]
    RhoOutOfRange(f64),
    #[error("inverse-gamma parameters must be positive (shape {shape}, rate {rate})")]
    InvalidHyperprior { shape: f64, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
}

/// Which random and fixed blocks contribute to the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelTerms {
    pub large_area: bool,
    pub covariate: bool,
    pub time: bool,
    pub space: bool,
    pub interaction: bool,
}

impl ModelTerms {
    pub const FULL: ModelTerms = ModelTerms {
        large_area: true,
        covariate: true,
        time: true,
        space: true,
        interaction: true,
    };
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::I,
        ModelVariant::II,
        ModelVariant::III,
        ModelVariant::IV,
        ModelVariant::V,
        ModelVariant::VI,
        ModelVariant::VII,
    ];

    pub fn terms(self) -> ModelTerms {
        let (large_area, covariate, time, space, interaction) = match self {
            ModelVariant::I => (true, true, true, true, true),
            ModelVariant::II => (true, true, true, true, false),
            ModelVariant::III => (true, true, true, false, false),
            ModelVariant::IV => (true, true, false, true, false),
            ModelVariant::V => (true, true, false, false, false),
            ModelVariant::VI => (true, false, false, false, false),
            ModelVariant::VII => (false, false, false, false, false),
        };
        ModelTerms {
            large_area,
            covariate,
            time,
            space,
            interaction,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::I => "I",
            ModelVariant::II => "II",
            ModelVariant::III => "III",
            ModelVariant::IV => "IV",
            ModelVariant::V => "V",
            ModelVariant::VI => "VI",
            ModelVariant::VII => "VII",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::UnknownVariant(s.to_string()))
    }
}

/// Inverse-gamma law in shape/rate form, density ∝ x^-(shape+1) exp(-rate/x).
///
/// `shape = rate = 0` encodes the improper scale-invariant prior
/// `p(x) ∝ 1/x`, i.e. flat on `log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvGamma {
    pub shape: f64,
    pub rate: f64,
}

impl InvGamma {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    /// Conjugate update after observing `n` zero-mean Gaussian effects with
    /// (precision-weighted) sum of squares `ss`.
    pub fn update(&self, n: f64, ss: f64) -> InvGamma {
        InvGamma {
            shape: self.shape + 0.5 * n,
            rate: self.rate + 0.5 * ss,
        }
    }

    /// Mean, when it exists (`shape > 1`).
    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.rate / (self.shape - 1.0))
    }

    /// Draw one value. Returns `None` if the parameters do not define a
    /// proper law or the draw is not a finite positive number.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        if !(self.shape > 0.0 && self.rate > 0.0) {
            return None;
        }
        let g = Gamma::new(self.shape, 1.0 / self.rate).ok()?.sample(rng);
        let x = 1.0 / g;
        (x.is_finite() && x > 0.0).then_some(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyperpriors {
    /// Shared by sigma2_gamma, sigma2_u and sigma2_delta.
    pub variance_prior: InvGamma,
    /// Prior on tau2; the default (0, 0) is flat on `log tau2`.
    pub tau2_prior: InvGamma,
    pub irw_order: usize,
}

impl Default for Hyperpriors {
    fn default() -> Self {
        Self {
            variance_prior: InvGamma::new(0.025, 0.025),
            tau2_prior: InvGamma::new(0.0, 0.0),
            irw_order: 1,
        }
    }
}

impl Hyperpriors {
    pub fn validate(&self) -> Result<(), ModelError> {
        let vp = self.variance_prior;
        if !(vp.shape > 0.0 && vp.rate > 0.0) {
            return Err(ModelError::InvalidHyperprior {
                shape: vp.shape,
                rate: vp.rate,
            });
        }
        let tp = self.tau2_prior;
        if !(tp.shape >= 0.0 && tp.rate >= 0.0) {
            return Err(ModelError::InvalidHyperprior {
                shape: tp.shape,
                rate: tp.rate,
            });
        }
        if !(1..=2).contains(&self.irw_order) {
            return Err(ModelError::UnsupportedOrder(self.irw_order));
        }
        Ok(())
    }
}

/// One full state of the unknowns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterState {
    pub mu: f64,
    /// One per large area, sums to zero.
    pub lambda: Vec<f64>,
    pub beta_coef: Vec<f64>,
    /// Area-level covariate effects.
    pub beta_re: Vec<f64>,
    pub tau2: f64,
    /// One per time level, sums to zero.
    pub gamma: Vec<f64>,
    pub sigma2_gamma: f64,
    /// One per area.
    pub phi: Vec<f64>,
    pub sigma2_u: f64,
    pub rho: f64,
    /// One per observed area-time cell.
    pub delta: Vec<f64>,
    pub sigma2_delta: f64,
}

impl ParameterState {
    /// All effects zero, variances one, rho zero.
    pub fn zeros(m: usize, n_large: usize, p: usize, n_times: usize, n_cells: usize) -> Self {
        Self {
            mu: 0.0,
            lambda: vec![0.0; n_large],
            beta_coef: vec![0.0; p],
            beta_re: vec![0.0; m],
            tau2: 1.0,
            gamma: vec![0.0; n_times],
            sigma2_gamma: 1.0,
            phi: vec![0.0; m],
            sigma2_u: 1.0,
            rho: 0.0,
            delta: vec![0.0; n_cells],
            sigma2_delta: 1.0,
        }
    }
}

/// Index of one observation cell in the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellIndex {
    pub area: usize,
    pub large_area: usize,
    pub time: usize,
    pub cell: usize,
}

/// `theta` for one cell; inactive terms contribute exactly zero. The spatial
/// index is the area itself.
pub fn linear_predictor(state: &ParameterState, terms: &ModelTerms, idx: CellIndex) -> f64 {
    let mut theta = state.mu;
    if terms.large_area {
        theta += state.lambda[idx.large_area];
    }
    if terms.covariate {
        theta += state.beta_re[idx.area];
    }
    if terms.time {
        theta += state.gamma[idx.time];
    }
    if terms.space {
        theta += state.phi[idx.area];
    }
    if terms.interaction {
        theta += state.delta[idx.cell];
    }
    theta
}

/// Mean of an area's covariate effect, `x_i' b`.
pub fn covariate_mean(x: &[f64], beta_coef: &[f64]) -> Result<f64, ModelError> {
    if x.len() != beta_coef.len() {
        return Err(ModelError::DimensionMismatch {
            x: x.len(),
            beta: beta_coef.len(),
        });
    }
    Ok(x.iter().zip(beta_coef).map(|(a, b)| a * b).sum())
}

/// Random-walk penalty `K = D'D` for the difference operator of the given
/// order over `t` equally spaced time points.
pub fn irw_structure(t: usize, order: usize) -> Result<DMatrix<f64>, ModelError> {
    if !(1..=2).contains(&order) {
        return Err(ModelError::UnsupportedOrder(order));
    }
    if t < order + 1 {
        return Err(ModelError::WindowTooShort { t, order });
    }
    let stencil: &[f64] = if order == 1 {
        &[-1.0, 1.0]
    } else {
        &[1.0, -2.0, 1.0]
    };
    let rows = t - order;
    let d = DMatrix::from_fn(rows, t, |r, c| {
        if c >= r && c - r < stencil.len() {
            stencil[c - r]
        } else {
            0.0
        }
    });
    Ok(d.transpose() * d)
}

/// Unnormalized prior density on rho, `1 / (2 pi sqrt(1 - rho^2))`.
pub fn rho_prior_density(rho: f64) -> Result<f64, ModelError> {
    if !(rho.abs() < 1.0) {
        return Err(ModelError::RhoOutOfRange(rho));
    }
    Ok(1.0 / (2.0 * PI * (1.0 - rho * rho).sqrt()))
}

pub fn rho_log_prior(rho: f64) -> Result<f64, ModelError> {
    rho_prior_density(rho).map(f64::ln)
}

/// Antiderivative of [`rho_prior_density`], `asin(rho) / (2 pi)`. Defined on
/// the closed interval so cell masses reaching the boundary are finite.
pub fn rho_prior_antiderivative(rho: f64) -> f64 {
    rho.clamp(-1.0, 1.0).asin() / (2.0 * PI)
}
