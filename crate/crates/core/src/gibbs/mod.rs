//! Gibbs sampler for the spatio-temporal mixed models.
//!
//! One systematic scan updates, in order:
//!
//! 1. the fixed block `(mu, lambda, b)` jointly with the area effects `beta`
//!    integrated out, then `beta | fixed`,
//! 2. the time smoother `gamma` (conditioned on `sum(gamma) = 0`),
//! 3. the CAR field `phi`,
//! 4. the interaction cells `delta`,
//! 5. the variances `tau2`, `sigma2_gamma`, `sigma2_u`, `sigma2_delta`,
//! 6. `rho` on a grid.
//!
//! The full conditionals are written out in `docs/full_conditionals.md`.

pub mod diagnostics;
pub mod rho;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::Dataset;
use crate::linalg::{quad_form, sample_canonical};
use crate::model::{
    irw_structure, linear_predictor, CellIndex, Hyperpriors, ModelError, ModelTerms, ModelVariant,
    ParameterState,
};
use crate::spatial::WeightSystem;

pub use diagnostics::{ConvergenceReport, ParameterDiagnostic};
use rho::RhoGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("numerical failure in the {block} update: {detail}")]
    NumericalFailure { block: &'static str, detail: String },
    #[error("sampler configuration: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn numerical(block: &'static str, detail: impl Into<String>) -> SamplerError {
    SamplerError::NumericalFailure {
        block,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub rho_grid_size: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 1000,
            thin: 1,
            seed: 1,
            n_chains: 2,
            rho_grid_size: 201,
        }
    }
}

/// Minimum retained draws per chain for any reported summary.
pub const MIN_RETAINED: usize = 100;

impl ChainConfig {
    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let err = |m: String| Err(SamplerError::ConfigError(m));
        if self.iterations == 0 {
            return err("iterations must be positive".into());
        }
        if self.burn_in >= self.iterations {
            return err(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            return err("thin must be at least 1".into());
        }
        if self.n_chains == 0 {
            return err("at least one chain is required".into());
        }
        if self.rho_grid_size < 21 {
            return err(format!("rho grid size {} is below 21", self.rho_grid_size));
        }
        if self.retained() < MIN_RETAINED {
            return err(format!(
                "only {} retained draws per chain; at least {MIN_RETAINED} are required",
                self.retained()
            ));
        }
        Ok(())
    }
}

/// The variant's terms after adapting to the data: with a single time level
/// the time smoother and the interaction are switched off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveModel {
    pub variant: ModelVariant,
    pub terms: ModelTerms,
    pub collapsed: bool,
}

pub fn effective_model(variant: ModelVariant, n_times: usize) -> EffectiveModel {
    let mut terms = variant.terms();
    let mut collapsed = false;
    if n_times < 2 && (terms.time || terms.interaction) {
        terms.time = false;
        terms.interaction = false;
        collapsed = true;
    }
    EffectiveModel {
        variant,
        terms,
        collapsed,
    }
}

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub chain: usize,
    /// Iteration number (1-based) of each retained draw.
    pub iterations: Vec<usize>,
    pub states: Vec<ParameterState>,
    /// Linear predictor per observation.
    pub theta: Vec<Vec<f64>>,
    /// Log-likelihood per observation.
    pub loglik: Vec<Vec<f64>>,
}

/// Names used when reporting draws.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawLabels {
    pub area_ids: Vec<String>,
    pub large_area_ids: Vec<String>,
    pub covariate_names: Vec<String>,
    pub time_indices: Vec<i64>,
    /// Observation index of each area at the target time.
    pub target_obs: Vec<usize>,
}

impl DrawLabels {
    pub fn from_dataset(d: &Dataset) -> Self {
        Self {
            area_ids: d.area_ids(),
            large_area_ids: d.large_areas.clone(),
            covariate_names: d.covariate_names.clone(),
            time_indices: d.times.clone(),
            target_obs: d.target_observations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub model: EffectiveModel,
    pub chains: Vec<ChainDraws>,
    pub labels: DrawLabels,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.states.len()).sum()
    }

    pub fn n_obs(&self) -> usize {
        self.chains
            .iter()
            .find_map(|c| c.theta.first().map(Vec::len))
            .unwrap_or(0)
    }

    /// Theta draws pooled over chains, one vector per draw.
    pub fn pooled_theta(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.chains.iter().flat_map(|c| c.theta.iter())
    }

    pub fn pooled_loglik(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.chains.iter().flat_map(|c| c.loglik.iter())
    }

    /// Per-chain series of every reported scalar: active hyperparameters and
    /// fixed effects, then theta at the target time for each area.
    pub fn scalar_series(&self) -> Vec<(String, Vec<Vec<f64>>)> {
        let t = self.model.terms;
        let lab = &self.labels;
        let mut extractors: Vec<(String, Box<dyn Fn(&ParameterState) -> f64>)> =
            vec![("mu".into(), Box::new(|s: &ParameterState| s.mu))];
        if t.large_area {
            for (l, id) in lab.large_area_ids.iter().enumerate() {
                extractors.push((format!("lambda[{id}]"), Box::new(move |s| s.lambda[l])));
            }
        }
        if t.covariate {
            for (k, name) in lab.covariate_names.iter().enumerate() {
                extractors.push((format!("beta[{name}]"), Box::new(move |s| s.beta_coef[k])));
            }
            extractors.push(("tau2".into(), Box::new(|s| s.tau2)));
        }
        if t.time {
            for (k, ti) in lab.time_indices.iter().enumerate() {
                extractors.push((format!("gamma[{ti}]"), Box::new(move |s| s.gamma[k])));
            }
            extractors.push(("sigma2_gamma".into(), Box::new(|s| s.sigma2_gamma)));
        }
        if t.space {
            extractors.push(("sigma2_u".into(), Box::new(|s| s.sigma2_u)));
            extractors.push(("rho".into(), Box::new(|s| s.rho)));
        }
        if t.interaction {
            extractors.push(("sigma2_delta".into(), Box::new(|s| s.sigma2_delta)));
        }
        let mut out: Vec<(String, Vec<Vec<f64>>)> = extractors
            .iter()
            .map(|(name, f)| {
                (
                    name.clone(),
                    self.chains
                        .iter()
                        .map(|c| c.states.iter().map(|s| f(s)).collect())
                        .collect(),
                )
            })
            .collect();
        for (a, id) in lab.area_ids.iter().enumerate() {
            let o = lab.target_obs[a];
            out.push((
                format!("theta[{id}]"),
                self.chains
                    .iter()
                    .map(|c| c.theta.iter().map(|th| th[o]).collect())
                    .collect(),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Block {
    Fixed,
    Time,
    Space,
    Interaction,
}

/// Precomputed structures for sampling one model on one dataset.
pub struct Sampler<'a> {
    data: &'a Dataset,
    pub model: EffectiveModel,
    hyper: Hyperpriors,
    /// Observation precisions `1 / V`.
    obs_precision: Vec<f64>,
    /// Fixed-effect design row per area: `[1, contrasts.., x..]`.
    design: Vec<Vec<f64>>,
    n_contrasts: usize,
    irw: Option<DMatrix<f64>>,
    car: Option<CarParts>,
}

struct CarParts {
    w_star: DMatrix<f64>,
    row_sums: Vec<f64>,
    grid: RhoGrid,
}

impl<'a> Sampler<'a> {
    pub fn new(
        data: &'a Dataset,
        weights: Option<&WeightSystem>,
        variant: ModelVariant,
        hyper: Hyperpriors,
        rho_grid_size: usize,
    ) -> Result<Self, SamplerError> {
        hyper.validate()?;
        if data.observations.is_empty() {
            return Err(SamplerError::ConfigError(
                "dataset has no observations".into(),
            ));
        }
        let model = effective_model(variant, data.n_times());
        if model.collapsed {
            log::warn!(
                "model {variant}: single time level, time smoother and interaction deactivated"
            );
        }
        let terms = model.terms;
        let m = data.n_areas();
        let n_large = data.n_large_areas();
        let n_contrasts = if terms.large_area {
            n_large.saturating_sub(1)
        } else {
            0
        };
        let design = (0..m)
            .map(|a| {
                let mut row = Vec::with_capacity(1 + n_contrasts + data.n_covariates());
                row.push(1.0);
                let l = data.area_large[a];
                for c in 0..n_contrasts {
                    row.push(if l == c {
                        1.0
                    } else if l == n_large - 1 {
                        -1.0
                    } else {
                        0.0
                    });
                }
                if terms.covariate {
                    row.extend_from_slice(&data.x[a]);
                }
                row
            })
            .collect();

        let irw = if terms.time {
            Some(irw_structure(data.n_times(), hyper.irw_order)?)
        } else {
            None
        };

        let car = if terms.space {
            let ws = weights.ok_or_else(|| {
                SamplerError::ConfigError(format!("model {variant} needs a spatial weight system"))
            })?;
            if ws.kept_ids != data.area_ids() {
                return Err(SamplerError::ConfigError(
                    "weight system areas do not match the dataset areas".into(),
                ));
            }
            let n = ws.len();
            let scaled = DMatrix::from_fn(n, n, |i, j| {
                ws.w_star[(i, j)] / (ws.row_sums[i] * ws.row_sums[j]).sqrt()
            });
            let eig: Vec<f64> = scaled
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .collect();
            Some(CarParts {
                w_star: ws.w_star.clone(),
                row_sums: ws.row_sums.clone(),
                grid: RhoGrid::for_car(rho_grid_size, &eig, &ws.row_sums),
            })
        } else {
            None
        };

        Ok(Self {
            data,
            model,
            hyper,
            obs_precision: data.observations.iter().map(|o| 1.0 / o.variance).collect(),
            design,
            n_contrasts,
            irw,
            car,
        })
    }

    fn cell(&self, o: usize) -> CellIndex {
        let ob = &self.data.observations[o];
        CellIndex {
            area: ob.area,
            large_area: self.data.area_large[ob.area],
            time: ob.time,
            cell: o,
        }
    }

    /// Precision-weighted mean of the rates as `mu`; everything else at its
    /// neutral value.
    pub fn initial_state(&self) -> ParameterState {
        let d = self.data;
        let mut s = ParameterState::zeros(
            d.n_areas(),
            d.n_large_areas(),
            d.n_covariates(),
            d.n_times(),
            d.observations.len(),
        );
        let (num, den) = d
            .observations
            .iter()
            .zip(&self.obs_precision)
            .fold((0.0, 0.0), |(n, w), (o, p)| (n + p * o.rate, w + p));
        s.mu = num / den;
        s
    }

    /// Sum of the active terms of cell `o` except those of `skip`.
    fn partial(&self, s: &ParameterState, o: usize, skip: Block) -> f64 {
        let t = &self.model.terms;
        let c = self.cell(o);
        let mut v = 0.0;
        if !matches!(skip, Block::Fixed) {
            v += s.mu;
            if t.large_area {
                v += s.lambda[c.large_area];
            }
            if t.covariate {
                v += s.beta_re[c.area];
            }
        }
        if t.time && !matches!(skip, Block::Time) {
            v += s.gamma[c.time];
        }
        if t.space && !matches!(skip, Block::Space) {
            v += s.phi[c.area];
        }
        if t.interaction && !matches!(skip, Block::Interaction) {
            v += s.delta[c.cell];
        }
        v
    }

    /// Per-area sums `(sum w, sum w r)` of residuals excluding `skip`.
    fn area_sums(&self, s: &ParameterState, skip: Block) -> (Vec<f64>, Vec<f64>) {
        let m = self.data.n_areas();
        let mut sw = vec![0.0; m];
        let mut swr = vec![0.0; m];
        for (o, ob) in self.data.observations.iter().enumerate() {
            let w = self.obs_precision[o];
            sw[ob.area] += w;
            swr[ob.area] += w * (ob.rate - self.partial(s, o, skip));
        }
        (sw, swr)
    }

    fn update_fixed<R: Rng + ?Sized>(
        &self,
        s: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), SamplerError> {
        let t = self.model.terms;
        let (sw, swr) = self.area_sums(s, Block::Fixed);
        let k = self.design[0].len();
        let mut prec = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        for (a, row) in self.design.iter().enumerate() {
            if sw[a] == 0.0 {
                continue;
            }
            let kappa = if t.covariate {
                sw[a] / (1.0 + sw[a] * s.tau2)
            } else {
                sw[a]
            };
            let rbar = swr[a] / sw[a];
            for i in 0..k {
                b[i] += kappa * rbar * row[i];
                for j in 0..k {
                    prec[(i, j)] += kappa * row[i] * row[j];
                }
            }
        }
        let (f, _) = sample_canonical(prec, &b, rng)
            .ok_or_else(|| numerical("fixed effects", "precision is not positive definite"))?;
        s.mu = f[0];
        if t.large_area && self.n_contrasts > 0 {
            let mut total = 0.0;
            for c in 0..self.n_contrasts {
                s.lambda[c] = f[1 + c];
                total += f[1 + c];
            }
            s.lambda[self.n_contrasts] = -total;
        }
        if t.covariate {
            let p = self.data.n_covariates();
            let off = 1 + self.n_contrasts;
            for j in 0..p {
                s.beta_coef[j] = f[off + j];
            }
            for a in 0..self.data.n_areas() {
                let xb: f64 = self.data.x[a]
                    .iter()
                    .zip(&s.beta_coef)
                    .map(|(x, b)| x * b)
                    .sum();
                let mut fixed = s.mu + xb;
                if t.large_area {
                    fixed += s.lambda[self.data.area_large[a]];
                }
                let p = sw[a] + 1.0 / s.tau2;
                let mean = (swr[a] - sw[a] * fixed) / p;
                let u = mean + rng.sample::<f64, _>(StandardNormal) / p.sqrt();
                s.beta_re[a] = xb + u;
            }
        }
        Ok(())
    }

    fn update_time<R: Rng + ?Sized>(
        &self,
        s: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), SamplerError> {
        let k = self.irw.as_ref().expect("time smoother active");
        let nt = self.data.n_times();
        let mut prec = k / s.sigma2_gamma;
        let mut b = DVector::zeros(nt);
        for (o, ob) in self.data.observations.iter().enumerate() {
            let w = self.obs_precision[o];
            prec[(ob.time, ob.time)] += w;
            b[ob.time] += w * (ob.rate - self.partial(s, o, Block::Time));
        }
        let (x, chol) = sample_canonical(prec, &b, rng)
            .ok_or_else(|| numerical("time smoother", "precision is not positive definite"))?;
        // condition on sum(gamma) = 0
        let v = chol.solve(&DVector::from_element(nt, 1.0));
        let shift = x.sum() / v.sum();
        for i in 0..nt {
            s.gamma[i] = x[i] - v[i] * shift;
        }
        Ok(())
    }

    fn update_space<R: Rng + ?Sized>(
        &self,
        s: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), SamplerError> {
        let car = self.car.as_ref().expect("space smoother active");
        let (sw, swr) = self.area_sums(s, Block::Space);
        let n = sw.len();
        let scale = -s.rho / s.sigma2_u;
        let mut prec = car.w_star.map(|w| scale * w);
        for i in 0..n {
            prec[(i, i)] = car.row_sums[i] / s.sigma2_u + sw[i];
        }
        let (phi, _) = sample_canonical(prec, &DVector::from_vec(swr), rng)
            .ok_or_else(|| numerical("spatial field", "precision is not positive definite"))?;
        s.phi.copy_from_slice(phi.as_slice());
        Ok(())
    }

    fn update_interaction<R: Rng + ?Sized>(&self, s: &mut ParameterState, rng: &mut R) {
        for (o, ob) in self.data.observations.iter().enumerate() {
            let w = self.obs_precision[o];
            let r = ob.rate - self.partial(s, o, Block::Interaction);
            let p = w + 1.0 / s.sigma2_delta;
            s.delta[o] = w * r / p + rng.sample::<f64, _>(StandardNormal) / p.sqrt();
        }
    }

    fn update_variances<R: Rng + ?Sized>(
        &self,
        s: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), SamplerError> {
        let t = self.model.terms;
        let vp = self.hyper.variance_prior;
        if t.covariate {
            let ss: f64 = (0..self.data.n_areas())
                .map(|a| {
                    let xb: f64 = self.data.x[a]
                        .iter()
                        .zip(&s.beta_coef)
                        .map(|(x, b)| x * b)
                        .sum();
                    (s.beta_re[a] - xb).powi(2)
                })
                .sum();
            s.tau2 = self
                .hyper
                .tau2_prior
                .update(self.data.n_areas() as f64, ss)
                .sample(rng)
                .ok_or_else(|| numerical("tau2", format!("degenerate sum of squares {ss}")))?;
        }
        if t.time {
            let k = self.irw.as_ref().unwrap();
            let rank = (self.data.n_times() - self.hyper.irw_order) as f64;
            let ss = quad_form(k, &s.gamma);
            s.sigma2_gamma = vp
                .update(rank, ss)
                .sample(rng)
                .ok_or_else(|| numerical("sigma2_gamma", "invalid inverse-gamma draw"))?;
        }
        if t.space {
            let car = self.car.as_ref().unwrap();
            let (dd, ww) = self.car_quadratics(s);
            let ss = (dd - s.rho * ww).max(0.0);
            s.sigma2_u = vp
                .update(car.row_sums.len() as f64, ss)
                .sample(rng)
                .ok_or_else(|| numerical("sigma2_u", "invalid inverse-gamma draw"))?;
        }
        if t.interaction {
            let ss: f64 = s.delta.iter().map(|d| d * d).sum();
            s.sigma2_delta = vp
                .update(s.delta.len() as f64, ss)
                .sample(rng)
                .ok_or_else(|| numerical("sigma2_delta", "invalid inverse-gamma draw"))?;
        }
        Ok(())
    }

    /// `(phi' diag(r) phi, phi' W* phi)`.
    fn car_quadratics(&self, s: &ParameterState) -> (f64, f64) {
        let car = self.car.as_ref().unwrap();
        let dd = s
            .phi
            .iter()
            .zip(&car.row_sums)
            .map(|(p, r)| r * p * p)
            .sum();
        (dd, quad_form(&car.w_star, &s.phi))
    }

    /// One full systematic scan.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), SamplerError> {
        let t = self.model.terms;
        self.update_fixed(s, rng)?;
        if t.time {
            self.update_time(s, rng)?;
        }
        if t.space {
            self.update_space(s, rng)?;
        }
        if t.interaction {
            self.update_interaction(s, rng);
        }
        self.update_variances(s, rng)?;
        if t.space {
            let (dd, ww) = self.car_quadratics(s);
            s.rho = self
                .car
                .as_ref()
                .unwrap()
                .grid
                .draw_car(dd, ww, s.sigma2_u, rng);
        }
        Ok(())
    }

    pub fn theta(&self, s: &ParameterState) -> Vec<f64> {
        (0..self.data.observations.len())
            .map(|o| linear_predictor(s, &self.model.terms, self.cell(o)))
            .collect()
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> Vec<f64> {
        self.data
            .observations
            .iter()
            .zip(theta)
            .map(|(o, th)| normal_log_density(o.rate, *th, o.variance))
            .collect()
    }

    /// Run one chain. The random stream is a function of `(seed, chain)`.
    pub fn run_single_chain(
        &self,
        chain: usize,
        cfg: &ChainConfig,
    ) -> Result<ChainDraws, SamplerError> {
        let mut rng = chain_rng(cfg.seed, chain);
        let mut state = self.initial_state();
        let keep = cfg.retained();
        let mut out = ChainDraws {
            chain,
            iterations: Vec::with_capacity(keep),
            states: Vec::with_capacity(keep),
            theta: Vec::with_capacity(keep),
            loglik: Vec::with_capacity(keep),
        };
        for it in 1..=cfg.iterations {
            self.step(&mut state, &mut rng)?;
            if it > cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
                let theta = self.theta(&state);
                let ll = self.log_likelihood(&theta);
                if ll.iter().any(|v| !v.is_finite()) {
                    return Err(numerical(
                        "likelihood",
                        format!("non-finite at iteration {it}"),
                    ));
                }
                out.iterations.push(it);
                out.states.push(state.clone());
                out.theta.push(theta);
                out.loglik.push(ll);
            }
        }
        Ok(out)
    }
}

pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

pub fn normal_log_density(y: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - (y - mean).powi(2) / (2.0 * variance)
}

/// Sample the posterior with `cfg.n_chains` independent chains run in
/// parallel.
pub fn run_chain(
    dataset: &Dataset,
    weights: Option<&WeightSystem>,
    variant: ModelVariant,
    hyper: &Hyperpriors,
    cfg: &ChainConfig,
) -> Result<PosteriorDraws, SamplerError> {
    cfg.validate()?;
    let sampler = Sampler::new(dataset, weights, variant, *hyper, cfg.rho_grid_size)?;
    let results: Vec<Result<ChainDraws, SamplerError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.n_chains)
            .map(|c| {
                let sampler = &sampler;
                scope.spawn(move || sampler.run_single_chain(c, cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    let chains = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(PosteriorDraws {
        model: sampler.model,
        chains,
        labels: DrawLabels::from_dataset(dataset),
    })
}

// ---------------------------------------------------------------------------
// Posterior summaries

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, standard deviation and central 95% interval.
pub fn summarize(values: &[f64]) -> Summary {
    assert!(!values.is_empty(), "summary of no draws");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted[0] == sorted[sorted.len() - 1] {
        let v = sorted[0];
        return Summary {
            mean: v,
            sd: 0.0,
            ci_low: v,
            ci_high: v,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Summary {
        mean,
        sd,
        ci_low: quantile_sorted(&sorted, 0.025),
        ci_high: quantile_sorted(&sorted, 0.975),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaPrediction {
    pub area_id: String,
    pub time_index: i64,
    pub direct_rate: f64,
    pub design_sd: f64,
    pub theta_hat: f64,
    pub posterior_sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub parameter: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: EffectiveModel,
    pub n_draws: usize,
    pub areas: Vec<AreaPrediction>,
    pub parameters: Vec<ParameterSummary>,
}

/// Posterior summaries of theta at the target time, pooled over chains.
pub fn predict(draws: &PosteriorDraws, dataset: &Dataset) -> FitResult {
    let series = draws.scalar_series();
    let pooled = |chains: &Vec<Vec<f64>>| -> Vec<f64> { chains.concat() };
    let parameters = series
        .iter()
        .filter(|(name, _)| !name.starts_with("theta["))
        .map(|(name, chains)| ParameterSummary {
            parameter: name.clone(),
            summary: summarize(&pooled(chains)),
        })
        .collect();
    let target = dataset.times.len() - 1;
    let areas = dataset
        .target_observations()
        .into_iter()
        .enumerate()
        .map(|(a, o)| {
            let values: Vec<f64> = draws.pooled_theta().map(|th| th[o]).collect();
            let s = summarize(&values);
            let obs = &dataset.observations[o];
            AreaPrediction {
                area_id: dataset.areas[a].area_id.clone(),
                time_index: dataset.times[target],
                direct_rate: obs.rate,
                design_sd: obs.variance.sqrt(),
                theta_hat: s.mean,
                posterior_sd: s.sd,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
            }
        })
        .collect();
    FitResult {
        model: draws.model,
        n_draws: draws.n_draws(),
        areas,
        parameters,
    }
}

pub fn convergence_report(draws: &PosteriorDraws) -> ConvergenceReport {
    ConvergenceReport::from_series(&draws.scalar_series())
}
