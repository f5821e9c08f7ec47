//! The diagnose / fit / compare / predict / synth workflows behind the
//! command-line interface. Every output file is written atomically and each
//! output directory receives one `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::gibbs::{
    self, convergence_report, predict, summarize, ChainConfig, ConvergenceReport, FitResult,
    ParameterSummary, PosteriorDraws, SamplerError,
};
use crate::ingest::{load_dataset, Dataset, DroppedArea, IngestError, InputPaths};
use crate::model::ModelVariant;
use crate::selection::{self, rank_models, residuals, Ranking, SelectionError};
use crate::spatial::{
    build_weight_system, contiguity_matrix, distance_matrix, morans_i, variogram_cloud, PrunedArea,
    SpatialError, VariogramSubset, WeightConfig, WeightSystem,
};
use crate::synthetic::{generate, LayoutError, SyntheticSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("input: {0}")]
    Input(String),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    /// 1 usage, 2 input, 3 spatial structure, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Layout(_) => 1,
            Error::Config(_) | Error::Ingest(_) | Error::Input(_) | Error::Io { .. } => 2,
            Error::Spatial(SpatialError::NotPositiveDefinite) => 4,
            Error::Spatial(_) => 3,
            Error::Sampler(SamplerError::ConfigError(_)) => 1,
            Error::Sampler(SamplerError::Model(_)) => 2,
            Error::Sampler(SamplerError::NumericalFailure { .. }) => 4,
            Error::Selection(_) => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialize");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Vec<u8>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    fill(&mut w).expect("in-memory write");
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

pub fn digest_file(role: &str, path: &Path) -> Result<InputDigest, Error> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(InputDigest {
        role: role.to_string(),
        file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn digest_inputs(paths: &InputPaths) -> Result<Vec<InputDigest>, Error> {
    ["areas", "estimates", "covariates", "adjacency"]
        .iter()
        .zip(paths.all())
        .map(|(role, p)| digest_file(role, p))
        .collect()
}

/// Everything needed to rerun a command. Paths are reduced to file names and
/// no clock time is recorded, so identical runs give identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub command: Vec<String>,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

/// Settings shared by all commands.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Canonical command line recorded in the manifest.
    pub command: Vec<String>,
}

impl Context {
    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write_manifest(&self, inputs: Vec<InputDigest>, outputs: &[&str]) -> Result<(), Error> {
        let manifest = RunManifest {
            version: VERSION,
            command: self.command.clone(),
            seed: self.seed,
            config: self.config.snapshot(),
            inputs,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        };
        write_json(&self.out("manifest.json"), &manifest)
    }
}

/// Weight system for the dataset's areas, screened by the signs of the
/// target-time rates.
pub fn weights_for(dataset: &Dataset, cfg: &WeightConfig) -> Result<WeightSystem, SpatialError> {
    let rates = dataset.target_rates();
    let delta = contiguity_matrix(dataset.n_areas(), &dataset.adjacency, &rates)?;
    build_weight_system(
        &dataset.area_ids(),
        &distance_matrix(&dataset.coordinates()),
        &delta,
        cfg,
    )
}

/// Load the dataset and, when needed, its weight system, restricting the
/// dataset to the areas the weight system keeps.
pub fn prepare(
    config: &RunConfig,
    paths: &InputPaths,
    need_space: bool,
) -> Result<(Dataset, Option<WeightSystem>), Error> {
    let dataset = load_dataset(paths, &config.ingest)?;
    for d in &dataset.dropped {
        log::warn!("area {} dropped: {}", d.area_id, d.reason);
    }
    if !(need_space || config.restrict_to_spatial) {
        return Ok((dataset, None));
    }
    let ws = weights_for(&dataset, &config.weights)?;
    for p in &ws.pruned {
        log::warn!(
            "area {} pruned from the weight system: {}",
            p.area_id,
            p.reason
        );
    }
    let dataset = if ws.pruned.is_empty() {
        dataset
    } else {
        dataset.restrict_to(&ws.kept_ids)
    };
    Ok((dataset, Some(ws)))
}

// ---------------------------------------------------------------------------
// diagnose

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseOutput {
    pub moran: crate::spatial::MoranResult,
    pub n_areas: usize,
    pub n_kept: usize,
    pub pruned: Vec<PrunedArea>,
}

pub fn diagnose(ctx: &Context, paths: &InputPaths) -> Result<DiagnoseOutput, Error> {
    let inputs = digest_inputs(paths)?;
    let dataset = load_dataset(paths, &ctx.config.ingest)?;
    let ws = weights_for(&dataset, &ctx.config.weights)?;
    let rates = dataset.target_rates();
    let kept_rates: Vec<f64> = ws.kept_index.iter().map(|&i| rates[i]).collect();
    let moran = morans_i(&kept_rates, &ws.w)?;

    let d = distance_matrix(&dataset.coordinates());
    let mut clouds = Vec::new();
    for subset in VariogramSubset::ALL {
        match variogram_cloud(&rates, &d, subset) {
            Ok(c) => clouds.push(c),
            Err(SpatialError::SubsetTooSmall { .. }) => {
                log::warn!("variogram subset '{subset}' has fewer than two areas")
            }
            Err(e) => return Err(e.into()),
        }
    }
    let variogram = csv_bytes(&["d", "sqdiff", "subset"], |w| {
        for c in &clouds {
            let subset = c.subset.to_string();
            for p in &c.points {
                w.write_record([
                    p.distance.to_string(),
                    p.sq_diff.to_string(),
                    subset.clone(),
                ])?;
            }
        }
        Ok(())
    });

    let pruned_by_index: BTreeMap<usize, &PrunedArea> =
        ws.pruned.iter().map(|p| (p.index, p)).collect();
    let audit = csv_bytes(&["area_id", "row_sum", "status", "reason"], |w| {
        for (i, a) in dataset.areas.iter().enumerate() {
            let (status, reason) = match pruned_by_index.get(&i) {
                Some(p) => ("pruned", format!("{} (pass {})", p.reason, p.pass)),
                None => ("kept", String::new()),
            };
            w.write_record([
                a.area_id.clone(),
                ws.initial_row_sums[i].to_string(),
                status.to_string(),
                reason,
            ])?;
        }
        Ok(())
    });

    let out = DiagnoseOutput {
        moran,
        n_areas: dataset.n_areas(),
        n_kept: ws.len(),
        pruned: ws.pruned.clone(),
    };
    write_json(&ctx.out("moran.json"), &out)?;
    write_atomic(&ctx.out("variogram.csv"), &variogram)?;
    write_atomic(&ctx.out("weights_audit.csv"), &audit)?;
    ctx.write_manifest(
        inputs,
        &["moran.json", "variogram.csv", "weights_audit.csv"],
    )?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// fit / compare

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainArgs {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
}

impl Default for ChainArgs {
    fn default() -> Self {
        let d = ChainConfig::default();
        Self {
            iterations: d.iterations,
            burn_in: d.burn_in,
            thin: d.thin,
            n_chains: d.n_chains,
        }
    }
}

impl ChainArgs {
    pub fn config(&self, seed: u64, rho_grid_size: usize) -> ChainConfig {
        ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed,
            n_chains: self.n_chains,
            rho_grid_size,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub model: gibbs::EffectiveModel,
    pub chains: ChainConfig,
    pub n_areas: usize,
    pub n_times: usize,
    pub n_observations: usize,
    pub n_draws: usize,
    pub dropped_areas: Vec<DroppedArea>,
    pub pruned_areas: Vec<PrunedArea>,
    pub dic: selection::DicScore,
    pub lpml: f64,
    pub flags: Vec<String>,
    pub parameters: Vec<ParameterSummary>,
    pub areas: Vec<gibbs::AreaPrediction>,
    pub convergence: ConvergenceReport,
}

/// Draws, predictions and scores of one fitted variant.
pub struct Fitted {
    pub dataset: Dataset,
    pub draws: PosteriorDraws,
    pub fit: FitResult,
    pub score: selection::ModelScore,
    pub summary: FitSummary,
}

/// Fit one variant to an already prepared dataset.
pub fn fit_prepared(
    config: &RunConfig,
    dataset: &Dataset,
    weights: Option<&WeightSystem>,
    variant: ModelVariant,
    chains: &ChainConfig,
) -> Result<Fitted, Error> {
    let draws = gibbs::run_chain(dataset, weights, variant, &config.hyperpriors, chains)?;
    let fit = predict(&draws, dataset);
    let score = selection::score_model(&draws, dataset, config.cpo_max_log_range)?;
    let convergence = convergence_report(&draws);
    let mut flags = score.flags.clone();
    if convergence.any_flagged {
        let n = convergence.parameters.iter().filter(|p| p.flagged).count();
        log::warn!("model {variant}: {n} parameters have split R-hat above the threshold");
        flags.push(format!("rhat_above_threshold({n})"));
    }
    let summary = FitSummary {
        model: draws.model,
        chains: *chains,
        n_areas: dataset.n_areas(),
        n_times: dataset.n_times(),
        n_observations: dataset.observations.len(),
        n_draws: draws.n_draws(),
        dropped_areas: dataset.dropped.clone(),
        pruned_areas: weights.map(|w| w.pruned.clone()).unwrap_or_default(),
        dic: score.dic,
        lpml: score.lpml,
        flags,
        parameters: fit.parameters.clone(),
        areas: fit.areas.clone(),
        convergence,
    };
    Ok(Fitted {
        dataset: dataset.clone(),
        draws,
        fit,
        score,
        summary,
    })
}

fn predictions_csv(fit: &FitResult, variant: ModelVariant) -> Vec<u8> {
    csv_bytes(
        &[
            "area_id",
            "y",
            "design_sd",
            "theta_hat",
            "posterior_sd",
            "ci_low",
            "ci_high",
            "model_id",
        ],
        |w| {
            for a in &fit.areas {
                w.write_record([
                    a.area_id.clone(),
                    a.direct_rate.to_string(),
                    a.design_sd.to_string(),
                    a.theta_hat.to_string(),
                    a.posterior_sd.to_string(),
                    a.ci_low.to_string(),
                    a.ci_high.to_string(),
                    variant.to_string(),
                ])?;
            }
            Ok(())
        },
    )
}

fn draws_csv(draws: &PosteriorDraws) -> Vec<u8> {
    let series = draws.scalar_series();
    csv_bytes(&["chain", "iter", "parameter", "value"], |w| {
        for (c, chain) in draws.chains.iter().enumerate() {
            for (k, it) in chain.iterations.iter().enumerate() {
                for (name, values) in &series {
                    w.write_record([
                        chain.chain.to_string(),
                        it.to_string(),
                        name.clone(),
                        values[c][k].to_string(),
                    ])?;
                }
            }
        }
        Ok(())
    })
}

pub fn fit(
    ctx: &Context,
    paths: &InputPaths,
    variant: ModelVariant,
    chain_args: &ChainArgs,
) -> Result<Fitted, Error> {
    let chains = chain_args.config(ctx.seed, ctx.config.rho_grid_size);
    chains.validate()?;
    let inputs = digest_inputs(paths)?;
    let (dataset, ws) = prepare(&ctx.config, paths, variant.terms().space)?;
    let fitted = fit_prepared(&ctx.config, &dataset, ws.as_ref(), variant, &chains)?;
    write_json(&ctx.out("summary.json"), &fitted.summary)?;
    write_atomic(&ctx.out("draws.csv"), &draws_csv(&fitted.draws))?;
    write_atomic(
        &ctx.out("predictions.csv"),
        &predictions_csv(&fitted.fit, variant),
    )?;
    ctx.write_manifest(inputs, &["summary.json", "draws.csv", "predictions.csv"])?;
    Ok(fitted)
}

pub fn compare(
    ctx: &Context,
    paths: &InputPaths,
    variants: &[ModelVariant],
    chain_args: &ChainArgs,
) -> Result<Ranking, Error> {
    if variants.len() < 2 {
        return Err(Error::Usage("compare needs at least two models".into()));
    }
    let chains = chain_args.config(ctx.seed, ctx.config.rho_grid_size);
    chains.validate()?;
    let inputs = digest_inputs(paths)?;
    let need_space = variants.iter().any(|v| v.terms().space);
    let (dataset, ws) = prepare(&ctx.config, paths, need_space)?;
    let mut fits = Vec::with_capacity(variants.len());
    for &v in variants {
        log::info!("fitting model {v}");
        fits.push(fit_prepared(
            &ctx.config,
            &dataset,
            ws.as_ref(),
            v,
            &chains,
        )?);
    }
    let scores: Vec<_> = fits
        .iter()
        .map(|f| {
            let mut s = f.score.clone();
            s.flags = f.summary.flags.clone();
            s
        })
        .collect();
    let ranking = rank_models(&scores)?;
    let table = csv_bytes(&["variant", "dbar", "p_d", "dic", "lpml", "flags"], |w| {
        for r in &ranking.rows {
            w.write_record([
                r.variant.to_string(),
                r.dic.dbar.to_string(),
                r.dic.p_d.to_string(),
                r.dic.dic.to_string(),
                r.lpml.to_string(),
                r.flags.join(";"),
            ])?;
        }
        Ok(())
    });
    let best = fits
        .iter()
        .find(|f| f.draws.model.variant == ranking.dic_best)
        .expect("ranked variant was fitted");
    let res = residuals(&best.fit);
    let res_csv = csv_bytes(&["area_id", "y", "theta_hat", "sd", "std_residual"], |w| {
        for r in &res.rows {
            w.write_record([
                r.area_id.clone(),
                r.y.to_string(),
                r.theta_hat.to_string(),
                r.sd.to_string(),
                r.std_residual.to_string(),
            ])?;
        }
        Ok(())
    });
    write_atomic(&ctx.out("model_scores.csv"), &table)?;
    write_atomic(&ctx.out("residuals.csv"), &res_csv)?;
    ctx.write_manifest(inputs, &["model_scores.csv", "residuals.csv"])?;
    Ok(ranking)
}

// ---------------------------------------------------------------------------
// predict

/// Theta draws per area id, read from a `draws.csv` written by `fit`.
pub fn read_theta_draws(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, Error> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("{}: missing column '{name}'", path.display())))
    };
    let (pc, vc) = (col("parameter")?, col("value")?);
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let param = &rec[pc];
        if let Some(id) = param
            .strip_prefix("theta[")
            .and_then(|s| s.strip_suffix(']'))
        {
            let v: f64 = rec[vc].parse().map_err(|_| {
                Error::Input(format!(
                    "{} line {}: invalid value '{}'",
                    path.display(),
                    line + 2,
                    &rec[vc]
                ))
            })?;
            out.entry(id.to_string()).or_default().push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::Input(format!("{}: no theta draws", path.display())));
    }
    Ok(out)
}

pub fn predict_from_draws(
    ctx: &Context,
    paths: &InputPaths,
    draws_path: &Path,
    variant: ModelVariant,
) -> Result<FitResult, Error> {
    let mut inputs = digest_inputs(paths)?;
    inputs.push(digest_file("draws", draws_path)?);
    let theta = read_theta_draws(draws_path)?;
    let dataset = load_dataset(paths, &ctx.config.ingest)?;
    let index: BTreeMap<String, usize> = dataset
        .area_ids()
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    if let Some(id) = theta.keys().find(|id| !index.contains_key(*id)) {
        return Err(Error::Input(format!(
            "draws reference area '{id}' absent from the dataset"
        )));
    }
    let target_obs = dataset.target_observations();
    let areas = theta
        .iter()
        .map(|(id, values)| {
            let o = &dataset.observations[target_obs[index[id]]];
            let s = summarize(values);
            gibbs::AreaPrediction {
                area_id: id.clone(),
                time_index: dataset.target_time_index(),
                direct_rate: o.rate,
                design_sd: o.variance.sqrt(),
                theta_hat: s.mean,
                posterior_sd: s.sd,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
            }
        })
        .collect::<Vec<_>>();
    let n_draws = theta.values().next().map(Vec::len).unwrap_or(0);
    let fit = FitResult {
        model: gibbs::effective_model(variant, dataset.n_times()),
        n_draws,
        areas,
        parameters: Vec::new(),
    };
    write_atomic(&ctx.out("predictions.csv"), &predictions_csv(&fit, variant))?;
    ctx.write_manifest(inputs, &["predictions.csv"])?;
    Ok(fit)
}

// ---------------------------------------------------------------------------
// synth

pub fn synth(ctx: &Context, spec: &SyntheticSpec) -> Result<(), Error> {
    let truth = generate(spec)?;
    for (name, body) in truth.input_tables() {
        write_atomic(&ctx.out(name), body.as_bytes())?;
    }
    let mut json = truth.truth_json();
    json.push('\n');
    write_atomic(&ctx.out("truth.json"), json.as_bytes())?;
    ctx.write_manifest(
        Vec::new(),
        &[
            "areas.csv",
            "estimates.csv",
            "covariates.csv",
            "adjacency.csv",
            "truth.json",
        ],
    )
}
