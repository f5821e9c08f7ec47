//! Command-line parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::ingest::InputPaths;
use crate::model::ModelVariant;
use crate::pipeline::{self, ChainArgs, Context, Error};
use crate::synthetic::{DesignSdProfile, GridLayout, SyntheticSpec, TrueParameters};

#[derive(Debug, Parser)]
#[command(
    name = "covmix",
    version,
    about = "Spatio-temporal hierarchical Bayes models for small-area coverage-error rates"
)]
pub struct Cli {
    /// `key = value` run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Random seed.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moran's I, variogram cloud and weight-system audit.
    Diagnose(InputArgs),
    /// Fit one model variant.
    Fit {
        #[command(flatten)]
        inputs: InputArgs,
        /// Model variant, I to VII.
        #[arg(long, default_value = "I", value_parser = parse_variant)]
        model: ModelVariant,
        #[command(flatten)]
        chains: ChainFlags,
    },
    /// Fit several variants and rank them by DIC and LPML.
    Compare {
        #[command(flatten)]
        inputs: InputArgs,
        /// Comma-separated variants.
        #[arg(long, value_delimiter = ',', default_value = "I,II,III,IV,V,VI,VII", value_parser = parse_variant)]
        models: Vec<ModelVariant>,
        #[command(flatten)]
        chains: ChainFlags,
    },
    /// Summarize theta draws from a previous fit.
    Predict {
        #[command(flatten)]
        inputs: InputArgs,
        /// `draws.csv` written by `fit`.
        #[arg(long)]
        draws: PathBuf,
        /// Variant the draws were produced by.
        #[arg(long, value_parser = parse_variant)]
        model: ModelVariant,
    },
    /// Simulate a dataset from a model variant.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Directory holding areas.csv, estimates.csv, covariates.csv and adjacency.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Area table; overrides --data.
    #[arg(long)]
    pub areas: Option<PathBuf>,
    /// Direct estimates table; overrides --data.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Covariate table; overrides --data.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Adjacency pairs; overrides --data.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
}

impl InputArgs {
    pub fn paths(&self) -> Result<InputPaths, Error> {
        let base = self.data.as_deref().map(InputPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, from_base: Option<PathBuf>, name: &str| {
            explicit
                .clone()
                .or(from_base)
                .ok_or_else(|| Error::Usage(format!("--{name} or --data is required")))
        };
        Ok(InputPaths {
            areas: pick(&self.areas, base.as_ref().map(|b| b.areas.clone()), "areas")?,
            estimates: pick(
                &self.estimates,
                base.as_ref().map(|b| b.estimates.clone()),
                "estimates",
            )?,
            covariates: pick(
                &self.covariates,
                base.as_ref().map(|b| b.covariates.clone()),
                "covariates",
            )?,
            adjacency: pick(
                &self.adjacency,
                base.as_ref().map(|b| b.adjacency.clone()),
                "adjacency",
            )?,
        })
    }
}

#[derive(Debug, Clone, Copy, Args)]
pub struct ChainFlags {
    /// Iterations per chain, burn-in included.
    #[arg(long, visible_alias = "iters", default_value_t = ChainArgs::default().iterations)]
    pub iterations: usize,
    /// Leading iterations discarded.
    #[arg(long, visible_alias = "burnin", default_value_t = ChainArgs::default().burn_in)]
    pub burn_in: usize,
    /// Keep every k-th draw after burn-in.
    #[arg(long, default_value_t = ChainArgs::default().thin)]
    pub thin: usize,
    /// Independent chains run in parallel.
    #[arg(long, default_value_t = ChainArgs::default().n_chains)]
    pub chains: usize,
}

impl ChainFlags {
    fn args(&self) -> ChainArgs {
        ChainArgs {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            n_chains: self.chains,
        }
    }

    fn canonical(&self) -> Vec<String> {
        vec![
            "--iterations".into(),
            self.iterations.to_string(),
            "--burn-in".into(),
            self.burn_in.to_string(),
            "--thin".into(),
            self.thin.to_string(),
            "--chains".into(),
            self.chains.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Generating variant.
    #[arg(long, default_value = "V", value_parser = parse_variant)]
    pub model: ModelVariant,
    /// Grid rows.
    #[arg(long, default_value_t = 10)]
    pub rows: usize,
    /// Grid columns.
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
    /// Large areas, as column strips.
    #[arg(long, default_value_t = 2)]
    pub large_areas: usize,
    /// Time levels.
    #[arg(long, default_value_t = 1)]
    pub times: usize,
    /// Constant design standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub design_sd: f64,
    /// Upper end of a uniform design-sd range starting at `--design-sd`.
    #[arg(long)]
    pub design_sd_high: Option<f64>,
    /// Overall mean.
    #[arg(long, default_value_t = TrueParameters::default().mu)]
    pub mu: f64,
    /// Comma-separated large-area effects, one per large area.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda: Option<Vec<f64>>,
    /// Comma-separated covariate coefficients.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    /// Covariate-effect variance.
    #[arg(long, default_value_t = TrueParameters::default().tau2)]
    pub tau2: f64,
    /// Time smoother variance.
    #[arg(long, default_value_t = TrueParameters::default().sigma2_gamma)]
    pub sigma2_gamma: f64,
    /// Spatial field variance.
    #[arg(long, default_value_t = TrueParameters::default().sigma2_u)]
    pub sigma2_u: f64,
    /// Spatial autocorrelation.
    #[arg(long, default_value_t = TrueParameters::default().rho, allow_hyphen_values = true)]
    pub rho: f64,
    /// Interaction variance.
    #[arg(long, default_value_t = TrueParameters::default().sigma2_delta)]
    pub sigma2_delta: f64,
}

impl SynthArgs {
    fn spec(&self, seed: u64, irw_order: usize) -> SyntheticSpec {
        let defaults = TrueParameters::default();
        let lambda = self.lambda.clone().unwrap_or_else(|| {
            (0..self.large_areas)
                .map(|l| {
                    if self.large_areas < 2 {
                        0.0
                    } else {
                        -0.5 + l as f64 / (self.large_areas - 1) as f64
                    }
                })
                .collect()
        });
        SyntheticSpec {
            layout: GridLayout::new(self.rows, self.cols, self.large_areas),
            variant: self.model,
            truth: TrueParameters {
                mu: self.mu,
                lambda,
                beta: self.beta.clone().unwrap_or(defaults.beta),
                tau2: self.tau2,
                sigma2_gamma: self.sigma2_gamma,
                sigma2_u: self.sigma2_u,
                rho: self.rho,
                sigma2_delta: self.sigma2_delta,
                irw_order,
            },
            design_sd: match self.design_sd_high {
                Some(high) => DesignSdProfile::Uniform {
                    low: self.design_sd,
                    high,
                },
                None => DesignSdProfile::Constant(self.design_sd),
            },
            n_times: self.times,
            seed,
        }
    }

    fn canonical(&self) -> Vec<String> {
        let list = |v: &Option<Vec<f64>>| {
            v.as_ref()
                .map(|v| v.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
                .unwrap_or_else(|| "default".into())
        };
        let mut c = vec![
            "--model".into(),
            self.model.to_string(),
            "--rows".into(),
            self.rows.to_string(),
            "--cols".into(),
            self.cols.to_string(),
            "--large-areas".into(),
            self.large_areas.to_string(),
            "--times".into(),
            self.times.to_string(),
            "--design-sd".into(),
            self.design_sd.to_string(),
        ];
        if let Some(h) = self.design_sd_high {
            c.extend(["--design-sd-high".into(), h.to_string()]);
        }
        c.extend([
            "--mu".into(),
            self.mu.to_string(),
            "--lambda".into(),
            list(&self.lambda),
            "--beta".into(),
            list(&self.beta),
            "--tau2".into(),
            self.tau2.to_string(),
            "--sigma2-gamma".into(),
            self.sigma2_gamma.to_string(),
            "--sigma2-u".into(),
            self.sigma2_u.to_string(),
            "--rho".into(),
            self.rho.to_string(),
            "--sigma2-delta".into(),
            self.sigma2_delta.to_string(),
        ]);
        c
    }
}

fn parse_variant(s: &str) -> Result<ModelVariant, String> {
    s.parse::<ModelVariant>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let mut ctx = Context {
        config,
        out_dir: cli.out.clone(),
        seed: cli.seed,
        command: Vec::new(),
    };
    let seed_args = vec!["--seed".to_string(), cli.seed.to_string()];
    match &cli.command {
        Command::Diagnose(inputs) => {
            ctx.command = [vec!["diagnose".to_string()], seed_args].concat();
            let out = pipeline::diagnose(&ctx, &inputs.paths()?)?;
            println!(
                "Moran's I = {:.4} (expected {:.4}), {} of {} areas kept",
                out.moran.i, out.moran.expected_i, out.n_kept, out.n_areas
            );
        }
        Command::Fit {
            inputs,
            model,
            chains,
        } => {
            ctx.command = [
                vec!["fit".to_string(), "--model".into(), model.to_string()],
                chains.canonical(),
                seed_args,
            ]
            .concat();
            let f = pipeline::fit(&ctx, &inputs.paths()?, *model, &chains.args())?;
            println!(
                "model {model}: DIC {:.2}, p_D {:.2}, LPML {:.2}, {} areas",
                f.score.dic.dic,
                f.score.dic.p_d,
                f.score.lpml,
                f.dataset.n_areas()
            );
        }
        Command::Compare {
            inputs,
            models,
            chains,
        } => {
            let list = models
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(",");
            ctx.command = [
                vec!["compare".to_string(), "--models".into(), list],
                chains.canonical(),
                seed_args,
            ]
            .concat();
            let r = pipeline::compare(&ctx, &inputs.paths()?, models, &chains.args())?;
            for (k, row) in r.rows.iter().enumerate() {
                println!(
                    "{:>2}. {:<4} DIC {:>12.3}  LPML {:>12.3}  {}",
                    k + 1,
                    row.variant.to_string(),
                    row.dic.dic,
                    row.lpml,
                    row.flags.join(";")
                );
            }
        }
        Command::Predict {
            inputs,
            draws,
            model,
        } => {
            ctx.command = [
                vec!["predict".to_string(), "--model".into(), model.to_string()],
                seed_args,
            ]
            .concat();
            let fit = pipeline::predict_from_draws(&ctx, &inputs.paths()?, draws, *model)?;
            println!(
                "{} area predictions from {} draws",
                fit.areas.len(),
                fit.n_draws
            );
        }
        Command::Synth(args) => {
            ctx.command = [vec!["synth".to_string()], args.canonical(), seed_args].concat();
            let spec = args.spec(cli.seed, ctx.config.hyperpriors.irw_order);
            pipeline::synth(&ctx, &spec)?;
            println!(
                "wrote {} areas x {} times to {}",
                spec.layout.n_areas(),
                spec.n_times,
                ctx.out_dir.display()
            );
        }
    }
    Ok(())
}

/// Parse `args` (program name first), run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
