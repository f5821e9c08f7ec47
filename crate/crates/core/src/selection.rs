//! Model comparison by DIC and CPO/LPML, and residual diagnostics.

use serde::Serialize;
use thiserror::Error;

use crate::gibbs::{normal_log_density, FitResult, PosteriorDraws};
use crate::ingest::Dataset;
use crate::model::ModelVariant;

/// DIC values closer than this are reported as ties.
pub const DIC_TIE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("no posterior draws")]
    NoDraws,
    #[error(
        "harmonic-mean CPO unstable for observation {observation}: inverse-likelihood log range {log_range:.1} exceeds {threshold}"
    )]
    UnstableCpo {
        observation: usize,
        log_range: f64,
        threshold: f64,
    },
    #[error("ranking needs at least two models, got {0}")]
    TooFewScores(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DicScore {
    pub dbar: f64,
    pub d_at_mean: f64,
    pub p_d: f64,
    pub dic: f64,
}

/// Deviance `-2 sum log N(y; theta, V)`.
pub fn deviance(dataset: &Dataset, theta: &[f64]) -> f64 {
    -2.0 * dataset
        .observations
        .iter()
        .zip(theta)
        .map(|(o, t)| normal_log_density(o.rate, *t, o.variance))
        .sum::<f64>()
}

pub fn dic(draws: &PosteriorDraws, dataset: &Dataset) -> Result<DicScore, SelectionError> {
    let s = draws.n_draws();
    if s == 0 {
        return Err(SelectionError::NoDraws);
    }
    let n = dataset.observations.len();
    let dbar = draws
        .pooled_loglik()
        .map(|ll| -2.0 * ll.iter().sum::<f64>())
        .sum::<f64>()
        / s as f64;
    let mut theta_bar = vec![0.0; n];
    for th in draws.pooled_theta() {
        for (acc, v) in theta_bar.iter_mut().zip(th) {
            *acc += v;
        }
    }
    theta_bar.iter_mut().for_each(|v| *v /= s as f64);
    let d_at_mean = deviance(dataset, &theta_bar);
    let p_d = dbar - d_at_mean;
    if p_d < 0.0 {
        log::warn!("negative effective number of parameters p_d = {p_d:.3}");
    }
    Ok(DicScore {
        dbar,
        d_at_mean,
        p_d,
        dic: dbar + p_d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpoResult {
    pub log_cpo: Vec<f64>,
    pub lpml: f64,
    /// Observations whose inverse-likelihood log range exceeds the threshold.
    pub unstable: Vec<usize>,
}

impl CpoResult {
    pub fn cpo(&self) -> Vec<f64> {
        self.log_cpo.iter().map(|l| l.exp()).collect()
    }
}

/// Harmonic-mean CPO in log space, flagging unstable observations instead of
/// failing.
pub fn cpo_estimate(
    draws: &PosteriorDraws,
    max_log_range: f64,
) -> Result<CpoResult, SelectionError> {
    let s = draws.n_draws();
    if s == 0 {
        return Err(SelectionError::NoDraws);
    }
    let n = draws.n_obs();
    let mut max = vec![f64::NEG_INFINITY; n];
    let mut min = vec![f64::INFINITY; n];
    for ll in draws.pooled_loglik() {
        for i in 0..n {
            let v = -ll[i];
            max[i] = max[i].max(v);
            min[i] = min[i].min(v);
        }
    }
    let mut sum = vec![0.0; n];
    for ll in draws.pooled_loglik() {
        for i in 0..n {
            sum[i] += (-ll[i] - max[i]).exp();
        }
    }
    let log_s = (s as f64).ln();
    let log_cpo: Vec<f64> = (0..n).map(|i| -(max[i] + sum[i].ln() - log_s)).collect();
    let unstable = (0..n)
        .filter(|&i| max[i] - min[i] > max_log_range)
        .collect();
    Ok(CpoResult {
        lpml: log_cpo.iter().sum(),
        log_cpo,
        unstable,
    })
}

/// As [`cpo_estimate`], but an unstable observation is an error.
pub fn cpo(draws: &PosteriorDraws, max_log_range: f64) -> Result<CpoResult, SelectionError> {
    let r = cpo_estimate(draws, max_log_range)?;
    if let Some(&i) = r.unstable.first() {
        let (lo, hi) = draws
            .pooled_loglik()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), ll| {
                (lo.min(-ll[i]), hi.max(-ll[i]))
            });
        return Err(SelectionError::UnstableCpo {
            observation: i,
            log_range: hi - lo,
            threshold: max_log_range,
        });
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore {
    pub variant: ModelVariant,
    #[serde(flatten)]
    pub dic: DicScore,
    pub lpml: f64,
    pub log_cpo: Vec<f64>,
    pub flags: Vec<String>,
}

pub fn score_model(
    draws: &PosteriorDraws,
    dataset: &Dataset,
    max_log_range: f64,
) -> Result<ModelScore, SelectionError> {
    let d = dic(draws, dataset)?;
    let c = cpo_estimate(draws, max_log_range)?;
    let mut flags = Vec::new();
    if draws.model.collapsed {
        flags.push("time_terms_collapsed".to_string());
    }
    if d.p_d < 0.0 {
        flags.push("negative_p_d".to_string());
    }
    if !c.unstable.is_empty() {
        flags.push(format!("unstable_cpo({})", c.unstable.len()));
    }
    Ok(ModelScore {
        variant: draws.model.variant,
        dic: d,
        lpml: c.lpml,
        log_cpo: c.log_cpo,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    /// Ascending by DIC.
    pub rows: Vec<ModelScore>,
    pub dic_best: ModelVariant,
    pub lpml_best: ModelVariant,
    pub disagreement: bool,
}

/// Sort by DIC. Near-ties and a DIC/LPML disagreement are flagged; the order
/// is never changed by LPML.
pub fn rank_models(scores: &[ModelScore]) -> Result<Ranking, SelectionError> {
    if scores.len() < 2 {
        return Err(SelectionError::TooFewScores(scores.len()));
    }
    let mut rows = scores.to_vec();
    rows.sort_by(|a, b| a.dic.dic.total_cmp(&b.dic.dic));
    for i in 0..rows.len() - 1 {
        if (rows[i + 1].dic.dic - rows[i].dic.dic).abs() <= DIC_TIE {
            let winner = if rows[i + 1].lpml > rows[i].lpml {
                rows[i + 1].variant
            } else {
                rows[i].variant
            };
            let flag = format!("dic_tie(lpml_prefers={winner})");
            for j in [i, i + 1] {
                if !rows[j].flags.contains(&flag) {
                    rows[j].flags.push(flag.clone());
                }
            }
        }
    }
    let dic_best = rows[0].variant;
    let lpml_best = rows
        .iter()
        .max_by(|a, b| a.lpml.total_cmp(&b.lpml))
        .map(|r| r.variant)
        .unwrap();
    let disagreement = dic_best != lpml_best;
    if disagreement {
        for r in rows.iter_mut() {
            if r.variant == dic_best || r.variant == lpml_best {
                r.flags.push("dic_lpml_disagree".to_string());
            }
        }
    }
    Ok(Ranking {
        rows,
        dic_best,
        lpml_best,
        disagreement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub area_id: String,
    pub y: f64,
    pub theta_hat: f64,
    pub sd: f64,
    pub std_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub rows: Vec<Residual>,
    pub mean: f64,
    pub sd: f64,
    pub max_abs: f64,
    pub max_abs_area: String,
}

/// Standardized residuals `(y - theta_hat) / design_sd` at the target time.
pub fn residuals(fit: &FitResult) -> ResidualReport {
    let rows: Vec<Residual> = fit
        .areas
        .iter()
        .map(|a| Residual {
            area_id: a.area_id.clone(),
            y: a.direct_rate,
            theta_hat: a.theta_hat,
            sd: a.design_sd,
            std_residual: (a.direct_rate - a.theta_hat) / a.design_sd,
        })
        .collect();
    let n = rows.len() as f64;
    let mean = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.std_residual).sum::<f64>() / n
    };
    let sd = if rows.len() > 1 {
        (rows
            .iter()
            .map(|r| (r.std_residual - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let (max_abs, max_abs_area) = rows.iter().fold((0.0, String::new()), |(m, id), r| {
        if r.std_residual.abs() > m || id.is_empty() {
            (r.std_residual.abs(), r.area_id.clone())
        } else {
            (m, id)
        }
    });
    ResidualReport {
        rows,
        mean,
        sd,
        max_abs,
        max_abs_area,
    }
}
