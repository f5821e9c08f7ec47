//! Split-chain potential scale reduction and effective sample size.

use serde::Serialize;

/// Threshold above which a parameter is flagged as unconverged.
pub const RHAT_THRESHOLD: f64 = 1.05;

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut halves = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let n = c.len() / 2;
        if n == 0 {
            continue;
        }
        halves.push(&c[..n]);
        halves.push(&c[c.len() - n..]);
    }
    halves
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

struct Moments {
    n: usize,
    means: Vec<f64>,
    within: f64,
    var_plus: f64,
}

fn moments(halves: &[&[f64]]) -> Option<Moments> {
    let m = halves.len();
    if m < 2 {
        return None;
    }
    let n = halves.iter().map(|h| h.len()).min()?;
    if n < 2 {
        return None;
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(&h[..n])).collect();
    let grand = mean(&means);
    let between =
        n as f64 / (m - 1) as f64 * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h[..n].iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / m as f64;
    let var_plus = (n - 1) as f64 / n as f64 * within + between / n as f64;
    Some(Moments {
        n,
        means,
        within,
        var_plus,
    })
}

/// Split-chain R-hat. Each chain is cut into two halves, so a single chain
/// is enough. Returns `None` when there are fewer than 4 draws per chain.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let halves = split(chains);
    let mo = moments(&halves)?;
    if mo.within == 0.0 {
        return Some(if mo.var_plus == 0.0 {
            1.0
        } else {
            f64::INFINITY
        });
    }
    Some((mo.var_plus / mo.within).sqrt())
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence,
/// computed on the split halves.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Option<f64> {
    let halves = split(chains);
    let mo = moments(&halves)?;
    let m = halves.len();
    let n = mo.n;
    let total = (m * n) as f64;
    if mo.var_plus == 0.0 {
        return Some(total);
    }
    let autocov = |lag: usize| -> f64 {
        halves
            .iter()
            .zip(&mo.means)
            .map(|(h, mu)| {
                (0..n - lag)
                    .map(|i| (h[i] - mu) * (h[i + lag] - mu))
                    .sum::<f64>()
                    / n as f64
            })
            .sum::<f64>()
            / m as f64
    };
    let rho = |lag: usize| 1.0 - (mo.within - autocov(lag)) / mo.var_plus;

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    Some(total / tau)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterDiagnostic {
    pub parameter: String,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub parameters: Vec<ParameterDiagnostic>,
    pub any_flagged: bool,
}

impl ConvergenceReport {
    pub fn from_series(series: &[(String, Vec<Vec<f64>>)]) -> Self {
        let parameters: Vec<ParameterDiagnostic> = series
            .iter()
            .map(|(name, chains)| {
                let rhat = split_rhat(chains);
                ParameterDiagnostic {
                    parameter: name.clone(),
                    rhat,
                    ess: effective_sample_size(chains),
                    flagged: rhat.is_some_and(|r| !(r <= RHAT_THRESHOLD)),
                }
            })
            .collect();
        let any_flagged = parameters.iter().any(|p| p.flagged);
        Self {
            parameters,
            any_flagged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn iid(seed: u64, n: usize, mu: f64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mu, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn duplicated_chains_give_unit_rhat() {
        let c = iid(1, 2000, 0.0);
        let r = split_rhat(&[c.clone(), c]).unwrap();
        assert!((r - 1.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn separated_chains_are_flagged() {
        let a = iid(2, 10, 1000.0);
        let b = iid(3, 10, -1000.0);
        let r = split_rhat(&[a.clone(), b.clone()]).unwrap();
        assert!(r > 10.0, "{r}");
        let report = ConvergenceReport::from_series(&[("mu".into(), vec![a, b])]);
        assert!(report.any_flagged);
    }

    #[test]
    fn iid_ess_close_to_draw_count() {
        let chains = vec![iid(4, 5000, 0.0), iid(5, 5000, 0.0)];
        let ess = effective_sample_size(&chains).unwrap();
        assert!(ess > 8000.0 && ess < 12000.0, "{ess}");
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with coefficient 0.9 has ESS ≈ N (1 - 0.9) / (1 + 0.9)
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let d = Normal::new(0.0, 1.0).unwrap();
        let mut chains = Vec::new();
        for _ in 0..4 {
            let mut x = 0.0;
            chains.push(
                (0..20_000)
                    .map(|_| {
                        x = 0.9 * x + d.sample(&mut rng);
                        x
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        let ess = effective_sample_size(&chains).unwrap();
        let theory = 80_000.0 * 0.1 / 1.9;
        assert!((ess / theory - 1.0).abs() < 0.2, "{ess} vs {theory}");
    }

    #[test]
    fn constant_chains() {
        let c = vec![vec![2.0; 100], vec![2.0; 100]];
        assert_eq!(split_rhat(&c), Some(1.0));
        assert_eq!(effective_sample_size(&c), Some(200.0));
        assert_eq!(split_rhat(&[vec![1.0, 2.0, 3.0]]), None);
    }
}
