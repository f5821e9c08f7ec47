mod common;

use covmix::config::RunConfig;
use covmix::gibbs::diagnostics::RHAT_THRESHOLD;
use covmix::gibbs::{
    convergence_report, predict, run_chain, summarize, ChainConfig, PosteriorDraws,
};
use covmix::ingest::Dataset;
use covmix::model::{Hyperpriors, ModelVariant};
use covmix::pipeline::weights_for;
use covmix::selection::{dic, rank_models, residuals, score_model};
use covmix::spatial::WeightConfig;
use covmix::synthetic::{generate, DesignSdProfile, GridLayout, SyntheticSpec, TrueParameters};

use common::{flat_dataset, parallel_map};

fn chain(iterations: usize, burn_in: usize, seed: u64) -> ChainConfig {
    ChainConfig {
        iterations,
        burn_in,
        seed,
        ..ChainConfig::default()
    }
}

fn fit(data: &Dataset, variant: ModelVariant, cfg: &ChainConfig) -> PosteriorDraws {
    let weights = if variant.terms().space {
        Some(weights_for(data, &WeightConfig::default()).unwrap())
    } else {
        None
    };
    run_chain(
        data,
        weights.as_ref(),
        variant,
        &Hyperpriors::default(),
        cfg,
    )
    .unwrap()
}

fn synthetic(
    variant: ModelVariant,
    rows: usize,
    cols: usize,
    truth: TrueParameters,
    sd: DesignSdProfile,
    seed: u64,
) -> covmix::synthetic::SyntheticTruth {
    generate(&SyntheticSpec {
        layout: GridLayout::new(rows, cols, 2),
        variant,
        truth,
        design_sd: sd,
        n_times: 1,
        seed,
    })
    .unwrap()
}

#[test]
fn intercept_model_matches_conjugate_posterior() {
    let data = flat_dataset(&[1.0, 3.0], &[1.0, 1.0], &[0, 0]);
    let draws = fit(&data, ModelVariant::VII, &chain(20_500, 500, 11));
    let report = convergence_report(&draws);
    for p in &report.parameters {
        assert!(
            p.rhat.unwrap() < RHAT_THRESHOLD,
            "{} {:?}",
            p.parameter,
            p.rhat
        );
    }
    let fitted = predict(&draws, &data);
    for a in &fitted.areas {
        assert!((a.theta_hat - 2.0).abs() < 0.03);
        assert!((a.posterior_sd / 0.5f64.sqrt() - 1.0).abs() < 0.03);
        assert!((a.ci_low - (2.0 - 1.959964 * 0.5f64.sqrt())).abs() < 0.05);
    }
    let d = dic(&draws, &data).unwrap();
    assert!((d.p_d - 1.0).abs() < 0.05, "{}", d.p_d);
}

#[test]
fn large_area_model_matches_group_means() {
    let data = flat_dataset(&[1.0, 3.0, 5.0], &[1.0, 1.0, 1.0], &[0, 0, 1]);
    let draws = fit(&data, ModelVariant::VI, &chain(20_500, 500, 12));
    let fitted = predict(&draws, &data);
    let expect = [(2.0, 0.5f64.sqrt()), (2.0, 0.5f64.sqrt()), (5.0, 1.0)];
    for (a, (m, sd)) in fitted.areas.iter().zip(expect) {
        assert!(
            (a.theta_hat - m).abs() < 0.04,
            "{} {}",
            a.area_id,
            a.theta_hat
        );
        assert!(
            (a.posterior_sd / sd - 1.0).abs() < 0.04,
            "{} {}",
            a.area_id,
            a.posterior_sd
        );
    }
    let d = dic(&draws, &data).unwrap();
    assert!((d.p_d - 2.0).abs() < 0.08, "{}", d.p_d);
}

#[test]
fn variance_draws_stay_positive_and_rho_in_range() {
    let t = generate(&SyntheticSpec {
        layout: GridLayout::new(5, 6, 2),
        variant: ModelVariant::I,
        truth: TrueParameters::default(),
        design_sd: DesignSdProfile::Constant(0.5),
        n_times: 3,
        seed: 21,
    })
    .unwrap();
    let draws = fit(&t.dataset, ModelVariant::I, &chain(1200, 200, 21));
    for c in &draws.chains {
        for s in &c.states {
            for v in [s.tau2, s.sigma2_gamma, s.sigma2_u, s.sigma2_delta] {
                assert!(v > 0.0 && v.is_finite());
            }
            assert!(s.rho.abs() < 1.0);
            assert!(s.gamma.iter().sum::<f64>().abs() < 1e-9);
            assert!(s.lambda.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}

#[test]
fn theta_intervals_are_calibrated() {
    let truth = TrueParameters {
        tau2: 1.0,
        ..TrueParameters::default()
    };
    let sd = DesignSdProfile::Uniform {
        low: 0.5,
        high: 1.5,
    };
    let hits = parallel_map(200, |r| {
        let t = synthetic(ModelVariant::V, 6, 8, truth.clone(), sd, 9000 + r as u64);
        let draws = fit(&t.dataset, ModelVariant::V, &chain(1500, 500, r as u64));
        let fitted = predict(&draws, &t.dataset);
        let target = t.target_theta();
        fitted
            .areas
            .iter()
            .zip(&target)
            .filter(|(a, x)| a.ci_low <= **x && **x <= a.ci_high)
            .count()
    });
    let coverage = hits.iter().sum::<usize>() as f64 / (200.0 * 48.0);
    assert!((0.90..=0.99).contains(&coverage), "{coverage}");
}

#[test]
fn residuals_are_standardized_under_correct_model() {
    let sds = parallel_map(20, |r| {
        let t = synthetic(
            ModelVariant::V,
            8,
            8,
            TrueParameters::default(),
            DesignSdProfile::Constant(1.0),
            300 + r as u64,
        );
        let draws = fit(&t.dataset, ModelVariant::V, &chain(2000, 500, r as u64));
        residuals(&predict(&draws, &t.dataset)).sd
    });
    let mean = sds.iter().sum::<f64>() / sds.len() as f64;
    assert!((0.7..=1.3).contains(&mean), "{mean}");
}

#[test]
fn selection_prefers_generating_model() {
    let truth = TrueParameters {
        lambda: vec![-1.0, 1.0],
        beta: vec![1.0],
        ..TrueParameters::default()
    };
    let t = synthetic(
        ModelVariant::V,
        8,
        10,
        truth,
        DesignSdProfile::Constant(0.5),
        77,
    );
    let max_range = RunConfig::default().cpo_max_log_range;
    let scores: Vec<_> = [ModelVariant::V, ModelVariant::VI, ModelVariant::VII]
        .into_iter()
        .map(|v| {
            let draws = fit(&t.dataset, v, &chain(3000, 1000, 5));
            score_model(&draws, &t.dataset, max_range).unwrap()
        })
        .collect();
    let ranking = rank_models(&scores).unwrap();
    assert_eq!(ranking.dic_best, ModelVariant::V);
    assert_eq!(ranking.lpml_best, ModelVariant::V);
    assert!(scores[0].dic.dic < scores[2].dic.dic);

    // LPML never exceeds the fit of a model that interpolates the data
    for s in &scores {
        let bound: f64 = t
            .dataset
            .observations
            .iter()
            .map(|o| -0.5 * (2.0 * std::f64::consts::PI * o.variance).ln())
            .sum();
        assert!(s.lpml <= bound);
        assert!(s.dic.p_d > 0.0);
    }
}

#[test]
fn chains_are_reproducible_and_seed_dependent() {
    let t = synthetic(
        ModelVariant::II,
        4,
        4,
        TrueParameters::default(),
        DesignSdProfile::Constant(0.5),
        3,
    );
    let run = |seed| {
        let h = Hyperpriors::default();
        run_chain(
            &t.dataset,
            t.weights.as_ref(),
            ModelVariant::II,
            &h,
            &chain(300, 100, seed),
        )
        .unwrap()
    };
    let (a, b, c) = (run(9), run(9), run(10));
    assert_eq!(a, b);
    assert_ne!(a.chains[0].theta, c.chains[0].theta);
    assert_ne!(a.chains[0].theta, a.chains[1].theta);
    let s = summarize(
        &a.chains[0]
            .loglik
            .iter()
            .map(|l| l.iter().sum())
            .collect::<Vec<f64>>(),
    );
    assert!(s.mean.is_finite());
}
