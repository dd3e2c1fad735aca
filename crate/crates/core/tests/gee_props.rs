mod common;

use common::{draw, LinearLogitModel};
use latent_mbl::gee::{estimating_function, naive_variance, robust_variance, CorrStructure, WorkingCorrelation};
use latent_mbl::{fit, FitConfig, MblDataset, Subject};

fn tight() -> FitConfig {
    FitConfig::default().with_tol(1e-10).with_max_iter(500)
}

#[test]
fn sandwich_is_symmetric_and_positive_semidefinite() {
    let model = LinearLogitModel { k: 2 };
    let theta = [0.2, -0.5, 0.1, -0.3, 0.8, -0.05];
    let ds = draw(&model, &theta, 300, 21);
    for corr in [CorrStructure::Independence, CorrStructure::Exchangeable, CorrStructure::Unstructured] {
        let f = fit(&ds, &model, &[0.0; 6], &tight().with_corr(corr)).unwrap();
        let v = &f.robust_cov;
        assert!((v - v.transpose()).amax() <= 1e-12 * v.amax());
        let eig = v.clone().symmetric_eigen().eigenvalues;
        assert!(eig.min() >= -1e-12 * eig.max(), "{corr:?}: {eig}");
    }
}

#[test]
fn subject_order_does_not_matter() {
    let model = LinearLogitModel { k: 2 };
    let theta = [0.1, 0.4, -0.2, -0.6, 1.0, 0.05];
    let ds = draw(&model, &theta, 150, 22);
    let reversed = MblDataset::new(2, ds.subjects.iter().rev().cloned().collect()).unwrap();
    let config = tight().with_corr(CorrStructure::Exchangeable);
    let a = fit(&ds, &model, &[0.0; 6], &config).unwrap();
    let b = fit(&reversed, &model, &[0.0; 6], &config).unwrap();
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((x - y).abs() <= 1e-10);
    }
    assert!((&a.robust_cov - &b.robust_cov).amax() <= 1e-10);
}

#[test]
fn converged_fit_zeroes_the_estimating_function() {
    let model = LinearLogitModel { k: 3 };
    let theta = [0.3, -0.4, 0.1, -0.2, 0.9, -0.1, 0.5, 0.0, -0.2];
    let ds = draw(&model, &theta, 200, 23);
    let f = fit(&ds, &model, &[0.0; 9], &tight()).unwrap();
    assert!(f.converged);
    let u = estimating_function(&ds, &model, &f.coefficients, &WorkingCorrelation::Independence);
    assert!(u.norm() <= 1e-4 * ds.n_obs() as f64, "|U| = {}", u.norm());
}

#[test]
fn sandwich_agrees_with_model_variance_when_the_model_holds() {
    let model = LinearLogitModel { k: 1 };
    let theta = [-0.3, 0.9, 0.15];
    let ds = draw(&model, &theta, 3000, 24);
    let f = fit(&ds, &model, &[0.0; 3], &tight()).unwrap();
    let corr = WorkingCorrelation::Independence;
    let robust = robust_variance(&ds, &model, &f.coefficients, &corr).unwrap();
    let naive = naive_variance(&ds, &model, &f.coefficients, &corr).unwrap();
    for i in 0..3 {
        let ratio = robust[(i, i)] / naive[(i, i)];
        assert!((ratio - 1.0).abs() <= 0.1, "coefficient {i}: ratio {ratio}");
    }
}

#[test]
fn exchangeable_alpha_is_near_zero_for_independent_responses() {
    let model = LinearLogitModel { k: 3 };
    let theta = [0.0, 0.5, 0.0, 0.2, -0.5, 0.0, -0.2, 0.0, 0.1];
    let ds = draw(&model, &theta, 800, 25);
    let f = fit(&ds, &model, &[0.0; 9], &tight().with_corr(CorrStructure::Exchangeable)).unwrap();
    assert!(f.alpha().unwrap().abs() < 0.03, "alpha {}", f.alpha().unwrap());
}

#[test]
fn coupled_responses_yield_positive_alpha() {
    // a shared subject-level switch makes responses agree more than chance
    let subjects: Vec<Subject> = (0..600)
        .map(|i| {
            let times = vec![0.25, 0.5, 0.75];
            let outcomes = (0..3)
                .map(|j| {
                    let on = (i * 7 + j * 3) % 5 < 2;
                    let flip = (i + j) % 9 == 0;
                    vec![u8::from(on), u8::from(on ^ flip), u8::from(on)]
                })
                .collect();
            Subject { duration: 1.0, times, outcomes }
        })
        .collect();
    let ds = MblDataset::new(3, subjects).unwrap();
    let model = LinearLogitModel { k: 3 };
    let f = fit(&ds, &model, &[0.0; 9], &tight().with_corr(CorrStructure::Exchangeable)).unwrap();
    assert!(f.alpha().unwrap() > 0.5);
}

#[test]
fn larger_samples_shrink_standard_errors() {
    let model = LinearLogitModel { k: 1 };
    let theta = [0.2, -0.7, 0.1];
    let small = fit(&draw(&model, &theta, 250, 26), &model, &[0.0; 3], &tight()).unwrap();
    let large = fit(&draw(&model, &theta, 2500, 26), &model, &[0.0; 3], &tight()).unwrap();
    for (s, l) in small.std_errors().iter().zip(large.std_errors()) {
        let ratio = s / l;
        assert!((2.2..4.5).contains(&ratio), "ratio {ratio}");
    }
}
