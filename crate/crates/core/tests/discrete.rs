use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use parlang::discrete::*;
use parlang::score::Potential;
use parlang::ScheduleOverrides;
use proptest::prelude::*;

fn random_mu(n: usize, weights: &[f64]) -> HypercubeDistribution {
    HypercubeDistribution::from_log_weights(n, weights[..1 << n].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplace_means_match_enumeration(
        n in 1usize..=10,
        weights in prop::collection::vec(-4.0f64..4.0, 1024),
        z in prop::collection::vec(-6.0f64..6.0, 10),
    ) {
        let mu = random_mu(n, &weights);
        let z = &z[..n];
        let expected = mu.tilt(z).unwrap().mean();
        let got = tilted_mean_from_laplace(&make_enum_oracle(mu), z).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn convolved_score_is_the_potential_gradient(
        n in 1usize..=8,
        weights in prop::collection::vec(-2.0f64..2.0, 256),
        w in prop::collection::vec(-1.0f64..1.0, 8),
        y in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let oracle: Arc<dyn LaplaceOracle> = Arc::new(make_enum_oracle(random_mu(n, &weights)));
        let field = ConvolvedScore::new(oracle.clone(), w[..n].to_vec(), 2.0).unwrap();
        let y = &y[..n];
        let s = convolved_score(oracle, &w[..n], 2.0, y).unwrap();
        for i in 0..n {
            let h = 1e-5;
            let mut a = y.to_vec();
            let mut b = y.to_vec();
            a[i] += h;
            b[i] -= h;
            let fd = (field.potential(&a) - field.potential(&b)) / (2.0 * h);
            prop_assert!((fd - s[i]).abs() <= 1e-5, "{fd} vs {}", s[i]);
        }
    }

    #[test]
    fn coupling_budget_is_half_of_epsilon(c in 0.5f64..8.0, eps in 0.01f64..0.9, n in 1usize..30) {
        let cfg = LocalizationConfig::new(c, eps);
        prop_assert!(cfg.coupling_budget(n) <= eps / 2.0 * (1.0 + 1e-12));
    }
}

#[test]
fn convolved_potential_is_a_normalized_density() {
    // ∫ e^{−V} over ℝ¹ by trapezoid for a lopsided μ on {±1}
    let mu = HypercubeDistribution::product(&[0.8]).unwrap();
    let field = ConvolvedScore::new(Arc::new(make_enum_oracle(mu)), vec![0.3], 2.0).unwrap();
    let step = 1e-3;
    let total: f64 = (-20_000..=20_000).map(|k| (-field.potential(&[k as f64 * step])).exp() * step).sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn hessian_of_convolved_potential_is_well_conditioned() {
    let c = 2.0;
    let oracle: Arc<dyn LaplaceOracle> = Arc::new(make_enum_oracle(HypercubeDistribution::uniform(3).unwrap()));
    let field = ConvolvedScore::new(oracle, vec![0.0; 3], c).unwrap();
    let h = 1e-4;
    for k in 0..20 {
        let y: Vec<f64> = (0..3).map(|i| ((k * 3 + i) as f64 * 1.37).sin() * 3.0).collect();
        let mut hess = DMatrix::zeros(3, 3);
        for j in 0..3 {
            let mut a = y.clone();
            let mut b = y.clone();
            a[j] += h;
            b[j] -= h;
            let (mut sa, mut sb) = (vec![0.0; 3], vec![0.0; 3]);
            parlang::score::ScoreField::score(&field, &a, &mut sa);
            parlang::score::ScoreField::score(&field, &b, &mut sb);
            for i in 0..3 {
                hess[(i, j)] = (sa[i] - sb[i]) / (2.0 * h);
            }
        }
        let sym = (&hess + hess.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym).eigenvalues;
        assert!(eig.min() >= 0.5 / c - 1e-3 && eig.max() <= 1.0 / c + 1e-3, "{eig}");
    }
}

fn desk(c: f64, eps: f64) -> LocalizationConfig {
    LocalizationConfig {
        overrides: ScheduleOverrides {
            max_substeps: Some(2),
            max_depth: Some(2),
            max_outer_steps: Some(40),
            ..Default::default()
        },
        acknowledge_overrides: true,
        ..LocalizationConfig::new(c, eps)
    }
}

#[test]
fn one_dimensional_uniform_is_symmetric() {
    let runs = 10_000;
    let s = LocalizationSampler::new(
        Arc::new(make_enum_oracle(HypercubeDistribution::uniform(1).unwrap())),
        desk(2.0, 0.1),
    )
    .unwrap();
    let h = s.histogram(runs, 11).unwrap();
    let p = h[1] as f64 / runs as f64;
    assert!((p - 0.5).abs() <= 3.0 * (0.25 / runs as f64).sqrt(), "P(+1) = {p}");
}

#[test]
fn point_mass_survives_localization() {
    let runs = 2_000;
    let s = LocalizationSampler::new(
        Arc::new(make_enum_oracle(HypercubeDistribution::point_mass(&[1, 1, 1]).unwrap())),
        desk(2.0, 0.1),
    )
    .unwrap();
    let h = s.histogram(runs, 12).unwrap();
    assert!(h[atom_index(&[1, 1, 1])] as f64 >= 0.9 * runs as f64);
}

#[test]
fn ulmc_inner_sampler_also_localizes() {
    let runs = 4_000;
    let cfg = LocalizationConfig {
        sampler: InnerSampler::Ulmc(Default::default()),
        ..desk(2.0, 0.1)
    };
    let mu = HypercubeDistribution::product(&[0.9, 0.3]).unwrap();
    let s = LocalizationSampler::new(Arc::new(make_enum_oracle(mu.clone())), cfg).unwrap();
    let h = s.histogram(runs, 13).unwrap();
    let emp: Vec<f64> = h.iter().map(|&c| c as f64 / runs as f64).collect();
    let tv = parlang::diagnostics::discrete_tv(&emp, &mu.probabilities()).unwrap();
    assert!(tv <= 0.1, "tv {tv}");
}
