use parlang::diagnostics::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// TV between two 1D Gaussians by midpoint quadrature.
fn tv_quadrature(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let pdf = |x: f64, m: f64, s: f64| (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let (lo, hi) = (m1.min(m2) - 12.0 * s1.max(s2), m1.max(m2) + 12.0 * s1.max(s2));
    let n = 200_000;
    let dx = (hi - lo) / n as f64;
    0.5 * (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * dx;
            (pdf(x, m1, s1) - pdf(x, m2, s2)).abs() * dx
        })
        .sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn kl_is_nonnegative_and_vanishes_on_equal_fits(
        m in prop::collection::vec(-3.0f64..3.0, 4),
        v in prop::collection::vec(0.2f64..5.0, 4),
    ) {
        let p = GaussianFit::diagonal(&m[..2], &v[..2]).unwrap();
        let q = GaussianFit::diagonal(&m[2..], &v[2..]).unwrap();
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= -1e-12);
        prop_assert!(gaussian_kl(&p, &p).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn pinsker_dominates_exact_tv(m in -2.0f64..2.0, s1 in 0.3f64..3.0, s2 in 0.3f64..3.0) {
        let p = GaussianFit::diagonal(&[0.0], &[s1 * s1]).unwrap();
        let q = GaussianFit::diagonal(&[m], &[s2 * s2]).unwrap();
        let bound = pinsker_tv_bound(gaussian_kl(&p, &q).unwrap()).unwrap();
        prop_assert!(bound + 1e-9 >= tv_quadrature(0.0, s1, m, s2));
    }
}

#[test]
fn empirical_fit_recovers_a_known_gaussian() {
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (a, b) = (Normal::new(1.0, 2.0).unwrap(), Normal::new(-0.5, 0.5).unwrap());
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let (x, y) = (a.sample(&mut rng), b.sample(&mut rng));
            vec![x, y + 0.1 * x]
        })
        .collect();
    let fit = empirical_gaussian_fit(&samples).unwrap();
    let tol = 4.0 / (n as f64).sqrt();
    assert!((fit.mean()[0] - 1.0).abs() <= 2.0 * tol);
    assert!((fit.mean()[1] - (-0.4)).abs() <= tol);
    // [[4, .4], [.4, .29]]
    let cov = fit.covariance();
    for (got, want) in cov.iter().zip([4.0, 0.4, 0.4, 0.29]) {
        assert!((got - want).abs() <= 0.01 * want, "{got} vs {want}");
    }
}
