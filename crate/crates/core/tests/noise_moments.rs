use parlang::noise::{sample_brownian_grid, sample_ulmc_noise_grid, ulmc_noise_covariance, NoiseCovariance};
use proptest::prelude::*;

#[test]
fn brownian_grid_moments() {
    let (m, h, d, reps) = (8, 1.0, 2, 40_000);
    let mut sum = vec![0.0; m + 1];
    let mut sq = vec![0.0; m + 1];
    for seed in 0..reps {
        let g = sample_brownian_grid(m, h, d, seed).unwrap();
        for k in 0..=m {
            for v in g.value(k) {
                sum[k] += v;
                sq[k] += v * v;
            }
        }
    }
    let n = (reps * d as u64) as f64;
    for k in 1..=m {
        let var = k as f64 * h / m as f64;
        let mean = sum[k] / n;
        assert!(mean.abs() <= 3.0 * (var / n).sqrt(), "E[W_{k}] = {mean}");
        let v = sq[k] / n;
        // Var of the sample second moment is 2σ⁴/n
        assert!((v - var).abs() <= 3.0 * var * (2.0 / n).sqrt(), "Var W_{k} = {v}, want {var}");
    }
}

#[test]
fn ulmc_pairs_have_the_stated_covariance() {
    let (gamma, u, draws) = (2.0, 0.5, 200_000usize);
    let g = sample_ulmc_noise_grid(draws, gamma, u * draws as f64, 1, 17).unwrap();
    let mut c = [0.0; 3];
    for m in 0..draws {
        let (x, p) = (g.xi_x(m)[0], g.xi_p(m)[0]);
        c[0] += x * x;
        c[1] += x * p;
        c[2] += p * p;
    }
    let s = ulmc_noise_covariance(gamma, u).unwrap();
    for (est, want) in c.iter().map(|v| v / draws as f64).zip([s.xx, s.xp, s.pp]) {
        assert!((est - want).abs() <= 0.02 * want, "{est} vs {want}");
    }
}

proptest! {
    #[test]
    fn stable_covariance_agrees_with_naive(gamma in 0.1f64..20.0, u in 0.01f64..5.0) {
        prop_assume!(gamma * u >= 0.1);
        let s = ulmc_noise_covariance(gamma, u).unwrap();
        let n = NoiseCovariance::naive(gamma, u);
        for (a, b) in [(s.xx, n.xx), (s.xp, n.xp), (s.pp, n.pp)] {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn covariance_is_psd_down_to_tiny_steps(exp in -12.0f64..1.0, gamma in 0.5f64..10.0) {
        let a = 10f64.powf(exp);
        let s = ulmc_noise_covariance(gamma, a / gamma).unwrap();
        prop_assert!(s.xx >= 0.0 && s.pp >= 0.0);
        prop_assert!(s.determinant() >= -1e-12 * s.xx * s.pp);
        prop_assert!(s.factor().is_ok());
    }
}
