use parlang::diagnostics::residual_ratio_report;
use parlang::lmc::{picard_inner_lmc, LmcNoise};
use parlang::noise::{sample_brownian_grid, sample_ulmc_noise_grid};
use parlang::score::{make_gaussian_mixture_target, make_gaussian_target};
use parlang::ulmc::{picard_inner_ulmc, PhasePoint, UlmcNoise};
use parlang::*;
use proptest::prelude::*;

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn target(which: u8) -> TargetModel {
    match which % 3 {
        0 => make_gaussian_target(&[0.0, 0.0], &[1.0, 4.0]).unwrap(),
        1 => make_gaussian_target(&[1.0, -1.0, 2.0], &[0.5, 1.0, 2.0]).unwrap(),
        _ => make_gaussian_mixture_target(&[vec![-0.5, 0.2], vec![0.4, -0.3]], 0.6, 1.0).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lmc_fixed_point_matches_sequential(which in 0u8..3, seed in any::<u64>(), m in 1usize..24) {
        let t = target(which);
        let d = t.dim();
        let h = 0.1 / t.beta();
        let oracle = t.exact_oracle();
        let grid = sample_brownian_grid(m, h, d, seed).unwrap();
        let x0 = vec![0.3; d];
        let seq = run_sequential_lmc(&x0, &oracle, h / m as f64, m, LmcNoise::Grid(&grid)).unwrap();
        let par = picard_inner_lmc(&x0, &oracle, h, m, m, &grid).unwrap();
        prop_assert!(max_gap(par.endpoint(), &seq[m]) <= 1e-12);
    }

    #[test]
    fn ulmc_fixed_point_matches_sequential(which in 0u8..3, seed in any::<u64>(), m in 1usize..24) {
        let t = target(which);
        let d = t.dim();
        let gamma = (8.0 * t.beta()).sqrt();
        let h = 0.1 / t.beta().sqrt();
        let oracle = t.exact_oracle();
        let grid = sample_ulmc_noise_grid(m, gamma, h, d, seed).unwrap();
        let start = PhasePoint::new(vec![0.3; d], vec![-0.2; d]).unwrap();
        let seq = run_sequential_ulmc(&start, &oracle, gamma, h / m as f64, m, UlmcNoise::Grid(&grid)).unwrap();
        let par = picard_inner_ulmc(&start, &oracle, h, m, m, gamma, &grid).unwrap();
        prop_assert!(max_gap(&par.endpoint().x, &seq[m].x) <= 1e-12);
        prop_assert!(max_gap(&par.endpoint().p, &seq[m].p) <= 1e-12);
    }
}

#[test]
fn truncated_picard_gap_shrinks_geometrically() {
    let t = target(0);
    let oracle = t.exact_oracle();
    let (h, m) = (0.025, 16);
    for seed in 0..8 {
        let grid = sample_brownian_grid(m, h, 2, seed).unwrap();
        let x0 = [2.0, -1.5];
        let seq = run_sequential_lmc(&x0, &oracle, h / m as f64, m, LmcNoise::Grid(&grid)).unwrap();
        let gaps: Vec<f64> = (1..=6)
            .map(|k| max_gap(picard_inner_lmc(&x0, &oracle, h, m, k, &grid).unwrap().endpoint(), &seq[m]))
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] <= 0.1 * w[0] || w[1] < 1e-15, "{gaps:?}");
        }
    }
}

#[test]
fn residuals_decay_by_a_factor_ten() {
    for which in 0..3 {
        let t = target(which);
        let d = t.dim();
        let oracle = t.exact_oracle();
        let h = 0.1 / t.beta();
        for seed in 0..32 {
            let grid = sample_brownian_grid(16, h, d, seed).unwrap();
            let run = picard_inner_lmc(&vec![1.0; d], &oracle, h, 16, 17, &grid).unwrap();
            let report = residual_ratio_report(&run.residuals);
            if let Some(r) = report.max_ratio {
                assert!(r <= 0.1, "target {which} seed {seed}: {r}");
            }
        }
    }
}

#[test]
fn ulmc_residuals_do_not_increase_after_the_second_iteration() {
    let t = target(0);
    let s = plan_ulmc_params(t.alpha(), t.beta(), 2, 0.3, UlmcConstants::default()).unwrap();
    let oracle = t.exact_oracle();
    for seed in 0..32 {
        let grid = sample_ulmc_noise_grid(s.substeps, s.gamma, s.h, 2, seed).unwrap();
        let start = PhasePoint::new(vec![1.0, -1.0], vec![0.5, 0.5]).unwrap();
        let run = picard_inner_ulmc(&start, &oracle, s.h, s.substeps, s.depth, s.gamma, &grid).unwrap();
        for w in run.residuals[1..].windows(2) {
            assert!(w[1] <= w[0] || w[1] < 1e-24, "seed {seed}: {:?}", run.residuals);
        }
    }
}

#[test]
fn long_ulmc_momenta_are_standard_normal() {
    let t = make_gaussian_target(&[0.0], &[1.0]).unwrap();
    let oracle = t.exact_oracle();
    let start = PhasePoint::new(vec![0.0], vec![0.0]).unwrap();
    let traj = run_sequential_ulmc(&start, &oracle, 2.0, 0.01, 400_000, UlmcNoise::Fresh { seed: 3 }).unwrap();
    let tail = &traj[20_000..];
    let var = tail.iter().map(|z| z.p[0] * z.p[0]).sum::<f64>() / tail.len() as f64;
    assert!((var - 1.0).abs() < 0.05, "momentum variance {var}");
}

fn planned_run(threads: usize, replicas: usize) -> ParallelRun {
    let t = target(0);
    let s = plan_lmc_params(1.0, 4.0, 2, 0.3, InitialKl::Default)
        .unwrap()
        .with_overrides(&ScheduleOverrides { max_substeps: Some(16), max_outer_steps: Some(5), ..Default::default() })
        .unwrap()
        .acknowledge();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_parallel_lmc(&t, &t.exact_oracle(), &s, &Initialization::TargetDefault, replicas, 99))
        .unwrap()
}

#[test]
fn parallel_runs_are_bit_identical_across_pool_sizes() {
    let a = planned_run(1, 600);
    let b = planned_run(4, 600);
    assert_eq!(a, b);
}

#[test]
fn rounds_do_not_depend_on_replica_count() {
    let one = planned_run(1, 1);
    let many = planned_run(1, 300);
    assert_eq!(one.ledger, many.ledger);
    assert_eq!(one.ledger.rounds, 5 * 20);
    assert_eq!(one.ledger.evaluations, 5 * 20 * 16);
    assert_eq!(one.samples[0], many.samples[0]);
}
