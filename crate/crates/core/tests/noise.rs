mod common;

use proptest::prelude::*;
use spde_fk::noise::{NoisePlan, StreamId, WienerPath};
use spde_fk::scenario::TimeGrid;
use spde_fk::stats::{ks_critical_1pct, ks_statistic};
use statrs::distribution::{ContinuousCDF, Normal};

use common::mean_var;

#[test]
fn final_variance_matches_t_within_four_stderr() {
    let grid = TimeGrid::new(0.5, 16).unwrap();
    let plan = NoisePlan::new(2024);
    let paths = 100_000u64;
    let finals: Vec<f64> = (0..paths)
        .map(|p| {
            let w = plan.sample_w(&grid, 2, StreamId::W(p));
            *w.cumulative_w(1).last().unwrap()
        })
        .collect();
    let (mean, var) = mean_var(&finals);
    let n = finals.len() as f64;
    let fourth = finals.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var_se = ((fourth - var * var) / n).sqrt();
    let mean_se = (var / n).sqrt();
    assert!((var - 0.5).abs() <= 4.0 * var_se, "var {var} se {var_se}");
    assert!(mean.abs() <= 4.0 * mean_se, "mean {mean} se {mean_se}");
}

#[test]
fn increment_columns_have_variance_dt() {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let plan = NoisePlan::new(9);
    let samples: Vec<WienerPath> = (0..20_000u64).map(|p| plan.sample_w(&grid, 1, StreamId::W(p))).collect();
    for step in 0..grid.n_steps() {
        let col: Vec<f64> = samples.iter().map(|w| w.dw(step)[0]).collect();
        let (mean, var) = mean_var(&col);
        let n = col.len() as f64;
        // Gaussian: Var(s^2) = 2 sigma^4 / (n - 1)
        let var_se = (2.0 * grid.dt().powi(2) / (n - 1.0)).sqrt();
        assert!((var - grid.dt()).abs() <= 4.0 * var_se, "step {step}: {var}");
        assert!(mean.abs() <= 4.0 * (grid.dt() / n).sqrt(), "step {step}: {mean}");
    }
}

#[test]
fn replicate_streams_are_uncorrelated() {
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let seeds = 10_000u64;
    let (a, b): (Vec<f64>, Vec<f64>) = (0..seeds)
        .map(|s| {
            let plan = NoisePlan::new(s);
            let r0 = plan.sample_aux(&grid, 1, NoisePlan::aux_id(0, 0));
            let r1 = plan.sample_aux(&grid, 1, NoisePlan::aux_id(0, 1));
            (*r0.cumulative_w_hat(0).last().unwrap(), *r1.cumulative_w_hat(0).last().unwrap())
        })
        .unzip();
    let (ma, va) = mean_var(&a);
    let (mb, vb) = mean_var(&b);
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (seeds as f64 - 1.0);
    let corr = cov / (va * vb).sqrt();
    assert!(corr.abs() <= 4.0 / (seeds as f64).sqrt(), "corr {corr}");
}

#[test]
fn w_and_aux_streams_are_uncorrelated() {
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let plan = NoisePlan::new(77);
    let n = 10_000u64;
    let (a, b): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|p| {
            let w = plan.sample_w(&grid, 1, StreamId::W(p));
            let h = plan.sample_aux(&grid, 1, NoisePlan::aux_id(p, 0));
            (w.dw(0)[0], h.dw_hat(0)[0])
        })
        .unzip();
    let (ma, va) = mean_var(&a);
    let (mb, vb) = mean_var(&b);
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n as f64 - 1.0);
    assert!((cov / (va * vb).sqrt()).abs() <= 4.0 / (n as f64).sqrt());
}

#[test]
fn single_step_draws_pass_ks_at_one_percent() {
    let grid = TimeGrid::new(0.25, 1).unwrap();
    let n = 10_000usize;
    let draws: Vec<f64> = (0..n as u64)
        .map(|s| NoisePlan::new(s).sample_aux(&grid, 1, NoisePlan::aux_id(0, 0)).dw_hat(0)[0])
        .collect();
    let normal = Normal::new(0.0, grid.dt().sqrt()).unwrap();
    let d = ks_statistic(&draws, |x| normal.cdf(x));
    assert!(d <= ks_critical_1pct(n), "KS {d}");
}

#[test]
fn identical_ids_are_bit_identical_and_distinct_ids_differ() {
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let plan = NoisePlan::new(123);
    let a = plan.sample_w(&grid, 3, StreamId::W(4));
    let b = plan.sample_w(&grid, 3, StreamId::W(4));
    assert_eq!(a, b);
    assert_eq!(a.checksum(), b.checksum());
    assert_ne!(a, plan.sample_w(&grid, 3, StreamId::W(5)));
    assert_ne!(a, NoisePlan::new(124).sample_w(&grid, 3, StreamId::W(4)));
    let r = plan.sample_aux(&grid, 2, NoisePlan::aux_id(4, 7));
    assert_eq!(r, plan.sample_aux(&grid, 2, NoisePlan::aux_id(4, 7)));
    assert_ne!(
        r,
        plan.sample_aux(&grid, 2, StreamId::Aux { path: 4, replicate: 7, attempt: 1 })
    );
}

#[test]
fn zero_modes_give_an_empty_w() {
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let w = NoisePlan::new(1).sample_w(&grid, 0, StreamId::W(0));
    assert_eq!(w.modes(), 0);
    assert!(w.w_increments().is_empty());
    assert!(w.dw(3).is_empty());
}

#[test]
fn coarsened_path_keeps_the_node_values() {
    let grid = TimeGrid::new(1.0, 32).unwrap();
    let plan = NoisePlan::new(3);
    let p = plan.sample_w(&grid, 2, StreamId::W(0)).with_aux(&plan.sample_aux(&grid, 1, NoisePlan::aux_id(0, 0))).unwrap();
    let c = p.coarsen().unwrap();
    assert_eq!(c.grid().n_steps(), 16);
    for k in 0..2 {
        let fine = p.cumulative_w(k);
        let coarse = c.cumulative_w(k);
        for (i, v) in coarse.iter().enumerate() {
            assert!((v - fine[2 * i]).abs() <= 1e-15);
        }
    }
    let fine = p.cumulative_w_hat(0);
    assert!((c.cumulative_w_hat(0)[16] - fine[32]).abs() <= 1e-15);
}

#[test]
fn binary_dump_round_trips() {
    let grid = TimeGrid::new(0.5, 20).unwrap();
    let plan = NoisePlan::new(8);
    let p = plan.sample_w(&grid, 2, StreamId::W(1)).with_aux(&plan.sample_aux(&grid, 2, NoisePlan::aux_id(1, 0))).unwrap();
    let mut bytes = Vec::new();
    p.dump(&mut bytes).unwrap();
    assert_eq!(bytes.len(), 24 + 8 * 20 * 4);
    assert_eq!(WienerPath::load(bytes.as_slice(), &grid).unwrap(), p);
    let other = TimeGrid::new(0.5, 21).unwrap();
    assert!(WienerPath::load(bytes.as_slice(), &other).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restrict_partitions_and_composes(seed in any::<u64>(), n in 2usize..40, m in 0usize..3, d in 1usize..3, cut in 0.0f64..1.0, cut2 in 0.0f64..1.0) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let plan = NoisePlan::new(seed);
        let p = plan.sample_w(&grid, m, StreamId::W(0)).with_aux(&plan.sample_aux(&grid, d, NoisePlan::aux_id(0, 0))).unwrap();
        prop_assert_eq!(&p.restrict(0, n).unwrap(), &p);
        let i = 1 + ((n - 1) as f64 * cut) as usize;
        let i = i.min(n - 1);
        let head = p.restrict(0, i).unwrap();
        let tail = p.restrict(i, n).unwrap();
        let joined = head.concat(&tail).unwrap();
        prop_assert_eq!(joined.w_increments(), p.w_increments());
        prop_assert_eq!(joined.w_hat_increments(), p.w_hat_increments());
        // restricting a restriction equals a single restriction
        let len = tail.grid().n_steps();
        let j = (1 + ((len - 1) as f64 * cut2) as usize).min(len);
        let twice = tail.restrict(0, j).unwrap();
        let once = p.restrict(i, i + j).unwrap();
        prop_assert_eq!(twice.w_increments(), once.w_increments());
        prop_assert_eq!(twice.w_hat_increments(), once.w_hat_increments());
        for k in 0..m {
            prop_assert_eq!(p.cumulative_w(k)[0], 0.0);
        }
    }

    #[test]
    fn restrict_rejects_bad_ranges(n in 1usize..20, i in 0usize..30, j in 0usize..30) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let p = NoisePlan::new(0).sample_w(&grid, 1, StreamId::W(0));
        prop_assert_eq!(p.restrict(i, j).is_ok(), i < j && j <= n);
    }
}
