//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use spde_fk::experiments::fixtures::run_fixtures;
use spde_fk::experiments::{
    run_exit_probability, run_flow_stability, run_inversion_convergence, run_localization, run_validation,
    ExitOptions, InversionOptions, LocalizationOptions, StabilityOptions, ValidationOptions,
};
use spde_fk::noise::{NoisePlan, StreamId};
use spde_fk::representation::{estimate_v, EstimatorOptions, Query};
use spde_fk::scenario::TimeGrid;

use common::{mean_var, scenario};

struct Outcome {
    passed: bool,
    detail: String,
}

/// Inversion statistics gathered by criteria 1 and 2 for criterion 3.
#[derive(Default)]
struct Inversions {
    max_residual: f64,
    worst_failure_rate: f64,
}

impl Inversions {
    fn record(&mut self, residual: f64, failures: usize, samples: usize) {
        self.max_residual = self.max_residual.max(residual);
        self.worst_failure_rate = self.worst_failure_rate.max(failures as f64 / samples as f64);
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn heat_check(inv: &mut Inversions) -> Outcome {
    let cfg = scenario("heat");
    let grid = cfg.grid();
    let start = Instant::now();
    let est = single_threaded(|| {
        let w = NoisePlan::new(cfg.seed).sample_w(&grid, cfg.modes, StreamId::W(0));
        let field = cfg.coefficient_set().unwrap().realize(&w);
        let opts = EstimatorOptions {
            samples: 20_000,
            tolerance: cfg.inversion_tolerance,
            exit: cfg.exit_detection,
            master_seed: cfg.seed,
            ..EstimatorOptions::default()
        };
        let query = Query { node: grid.n_steps(), x: vec![0.5] };
        estimate_v(&cfg.domain, &field, &w, &[query], &opts).unwrap().remove(0)
    });
    let elapsed = start.elapsed();
    inv.record(est.max_residual, est.failures, est.samples);
    let exact = (-PI * PI * 0.25).exp();
    let err = (est.mean - exact).abs();
    let bound = (3.0 * est.stderr).max(0.01);
    let fast = elapsed <= Duration::from_secs(120);
    Outcome {
        passed: err <= bound && fast && grid.dt() == 2f64.powi(-10) && grid.t_final() == 0.5,
        detail: format!(
            "v={:.5} exact={exact:.5} |err|={err:.2e} bound={bound:.2e} stderr={:.2e} time={:.1}s",
            est.mean,
            est.stderr,
            elapsed.as_secs_f64()
        ),
    }
}

fn spde_agreement(inv: &mut Inversions) -> Outcome {
    let cfg = scenario("spde");
    let start = Instant::now();
    let opts = ValidationOptions {
        paths: 3,
        samples: 50_000,
        lattice: 33,
        node: None,
    };
    let report = run_validation(&cfg, &opts).unwrap();
    let elapsed = start.elapsed();
    for p in &report.paths {
        inv.record(p.max_residual, p.failures, opts.samples);
    }
    let rel: Vec<String> = report.paths.iter().map(|p| format!("{:.3}%", 100.0 * p.l2.relative)).collect();
    let grid = cfg.grid();
    Outcome {
        passed: report.paths.len() == 3
            && report.paths.iter().all(|p| p.l2.relative <= 0.05)
            && elapsed <= Duration::from_secs(20 * 60)
            && grid.dt() == 2f64.powi(-11)
            && report.t == 0.25,
        detail: format!("relative L2 per seed [{}] time={:.0}s", rel.join(", "), elapsed.as_secs_f64()),
    }
}

fn inversion_residuals(inv: &Inversions) -> Outcome {
    Outcome {
        passed: inv.max_residual <= 1e-8 && inv.worst_failure_rate < 0.01,
        detail: format!(
            "max residual={:.2e} worst failure rate={:.2e}",
            inv.max_residual, inv.worst_failure_rate
        ),
    }
}

fn exact_identities() -> Outcome {
    let mut passed = true;
    let mut worst = Vec::new();
    for name in ["heat", "spde", "zero"] {
        for r in run_fixtures(&scenario(name), 8).unwrap() {
            passed &= r.passed() && r.tolerance <= 1e-12;
            worst.push(format!("{name}/{}={:.1e}", r.name, r.max_deviation));
        }
    }
    Outcome {
        passed,
        detail: worst.join(" "),
    }
}

fn inversion_convergence() -> Outcome {
    let cfg = scenario("spde");
    let t = cfg.grid().t_final();
    let opts = InversionOptions::default();
    let report = run_inversion_convergence(&cfg, &opts).unwrap();
    let dts_ok = report.dts.iter().zip([-10, -11, -12]).all(|(dt, e)| *dt == 2f64.powi(e));
    Outcome {
        passed: dts_ok && report.passed(1.5, 0.01),
        detail: format!(
            "scheme={:?} T={t} gaps={:?} ratios={:?}",
            report.scheme,
            report.gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>(),
            report.ratios().iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    }
}

fn flow_stability() -> Outcome {
    let cfg = scenario("spde");
    let opts = StabilityOptions::default();
    let report = run_flow_stability(&cfg, &opts).unwrap();
    Outcome {
        passed: report.passed() && report.distances.len() == 20 && report.ns == [2, 4, 8],
        detail: format!(
            "seeds={} mean sup distance={:?}",
            report.distances.len(),
            report.mean().iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>()
        ),
    }
}

fn localization() -> Outcome {
    let cfg = scenario("localize");
    let start = Instant::now();
    let report = run_localization(&cfg, &LocalizationOptions::default()).unwrap();
    let elapsed = start.elapsed();
    Outcome {
        passed: report.passed()
            && report.paths.len() == 8
            && report.radii == [1.5, 2.0, 2.5, 3.0]
            && elapsed <= Duration::from_secs(30 * 60),
        detail: format!(
            "e(R)={:?} slope={:.3} time={:.1}s",
            report.mean.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            report.fit.map_or(f64::NAN, |f| f.slope),
            elapsed.as_secs_f64()
        ),
    }
}

fn exit_probability() -> Outcome {
    let cfg = scenario("exitprob");
    let report = run_exit_probability(&cfg, &ExitOptions::default()).unwrap();
    Outcome {
        passed: report.passed() && report.samples == 10_000,
        detail: format!(
            "P(H_R)={:?} rule of three={:.1e}",
            report.probability.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>(),
            report.rule_of_three
        ),
    }
}

fn noise_and_determinism() -> Outcome {
    let mut notes = Vec::new();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let plan = NoisePlan::new(31);
    let n = 20_000u64;
    let ws: Vec<_> = (0..n).map(|p| plan.sample_w(&grid, 2, StreamId::W(p))).collect();
    let aux: Vec<_> = (0..n).map(|p| plan.sample_aux(&grid, 1, NoisePlan::aux_id(p, 0))).collect();
    let nf = n as f64;
    let mut variance_ok = true;
    for step in 0..grid.n_steps() {
        for k in 0..2 {
            let col: Vec<f64> = ws.iter().map(|w| w.dw(step)[k]).collect();
            let (_, var) = mean_var(&col);
            let se = grid.dt() * (2.0 / (nf - 1.0)).sqrt();
            variance_ok &= (var - grid.dt()).abs() <= 4.0 * se;
        }
    }
    notes.push(format!("increment variance {}", if variance_ok { "ok" } else { "off" }));
    let corr = |a: &[f64], b: &[f64]| {
        let (ma, va) = mean_var(a);
        let (mb, vb) = mean_var(b);
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (nf * (va * vb).sqrt())
    };
    let w0: Vec<f64> = ws.iter().map(|w| w.dw(0)[0]).collect();
    let w1: Vec<f64> = ws.iter().map(|w| w.dw(0)[1]).collect();
    let a0: Vec<f64> = aux.iter().map(|a| a.dw_hat(0)[0]).collect();
    let next: Vec<f64> = ws.iter().map(|w| w.dw(1)[0]).collect();
    let band = 4.0 / nf.sqrt();
    let corrs = [corr(&w0, &w1), corr(&w0, &a0), corr(&w0, &next)];
    let independent = corrs.iter().all(|c| c.abs() <= band);
    notes.push(format!("max |corr|={:.1e} band={band:.1e}", corrs.iter().fold(0.0f64, |m, c| m.max(c.abs()))));

    let cfg = scenario("spde");
    let small = ValidationOptions {
        paths: 2,
        samples: 200,
        lattice: 9,
        node: None,
    };
    let first = single_threaded(|| run_validation(&cfg, &small).unwrap());
    let second = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| run_validation(&cfg, &small).unwrap());
    let exit_cfg = scenario("exitprob");
    let exit_opts = ExitOptions {
        samples: 500,
        ..ExitOptions::default()
    };
    let e1 = run_exit_probability(&exit_cfg, &exit_opts).unwrap();
    let e2 = run_exit_probability(&exit_cfg, &exit_opts).unwrap();
    let fixtures_a = run_fixtures(&cfg, 3).unwrap();
    let fixtures_b = run_fixtures(&cfg, 3).unwrap();
    let reruns = first == second && e1 == e2 && fixtures_a == fixtures_b;
    notes.push(format!("bit-identical reruns {}", if reruns { "ok" } else { "differ" }));
    Outcome {
        passed: variance_ok && independent && reruns,
        detail: notes.join(", "),
    }
}

fn main() {
    let mut inv = Inversions::default();
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut Inversions) -> Outcome>)> = vec![
        ("1 heat check", Box::new(heat_check)),
        ("2 pathwise agreement", Box::new(spde_agreement)),
        ("3 inversion residuals", Box::new(|i: &mut Inversions| inversion_residuals(i))),
        ("4 exact identities", Box::new(|_: &mut Inversions| exact_identities())),
        ("5 inversion convergence", Box::new(|_: &mut Inversions| inversion_convergence())),
        ("6 flow stability", Box::new(|_: &mut Inversions| flow_stability())),
        ("7 localization decay", Box::new(|_: &mut Inversions| localization())),
        ("8 exit probability decay", Box::new(|_: &mut Inversions| exit_probability())),
        ("9 noise and determinism", Box::new(|_: &mut Inversions| noise_and_determinism())),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let out = run(&mut inv);
        failed += usize::from(!out.passed);
        println!("criterion {name}: {} ({})", if out.passed { "PASS" } else { "FAIL" }, out.detail);
    }
    println!("acceptance: {} criteria failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
