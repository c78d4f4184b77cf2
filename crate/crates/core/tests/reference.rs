mod common;

use std::f64::consts::PI;

use spde_fk::coefficients::{CoefficientField, DataSpec};
use spde_fk::noise::{NoisePlan, StreamId, WienerPath};
use spde_fk::reference::{
    compare, fd_solve, fd_solve_whole_space, whole_space_half_width, Boundary, FdOptions, GridSolution, Norm, SpaceGrid,
};
use spde_fk::representation::{Query, RepresentationEstimate};
use spde_fk::scenario::ScenarioConfig;

use common::{interval, parse, scenario};

fn w_path(cfg: &ScenarioConfig, path: u64) -> WienerPath {
    NoisePlan::new(cfg.seed).sample_w(&cfg.grid(), cfg.modes, StreamId::W(path))
}

fn solve(cfg: &ScenarioConfig, w: &WienerPath, cells: usize, opts: &FdOptions) -> GridSolution {
    let field = cfg.coefficient_set().unwrap().realize(w);
    let grid = SpaceGrid::new(cfg.domain.clone(), cells).unwrap();
    fd_solve(&field, w, &grid, Boundary::DirichletZero, opts).unwrap()
}

fn final_values(u: &GridSolution) -> &[f64] {
    u.at(u.time.n_steps())
}

#[test]
fn heat_matches_separation_of_variables_within_one_percent() {
    let mut cfg = scenario("heat");
    // dt = 2^-12, dx = 1/256
    cfg.time.n_steps = 2048;
    let w = w_path(&cfg, 0);
    let u = solve(&cfg, &w, 256, &FdOptions::default());
    let decay = (-PI * PI * 0.5 / 2.0).exp();
    let mut worst = 0.0f64;
    for (p, v) in final_values(&u).iter().enumerate() {
        let x = u.space.point(p)[0];
        worst = worst.max((v - decay * (PI * x).sin()).abs());
    }
    assert!(worst <= 0.01 * decay, "{worst} vs {decay}");
}

#[test]
fn eigenfunction_series_for_a_bump() {
    let lambda: f64 = 0.64;
    let cfg = interval(
        "series",
        0,
        0.1,
        1024,
        &format!("family = \"constant\"\nrho = {}", lambda.sqrt()),
        "[data.psi]\nkind = \"bump\"\namplitude = 1.0\nwidth = 0.4",
    );
    let w = w_path(&cfg, 0);
    let u = solve(&cfg, &w, 256, &FdOptions::default());
    let field = cfg.coefficient_set().unwrap().realize_static().unwrap();
    // sine coefficients by the trapezoid rule
    let q = 4000;
    let coeffs: Vec<f64> = (1..=60)
        .map(|k| {
            let s: f64 = (1..q)
                .map(|j| {
                    let x = j as f64 / q as f64;
                    field.psi(&[x]) * (k as f64 * PI * x).sin()
                })
                .sum();
            2.0 * s / q as f64
        })
        .collect();
    let exact = |x: f64| -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let k = (i + 1) as f64;
                b * (-lambda * k * k * PI * PI * 0.1 / 2.0).exp() * (k * PI * x).sin()
            })
            .sum()
    };
    let values = final_values(&u);
    let sup = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (p, v) in values.iter().enumerate() {
        let x = u.space.point(p)[0];
        assert!((v - exact(x)).abs() <= 0.01 * sup, "x {x}: {v} vs {}", exact(x));
    }
}

#[test]
fn potential_only_is_an_ode_per_node() {
    let c0 = 0.7;
    let cfg = interval(
        "ode",
        0,
        0.5,
        256,
        &format!("family = \"constant\"\nc = {c0}"),
        "[data.psi]\nkind = \"sine\"\namplitude = 1.0",
    );
    let w = w_path(&cfg, 0);
    let opts = FdOptions { enforce_guard: false, ..FdOptions::default() };
    let u = solve(&cfg, &w, 64, &opts);
    let dt = cfg.grid().dt();
    let growth = (c0 * 0.5f64).exp();
    for (p, v) in final_values(&u).iter().enumerate() {
        if u.space.is_pinned(p) {
            continue;
        }
        let psi = u.value(0, p);
        assert!((v - growth * psi).abs() <= c0 * c0 * 0.5 * dt * growth * psi.abs() + 1e-14);
    }
}

#[test]
fn zero_data_gives_zero_solution() {
    let cfg = scenario("zero");
    for path in 0..3 {
        let u = solve(&cfg, &w_path(&cfg, path), cfg.space_cells, &FdOptions::default());
        assert_eq!(u.sup_norm(), 0.0);
    }
}

#[test]
fn boundary_rows_are_pinned_and_initial_values_sampled() {
    let cfg = scenario("spde");
    let w = w_path(&cfg, 0);
    let u = solve(&cfg, &w, 64, &FdOptions::default());
    let field = cfg.coefficient_set().unwrap().realize(&w);
    for p in 0..u.space.len() {
        assert_eq!(u.value(0, p), field.psi(&u.space.point(p)));
        if u.space.is_pinned(p) {
            for i in 1..=u.time.n_steps() {
                assert_eq!(u.value(i, p), 0.0);
            }
        }
    }
    assert_eq!(u.space.len(), 65);
    assert!(u.space.is_pinned(0) && u.space.is_pinned(64));
}

#[test]
fn stability_guard_refuses_large_steps() {
    let mut cfg = scenario("spde");
    cfg.time.n_steps = 8;
    let w = w_path(&cfg, 0);
    let field = cfg.coefficient_set().unwrap().realize(&w);
    let grid = SpaceGrid::new(cfg.domain.clone(), 256).unwrap();
    let err = fd_solve(&field, &w, &grid, Boundary::DirichletZero, &FdOptions::default()).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}

#[test]
fn solutions_are_linear_in_the_data() {
    let cfg = scenario("spde");
    let w = w_path(&cfg, 3);
    let set = cfg.coefficient_set().unwrap();
    let grid = SpaceGrid::new(cfg.domain.clone(), 128).unwrap();
    let run = |data: DataSpec| {
        fd_solve(&set.with_data(data).realize(&w), &w, &grid, Boundary::DirichletZero, &FdOptions::default()).unwrap()
    };
    let all = run(cfg.data.clone());
    let parts = [
        run(DataSpec { psi: cfg.data.psi.clone(), ..DataSpec::default() }),
        run(DataSpec { f: cfg.data.f.clone(), ..DataSpec::default() }),
        run(DataSpec { g: cfg.data.g.clone(), ..DataSpec::default() }),
    ];
    let scale = all.sup_norm();
    for i in 0..=all.time.n_steps() {
        for p in 0..all.space.len() {
            let sum: f64 = parts.iter().map(|s| s.value(i, p)).sum();
            assert!((all.value(i, p) - sum).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn grid_self_convergence() {
    let cfg = scenario("spde");
    // coarse to fine: (cells, steps) doubled together
    let levels = [(32usize, 64usize), (64, 128), (128, 256)];
    let fine_w = {
        let mut c = cfg.clone();
        c.time.n_steps = 256;
        w_path(&c, 0)
    };
    let mut paths = vec![fine_w];
    for _ in 1..levels.len() {
        let next = paths.last().unwrap().coarsen().unwrap();
        paths.push(next);
    }
    paths.reverse();
    let set = cfg.coefficient_set().unwrap();
    let sols: Vec<GridSolution> = levels
        .iter()
        .zip(&paths)
        .map(|(&(cells, _), w)| {
            let grid = SpaceGrid::new(cfg.domain.clone(), cells).unwrap();
            fd_solve(&set.realize(w), w, &grid, Boundary::DirichletZero, &FdOptions::default()).unwrap()
        })
        .collect();
    // sup over the coarse nodes at the final time
    let diff = |a: &GridSolution, b: &GridSolution| -> f64 {
        let ua = final_values(a);
        let ub = final_values(b);
        (0..ua.len()).map(|p| (ua[p] - ub[2 * p]).abs()).fold(0.0, f64::max)
    };
    let d0 = diff(&sols[0], &sols[1]);
    let d1 = diff(&sols[1], &sols[2]);
    assert!(d0 / d1 >= 1.5, "{d0} {d1}");
}

fn whole_line(support_width: f64) -> ScenarioConfig {
    parse(&format!(
        r#"
id = "line"
modes = 0
seed = 1
[domain]
kind = "whole_space"
dim = 1
half_width = 8.0
[time]
t_final = 0.25
n_steps = 256
[coefficients]
family = "constant"
rho = 1.0
[data.psi]
kind = "gaussian"
amplitude = 1.0
width = {support_width}
"#
    ))
}

#[test]
fn whole_line_heat_matches_the_gaussian_kernel() {
    let w0 = 0.3f64;
    let cfg = whole_line(w0);
    let w = w_path(&cfg, 0);
    let field = cfg.coefficient_set().unwrap().realize(&w);
    let u = fd_solve_whole_space(&field, &w, 8.0, 1.0 / 128.0, &FdOptions::default()).unwrap();
    assert_eq!(u.boundary, Boundary::None);
    let s2 = w0 * w0 + 0.25;
    let peak = w0 / s2.sqrt();
    for (p, v) in final_values(&u).iter().enumerate() {
        let x = u.space.point(p)[0];
        let exact = peak * (-0.5 * x * x / s2).exp();
        assert!((v - exact).abs() <= 0.01 * peak, "x {x}: {v} vs {exact}");
    }
}

#[test]
fn doubling_the_box_does_not_change_the_solution_inside_b4() {
    let cfg = scenario("localize");
    let w = w_path(&cfg, 0);
    let field = cfg.coefficient_set().unwrap().realize(&w);
    let dx = 1.0 / 32.0;
    let small = fd_solve_whole_space(&field, &w, 8.0, dx, &FdOptions::default()).unwrap();
    let large = fd_solve_whole_space(&field, &w, 16.0, dx, &FdOptions::default()).unwrap();
    assert!(whole_space_half_width(1.0, cfg.constants.k, cfg.time.t_final) <= 8.0);
    let scale = small.sup_norm();
    for i in 0..=small.time.n_steps() {
        for p in 0..small.space.len() {
            let x = small.space.point(p);
            if x[0].abs() > 4.0 {
                continue;
            }
            let other = large.value_at(i, &x).unwrap();
            assert!((small.value(i, p) - other).abs() <= 1e-6 * scale, "t {i} x {x:?}");
        }
    }
}

#[test]
fn two_dimensional_heat_on_a_square_box() {
    // whole-space solver on the box [-1, 1]^2 is the Dirichlet problem for the square
    let cfg = parse(
        r#"
id = "square"
modes = 0
[domain]
kind = "whole_space"
dim = 2
half_width = 1.0
[time]
t_final = 0.1
n_steps = 200
[coefficients]
family = "constant"
rho = 1.0
[data.psi]
kind = "sine"
amplitude = 1.0
"#,
    );
    let w = w_path(&cfg, 0);
    let field = cfg.coefficient_set().unwrap().realize(&w);
    let u = fd_solve_whole_space(&field, &w, 1.0, 1.0 / 32.0, &FdOptions::default()).unwrap();
    // each axis contributes exp(-(pi/2)^2 t / 2)
    let decay = (-2.0 * (PI / 2.0).powi(2) * 0.1 / 2.0).exp();
    for (p, v) in final_values(&u).iter().enumerate() {
        let x = u.space.point(p);
        let exact = decay * (PI * (x[0] + 1.0) / 2.0).sin() * (PI * (x[1] + 1.0) / 2.0).sin();
        assert!((v - exact).abs() <= 0.01 * decay, "{x:?}: {v} vs {exact}");
    }
}

fn fake_estimates(u: &GridSolution, shift: f64) -> Vec<RepresentationEstimate> {
    let n = u.time.n_steps();
    (1..u.space.len() - 1)
        .step_by(8)
        .map(|p| RepresentationEstimate {
            query: Query { node: n, x: u.space.point(p) },
            t: u.time.node(n),
            samples: 1,
            mean: u.value(n, p) + shift,
            stderr: 0.0,
            failures: 0,
            max_residual: 0.0,
            payoffs: None,
        })
        .collect()
}

#[test]
fn compare_reports_norms_of_the_difference() {
    let cfg = scenario("spde");
    let w = w_path(&cfg, 0);
    let u = solve(&cfg, &w, 256, &FdOptions::default());
    for norm in [Norm::Sup, Norm::L2] {
        assert_eq!(compare(&u, &fake_estimates(&u, 0.0), norm).unwrap().error, 0.0);
    }
    let est = fake_estimates(&u, 0.01);
    let sup = compare(&u, &est, Norm::Sup).unwrap();
    assert!((sup.error - 0.01).abs() < 1e-15);
    let l2 = compare(&u, &est, Norm::L2).unwrap();
    assert!((l2.error - 0.01 * (est.len() as f64).sqrt()).abs() < 1e-14);
    let mut off = est.clone();
    off[0].query.x[0] += 1e-3;
    assert!(compare(&u, &off, Norm::Sup).is_err());
}

#[test]
fn csv_dump_lists_every_node() {
    let cfg = scenario("zero");
    let u = solve(&cfg, &w_path(&cfg, 0), 16, &FdOptions::default());
    let mut out = Vec::new();
    u.write_csv(&mut out, 32).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x0,u");
    // nodes 0, 32, 64, 96, 128 of 128
    assert_eq!(lines.count(), 5 * 17);
}
