mod common;

use proptest::prelude::*;
use spde_fk::coefficients::{DataProfile, DataSpec};
use spde_fk::flow::Characteristics;
use spde_fk::scenario::ScenarioConfig;
use spde_fk::weights::{characteristic_with_weights, concatenation_check, relative_gap, TildeScheme};

use common::{interval, joint, parse, scenario};

fn refined(mut cfg: ScenarioConfig, n_steps: usize) -> ScenarioConfig {
    cfg.time.n_steps = n_steps;
    cfg
}

fn ball() -> ScenarioConfig {
    parse(
        r#"
id = "ball"
modes = 2
seed = 31
[domain]
kind = "ball"
center = [0.0, 0.0]
radius = 1.0
[time]
t_final = 0.25
n_steps = 64
[coefficients]
family = "trig"
sigma = 0.4
rho = 0.7
b = 0.3
mu = 0.3
c = -0.4
[data.psi]
kind = "bump"
amplitude = 1.0
width = 0.5
[data.f]
kind = "gaussian"
amplitude = 0.7
width = 0.4
[data.g]
kind = "bump"
amplitude = 0.5
width = 0.5
"#,
    )
}

#[test]
fn eta_eta_tilde_gap_is_small_at_fine_step() {
    // dt = 2^-12 on [0, 0.25]
    let cfg = refined(scenario("spde"), 1024);
    let set = cfg.coefficient_set().unwrap();
    for path in 0..3 {
        let noise = joint(&cfg, path);
        let field = set.realize(&noise);
        let ch = Characteristics::new(&field, &noise).unwrap();
        for y in [0.1, 0.35, 0.5, 0.8] {
            let (_, w) = characteristic_with_weights(&ch, 0, &[y], Some(TildeScheme::Euler)).unwrap();
            assert!(w.inversion_gap_eta() <= 0.01, "{y}: {}", w.inversion_gap_eta());
            assert!(w.inversion_gap_u() <= 0.01, "{y}: {}", w.inversion_gap_u());
            assert!(w.eta.iter().all(|e| *e > 0.0));
        }
    }
}

#[test]
fn log_euler_tilde_inverts_eta_to_rounding() {
    let cfg = ball();
    let noise = joint(&cfg, 0);
    let field = cfg.coefficient_set().unwrap().realize(&noise);
    let ch = Characteristics::new(&field, &noise).unwrap();
    let (_, w) = characteristic_with_weights(&ch, 0, &[0.2, -0.3], Some(TildeScheme::LogEuler)).unwrap();
    assert!(w.inversion_gap_eta() <= 1e-12);
}

#[test]
fn constant_potential_gives_exponential_weights() {
    let cfg = interval("pot", 1, 0.5, 64, "family = \"constant\"\nrho = 0.5\nc = 0.7", "");
    let noise = joint(&cfg, 0);
    let field = cfg.coefficient_set().unwrap().realize(&noise);
    let ch = Characteristics::new(&field, &noise).unwrap();
    let dt = cfg.grid().dt();
    for scheme in [TildeScheme::Euler, TildeScheme::Milstein, TildeScheme::LogEuler] {
        let (traj, w) = characteristic_with_weights(&ch, 0, &[0.5], Some(scheme)).unwrap();
        // the cut-off is 1 on [-0.5, 1.5]
        assert!(traj.iter().all(|z| (z - 0.5).abs() < 1.0));
        for (i, (e, et)) in w.eta.iter().zip(&w.eta_tilde).enumerate() {
            let t = cfg.grid().node(i);
            assert!((e - (0.7 * t).exp()).abs() <= 1e-12);
            if scheme == TildeScheme::LogEuler {
                assert!((et - (-0.7 * t).exp()).abs() <= 1e-12);
                assert!((e * et - 1.0).abs() <= 1e-12);
            } else {
                assert!((et - (1.0 - 0.7 * dt).powi(i as i32)).abs() <= 1e-12);
            }
        }
        assert!(w.u.iter().all(|u| *u == 0.0));
    }
}

#[test]
fn constant_forcing_and_noise_give_closed_form_u() {
    let f0 = 0.6;
    let cfg = interval(
        "forcing",
        1,
        0.5,
        64,
        "family = \"constant\"\nrho = 0.5",
        &format!("[data.f]\nkind = \"constant\"\nvalue = {f0}\n[data.g]\nkind = \"constant\"\nvalue = 0.4"),
    );
    let noise = joint(&cfg, 2);
    let field = cfg.coefficient_set().unwrap().realize(&noise);
    let ch = Characteristics::new(&field, &noise).unwrap();
    let (traj, w) = characteristic_with_weights(&ch, 0, &[0.5], None).unwrap();
    // the cut-off is 1 on [-0.5, 1.5]
        assert!(traj.iter().all(|z| (z - 0.5).abs() < 1.0));
    let wk = noise.cumulative_w(0);
    for (i, u) in w.u.iter().enumerate() {
        let t = cfg.grid().node(i);
        assert!((u - (f0 * t + 0.4 * wk[i])).abs() <= 1e-12, "node {i}");
    }
}

fn split_data(data: &DataSpec) -> (DataSpec, DataSpec) {
    (
        DataSpec { f: data.f.clone(), ..DataSpec::default() },
        DataSpec { g: data.g.clone(), psi: DataProfile::Zero, ..DataSpec::default() },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn concatenation_holds_at_any_split(path in 0u64..500, frac in 0.0f64..=1.0, y in 0.05f64..0.95, which in 0usize..2) {
        let cfg = if which == 0 { refined(scenario("spde"), 128) } else { ball() };
        let noise = joint(&cfg, path);
        let field = cfg.coefficient_set().unwrap().realize(&noise);
        let n = cfg.grid().n_steps();
        let split = ((n as f64) * frac).round() as usize;
        let mut point = cfg.domain.center();
        point[0] = if which == 0 { y } else { y - 0.5 };
        let report = concatenation_check(&field, &noise, split, &point).unwrap();
        prop_assert!(report.holds(1e-12), "{:?}", report);
    }

    #[test]
    fn u_is_additive_in_the_forcing(path in 0u64..500, y in 0.05f64..0.95) {
        let cfg = refined(scenario("spde"), 128);
        let noise = joint(&cfg, path);
        let set = cfg.coefficient_set().unwrap();
        let (f_only, g_only) = split_data(&cfg.data);
        let run = |data: DataSpec| {
            let field = set.with_data(data).realize(&noise);
            let ch = Characteristics::new(&field, &noise).unwrap();
            characteristic_with_weights(&ch, 0, &[y], None).unwrap().1
        };
        let both = run(cfg.data.clone());
        let a = run(f_only);
        let b = run(g_only);
        prop_assert_eq!(&both.eta, &a.eta);
        for i in 0..both.u.len() {
            prop_assert!(relative_gap(both.u[i], a.u[i] + b.u[i]) <= 1e-12 || (both.u[i] - a.u[i] - b.u[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn eta_is_positive_and_starts_at_one(path in 0u64..500, y in -0.9f64..0.9) {
        let cfg = ball();
        let noise = joint(&cfg, path);
        let field = cfg.coefficient_set().unwrap().realize(&noise);
        let ch = Characteristics::new(&field, &noise).unwrap();
        let (_, w) = characteristic_with_weights(&ch, 0, &[y, 0.0], Some(TildeScheme::Euler)).unwrap();
        prop_assert_eq!(w.eta[0], 1.0);
        prop_assert_eq!(w.u[0], 0.0);
        prop_assert_eq!(w.phi[0], 0.0);
        prop_assert_eq!(w.eta_tilde[0], 1.0);
        prop_assert_eq!(w.u_tilde[0], 0.0);
        prop_assert!(w.eta.iter().all(|e| *e > 0.0));
        for (p, e) in w.phi.iter().zip(&w.eta) {
            prop_assert_eq!(p.exp(), *e);
        }
    }
}
