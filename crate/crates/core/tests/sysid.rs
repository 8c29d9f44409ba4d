mod common;

use bssanova::sysid::{
    integrate_with, metrics, replay, rk4_step, Episode, FnDynamics,
};
use bssanova::{StateSpaceModel, TimeSeriesData};
use common::quick_config;
use nalgebra::DMatrix;

type Rhs = fn(&[f64], &[f64], &mut [f64]);

fn decay() -> FnDynamics<Rhs> {
    FnDynamics { n_states: 1, f: |x: &[f64], _u: &[f64], out: &mut [f64]| out[0] = -x[0] }
}

#[test]
fn rk4_is_fourth_order() {
    let err = |steps: usize| {
        let dt = 1.0 / steps as f64;
        let forcing = DMatrix::zeros(steps + 1, 0);
        let x = integrate_with(&decay(), &[1.0], &forcing, 0.0, dt).unwrap();
        (x[0][steps] - (-1.0f64).exp()).abs()
    };
    let ratio = err(10) / err(20);
    assert!((8.0..=32.0).contains(&ratio), "error ratio {ratio}");
    let single = rk4_step(&decay(), &[1.0], &[], &[], &[], 0.1).unwrap();
    let h: f64 = 0.1;
    let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
    assert!((single[0] - taylor).abs() < 1e-15);
}

#[test]
fn zero_dynamics_hold_state() {
    let zero = FnDynamics { n_states: 2, f: |_: &[f64], _: &[f64], out: &mut [f64]| out.fill(0.0) };
    let forcing = DMatrix::from_fn(50, 1, |k, _| k as f64);
    let x = integrate_with(&zero, &[3.0, -1.0], &forcing, 0.0, 0.1).unwrap();
    assert!(x[0].iter().all(|&v| v == 3.0));
    assert!(x[1].iter().all(|&v| v == -1.0));
}

#[test]
fn constant_forcing_integrates_exactly() {
    let drive = FnDynamics { n_states: 1, f: |_: &[f64], u: &[f64], out: &mut [f64]| out[0] = u[0] };
    let forcing = DMatrix::from_element(101, 1, 2.0);
    let x = integrate_with(&drive, &[1.0], &forcing, 0.0, 0.05).unwrap();
    for (k, v) in x[0].iter().enumerate() {
        assert!((v - (1.0 + 2.0 * 0.05 * k as f64)).abs() < 1e-12);
    }
    // Linear forcing is integrated exactly through the midpoint average.
    let ramp = DMatrix::from_fn(101, 1, |k, _| 0.05 * k as f64);
    let x = integrate_with(&drive, &[0.0], &ramp, 0.0, 0.05).unwrap();
    for (k, v) in x[0].iter().enumerate() {
        let t = 0.05 * k as f64;
        assert!((v - t * t / 2.0).abs() < 1e-12);
    }
}

#[test]
fn divergence_is_reported_with_partial_trajectory() {
    let blowup = FnDynamics { n_states: 1, f: |x: &[f64], _: &[f64], out: &mut [f64]| out[0] = x[0] * x[0] };
    let forcing = DMatrix::zeros(400, 0);
    let err = integrate_with(&blowup, &[1.0], &forcing, 0.0, 0.01).unwrap_err();
    match err {
        bssanova::Error::Divergence { partial, t, .. } => {
            assert!(t > 0.9 && partial.len() > 50);
        }
        e => panic!("unexpected error {e}"),
    }
}

/// `x' = -0.5 x + u` sampled exactly with dt = 0.05.
fn linear_episode(x0: f64, u: impl Fn(f64) -> f64) -> Episode {
    let dt = 0.05;
    let n = 121;
    let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let forcing = DMatrix::from_fn(n, 1, |k, _| u(t[k]));
    let dynamics = FnDynamics { n_states: 1, f: |x: &[f64], u: &[f64], out: &mut [f64]| out[0] = -0.5 * x[0] + u[0] };
    // Fine reference integration, subsampled.
    let fine = 20;
    let fine_forcing = DMatrix::from_fn((n - 1) * fine + 1, 1, |k, _| u(k as f64 * dt / fine as f64));
    let x = integrate_with(&dynamics, &[x0], &fine_forcing, 0.0, dt / fine as f64).unwrap();
    let states = DMatrix::from_fn(n, 1, |k, _| x[0][k * fine]);
    Episode { t, states, forcing }
}

#[test]
fn planted_linear_system_is_recovered() {
    let mut episodes = Vec::new();
    for &u in &[0.5, 1.0, 1.5, 2.0, 2.5] {
        for &x0 in &[0.5, 2.0, 4.0] {
            episodes.push(linear_episode(x0, move |_| u));
        }
    }
    let data = TimeSeriesData {
        state_names: vec!["x".into()],
        forcing_names: vec!["u".into()],
        episodes,
    };
    let model = bssanova::sysid::fit_dynamics(&data, &[quick_config(3, 5, 1)]).unwrap();

    let held_out = linear_episode(1.0, |t| 1.5 + 0.8 * (1.3 * t).sin());
    let tr = replay(&model, &held_out, false).unwrap();
    let m = metrics(&tr, &held_out, 0).unwrap();
    assert!(m.mape[0] < 2.0, "held-out MAPE {}%", m.mape[0]);

    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let back = StateSpaceModel::load(dir.path()).unwrap();
    assert_eq!(replay(&back, &held_out, false).unwrap(), tr);
}
