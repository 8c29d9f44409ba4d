mod common;

use std::collections::BTreeMap;

use bssanova::forward_select;
use common::{quick_config, sample};

/// Distinct descending multisets of `ind` with at most `max_parts` parts,
/// mapped to how many length-`n` order vectors realise each one.
fn oracle_substages(ind: usize, n: usize, max_parts: usize) -> BTreeMap<Vec<usize>, usize> {
    let mut out = BTreeMap::new();
    let total = (ind + 1).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let row: Vec<usize> = (0..n)
            .map(|_| {
                let v = c % (ind + 1);
                c /= ind + 1;
                v
            })
            .collect();
        if row.iter().sum::<usize>() != ind {
            continue;
        }
        let mut parts: Vec<usize> = row.into_iter().filter(|&v| v > 0).collect();
        if parts.len() > max_parts {
            continue;
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        *out.entry(parts).or_insert(0) += 1;
    }
    out
}

#[test]
fn trace_enumerates_every_substage_in_order() {
    let (x, z) = sample(40, 3, 0.1, 1, |r| r[0] + r[1] * r[2]);
    let mut cfg = quick_config(1000, 4, 2);
    cfg.max_interaction_order = 2;
    let sel = forward_select(&x, &z, &cfg).unwrap();

    let mut want = vec![(0usize, "0".to_string(), 1usize)];
    let mut p = 1;
    for ind in 1..=4 {
        for (parts, count) in oracle_substages(ind, 3, 2) {
            p += count;
            let label = parts.iter().rev().map(|v| v.to_string()).collect::<Vec<_>>().join("+");
            want.push((ind, label, p));
        }
    }
    let got: Vec<_> = sel.trace.iter().map(|t| (t.ind, t.composition.clone(), t.n_terms)).collect();
    assert_eq!(got, want);
    for (s, t) in sel.trace.iter().enumerate() {
        assert_eq!(t.substage, s);
    }
}

#[test]
fn best_model_dominates_trace() {
    let (x, z) = sample(80, 2, 0.1, 3, |r| (4.0 * r[0]).cos() * r[1]);
    let sel = forward_select(&x, &z, &quick_config(3, 6, 4)).unwrap();
    let best = sel.posterior.criterion.value;
    assert!(sel.trace.iter().all(|t| best <= t.criterion));
    assert_eq!(sel.trace[sel.best_substage].criterion, best);
    assert_eq!(sel.trace[sel.best_substage].n_terms, sel.n_terms());
    // is_min marks strict running minima.
    let mut run = f64::INFINITY;
    for t in &sel.trace {
        assert_eq!(t.is_min, t.criterion < run);
        run = run.min(t.criterion);
    }
}

#[test]
fn planted_main_effect_is_selected() {
    let (x, z) = sample(200, 3, 0.05, 5, |r| (2.0 * std::f64::consts::PI * r[0]).sin());
    let sel = forward_select(&x, &z, &quick_config(6, 6, 6)).unwrap();
    assert!(sel.term_matrix.contains(&[1, 0, 0]));
    assert!(sel.best_substage > 0);
    let resid: f64 = {
        let model = bssanova::GpModel::from_selected(sel).unwrap();
        let pred = model.predict_mean(&x).unwrap();
        (pred.iter().zip(&z).map(|(p, z)| (p - z).powi(2)).sum::<f64>() / z.len() as f64).sqrt()
    };
    assert!(resid < 0.1, "in-sample RMSE {resid}");
}

#[test]
fn white_noise_stops_at_intercept() {
    let (x, z) = sample(200, 3, 1.0, 7, |_| 0.0);
    let tol = 3;
    let sel = forward_select(&x, &z, &quick_config(tol, 10, 8)).unwrap();
    assert_eq!(sel.best_substage, 0);
    assert_eq!(sel.n_terms(), 1);
    assert_eq!(sel.trace.len(), 1 + tol);
}

#[test]
fn replay_is_deterministic() {
    let (x, z) = sample(60, 2, 0.1, 9, |r| r[0] * r[1]);
    let cfg = quick_config(2, 5, 10);
    let a = forward_select(&x, &z, &cfg).unwrap();
    let b = forward_select(&x, &z, &cfg).unwrap();
    let untimed = |s: &bssanova::SelectedModel| s.trace.iter().map(|t| t.untimed()).collect::<Vec<_>>();
    assert_eq!(untimed(&a), untimed(&b));
    assert_eq!(a.posterior, b.posterior);
    assert_eq!(a.term_matrix, b.term_matrix);
}

#[test]
fn aliased_orders_are_capped_by_levels() {
    // The second input takes three values, so orders above 2 in it are aliased.
    let (mut x, z) = sample(90, 2, 0.05, 11, |r| r[0]);
    for i in 0..90 {
        x[(i, 1)] = (i % 3) as f64;
    }
    let sel = forward_select(&x, &z, &quick_config(1000, 4, 12)).unwrap();
    assert!(sel.term_matrix.rows().iter().all(|r| r[1] <= 2));
    let mut cfg = quick_config(1000, 4, 12);
    cfg.cap_order_by_levels = false;
    let sel = forward_select(&x, &z, &cfg).unwrap();
    assert!(sel.trace.iter().any(|t| t.composition == "4"));
}

#[test]
fn mismatched_targets_rejected() {
    let (x, z) = sample(20, 2, 0.1, 1, |r| r[0]);
    assert!(forward_select(&x, &z[..10], &quick_config(2, 3, 0)).is_err());
}
