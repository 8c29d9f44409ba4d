use std::collections::BTreeSet;

use bssanova::design::{FactorCache, MAX_INTERACTION_ORDER};
use bssanova::{
    build_design_columns, integer_compositions, kl_decompose, term_rows, Composition,
    NormalizationBounds, TermMatrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Every length-`n` vector of orders summing to `ind` with at most
/// `max_parts` nonzero entries, found by exhaustive search.
fn brute_force_rows(ind: usize, n: usize, max_parts: usize) -> BTreeSet<Vec<usize>> {
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>, max_parts: usize) {
        if pos == cur.len() {
            if left == 0 && cur.iter().filter(|&&v| v > 0).count() <= max_parts {
                out.insert(cur.clone());
            }
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(pos + 1, left - v, cur, out, max_parts);
        }
        cur[pos] = 0;
    }
    let mut out = BTreeSet::new();
    rec(0, ind, &mut vec![0; n], &mut out, max_parts);
    out
}

fn multiset(row: &[usize]) -> Vec<usize> {
    let mut m: Vec<usize> = row.iter().copied().filter(|&v| v > 0).collect();
    m.sort_unstable_by(|a, b| b.cmp(a));
    m
}

#[test]
fn compositions_and_rows_match_exhaustive_search() {
    for n in 1..=4 {
        for ind in 1..=6 {
            for max_parts in 1..=MAX_INTERACTION_ORDER {
                let oracle = brute_force_rows(ind, n, max_parts);
                let comps = integer_compositions(ind, max_parts);
                let mut seen = BTreeSet::new();
                for c in &comps {
                    assert_eq!(c.sum(), ind);
                    for row in term_rows(c, n) {
                        assert_eq!(multiset(&row), c.parts().to_vec(), "row {row:?} under {c}");
                        assert!(seen.insert(row.clone()), "duplicate row {row:?}");
                    }
                }
                assert_eq!(seen, oracle, "n = {n}, ind = {ind}, max_parts = {max_parts}");
            }
        }
    }
}

#[test]
fn composition_examples() {
    let show = |v: Vec<Composition>| v.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    assert_eq!(show(integer_compositions(1, 3)), ["1"]);
    assert_eq!(show(integer_compositions(2, 3)), ["1+1", "2"]);
    assert_eq!(show(integer_compositions(4, 3)), ["1+1+2", "2+2", "1+3", "4"]);
    assert_eq!(show(integer_compositions(4, 1)), ["4"]);
    // Distinct multisets only.
    let set: BTreeSet<_> = integer_compositions(7, 3).into_iter().collect();
    assert_eq!(set.len(), integer_compositions(7, 3).len());
}

#[test]
fn term_row_examples() {
    let c11 = Composition::new(vec![1, 1]).unwrap();
    assert_eq!(term_rows(&c11, 3), vec![vec![1, 1, 0], vec![1, 0, 1], vec![0, 1, 1]]);
    let c12 = Composition::new(vec![1, 2]).unwrap();
    assert_eq!(term_rows(&c12, 2), vec![vec![1, 2], vec![2, 1]]);
    let c1 = Composition::new(vec![1]).unwrap();
    assert_eq!(term_rows(&c1, 3), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    // More parts than inputs: nothing to add.
    assert!(term_rows(&Composition::new(vec![1, 1, 1]).unwrap(), 2).is_empty());
}

#[test]
fn design_entries_are_products_of_basis_values() {
    let bs = kl_decompose(4, 201).unwrap();
    let norm = DMatrix::from_row_slice(3, 3, &[0.1, 0.5, 0.9, 0.0, 1.0, 0.25, 0.77, 0.33, 0.5]);
    let rows = vec![vec![0, 0, 0], vec![1, 0, 0], vec![0, 2, 3], vec![4, 1, 1]];
    let x = build_design_columns(&norm, &rows, &bs).unwrap();
    for e in 0..3 {
        for (j, row) in rows.iter().enumerate() {
            let mut want = 1.0;
            for (i, &o) in row.iter().enumerate() {
                if o > 0 {
                    want *= bs.eval(o, norm[(e, i)]).unwrap();
                }
            }
            assert_eq!(x[(e, j)], want);
        }
    }
    assert!(build_design_columns(&norm, &[vec![5, 0, 0]], &bs).is_err());
}

#[test]
fn normalization_clamps_outside_bounds() {
    let b = NormalizationBounds::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
    let raw = DMatrix::from_row_slice(2, 2, &[3.0, -5.0, 1.0, 0.0]);
    let n = b.normalize(&raw).unwrap();
    assert_eq!(n.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
    assert_eq!(n.row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5]);
    assert!(b.normalize(&DMatrix::zeros(1, 3)).is_err());
    let constant = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    assert!(NormalizationBounds::from_data(&constant).is_err());
}

fn row_strategy(n: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..5, n).prop_filter("at most three active inputs, not intercept", |r| {
        let k = r.iter().filter(|&&v| v > 0).count();
        (1..=3).contains(&k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_denormalize_roundtrip(
        vals in proptest::collection::vec(-1e3f64..1e3, 12),
    ) {
        let raw = DMatrix::from_row_slice(4, 3, &vals);
        prop_assume!(NormalizationBounds::from_data(&raw).is_ok());
        let b = NormalizationBounds::from_data(&raw).unwrap();
        let n = b.normalize(&raw).unwrap();
        prop_assert!(n.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let back = b.denormalize(&n);
        for (a, r) in back.iter().zip(raw.iter()) {
            prop_assert!((a - r).abs() <= 1e-9 * (1.0 + r.abs()));
        }
    }

    #[test]
    fn term_matrix_csv_roundtrip(rows in proptest::collection::btree_set(row_strategy(4), 0..12)) {
        let mut tm = TermMatrix::intercept(4);
        tm.extend(rows.into_iter().collect()).unwrap();
        let back = TermMatrix::from_csv(&tm.to_csv()).unwrap();
        prop_assert_eq!(back, tm);
    }

    #[test]
    fn incremental_design_equals_batch(
        rows in proptest::collection::btree_set(row_strategy(3), 2..10),
        split in 0usize..10,
        pts in proptest::collection::vec(0.0f64..=1.0, 15),
    ) {
        let rows: Vec<Vec<usize>> = rows.into_iter().collect();
        let split = split.min(rows.len());
        let bs = kl_decompose(4, 101).unwrap();
        let norm = DMatrix::from_row_slice(5, 3, &pts);
        let batch = build_design_columns(&norm, &rows, &bs).unwrap();
        let mut cache = FactorCache::new(&norm);
        let a = cache.columns(&rows[..split], &bs).unwrap();
        let b = cache.columns(&rows[split..], &bs).unwrap();
        let mut joined = a.as_slice().to_vec();
        joined.extend_from_slice(b.as_slice());
        prop_assert_eq!(joined.as_slice(), batch.as_slice());
    }
}
