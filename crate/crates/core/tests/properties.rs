mod common;

use std::collections::{BTreeMap, HashMap, HashSet};

use proptest::prelude::*;

use tkhist_core::catalog::{ColumnData, KeyDomain, Schema, TableData};
use tkhist_core::djpcd::{find_excluded_keys, scan_envelopes};
use tkhist_core::estimator::{oracle_count, q_error, ratio};
use tkhist_core::hist::build_tkhist1d;
use tkhist_core::join::{jtkh_join, CompositeHist};
use tkhist_core::predicate::{apply_filters, combine_table_selectivity, BinSelectivity};
use tkhist_core::query::{parse_query, unparse};
use tkhist_core::state::{build_state, state_from_json, BuildConfig};
use tkhist_core::{estimate_planned, EstimateOptions, PlannedQuery, QualifiedColumn};

fn domain(max: i64, bins: usize) -> KeyDomain {
    let mut d = KeyDomain {
        id: "r.k".into(),
        members: vec![QualifiedColumn::new("r", "k"), QualifiedColumn::new("s", "k")],
        global_min: 0,
        global_max: 0,
        bins: None,
    };
    d.set_bounds(0, max, bins).unwrap();
    d
}

fn keys(max: i64) -> impl Strategy<Value = Vec<Option<i64>>> {
    prop::collection::vec(prop::option::weighted(0.9, 0..=max), 0..120)
}

fn schema() -> Schema {
    Schema::from_json(
        r#"{"tables": [
            {"name": "r", "file": "r.csv", "columns": [
              {"name": "k", "kind": "integer", "role": "key"},
              {"name": "x", "kind": "integer", "role": "attribute"}]},
            {"name": "s", "file": "s.csv", "columns": [
              {"name": "k", "kind": "integer", "role": "key"},
              {"name": "y", "kind": "integer", "role": "attribute"}]}],
           "foreign_keys": [{"from": "s.k", "to": "r.k"}]}"#,
        ".",
    )
    .unwrap()
}

/// Two tables over keys in `[0, 30]`, each row carrying an attribute.
fn tables() -> impl Strategy<Value = BTreeMap<String, TableData>> {
    let rows = || prop::collection::vec((prop::option::weighted(0.9, 0i64..=30), 0i64..20), 1..80);
    (rows(), rows()).prop_map(|(r, s)| {
        let sc = schema();
        let mk = |name: &str, rows: Vec<(Option<i64>, i64)>| {
            let (k, a): (Vec<_>, Vec<_>) = rows.into_iter().map(|(k, a)| (k, Some(a))).unzip();
            TableData::new(
                sc.table(name).unwrap().clone(),
                vec![ColumnData::Integer(k), ColumnData::Integer(a)],
            )
            .unwrap()
        };
        // Pin the domain bounds so every generated key is inside it.
        let mut r = r;
        r.push((Some(0), 0));
        r.push((Some(30), 0));
        [("r".to_string(), mk("r", r)), ("s".to_string(), mk("s", s))]
            .into_iter()
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_error_is_symmetric_and_ratio_inverts(a in 1e-3f64..1e9, b in 1e-3f64..1e9) {
        prop_assert_eq!(q_error(a, b).unwrap(), q_error(b, a).unwrap());
        prop_assert!(q_error(a, b).unwrap() >= 1.0);
        prop_assert_eq!(q_error(a, a).unwrap(), 1.0);
        let p = ratio(a, b).unwrap() * ratio(b, a).unwrap();
        prop_assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn background_plus_container_is_bin_rows(values in keys(60), bins in 1usize..12, k in 0usize..6) {
        let d = domain(60, bins);
        let h = build_tkhist1d(&values, &d, k).unwrap();
        let layout = d.bins().unwrap();
        let mut exact = vec![0u64; bins];
        for v in values.iter().flatten() {
            exact[layout.locate(*v as f64).unwrap()] += 1;
        }
        for (b, e) in h.bins.iter().zip(&exact) {
            prop_assert_eq!(b.nv + b.container.total(), *e);
            prop_assert!(b.container.len() <= k);
            // Every tracked key is at least as frequent as every background key.
            if let Some(min) = b.container.min_frequency() {
                prop_assert!(b.ndv == 0 || b.bac() <= min as f64);
            }
        }
        prop_assert_eq!(h.total_rows, exact.iter().sum::<u64>());
    }

    #[test]
    fn two_table_totals_commute(a in keys(40), b in keys(40), bins in 1usize..8, k in 0usize..5) {
        let d = domain(40, bins);
        let ha = CompositeHist::from_tkhist(&build_tkhist1d(&a, &d, k).unwrap(), "a");
        let hb = CompositeHist::from_tkhist(&build_tkhist1d(&b, &d, k).unwrap(), "b");
        let none = HashSet::new();
        let ab = jtkh_join(&ha, &hb, &none).unwrap().total();
        let ba = jtkh_join(&hb, &ha, &none).unwrap().total();
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        for bin in jtkh_join(&ha, &hb, &none).unwrap().bins {
            prop_assert!(bin.background_est >= 0.0 && bin.ndv_est >= 0.0);
            prop_assert!(bin.dominant.values().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn full_capture_is_exact(a in keys(40), b in keys(40), bins in 1usize..8) {
        let d = domain(40, bins);
        let ha = CompositeHist::from_tkhist(&build_tkhist1d(&a, &d, 64).unwrap(), "a");
        let hb = CompositeHist::from_tkhist(&build_tkhist1d(&b, &d, 64).unwrap(), "b");
        let est = jtkh_join(&ha, &hb, &HashSet::new()).unwrap().total();
        let mut ca: HashMap<i64, u64> = HashMap::new();
        for v in a.iter().flatten() {
            *ca.entry(*v).or_default() += 1;
        }
        let truth: u64 = b.iter().flatten().map(|v| ca.get(v).copied().unwrap_or(0)).sum();
        prop_assert_eq!(est, truth as f64);
    }

    #[test]
    fn exclusions_never_raise_the_total(a in keys(40), b in keys(40), k in 1usize..5, drop in prop::collection::hash_set(0i64..=40, 0..10)) {
        let d = domain(40, 4);
        let ha = CompositeHist::from_tkhist(&build_tkhist1d(&a, &d, k).unwrap(), "a");
        let hb = CompositeHist::from_tkhist(&build_tkhist1d(&b, &d, k).unwrap(), "b");
        let all = jtkh_join(&ha, &hb, &HashSet::new()).unwrap().total();
        let some = jtkh_join(&ha, &hb, &drop).unwrap().total();
        prop_assert!(some <= all);
    }

    #[test]
    fn filters_never_raise_a_component(a in keys(40), fr in prop::collection::vec(0.0f64..=1.0, 4)) {
        let d = domain(40, 4);
        let h = CompositeHist::from_tkhist(&build_tkhist1d(&a, &d, 2).unwrap(), "a");
        let out = apply_filters(&h, &BinSelectivity(fr)).unwrap();
        for (x, y) in h.bins.iter().zip(&out.bins) {
            prop_assert!(y.background_est <= x.background_est);
            for (k, v) in &y.dominant {
                prop_assert!(*v <= x.dominant[k]);
            }
        }
    }

    #[test]
    fn selectivity_combination_laws(
        a in prop::collection::vec(0.0f64..=1.0, 5),
        b in prop::collection::vec(0.0f64..=1.0, 5),
        c in prop::collection::vec(0.0f64..=1.0, 5),
    ) {
        let (a, b, c) = (BinSelectivity(a), BinSelectivity(b), BinSelectivity(c));
        let ab = combine_table_selectivity(&[a.clone(), b.clone()]).unwrap();
        let ba = combine_table_selectivity(&[b.clone(), a.clone()]).unwrap();
        prop_assert_eq!(&ab, &ba);
        let left = combine_table_selectivity(&[ab, c.clone()]).unwrap();
        let right = combine_table_selectivity(&[a.clone(), combine_table_selectivity(&[b, c]).unwrap()]).unwrap();
        for (x, y) in left.0.iter().zip(&right.0) {
            prop_assert!((x - y).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(x));
        }
        prop_assert_eq!(combine_table_selectivity(&[a.clone(), BinSelectivity::ones(5)]).unwrap(), a);
    }

    #[test]
    fn oracle_matches_nested_loops(t in tables(), lo in 0i64..20) {
        let sc = schema();
        for text in [
            "SELECT COUNT(*) FROM r, s WHERE r.k = s.k".to_string(),
            format!("SELECT COUNT(*) FROM r, s WHERE r.k = s.k AND s.y >= {lo}"),
            format!("SELECT COUNT(*) FROM s a, s b, r WHERE a.k = b.k AND r.k = a.k AND r.x < {lo}"),
        ] {
            let q = parse_query(&text, &sc).unwrap();
            prop_assert_eq!(oracle_count(&q, &t).unwrap(), common::nested_loop_count(&q, &t, 10_000_000));
        }
    }

    #[test]
    fn exclusion_is_sound(t in tables(), lo in 0i64..20, k in 1usize..4) {
        let sc = schema();
        let st = build_state(&sc, &t, BuildConfig::new(4, k)).unwrap();
        let q = parse_query(&format!("SELECT COUNT(*) FROM r, s WHERE r.k = s.k AND s.y >= {lo}"), &sc).unwrap();
        let excl = find_excluded_keys(&q, &st.correlations);
        let s = &t["s"];
        let (ks, ys) = (s.column("k").unwrap(), s.column("y").unwrap());
        for (col, keys) in &excl.keys {
            prop_assert!(col == "s.k" || col == "r.k");
            for key in keys {
                // No row of s with this key passes the filter.
                let passing = (0..s.row_count).any(|r| ks.int(r) == Some(*key) && ys.int(r).is_some_and(|y| y >= lo));
                prop_assert!(!passing, "key {} wrongly excluded", key);
            }
        }
        // Envelopes cover exactly the rows of each recorded key.
        let classes = &st.tables["s"].classes;
        let recorded = st.correlations.get("s", "k", "y").cloned().unwrap_or_default();
        let rescanned = scan_envelopes(s, "k", &recorded.keys().copied().collect(), classes).unwrap();
        if let Some(again) = rescanned.get("y") {
            prop_assert_eq!(again, &recorded);
        }
    }

    #[test]
    fn djpcd_is_inert_without_filters_and_never_raises(t in tables(), lo in 0i64..20, k in 0usize..4) {
        let sc = schema();
        let st = build_state(&sc, &t, BuildConfig::new(4, k)).unwrap();
        let pure = PlannedQuery::parse("SELECT COUNT(*) FROM r, s WHERE r.k = s.k", &st).unwrap();
        prop_assert_eq!(
            estimate_planned(&pure, &st, EstimateOptions::default()).unwrap(),
            estimate_planned(&pure, &st, EstimateOptions::without_djpcd()).unwrap()
        );
        let filtered = PlannedQuery::parse(&format!("SELECT COUNT(*) FROM r, s WHERE r.k = s.k AND s.y >= {lo}"), &st).unwrap();
        prop_assert!(
            estimate_planned(&filtered, &st, EstimateOptions::default()).unwrap()
                <= estimate_planned(&filtered, &st, EstimateOptions::without_djpcd()).unwrap()
        );
    }

    #[test]
    fn state_serialization_is_stable(t in tables(), k in 0usize..4, n in 1usize..6) {
        let sc = schema();
        let st = build_state(&sc, &t, BuildConfig::new(n, k)).unwrap();
        let text = st.to_json();
        let back = state_from_json(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn unparse_round_trips(lo in -50i64..50, hi in -50i64..50, vals in prop::collection::vec(-9i64..9, 1..4)) {
        let sc = schema();
        let list: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        let text = format!(
            "SELECT COUNT(*) FROM r AS a, s WHERE a.k = s.k AND s.y BETWEEN {} AND {} AND a.x IN ({})",
            lo.min(hi), lo.max(hi), list.join(", ")
        );
        let q = parse_query(&text, &sc).unwrap();
        prop_assert_eq!(parse_query(&unparse(&q), &sc).unwrap(), q);
    }
}
