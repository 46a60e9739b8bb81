//! Shared helpers for integration tests, including a nested-loop join
//! counter that shares no code with the library's hash-join oracle.

#![allow(dead_code)]

use std::collections::BTreeMap;

use tkhist_core::{AttrValue, Query, TableData};

struct Bound<'a> {
    data: &'a TableData,
    row: usize,
}

/// Count the result of `q` by enumerating every combination of rows,
/// rejecting a partial combination as soon as a predicate or an equality
/// with both sides bound fails. Panics when more than `cap` partial
/// combinations are visited.
pub fn nested_loop_count(q: &Query, tables: &BTreeMap<String, TableData>, cap: u64) -> u128 {
    let data: Vec<&TableData> = q.tables.iter().map(|t| &tables[&t.table]).collect();
    let mut visited = 0u64;
    let mut stack: Vec<Bound> = Vec::new();
    recurse(q, &data, &mut stack, &mut visited, cap)
}

fn value_of(q: &Query, stack: &[Bound], alias: &str, column: &str) -> Option<AttrValue> {
    let i = q.tables.iter().position(|t| t.alias == alias)?;
    let b = stack.get(i)?;
    b.data.column(column).expect("column exists").value(b.row)
}

fn recurse<'a>(q: &Query, data: &[&'a TableData], stack: &mut Vec<Bound<'a>>, visited: &mut u64, cap: u64) -> u128 {
    let depth = stack.len();
    if depth == data.len() {
        return 1;
    }
    let alias = &q.tables[depth].alias;
    let mut total = 0;
    for row in 0..data[depth].row_count {
        *visited += 1;
        assert!(*visited <= cap, "nested-loop cap exceeded");
        stack.push(Bound { data: data[depth], row });
        let preds_ok = q
            .predicates
            .iter()
            .filter(|p| &p.column.alias == alias)
            .all(|p| {
                value_of(q, stack, alias, &p.column.column).is_some_and(|v| p.op.matches(&v))
            });
        let joins_ok = preds_ok
            && q.joins.iter().all(|e| {
                let l = value_of(q, stack, &e.left.alias, &e.left.column);
                let r = value_of(q, stack, &e.right.alias, &e.right.column);
                let l_bound = q.tables[..=depth].iter().any(|t| t.alias == e.left.alias);
                let r_bound = q.tables[..=depth].iter().any(|t| t.alias == e.right.alias);
                if !(l_bound && r_bound) {
                    return true;
                }
                matches!((l, r), (Some(a), Some(b)) if a == b)
            });
        if joins_ok {
            total += recurse(q, data, stack, visited, cap);
        }
        stack.pop();
    }
    total
}

/// Median of a slice of finite values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
