//! Exact counts by hash-join execution.
//!
//! Aliases are joined one at a time in breadth-first order over the join
//! graph. The intermediate result is kept factorized: a map from the values
//! of the columns still needed by later joins to the number of tuples that
//! share them. Rows failing a filter, and rows with NULL in a join column,
//! never enter the intermediate.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::catalog::TableData;
use crate::error::{Error, Result};
use crate::query::{ColumnRef, Query};

pub const DEFAULT_ORACLE_CAP: usize = 100_000_000;

pub fn oracle_count(q: &Query, tables: &BTreeMap<String, TableData>) -> Result<u128> {
    oracle_count_with_cap(q, tables, DEFAULT_ORACLE_CAP)
}

fn table_for<'a>(
    q: &Query,
    tables: &'a BTreeMap<String, TableData>,
    alias: &str,
) -> Result<&'a TableData> {
    let name = q
        .table_of(alias)
        .ok_or_else(|| Error::UnknownTable(alias.to_string()))?;
    tables
        .get(name)
        .ok_or_else(|| Error::UnknownTable(name.to_string()))
}

fn int_column<'a>(data: &'a TableData, column: &str) -> Result<&'a [Option<i64>]> {
    data.column(column)
        .ok_or_else(|| Error::UnknownColumn(format!("{}.{column}", data.name())))?
        .as_integers()
        .ok_or_else(|| Error::InvalidArgument(format!("join column {}.{column} is not integer", data.name())))
}

/// Row indices of `alias` passing its filters and its own self-equalities.
fn surviving_rows(q: &Query, data: &TableData, alias: &str) -> Result<Vec<usize>> {
    let preds: Vec<_> = q.predicates_on(alias).collect();
    let mut cols = Vec::with_capacity(preds.len());
    for p in &preds {
        cols.push(
            data.column(&p.column.column)
                .ok_or_else(|| Error::UnknownColumn(p.column.to_string()))?,
        );
    }
    let mut self_eq = Vec::new();
    for e in &q.joins {
        if e.left.alias == alias && e.right.alias == alias {
            self_eq.push((int_column(data, &e.left.column)?, int_column(data, &e.right.column)?));
        }
    }
    Ok((0..data.row_count)
        .filter(|&r| {
            preds
                .iter()
                .zip(&cols)
                .all(|(p, c)| c.value(r).is_some_and(|v| p.op.matches(&v)))
                && self_eq
                    .iter()
                    .all(|(a, b)| a[r].is_some() && a[r] == b[r])
        })
        .collect())
}

pub fn oracle_count_with_cap(
    q: &Query,
    tables: &BTreeMap<String, TableData>,
    cap: usize,
) -> Result<u128> {
    let aliases: Vec<&str> = q.tables.iter().map(|t| t.alias.as_str()).collect();
    if aliases.is_empty() {
        return Err(Error::InvalidArgument("query has no tables".into()));
    }
    let cross: Vec<_> = q
        .joins
        .iter()
        .filter(|e| e.left.alias != e.right.alias)
        .collect();

    // Join order: breadth first from the first alias.
    let mut order = vec![aliases[0]];
    let mut seen: BTreeSet<&str> = BTreeSet::from([aliases[0]]);
    let mut queue = VecDeque::from([aliases[0]]);
    while let Some(a) = queue.pop_front() {
        for &b in &aliases {
            if seen.contains(b) {
                continue;
            }
            let linked = cross.iter().any(|e| {
                (e.left.alias == a && e.right.alias == b) || (e.left.alias == b && e.right.alias == a)
            });
            if linked {
                seen.insert(b);
                order.push(b);
                queue.push_back(b);
            }
        }
    }
    if order.len() != aliases.len() {
        return Err(Error::DisconnectedJoin("oracle needs a connected join graph".into()));
    }

    let needed_after = |done: &BTreeSet<&str>| -> Vec<ColumnRef> {
        let mut cols: BTreeSet<ColumnRef> = BTreeSet::new();
        for e in &cross {
            let (l, r) = (done.contains(e.left.alias.as_str()), done.contains(e.right.alias.as_str()));
            if l && !r {
                cols.insert(e.left.clone());
            } else if r && !l {
                cols.insert(e.right.clone());
            }
        }
        cols.into_iter().collect()
    };

    let first = order[0];
    let data = table_for(q, tables, first)?;
    let mut done: BTreeSet<&str> = BTreeSet::from([first]);
    let mut frontier = needed_after(&done);
    let mut inter: HashMap<Vec<i64>, u128> = HashMap::new();
    {
        let cols = frontier
            .iter()
            .map(|c| int_column(data, &c.column))
            .collect::<Result<Vec<_>>>()?;
        for r in surviving_rows(q, data, first)? {
            if let Some(key) = cols.iter().map(|c| c[r]).collect::<Option<Vec<i64>>>() {
                *inter.entry(key).or_insert(0) += 1;
            }
            if inter.len() > cap {
                return Err(Error::OracleCapExceeded { cap });
            }
        }
    }

    for &a in &order[1..] {
        let data = table_for(q, tables, a)?;
        // (position in the frontier, column of `a`) per edge into `a`.
        let mut probe: Vec<(usize, &[Option<i64>])> = Vec::new();
        for e in &cross {
            let (mine, other) = if e.left.alias == a && done.contains(e.right.alias.as_str()) {
                (&e.left, &e.right)
            } else if e.right.alias == a && done.contains(e.left.alias.as_str()) {
                (&e.right, &e.left)
            } else {
                continue;
            };
            let pos = frontier
                .iter()
                .position(|c| c == other)
                .expect("joined column is in the frontier");
            probe.push((pos, int_column(data, &mine.column)?));
        }
        done.insert(a);
        let next = needed_after(&done);
        // For each next-frontier column: where its value comes from.
        enum Src<'d> {
            Old(usize),
            New(&'d [Option<i64>]),
        }
        let sources = next
            .iter()
            .map(|c| {
                if c.alias == a {
                    int_column(data, &c.column).map(Src::New)
                } else {
                    Ok(Src::Old(
                        frontier.iter().position(|f| f == c).expect("still needed"),
                    ))
                }
            })
            .collect::<Result<Vec<_>>>()?;

        // Index `a` by its probe columns, grouped by its own contribution to
        // the next frontier.
        let mut index: HashMap<Vec<i64>, HashMap<Vec<i64>, u128>> = HashMap::new();
        for r in surviving_rows(q, data, a)? {
            let Some(key) = probe.iter().map(|(_, c)| c[r]).collect::<Option<Vec<i64>>>() else {
                continue;
            };
            let own: Option<Vec<i64>> = sources
                .iter()
                .filter_map(|s| match s {
                    Src::New(c) => Some(c[r]),
                    Src::Old(_) => None,
                })
                .collect();
            let Some(own) = own else { continue };
            *index.entry(key).or_default().entry(own).or_insert(0) += 1;
        }

        let mut out: HashMap<Vec<i64>, u128> = HashMap::new();
        for (tuple, count) in &inter {
            let key: Vec<i64> = probe.iter().map(|(pos, _)| tuple[*pos]).collect();
            let Some(matches) = index.get(&key) else { continue };
            for (own, c) in matches {
                let mut own_it = own.iter();
                let merged: Vec<i64> = sources
                    .iter()
                    .map(|s| match s {
                        Src::Old(p) => tuple[*p],
                        Src::New(_) => *own_it.next().expect("own value"),
                    })
                    .collect();
                *out.entry(merged).or_insert(0) += count * c;
                if out.len() > cap {
                    return Err(Error::OracleCapExceeded { cap });
                }
            }
        }
        inter = out;
        frontier = next;
    }
    Ok(inter.values().sum())
}
