//! Dominant join path correlation discovery.
//!
//! Offline, the dominant join keys of each join template are collected and
//! the attribute values seen with each key are summarized as an envelope.
//! Online, a dominant key whose envelope cannot satisfy a filter is
//! excluded from the star-group folds: no row of that table with that key
//! passes the filter, so every join path through the key is empty.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{ColumnClass, Schema, TableData, TemplateEdge};
use crate::error::{Error, Result};
use crate::hist::AttrValue;
use crate::pipeline::{group_folds, PlannedQuery};
use crate::predicate::PredicateOp;
use crate::query::{decompose, ColumnRef, JoinEdge, Query, TableRef};
use crate::serde_util::pair_list;
use crate::state::State;

/// Dominant keys kept per star group during discovery.
pub const MAX_DOMINANT_KEYS: usize = 1000;

/// Attribute values observed with one key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Envelope {
    /// `min <= max` always.
    Range { min: f64, max: f64 },
    Values { values: BTreeSet<AttrValue> },
}

impl Envelope {
    fn observe(slot: &mut Option<Envelope>, v: AttrValue, categorical: bool) {
        match slot {
            None => {
                *slot = Some(match (&v, categorical) {
                    (AttrValue::Num(x), false) => Envelope::Range { min: *x, max: *x },
                    _ => Envelope::Values {
                        values: BTreeSet::from([v]),
                    },
                })
            }
            Some(Envelope::Range { min, max }) => {
                if let Some(x) = v.as_f64() {
                    *min = min.min(x);
                    *max = max.max(x);
                }
            }
            Some(Envelope::Values { values }) => {
                values.insert(v);
            }
        }
    }

    /// True when no value in the envelope can satisfy `op`.
    pub fn excludes(&self, op: &PredicateOp, mode: EnvelopeMode) -> bool {
        match (self, mode) {
            (Envelope::Range { min, max }, EnvelopeMode::Full) => !op.may_match_range(*min, *max),
            (Envelope::Range { min, .. }, EnvelopeMode::MinimumOnly) => {
                !op.matches(&AttrValue::Num(*min))
            }
            (Envelope::Values { values }, EnvelopeMode::Full) => !values.iter().any(|v| op.matches(v)),
            (Envelope::Values { values }, EnvelopeMode::MinimumOnly) => {
                values.first().is_some_and(|v| !op.matches(v))
            }
        }
    }
}

/// How much of each envelope the exclusion test may look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    /// Both ends of the range (or the whole value set); never excludes a
    /// key that has a satisfying row.
    #[default]
    Full,
    /// Only the smallest value, which decides upper-bound filters exactly
    /// and may wrongly exclude keys for lower-bound or equality filters.
    MinimumOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CorrelationKey {
    pub table: String,
    pub key_column: String,
    pub attribute: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationMap {
    #[serde(with = "pair_list")]
    pub entries: BTreeMap<CorrelationKey, BTreeMap<i64, Envelope>>,
}

impl CorrelationMap {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, table: &str, key_column: &str, attribute: &str) -> Option<&BTreeMap<i64, Envelope>> {
        self.entries.get(&CorrelationKey {
            table: table.into(),
            key_column: key_column.into(),
            attribute: attribute.into(),
        })
    }

    /// Number of (key, envelope) pairs across all entries.
    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }
}

/// Keys to drop from star-group folds, per query column `alias.column`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExclusionSet {
    pub keys: BTreeMap<String, BTreeSet<i64>>,
}

impl ExclusionSet {
    pub fn is_empty(&self) -> bool {
        self.keys.values().all(BTreeSet::is_empty)
    }

    pub fn insert(&mut self, column: &ColumnRef, key: i64) {
        self.keys.entry(column.to_string()).or_default().insert(key);
    }

    pub fn get(&self, column: &ColumnRef) -> Option<&BTreeSet<i64>> {
        self.keys.get(&column.to_string())
    }

    /// Union of the exclusions of `columns`.
    pub fn for_columns(&self, columns: &[ColumnRef]) -> HashSet<i64> {
        columns
            .iter()
            .filter_map(|c| self.get(c))
            .flatten()
            .copied()
            .collect()
    }
}

/// Join templates to mine: the schema's own, or one template per foreign
/// key when none are declared.
pub fn effective_templates(schema: &Schema, templates: &[Vec<TemplateEdge>]) -> Vec<Vec<TemplateEdge>> {
    if !templates.is_empty() {
        return templates.to_vec();
    }
    schema
        .foreign_keys
        .iter()
        .map(|fk| {
            vec![TemplateEdge {
                left: fk.from.clone(),
                right: fk.to.clone(),
            }]
        })
        .collect()
}

fn template_query(template: &[TemplateEdge]) -> Query {
    let mut tables: Vec<TableRef> = Vec::new();
    let mut joins = Vec::new();
    for e in template {
        for end in [&e.left, &e.right] {
            if !tables.iter().any(|t| t.table == end.table) {
                tables.push(TableRef {
                    table: end.table.clone(),
                    alias: end.table.clone(),
                });
            }
        }
        // A self-referencing edge joins two copies of the table.
        let right_alias = if e.left.table == e.right.table {
            let alias = format!("{}_2", e.right.table);
            tables.push(TableRef {
                table: e.right.table.clone(),
                alias: alias.clone(),
            });
            alias
        } else {
            e.right.table.clone()
        };
        joins.push(JoinEdge::new(
            ColumnRef::new(&e.left.table, &e.left.column),
            ColumnRef::new(right_alias, &e.right.column),
        ));
    }
    Query {
        tables,
        joins,
        predicates: Vec::new(),
    }
}

/// Envelopes of one key column: attribute, then key.
type EnvelopesByAttr = BTreeMap<String, BTreeMap<i64, Envelope>>;

/// Envelopes of every other column of `data`, for rows whose `key_column`
/// holds one of `keys`. Rows with NULL in the attribute are skipped.
pub fn scan_envelopes(
    data: &TableData,
    key_column: &str,
    keys: &BTreeSet<i64>,
    classes: &BTreeMap<String, ColumnClass>,
) -> Result<BTreeMap<String, BTreeMap<i64, Envelope>>> {
    let key_col = data.column(key_column).ok_or_else(|| Error::MissingColumn {
        table: data.name().to_string(),
        column: key_column.to_string(),
    })?;
    let mut out = BTreeMap::new();
    for (def, col) in data.def.columns.iter().zip(&data.columns) {
        if def.name == key_column {
            continue;
        }
        let categorical = classes.get(&def.name) == Some(&ColumnClass::Categorical);
        let mut env: BTreeMap<i64, Option<Envelope>> = BTreeMap::new();
        for row in 0..data.row_count {
            let Some(k) = key_col.int(row) else { continue };
            if !keys.contains(&k) {
                continue;
            }
            if let Some(v) = col.value(row) {
                Envelope::observe(env.entry(k).or_default(), v, categorical);
            }
        }
        let env: BTreeMap<i64, Envelope> = env
            .into_iter()
            .filter_map(|(k, e)| e.map(|e| (k, e)))
            .collect();
        if !env.is_empty() {
            out.insert(def.name.clone(), env);
        }
    }
    Ok(out)
}

/// Collect the dominant keys of every star group of every template and
/// record attribute envelopes for them.
pub fn discover_correlations(
    state: &State,
    templates: &[Vec<TemplateEdge>],
    tables: &BTreeMap<String, TableData>,
) -> Result<CorrelationMap> {
    let mut wanted: BTreeMap<(String, String), BTreeSet<i64>> = BTreeMap::new();
    for template in effective_templates(&state.schema, templates) {
        let q = template_query(&template);
        let plan = decompose(&q, &state.schema)?;
        let pq = PlannedQuery { query: q, plan };
        let folds = group_folds(&pq, state)?;
        for (group, fold) in pq.plan.groups.iter().zip(&folds) {
            let keys: Vec<i64> = fold
                .top_join_keys(MAX_DOMINANT_KEYS)
                .into_iter()
                .map(|(k, _)| k)
                .collect();
            if keys.is_empty() {
                continue;
            }
            for m in &group.members {
                let table = pq.query.table_of(&m.alias).expect("template alias");
                wanted
                    .entry((table.to_string(), m.column.clone()))
                    .or_default()
                    .extend(keys.iter().copied());
            }
        }
    }
    let scanned: Vec<(String, String, EnvelopesByAttr)> = wanted
        .into_par_iter()
        .map(|((table, column), keys)| {
            let data = tables
                .get(&table)
                .ok_or_else(|| Error::MissingHistogram(format!("no data for table {table}")))?;
            let classes = &state.table(&table)?.classes;
            let env = scan_envelopes(data, &column, &keys, classes)?;
            Ok((table, column, env))
        })
        .collect::<Result<_>>()?;
    let mut map = CorrelationMap::default();
    for (table, column, per_attr) in scanned {
        for (attribute, env) in per_attr {
            map.entries.insert(
                CorrelationKey {
                    table: table.clone(),
                    key_column: column.clone(),
                    attribute,
                },
                env,
            );
        }
    }
    Ok(map)
}

pub fn find_excluded_keys(query: &Query, cmap: &CorrelationMap) -> ExclusionSet {
    find_excluded_keys_with(query, cmap, EnvelopeMode::Full)
}

/// For each filter, exclude the dominant keys of the filtered table whose
/// envelope cannot satisfy it. Filters on attributes without recorded
/// envelopes exclude nothing.
pub fn find_excluded_keys_with(query: &Query, cmap: &CorrelationMap, mode: EnvelopeMode) -> ExclusionSet {
    let mut out = ExclusionSet::default();
    for p in &query.predicates {
        let Some(table) = query.table_of(&p.column.alias) else {
            continue;
        };
        for (ck, envs) in &cmap.entries {
            if ck.table != table || ck.attribute != p.column.column {
                continue;
            }
            let col = ColumnRef::new(p.column.alias.as_str(), ck.key_column.as_str());
            for (&k, env) in envs {
                if env.excludes(&p.op, mode) {
                    out.insert(&col, k);
                }
            }
        }
    }
    out
}
