//! Seeded generators for skewed relational test data and matching query
//! workloads.
//!
//! Foreign keys are drawn by Zipf rank and mapped to key values through a
//! random permutation that is shared by every column referencing the same
//! primary key. Heavy keys therefore coincide across tables, which is what
//! makes join sizes hard to estimate from per-table summaries.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::catalog::{
    ColumnData, ColumnDef, ColumnRole, ForeignKey, QualifiedColumn, Schema, TableData, TableDef,
    UnionFind, ValueKind, DEFAULT_CATEGORICAL_THRESHOLD,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One hub table; every other table references its key.
    Star,
    /// Each table references the previous one.
    Chain,
    /// Users/posts/comments/votes/badges: stars on two keys linked by posts.
    ChainStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeMode {
    /// Attributes uniform on `[0, range)`, independent of every key.
    Independent { range: i64 },
    /// The attribute of each table is the Zipf rank of its first key plus a
    /// uniform offset in `[0, noise]`: frequent keys get small values.
    Correlated { noise: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub tables: usize,
    pub rows: usize,
    pub layout: Layout,
    pub skew: f64,
    pub attributes: AttributeMode,
    /// Fraction of foreign-key cells left NULL.
    pub null_fraction: f64,
}

impl SyntheticSpec {
    pub fn new(layout: Layout, tables: usize, rows: usize, skew: f64) -> Self {
        SyntheticSpec {
            tables,
            rows,
            layout,
            skew,
            attributes: AttributeMode::Independent { range: 100 },
            null_fraction: 0.0,
        }
    }

    pub fn correlated(mut self, noise: i64) -> Self {
        self.attributes = AttributeMode::Correlated { noise };
        self
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::InvalidArgument("rows must be at least 1".into()));
        }
        if !self.skew.is_finite() || self.skew < 0.0 {
            return Err(Error::InvalidArgument("skew must be a finite value >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.null_fraction) {
            return Err(Error::InvalidArgument("null fraction must lie in [0, 1)".into()));
        }
        let max = match self.layout {
            Layout::ChainStar => 5,
            _ => usize::MAX,
        };
        if self.tables < 2 || self.tables > max {
            return Err(Error::InvalidArgument(format!(
                "{:?} layout needs between 2 and {max} tables",
                self.layout
            )));
        }
        match self.attributes {
            AttributeMode::Independent { range } if range < 1 => {
                Err(Error::InvalidArgument("attribute range must be at least 1".into()))
            }
            AttributeMode::Correlated { noise } if noise < 0 => {
                Err(Error::InvalidArgument("noise must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Generated tables plus the schema describing them.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub schema: Schema,
    pub tables: BTreeMap<String, TableData>,
    /// `(table, key column, attribute)` for attributes derived from a key's
    /// rank.
    pub correlated: Vec<(String, String, String)>,
}

impl SyntheticData {
    /// Write one CSV per table and `schema.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for t in self.tables.values() {
            t.write_csv_file(dir.join(&t.def.file))?;
        }
        let path = dir.join("schema.json");
        std::fs::write(&path, self.schema.to_json()).map_err(|e| Error::io(&path, e))
    }
}

/// Table blueprint: name, primary key, foreign keys `(column, parent)`, and
/// the attribute column.
struct Blueprint {
    name: String,
    pk: Option<String>,
    fks: Vec<(String, String)>,
    attr: String,
}

fn blueprints(spec: &SyntheticSpec) -> Vec<Blueprint> {
    let bp = |name: &str, pk: Option<&str>, fks: &[(&str, &str)], attr: &str| Blueprint {
        name: name.into(),
        pk: pk.map(Into::into),
        fks: fks.iter().map(|(c, p)| (c.to_string(), p.to_string())).collect(),
        attr: attr.into(),
    };
    match spec.layout {
        Layout::Star => (0..spec.tables)
            .map(|i| {
                if i == 0 {
                    bp("t0", Some("id"), &[], "a")
                } else {
                    bp(&format!("t{i}"), None, &[("k", "t0")], "a")
                }
            })
            .collect(),
        Layout::Chain => (0..spec.tables)
            .map(|i| {
                if i == 0 {
                    bp("t0", Some("id"), &[], "a")
                } else {
                    let parent = format!("t{}", i - 1);
                    bp(&format!("t{i}"), Some("id"), &[("p", parent.as_str())], "a")
                }
            })
            .collect(),
        Layout::ChainStar => [
            bp("users", Some("Id"), &[], "Reputation"),
            bp("posts", Some("Id"), &[("OwnerUserId", "users")], "Score"),
            bp(
                "comments",
                None,
                &[("PostId", "posts"), ("UserId", "users")],
                "Score",
            ),
            bp(
                "votes",
                None,
                &[("PostId", "posts"), ("UserId", "users")],
                "BountyAmount",
            ),
            bp("badges", None, &[("UserId", "users")], "Class"),
        ]
        .into_iter()
        .take(spec.tables)
        .collect(),
    }
}

fn int_col(name: &str, role: ColumnRole) -> ColumnDef {
    ColumnDef {
        name: name.into(),
        kind: ValueKind::Integer,
        role,
        categorical: false,
    }
}

/// Deterministic for a fixed `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bps = blueprints(spec);
    let pk_of: BTreeMap<String, String> = bps
        .iter()
        .filter_map(|b| b.pk.clone().map(|pk| (b.name.clone(), pk)))
        .collect();

    // rank (0-based) -> key value, and key value -> rank, per referenced table.
    let n = spec.rows;
    let mut perms: BTreeMap<String, (Vec<i64>, Vec<usize>)> = BTreeMap::new();
    for b in &bps {
        if b.pk.is_some() {
            let mut keys: Vec<i64> = (1..=n as i64).collect();
            keys.shuffle(&mut rng);
            let mut rank_of = vec![0usize; n + 1];
            for (r, &k) in keys.iter().enumerate() {
                rank_of[k as usize] = r;
            }
            perms.insert(b.name.clone(), (keys, rank_of));
        }
    }
    let zipf = Zipf::new(n as f64, spec.skew)
        .map_err(|e| Error::InvalidArgument(format!("zipf parameters: {e}")))?;

    let mut tables = BTreeMap::new();
    let mut defs = Vec::new();
    let mut fks = Vec::new();
    let mut correlated = Vec::new();
    for b in &bps {
        let mut columns = Vec::new();
        let mut data = Vec::new();
        // Rank of each row's first key, for correlated attributes.
        let mut ranks: Vec<Option<usize>> = vec![None; n];
        if let Some(pk) = &b.pk {
            columns.push(int_col(pk, ColumnRole::Key));
            data.push(ColumnData::Integer((1..=n as i64).map(Some).collect()));
            let rank_of = &perms[&b.name].1;
            for (row, r) in ranks.iter_mut().enumerate() {
                *r = Some(rank_of[row + 1]);
            }
        }
        let mut first_fk: Option<String> = None;
        for (col, parent) in &b.fks {
            columns.push(int_col(col, ColumnRole::Key));
            fks.push(ForeignKey {
                from: QualifiedColumn::new(&b.name, col),
                to: QualifiedColumn::new(parent, &pk_of[parent]),
            });
            let keys = &perms[parent].0;
            let mut vals = Vec::with_capacity(n);
            for rank_slot in ranks.iter_mut() {
                let rank = (zipf.sample(&mut rng) as usize).clamp(1, n) - 1;
                let null = spec.null_fraction > 0.0 && rng.random::<f64>() < spec.null_fraction;
                if b.pk.is_none() && first_fk.is_none() {
                    *rank_slot = (!null).then_some(rank);
                }
                vals.push((!null).then(|| keys[rank]));
            }
            if first_fk.is_none() {
                first_fk = Some(col.clone());
            }
            data.push(ColumnData::Integer(vals));
        }
        columns.push(int_col(&b.attr, ColumnRole::Attribute));
        let attr: Vec<Option<i64>> = match spec.attributes {
            AttributeMode::Independent { range } => {
                (0..n).map(|_| Some(rng.random_range(0..range))).collect()
            }
            AttributeMode::Correlated { noise } => ranks
                .iter()
                .map(|r| {
                    let off = rng.random_range(0..=noise);
                    r.map(|r| r as i64 + off)
                })
                .collect(),
        };
        if matches!(spec.attributes, AttributeMode::Correlated { .. }) {
            let key = b.pk.clone().or_else(|| first_fk.clone()).expect("table has a key");
            correlated.push((b.name.clone(), key, b.attr.clone()));
        }
        data.push(ColumnData::Integer(attr));
        let def = TableDef {
            name: b.name.clone(),
            file: format!("{}.csv", b.name).into(),
            columns,
            primary_key: b.pk.clone(),
        };
        defs.push(def.clone());
        tables.insert(b.name.clone(), TableData::new(def, data)?);
    }
    let schema = Schema {
        tables: defs,
        foreign_keys: fks,
        categorical_threshold: DEFAULT_CATEGORICAL_THRESHOLD,
        templates: Vec::new(),
        base_dir: Default::default(),
    };
    schema.validate()?;
    Ok(SyntheticData {
        schema,
        tables,
        correlated,
    })
}

fn render_query(tables: &[&str], edges: &[&ForeignKey], preds: &[String]) -> String {
    let mut conds: Vec<String> = edges
        .iter()
        .map(|fk| format!("{} = {}", fk.from, fk.to))
        .collect();
    conds.extend(preds.iter().cloned());
    let mut s = format!("SELECT COUNT(*) FROM {}", tables.join(", "));
    if !conds.is_empty() {
        s.push_str(" WHERE ");
        s.push_str(&conds.join(" AND "));
    }
    s
}

/// Spanning tree of the foreign-key graph over `subset`, taking edges in
/// the given order; `None` when the subset is not connected.
fn spanning_edges<'a>(subset: &[&str], fks: &[&'a ForeignKey]) -> Option<Vec<&'a ForeignKey>> {
    let mut uf: UnionFind<&str> = UnionFind::default();
    let mut edges = Vec::new();
    for fk in fks {
        let (a, b) = (fk.from.table.as_str(), fk.to.table.as_str());
        if a != b && subset.contains(&a) && subset.contains(&b) && uf.union(a, b) {
            edges.push(*fk);
        }
    }
    (edges.len() + 1 == subset.len()).then_some(edges)
}

/// Every connected subset of at least two tables, joined along a spanning
/// tree of foreign keys taken in declaration order and again in reverse
/// order (duplicates removed). Queries have no filters.
pub fn pure_join_workload(schema: &Schema) -> Vec<String> {
    let names: Vec<&str> = schema.tables.iter().map(|t| t.name.as_str()).collect();
    let forward: Vec<&ForeignKey> = schema.foreign_keys.iter().collect();
    let backward: Vec<&ForeignKey> = forward.iter().rev().copied().collect();
    let mut out = Vec::new();
    for mask in 1u64..(1u64 << names.len().min(16)) {
        if mask.count_ones() < 2 {
            continue;
        }
        let subset: Vec<&str> = names
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, n)| *n)
            .collect();
        for order in [&forward, &backward] {
            if let Some(mut edges) = spanning_edges(&subset, order) {
                edges.sort_by_key(|fk| (fk.from.to_string(), fk.to.to_string()));
                let q = render_query(&subset, &edges, &[]);
                if !out.contains(&q) {
                    out.push(q);
                }
            }
        }
    }
    out
}

/// Queries whose filters remove the most frequent keys: each correlated
/// attribute gets a lower bound of `t` for every threshold `t`, on the
/// table joined with its key's parent and, when one exists, a sibling
/// table referencing the same parent.
pub fn djpcd_workload(data: &SyntheticData, thresholds: &[i64]) -> Vec<String> {
    let schema = &data.schema;
    let mut out = Vec::new();
    for (table, key, attr) in &data.correlated {
        let Some(fk) = schema
            .foreign_keys
            .iter()
            .find(|fk| fk.from.table == *table && fk.from.column == *key)
        else {
            continue;
        };
        let sibling = schema
            .foreign_keys
            .iter()
            .find(|s| s.to == fk.to && s.from.table != *table && s.from.table != fk.to.table);
        for &t in thresholds {
            let pred = format!("{table}.{attr} >= {t}");
            let mut tabs = vec![fk.to.table.as_str(), table.as_str()];
            let mut edges = vec![fk];
            out.push(render_query(&tabs, &edges, std::slice::from_ref(&pred)));
            if let Some(s) = sibling {
                tabs.push(s.from.table.as_str());
                edges.push(s);
                out.push(render_query(&tabs, &edges, &[pred]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn freqs(col: &ColumnData) -> Vec<u64> {
        let mut m: BTreeMap<i64, u64> = BTreeMap::new();
        for v in col.as_integers().unwrap().iter().flatten() {
            *m.entry(*v).or_default() += 1;
        }
        let mut f: Vec<u64> = m.into_values().collect();
        f.sort_unstable_by(|a, b| b.cmp(a));
        f
    }

    #[test]
    fn fixed_seed_gives_identical_csv() {
        let spec = SyntheticSpec::new(Layout::ChainStar, 5, 500, 1.2);
        let a = generate_synthetic(&spec, 7).unwrap();
        let b = generate_synthetic(&spec, 7).unwrap();
        for (name, t) in &a.tables {
            let mut x = Vec::new();
            let mut y = Vec::new();
            t.write_csv(&mut x).unwrap();
            b.tables[name].write_csv(&mut y).unwrap();
            assert_eq!(x, y, "{name}");
        }
        let c = generate_synthetic(&spec, 8).unwrap();
        assert_ne!(
            a.tables["posts"].column("OwnerUserId"),
            c.tables["posts"].column("OwnerUserId")
        );
    }

    #[test]
    fn skew_zero_is_uniform() {
        let rows = 10_000;
        let spec = SyntheticSpec::new(Layout::Star, 2, rows, 0.0);
        let d = generate_synthetic(&spec, 1).unwrap();
        let f = freqs(d.tables["t1"].column("k").unwrap());
        let mean = 1.0;
        // Each key's count is Binomial(rows, 1/rows); the top of 10^4 such
        // counts stays far below mean + 10 sigma.
        assert!((f[0] as f64) < mean + 10.0, "top frequency {}", f[0]);
    }

    #[test]
    fn skewed_keys_concentrate_mass() {
        let rows = 10_000;
        let spec = SyntheticSpec::new(Layout::Star, 2, rows, 1.2);
        let d = generate_synthetic(&spec, 1).unwrap();
        let f = freqs(d.tables["t1"].column("k").unwrap());
        let top10: u64 = f.iter().take(10).sum();
        assert!(top10 as f64 > 0.3 * rows as f64, "top-10 mass {top10}");
    }

    #[test]
    fn heavy_keys_coincide_across_tables() {
        let spec = SyntheticSpec::new(Layout::Star, 3, 2000, 1.2);
        let d = generate_synthetic(&spec, 3).unwrap();
        let top = |t: &str| {
            let col = d.tables[t].column("k").unwrap().as_integers().unwrap().to_vec();
            let mut m: BTreeMap<i64, u64> = BTreeMap::new();
            for v in col.iter().flatten() {
                *m.entry(*v).or_default() += 1;
            }
            m.into_iter().max_by_key(|(k, c)| (*c, -k)).unwrap().0
        };
        assert_eq!(top("t1"), top("t2"));
    }

    #[test]
    fn correlated_attributes_follow_rank() {
        let spec = SyntheticSpec::new(Layout::Star, 2, 1000, 1.2).correlated(3);
        let d = generate_synthetic(&spec, 5).unwrap();
        let t = &d.tables["t1"];
        let a = t.column("a").unwrap().as_integers().unwrap();
        let k = t.column("k").unwrap().as_integers().unwrap();
        let mut m: BTreeMap<i64, u64> = BTreeMap::new();
        for v in k.iter().flatten() {
            *m.entry(*v).or_default() += 1;
        }
        let heavy = m.iter().max_by_key(|(_, c)| **c).unwrap().0;
        for (ki, ai) in k.iter().zip(a) {
            if ki == &Some(*heavy) {
                assert!(ai.unwrap() <= 3);
            }
        }
        assert!(d.correlated.contains(&("t1".into(), "k".into(), "a".into())));
    }

    #[test]
    fn workloads_are_connected_and_acyclic() {
        let spec = SyntheticSpec::new(Layout::ChainStar, 5, 100, 1.2);
        let d = generate_synthetic(&spec, 1).unwrap();
        let w = pure_join_workload(&d.schema);
        assert!(w.len() >= 20, "{}", w.len());
        for q in &w {
            let parsed = crate::query::parse_query(q, &d.schema).unwrap();
            crate::query::decompose(&parsed, &d.schema).unwrap();
        }
        let spec = SyntheticSpec::new(Layout::Star, 3, 100, 1.2).correlated(2);
        let d = generate_synthetic(&spec, 1).unwrap();
        let w = djpcd_workload(&d, &[10, 50]);
        assert_eq!(w.len(), 8);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_synthetic(&SyntheticSpec::new(Layout::Star, 1, 10, 1.0), 0).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(Layout::Star, 2, 0, 1.0), 0).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(Layout::Star, 2, 10, -1.0), 0).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(Layout::ChainStar, 6, 10, 1.0), 0).is_err());
    }
}
