//! The persisted model: key domains, every histogram of every table and
//! the dominant-key correlation map, stored as one JSON document.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{
    classify_columns, infer_key_domains, ColumnClass, ColumnData, KeyDomain, QualifiedColumn,
    Schema, TableData, DEFAULT_CATEGORICAL_THRESHOLD,
};
use crate::djpcd::{discover_correlations, CorrelationMap};
use crate::error::{Error, Result};
use crate::hist::{
    attribute_binning, build_frequency_hist, build_tkhist1d, build_tkhist2d_split, AttrBinning,
    AttrHist, AttrValue, FrequencyHist, TkHist1D, TkHist2D,
};

pub const STATE_MAGIC: &str = "TKHIST-STATE-v1";
pub const STATE_VERSION: u32 = 1;
pub const DEFAULT_BIN_COUNT: usize = 200;
pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub bin_count: usize,
    pub k: usize,
    pub categorical_threshold: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            bin_count: DEFAULT_BIN_COUNT,
            k: DEFAULT_TOP_K,
            categorical_threshold: DEFAULT_CATEGORICAL_THRESHOLD,
        }
    }
}

impl BuildConfig {
    pub fn new(bin_count: usize, k: usize) -> Self {
        BuildConfig {
            bin_count,
            k,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bin_count == 0 {
            return Err(Error::InvalidArgument("bin count must be at least 1".into()));
        }
        if self.categorical_threshold == 0 {
            return Err(Error::InvalidArgument(
                "categorical threshold must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Every histogram of one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub row_count: u64,
    pub classes: BTreeMap<String, ColumnClass>,
    /// One top-k histogram per key column that belongs to a key domain.
    pub key_hists: BTreeMap<String, TkHist1D>,
    /// Key column against every other column, keyed `"key/other"`.
    pub hists_2d: BTreeMap<String, TkHist2D>,
    /// Exact value counts of categorical columns.
    pub freq_hists: BTreeMap<String, FrequencyHist>,
    /// Marginal histograms of every column outside the key domains.
    pub attr_hists: BTreeMap<String, AttrHist>,
}

pub fn hist_2d_name(key: &str, other: &str) -> String {
    format!("{key}/{other}")
}

impl TableStats {
    pub fn key_hist(&self, table: &str, column: &str) -> Result<&TkHist1D> {
        self.key_hists
            .get(column)
            .ok_or_else(|| Error::MissingHistogram(format!("{table}.{column}")))
    }

    pub fn hist_2d(&self, table: &str, key: &str, other: &str) -> Result<&TkHist2D> {
        self.hists_2d
            .get(&hist_2d_name(key, other))
            .ok_or_else(|| Error::MissingHistogram(format!("{table}.({key}, {other})")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub magic: String,
    pub version: u32,
    pub config: BuildConfig,
    pub schema: Schema,
    pub domains: Vec<KeyDomain>,
    pub tables: BTreeMap<String, TableStats>,
    pub correlations: CorrelationMap,
}

impl State {
    pub fn table(&self, name: &str) -> Result<&TableStats> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::MissingHistogram(format!("table {name}")))
    }

    pub fn domain(&self, id: &str) -> Result<&KeyDomain> {
        self.domains
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| Error::MissingHistogram(format!("key domain {id}")))
    }

    pub fn domain_of(&self, table: &str, column: &str) -> Option<&KeyDomain> {
        let q = QualifiedColumn::new(table, column);
        self.domains.iter().find(|d| d.members.contains(&q))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    /// Size in bytes of the serialized model without the per-bin
    /// background value sets kept for incremental inserts.
    pub fn model_size(&self) -> usize {
        let mut stripped = self.clone();
        for t in stripped.tables.values_mut() {
            for h in t.key_hists.values_mut() {
                *h = h.without_update_tracking();
            }
        }
        stripped.to_json().len()
    }
}

fn column_bounds(col: &ColumnData) -> Option<(i64, i64)> {
    let ints = col.as_integers()?;
    let mut it = ints.iter().flatten();
    let first = *it.next()?;
    Some(it.fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
}

/// Build every histogram for `tables`, then discover dominant-key
/// correlations over the schema's join templates.
pub fn build_state(
    schema: &Schema,
    tables: &BTreeMap<String, TableData>,
    config: BuildConfig,
) -> Result<State> {
    config.validate()?;
    for def in &schema.tables {
        if !tables.contains_key(&def.name) {
            return Err(Error::MissingHistogram(format!("no data for table {}", def.name)));
        }
    }
    let mut domains = infer_key_domains(schema);
    for d in &mut domains {
        let mut bounds: Option<(i64, i64)> = None;
        for m in &d.members {
            let col = tables
                .get(&m.table)
                .and_then(|t| t.column(&m.column))
                .ok_or_else(|| Error::MissingColumn {
                    table: m.table.clone(),
                    column: m.column.clone(),
                })?;
            if let Some((lo, hi)) = column_bounds(col) {
                bounds = Some(match bounds {
                    None => (lo, hi),
                    Some((a, b)) => (a.min(lo), b.max(hi)),
                });
            }
        }
        let (lo, hi) = bounds.unwrap_or((0, 0));
        d.set_bounds(lo, hi, config.bin_count)?;
    }

    let built: Vec<(String, TableStats)> = schema
        .tables
        .par_iter()
        .map(|def| {
            let data = &tables[&def.name];
            build_table_stats(data, &domains, &config).map(|s| (def.name.clone(), s))
        })
        .collect::<Result<_>>()?;

    let mut state = State {
        magic: STATE_MAGIC.to_string(),
        version: STATE_VERSION,
        config,
        schema: schema.clone(),
        domains,
        tables: built.into_iter().collect(),
        correlations: CorrelationMap::default(),
    };
    state.correlations = discover_correlations(&state, &schema.templates, tables)?;
    Ok(state)
}

fn domain_for<'a>(domains: &'a [KeyDomain], table: &str, column: &str) -> Option<&'a KeyDomain> {
    let q = QualifiedColumn::new(table, column);
    domains.iter().find(|d| d.members.contains(&q))
}

fn build_table_stats(
    data: &TableData,
    domains: &[KeyDomain],
    config: &BuildConfig,
) -> Result<TableStats> {
    let table = data.name();
    let classes_vec = classify_columns(data, config.categorical_threshold);
    let classes: BTreeMap<String, ColumnClass> = data
        .def
        .columns
        .iter()
        .zip(&classes_vec)
        .map(|(c, k)| (c.name.clone(), *k))
        .collect();

    let mut binnings: BTreeMap<String, AttrBinning> = BTreeMap::new();
    let mut key_hists = BTreeMap::new();
    for (def, col) in data.def.columns.iter().zip(&data.columns) {
        match domain_for(domains, table, &def.name) {
            Some(d) => {
                let ints = col.as_integers().ok_or_else(|| {
                    Error::InvalidSchema(format!("key column {table}.{} is not integer", def.name))
                })?;
                key_hists.insert(def.name.clone(), build_tkhist1d(ints, d, config.k)?);
                binnings.insert(
                    def.name.clone(),
                    AttrBinning::EquiWidth {
                        bins: *d.bins()?,
                        integer: true,
                    },
                );
            }
            None => {
                let class = match classes[&def.name] {
                    ColumnClass::Key => ColumnClass::Numeric,
                    c => c,
                };
                binnings.insert(
                    def.name.clone(),
                    attribute_binning(col, class, config.bin_count)?,
                );
            }
        }
    }

    let mut hists_2d = BTreeMap::new();
    for (key, h1) in &key_hists {
        let d = domain_for(domains, table, key).expect("key hist has a domain");
        let keys = data.column(key).and_then(ColumnData::as_integers).expect("integer key");
        for other in &data.def.columns {
            if other.name == *key {
                continue;
            }
            let col = data.column(&other.name).expect("declared column");
            let h = build_tkhist2d_split(keys, col, d, binnings[&other.name].clone(), h1)?
                .named(key, &other.name);
            hists_2d.insert(hist_2d_name(key, &other.name), h);
        }
    }

    let mut freq_hists = BTreeMap::new();
    let mut attr_hists = BTreeMap::new();
    for (def, col) in data.def.columns.iter().zip(&data.columns) {
        if classes[&def.name] == ColumnClass::Categorical {
            freq_hists.insert(def.name.clone(), build_frequency_hist(col));
        }
        if !key_hists.contains_key(&def.name) {
            attr_hists.insert(
                def.name.clone(),
                AttrHist::build(col, binnings[&def.name].clone()),
            );
        }
    }

    Ok(TableStats {
        row_count: data.row_count as u64,
        classes,
        key_hists,
        hists_2d,
        freq_hists,
        attr_hists,
    })
}

/// Write atomically: the document goes to a sibling temporary file which
/// is then renamed over `path`.
pub fn save_state(state: &State, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "state".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(state.to_json().as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[derive(Deserialize)]
struct Header {
    magic: Option<String>,
    version: Option<u32>,
}

pub fn load_state(path: impl AsRef<Path>) -> Result<State> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    state_from_json(&text)
}

pub fn state_from_json(text: &str) -> Result<State> {
    let header: Header = serde_json::from_str(text).map_err(|_| Error::UnrecognizedState)?;
    if header.magic.as_deref() != Some(STATE_MAGIC) {
        return Err(Error::UnrecognizedState);
    }
    match header.version {
        Some(STATE_VERSION) => {}
        Some(found) => {
            return Err(Error::StateVersion {
                found,
                expected: STATE_VERSION,
            })
        }
        None => return Err(Error::CorruptState("missing version".into())),
    }
    let state: State =
        serde_json::from_str(text).map_err(|e| Error::CorruptState(e.to_string()))?;
    state
        .schema
        .validate()
        .map_err(|e| Error::CorruptState(e.to_string()))?;
    Ok(state)
}

/// Outcome of an incremental insert batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UpdateReport {
    pub accepted: usize,
    /// 1-based row number and reason for every rejected row.
    pub rejected: Vec<(usize, String)>,
}

/// Insert `rows` into the histograms of their table. Rows whose keys fall
/// outside a domain, or whose values fall outside a fixed binning, are
/// rejected without touching any histogram.
pub fn apply_update(state: &mut State, rows: &TableData) -> Result<UpdateReport> {
    let table = rows.name().to_string();
    let stats = state
        .tables
        .get_mut(&table)
        .ok_or_else(|| Error::UnknownTable(table.clone()))?;
    let mut report = UpdateReport::default();
    let cols: Vec<&str> = rows.def.columns.iter().map(|c| c.name.as_str()).collect();
    for name in stats.classes.keys() {
        if !cols.contains(&name.as_str()) {
            return Err(Error::MissingColumn {
                table: table.clone(),
                column: name.clone(),
            });
        }
    }
    for row in 0..rows.row_count {
        let value = |c: &str| rows.column(c).and_then(|col| col.value(row));
        if let Err(reason) = check_row(stats, &value) {
            report.rejected.push((row + 1, reason));
            continue;
        }
        for h2 in stats.hists_2d.values_mut() {
            let Some(k) = rows.column(&h2.key_column).and_then(|c| c.int(row)) else {
                continue;
            };
            let tracked = stats.key_hists[&h2.key_column].is_tracked(k);
            h2.insert(k, value(&h2.attr_column).as_ref(), tracked)?;
        }
        for (col, h) in stats.key_hists.iter_mut() {
            if let Some(k) = rows.column(col).and_then(|c| c.int(row)) {
                h.insert_tuple(k)?;
            }
        }
        for (col, h) in stats.freq_hists.iter_mut() {
            if let Some(v) = value(col) {
                h.insert(v);
            }
        }
        for (col, h) in stats.attr_hists.iter_mut() {
            h.insert(value(col).as_ref());
        }
        stats.row_count += 1;
        report.accepted += 1;
    }
    Ok(report)
}

fn check_row(
    stats: &TableStats,
    value: &dyn Fn(&str) -> Option<AttrValue>,
) -> std::result::Result<(), String> {
    for (col, h) in &stats.key_hists {
        if let Some(v) = value(col) {
            let k = v.as_f64().unwrap_or(f64::NAN) as i64;
            if h.locate(k).is_err() {
                return Err(format!(
                    "{col}={k} outside key domain {} [{}, {}]",
                    h.domain, h.global_min, h.global_max
                ));
            }
        }
    }
    for h in stats.hists_2d.values() {
        if !h.accepts(value(&h.attr_column).as_ref()) {
            return Err(format!(
                "{}={} outside the histogram binning",
                h.attr_column,
                value(&h.attr_column).map(|v| v.to_string()).unwrap_or_default()
            ));
        }
    }
    for (col, h) in &stats.attr_hists {
        if let Some(v) = value(col) {
            if h.binning.locate(&v).is_none() {
                return Err(format!("{col}={v} outside the histogram binning"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnDef, ColumnRole, TableDef, ValueKind};

    fn schema() -> Schema {
        let text = r#"{
          "tables": [
            {"name": "r", "file": "r.csv", "primary_key": "id", "columns": [
              {"name": "id", "kind": "integer", "role": "key"},
              {"name": "y", "kind": "integer", "role": "attribute"}]},
            {"name": "s", "file": "s.csv", "columns": [
              {"name": "rid", "kind": "integer", "role": "key"},
              {"name": "tag", "kind": "categorical", "role": "attribute"}]}
          ],
          "foreign_keys": [{"from": "s.rid", "to": "r.id"}]
        }"#;
        Schema::from_json(text, ".").unwrap()
    }

    fn data(s: &Schema) -> BTreeMap<String, TableData> {
        let r = TableData::new(
            s.table("r").unwrap().clone(),
            vec![
                ColumnData::Integer((1..=6).map(Some).collect()),
                ColumnData::Integer(vec![Some(5), Some(9), Some(5), None, Some(7), Some(1)]),
            ],
        )
        .unwrap();
        let st = TableData::new(
            s.table("s").unwrap().clone(),
            vec![
                ColumnData::Integer(vec![Some(1), Some(1), Some(1), Some(2), None]),
                ColumnData::Text(
                    ["a", "b", "a", "c", "a"]
                        .iter()
                        .map(|v| Some(v.to_string()))
                        .collect(),
                ),
            ],
        )
        .unwrap();
        [("r".to_string(), r), ("s".to_string(), st)].into_iter().collect()
    }

    #[test]
    fn builds_every_histogram() {
        let s = schema();
        let st = build_state(&s, &data(&s), BuildConfig::new(2, 1)).unwrap();
        assert_eq!(st.domains.len(), 1);
        let r = st.table("r").unwrap();
        assert_eq!(r.row_count, 6);
        assert!(r.key_hists.contains_key("id"));
        assert!(r.hists_2d.contains_key("id/y"));
        let sst = st.table("s").unwrap();
        assert!(sst.hists_2d.contains_key("rid/tag"));
        assert_eq!(sst.freq_hists["tag"].total(), 5);
        let h = &sst.key_hists["rid"];
        let rows: u64 = h.bins.iter().map(|b| b.total()).sum();
        assert_eq!(rows, 4);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let s = schema();
        let st = build_state(&s, &data(&s), BuildConfig::new(3, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("state.json");
        save_state(&st, &p).unwrap();
        let back = load_state(&p).unwrap();
        // The data directory is a property of the schema file, not the state.
        let mut expected = st.clone();
        expected.schema.base_dir = back.schema.base_dir.clone();
        assert_eq!(back, expected);
        let p2 = dir.path().join("again.json");
        save_state(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn wrong_magic_is_unrecognized() {
        let err = state_from_json(r#"{"magic": "NOPE", "version": 1}"#).unwrap_err();
        assert_eq!(err.to_string(), "unrecognized state file");
        assert!(matches!(state_from_json("not json"), Err(Error::UnrecognizedState)));
        assert!(matches!(
            state_from_json(r#"{"magic": "TKHIST-STATE-v1", "version": 9}"#),
            Err(Error::StateVersion { found: 9, .. })
        ));
        assert!(matches!(
            state_from_json(r#"{"magic": "TKHIST-STATE-v1", "version": 1}"#),
            Err(Error::CorruptState(_))
        ));
    }

    #[test]
    fn update_rejects_out_of_domain_keys() {
        let s = schema();
        let mut st = build_state(&s, &data(&s), BuildConfig::new(2, 1)).unwrap();
        let def = TableDef {
            name: "s".into(),
            file: "s.csv".into(),
            columns: vec![
                ColumnDef {
                    name: "rid".into(),
                    kind: ValueKind::Integer,
                    role: ColumnRole::Key,
                    categorical: false,
                },
                ColumnDef {
                    name: "tag".into(),
                    kind: ValueKind::Categorical,
                    role: ColumnRole::Attribute,
                    categorical: false,
                },
            ],
            primary_key: None,
        };
        let rows = TableData::new(
            def,
            vec![
                ColumnData::Integer(vec![Some(1), Some(99), Some(3)]),
                ColumnData::Text(vec![Some("a".into()), Some("a".into()), Some("zz".into())]),
            ],
        )
        .unwrap();
        let before = st.table("s").unwrap().key_hists["rid"].clone();
        let report = apply_update(&mut st, &rows).unwrap();
        assert_eq!(report.accepted, 1);
        assert_eq!(report.rejected.len(), 2);
        assert_eq!(report.rejected[0].0, 2);
        let after = &st.table("s").unwrap().key_hists["rid"];
        let b = after.locate(1).unwrap();
        assert_eq!(
            after.bins[b].container.get(1),
            before.bins[b].container.get(1).map(|c| c + 1)
        );
        assert_eq!(st.table("s").unwrap().row_count, 6);
    }

    #[test]
    fn model_size_excludes_tracking_sets() {
        let s = schema();
        let st = build_state(&s, &data(&s), BuildConfig::new(2, 0)).unwrap();
        assert!(st.model_size() < st.to_json().len());
    }
}
