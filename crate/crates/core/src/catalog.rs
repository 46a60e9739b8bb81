//! Schema metadata, table ingestion and join-key domains.
//!
//! A key domain is the equivalence class of key columns connected through
//! foreign-key edges. Every histogram built over a domain shares the same
//! bin boundaries, so bin `i` of one table lines up with bin `i` of every
//! other table joined on that domain.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hist::binning::{AttrValue, EquiWidthBins};

pub const DEFAULT_CATEGORICAL_THRESHOLD: usize = 1000;

fn default_threshold() -> usize {
    DEFAULT_CATEGORICAL_THRESHOLD
}

/// `table.column`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct QualifiedColumn {
    pub table: String,
    pub column: String,
}

impl QualifiedColumn {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        QualifiedColumn {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for QualifiedColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

impl FromStr for QualifiedColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once('.') {
            Some((t, c)) if !t.trim().is_empty() && !c.trim().is_empty() => {
                Ok(QualifiedColumn::new(t.trim(), c.trim()))
            }
            _ => Err(Error::SchemaParse(format!(
                "expected table.column, found {s:?}"
            ))),
        }
    }
}

impl TryFrom<String> for QualifiedColumn {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<QualifiedColumn> for String {
    fn from(q: QualifiedColumn) -> String {
        q.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Integer,
    Real,
    Categorical,
}

impl ValueKind {
    fn name(self) -> &'static str {
        match self {
            ValueKind::Integer => "integer",
            ValueKind::Real => "real",
            ValueKind::Categorical => "categorical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Key,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ValueKind,
    pub role: ColumnRole,
    /// Manual categorical designation; overrides the distinct-count rule.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub categorical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    /// CSV path, relative to the schema document's directory.
    pub file: PathBuf,
    pub columns: Vec<ColumnDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_key: Option<String>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from: QualifiedColumn,
    pub to: QualifiedColumn,
}

/// One equality of a join template, written `t1.a=t2.b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TemplateEdge {
    pub left: QualifiedColumn,
    pub right: QualifiedColumn,
}

impl TryFrom<String> for TemplateEdge {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let (l, r) = s
            .split_once('=')
            .ok_or_else(|| Error::SchemaParse(format!("template edge without '=': {s:?}")))?;
        Ok(TemplateEdge {
            left: l.parse()?,
            right: r.parse()?,
        })
    }
}

impl From<TemplateEdge> for String {
    fn from(e: TemplateEdge) -> String {
        format!("{}={}", e.left, e.right)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<TableDef>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
    #[serde(default = "default_threshold")]
    pub categorical_threshold: usize,
    #[serde(default)]
    pub templates: Vec<Vec<TemplateEdge>>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Schema {
    /// Parse and validate a schema document. Relative table paths resolve
    /// against `base_dir`.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Schema> {
        let mut schema: Schema =
            serde_json::from_str(text).map_err(|e| Error::SchemaParse(e.to_string()))?;
        schema.base_dir = base_dir.into();
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn column(&self, q: &QualifiedColumn) -> Option<&ColumnDef> {
        self.table(&q.table).and_then(|t| t.column(&q.column))
    }

    pub fn table_path(&self, def: &TableDef) -> PathBuf {
        if def.file.is_absolute() {
            def.file.clone()
        } else {
            self.base_dir.join(&def.file)
        }
    }

    /// Domain id for a key column, if it belongs to one.
    pub fn domain_of(&self, q: &QualifiedColumn) -> Option<String> {
        infer_key_domains(self)
            .into_iter()
            .find(|d| d.members.contains(q))
            .map(|d| d.id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.categorical_threshold < 1 {
            return Err(Error::InvalidSchema(
                "categorical_threshold must be >= 1".into(),
            ));
        }
        let mut names = HashSet::new();
        for t in &self.tables {
            if !names.insert(t.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate table {}", t.name)));
            }
            let mut cols = HashSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.as_str()) {
                    return Err(Error::InvalidSchema(format!(
                        "duplicate column {}.{}",
                        t.name, c.name
                    )));
                }
                if c.role == ColumnRole::Key && c.kind != ValueKind::Integer {
                    return Err(Error::InvalidSchema(format!(
                        "key column {}.{} must be integer",
                        t.name, c.name
                    )));
                }
            }
            if let Some(pk) = &t.primary_key {
                match t.column(pk) {
                    Some(c) if c.role == ColumnRole::Key => {}
                    Some(_) => {
                        return Err(Error::InvalidSchema(format!(
                            "primary key {}.{pk} must have role key",
                            t.name
                        )))
                    }
                    None => {
                        return Err(Error::InvalidSchema(format!(
                            "primary key {}.{pk} does not exist",
                            t.name
                        )))
                    }
                }
            }
        }
        for fk in &self.foreign_keys {
            for end in [&fk.from, &fk.to] {
                match self.column(end) {
                    None => {
                        return Err(Error::DanglingForeignKey(format!(
                            "{} -> {} references missing {end}",
                            fk.from, fk.to
                        )))
                    }
                    Some(c) if c.role != ColumnRole::Key => {
                        return Err(Error::InvalidSchema(format!(
                            "foreign key endpoint {end} must have role key"
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        let domains = infer_key_domains(self);
        let domain_of = |q: &QualifiedColumn| {
            domains
                .iter()
                .position(|d| d.members.contains(q))
        };
        for (ti, template) in self.templates.iter().enumerate() {
            let mut uf = UnionFind::default();
            for edge in template {
                for end in [&edge.left, &edge.right] {
                    if self.column(end).is_none() {
                        return Err(Error::InvalidSchema(format!(
                            "template {ti} references missing column {end}"
                        )));
                    }
                }
                match (domain_of(&edge.left), domain_of(&edge.right)) {
                    (Some(a), Some(b)) if a == b => {}
                    _ => {
                        return Err(Error::InvalidSchema(format!(
                            "template edge {}={} does not join columns of one key domain",
                            edge.left, edge.right
                        )))
                    }
                }
                if !uf.union(edge.left.table.clone(), edge.right.table.clone()) {
                    return Err(Error::CyclicTemplate(format!(
                        "template {ti} closes a cycle at {}={}",
                        edge.left, edge.right
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Read and validate a schema document from disk.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Schema::from_json(&text, base)
}

/// Union-find keyed by arbitrary ordered values; `union` returns `false`
/// when both sides were already connected.
#[derive(Debug)]
pub(crate) struct UnionFind<T: Ord + Clone> {
    parent: BTreeMap<T, T>,
}

impl<T: Ord + Clone> Default for UnionFind<T> {
    fn default() -> Self {
        UnionFind {
            parent: BTreeMap::new(),
        }
    }
}

impl<T: Ord + Clone> UnionFind<T> {
    pub(crate) fn find(&mut self, x: T) -> T {
        let p = self.parent.entry(x.clone()).or_insert_with(|| x.clone()).clone();
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.parent.insert(x, root.clone());
        root
    }

    pub(crate) fn union(&mut self, a: T, b: T) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        // Attach the larger root under the smaller one so the result does
        // not depend on edge order.
        if ra < rb {
            self.parent.insert(rb, ra);
        } else {
            self.parent.insert(ra, rb);
        }
        true
    }

    pub(crate) fn groups(&mut self) -> BTreeMap<T, BTreeSet<T>> {
        let keys: Vec<T> = self.parent.keys().cloned().collect();
        let mut out: BTreeMap<T, BTreeSet<T>> = BTreeMap::new();
        for k in keys {
            let r = self.find(k.clone());
            out.entry(r).or_default().insert(k);
        }
        out
    }
}

/// Equivalence class of join-key columns sharing one bin layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyDomain {
    pub id: String,
    pub members: Vec<QualifiedColumn>,
    pub global_min: i64,
    pub global_max: i64,
    /// `None` until [`KeyDomain::set_bounds`] is called.
    pub bins: Option<EquiWidthBins>,
}

impl KeyDomain {
    pub fn set_bounds(&mut self, min: i64, max: i64, bin_count: usize) -> Result<()> {
        self.global_min = min;
        self.global_max = max;
        self.bins = Some(EquiWidthBins::for_integer_keys(min, max, bin_count)?);
        Ok(())
    }

    pub fn bins(&self) -> Result<&EquiWidthBins> {
        self.bins.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("key domain {} has no bin boundaries", self.id))
        })
    }

    pub fn bin_count(&self) -> usize {
        self.bins.map(|b| b.count).unwrap_or(0)
    }

    pub fn boundaries(&self) -> Vec<f64> {
        self.bins.map(|b| b.boundaries()).unwrap_or_default()
    }

    pub fn contains_value(&self, v: i64) -> bool {
        self.bins.is_some() && v >= self.global_min && v <= self.global_max
    }

    /// Bin for a key value; values outside `[global_min, global_max]` are an
    /// error because they mean the domain was computed from stale data.
    pub fn locate(&self, v: i64) -> Result<usize> {
        let bins = self.bins()?;
        if !self.contains_value(v) {
            return Err(Error::OutOfDomain {
                domain: self.id.clone(),
                value: v,
                min: self.global_min as f64,
                max: self.global_max as f64,
            });
        }
        Ok(bins.locate_clamped(v as f64))
    }
}

/// Connected components of the foreign-key graph, one domain per component.
///
/// Members are sorted, domains are sorted by id, and the id is the smallest
/// declared primary key in the component (or the smallest member when none
/// is declared), so the result does not depend on the order of
/// `foreign_keys`.
pub fn infer_key_domains(schema: &Schema) -> Vec<KeyDomain> {
    let mut uf = UnionFind::default();
    for fk in &schema.foreign_keys {
        uf.union(fk.from.clone(), fk.to.clone());
    }
    let pks: BTreeSet<QualifiedColumn> = schema
        .tables
        .iter()
        .filter_map(|t| {
            t.primary_key
                .as_ref()
                .map(|pk| QualifiedColumn::new(&t.name, pk))
        })
        .collect();
    let mut domains: Vec<KeyDomain> = uf
        .groups()
        .into_values()
        .filter(|members| members.len() >= 2)
        .map(|members| {
            let id = members
                .iter()
                .find(|m| pks.contains(*m))
                .unwrap_or_else(|| members.iter().next().expect("non-empty"))
                .to_string();
            KeyDomain {
                id,
                members: members.into_iter().collect(),
                global_min: 0,
                global_max: 0,
                bins: None,
            }
        })
        .collect();
    domains.sort_by(|a, b| a.id.cmp(&b.id));
    domains
}

/// Columnar values of one column; `None` is SQL NULL.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Integer(Vec<Option<i64>>),
    Real(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
}

impl ColumnData {
    fn empty(kind: ValueKind) -> Self {
        match kind {
            ValueKind::Integer => ColumnData::Integer(Vec::new()),
            ValueKind::Real => ColumnData::Real(Vec::new()),
            ValueKind::Categorical => ColumnData::Text(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Integer(v) => v.len(),
            ColumnData::Real(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_null(&self, row: usize) -> bool {
        match self {
            ColumnData::Integer(v) => v[row].is_none(),
            ColumnData::Real(v) => v[row].is_none(),
            ColumnData::Text(v) => v[row].is_none(),
        }
    }

    pub fn value(&self, row: usize) -> Option<AttrValue> {
        match self {
            ColumnData::Integer(v) => v[row].map(|x| AttrValue::Num(x as f64)),
            ColumnData::Real(v) => v[row].map(AttrValue::Num),
            ColumnData::Text(v) => v[row].clone().map(AttrValue::Text),
        }
    }

    pub fn int(&self, row: usize) -> Option<i64> {
        match self {
            ColumnData::Integer(v) => v[row],
            _ => None,
        }
    }

    pub fn as_integers(&self) -> Option<&[Option<i64>]> {
        match self {
            ColumnData::Integer(v) => Some(v),
            _ => None,
        }
    }

    fn render(&self, row: usize) -> String {
        match self {
            ColumnData::Integer(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            ColumnData::Real(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            ColumnData::Text(v) => v[row].clone().unwrap_or_default(),
        }
    }

    fn push_cell(&mut self, cell: &str) -> std::result::Result<(), &'static str> {
        let cell = cell.trim();
        match self {
            ColumnData::Integer(v) => {
                if cell.is_empty() {
                    v.push(None);
                } else {
                    v.push(Some(cell.parse().map_err(|_| "integer")?));
                }
            }
            ColumnData::Real(v) => {
                if cell.is_empty() {
                    v.push(None);
                } else {
                    let x: f64 = cell.parse().map_err(|_| "real")?;
                    if !x.is_finite() {
                        return Err("real");
                    }
                    v.push(Some(x));
                }
            }
            ColumnData::Text(v) => {
                v.push(if cell.is_empty() {
                    None
                } else {
                    Some(cell.to_string())
                });
            }
        }
        Ok(())
    }
}

/// Columnar contents of one table, aligned with `def.columns`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    pub def: TableDef,
    pub columns: Vec<ColumnData>,
    pub row_count: usize,
}

impl TableData {
    pub fn new(def: TableDef, columns: Vec<ColumnData>) -> Result<Self> {
        if columns.len() != def.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "table {} declares {} columns but {} were supplied",
                def.name,
                def.columns.len(),
                columns.len()
            )));
        }
        let row_count = columns.first().map(ColumnData::len).unwrap_or(0);
        for c in &columns {
            if c.len() != row_count {
                return Err(Error::LengthMismatch {
                    left: row_count,
                    right: c.len(),
                });
            }
        }
        Ok(TableData {
            def,
            columns,
            row_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.def.column_index(name).map(|i| &self.columns[i])
    }

    /// Append the rows of `other` (same definition).
    pub fn append(&mut self, other: &TableData) -> Result<()> {
        if other.def.columns != self.def.columns {
            return Err(Error::InvalidArgument(format!(
                "cannot append rows with a different layout to {}",
                self.def.name
            )));
        }
        for (dst, src) in self.columns.iter_mut().zip(&other.columns) {
            match (dst, src) {
                (ColumnData::Integer(a), ColumnData::Integer(b)) => a.extend_from_slice(b),
                (ColumnData::Real(a), ColumnData::Real(b)) => a.extend_from_slice(b),
                (ColumnData::Text(a), ColumnData::Text(b)) => a.extend_from_slice(b),
                _ => unreachable!("definitions match"),
            }
        }
        self.row_count += other.row_count;
        Ok(())
    }

    /// Write as RFC-4180 CSV with a header row; NULL becomes an empty cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Csv {
            table: self.def.name.clone(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.def.columns.iter().map(|c| c.name.as_str()))
            .map_err(csv_err)?;
        for row in 0..self.row_count {
            w.write_record(self.columns.iter().map(|c| c.render(row)))
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Csv {
            table: self.def.name.clone(),
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Load the CSV named by `def` (resolved against the schema directory).
pub fn ingest_table(def: &TableDef, schema: &Schema) -> Result<TableData> {
    let path = schema.table_path(def);
    let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    ingest_reader(def, std::io::BufReader::new(f))
}

/// Parse CSV text for `def`. Extra columns in the file are ignored; every
/// declared column must appear in the header.
pub fn ingest_reader<R: Read>(def: &TableDef, reader: R) -> Result<TableData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let csv_err = |e: csv::Error| Error::Csv {
        table: def.name.clone(),
        message: e.to_string(),
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    let positions = def
        .columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h.trim() == c.name)
                .ok_or_else(|| Error::MissingColumn {
                    table: def.name.clone(),
                    column: c.name.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns: Vec<ColumnData> = def.columns.iter().map(|c| ColumnData::empty(c.kind)).collect();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    while rdr.read_record(&mut record).map_err(csv_err)? {
        row += 1;
        for ((col, def_col), &pos) in columns.iter_mut().zip(&def.columns).zip(&positions) {
            let cell = record.get(pos).unwrap_or("");
            col.push_cell(cell).map_err(|kind| Error::BadCell {
                table: def.name.clone(),
                row,
                column: def_col.name.clone(),
                value: cell.to_string(),
                kind,
            })?;
        }
    }
    TableData::new(def.clone(), columns)
}

/// Load every table of the schema. Tables are read concurrently.
pub fn ingest_all(schema: &Schema) -> Result<BTreeMap<String, TableData>> {
    use rayon::prelude::*;
    schema
        .tables
        .par_iter()
        .map(|def| ingest_table(def, schema).map(|d| (def.name.clone(), d)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnClass {
    Key,
    Numeric,
    Categorical,
}

/// Classify each column of `data`. Key columns stay keys; text columns and
/// manually flagged columns are categorical; other columns are categorical
/// when they hold fewer than `threshold` distinct non-null values.
pub fn classify_columns(data: &TableData, threshold: usize) -> Vec<ColumnClass> {
    data.def
        .columns
        .iter()
        .zip(&data.columns)
        .map(|(def, col)| {
            if def.role == ColumnRole::Key {
                return ColumnClass::Key;
            }
            if def.categorical || def.kind == ValueKind::Categorical {
                return ColumnClass::Categorical;
            }
            let mut seen = HashSet::new();
            for row in 0..col.len() {
                if let Some(v) = col.value(row) {
                    seen.insert(v);
                    if seen.len() >= threshold {
                        return ColumnClass::Numeric;
                    }
                }
            }
            ColumnClass::Categorical
        })
        .collect()
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
