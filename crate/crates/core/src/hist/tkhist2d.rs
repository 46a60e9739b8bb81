use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::catalog::{ColumnData, KeyDomain};
use crate::error::{Error, Result};
use crate::hist::binning::{AttrBinning, AttrValue, EquiWidthBins};
use crate::hist::tkhist1d::TkHist1D;

/// Dense row-major count matrix. Serialized sparsely as `[row, col, count]`
/// triples because key-by-key grids are mostly empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    cells: Vec<u64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            cells: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.cells[r * self.cols + c]
    }

    pub fn add(&mut self, r: usize, c: usize, by: u64) {
        self.cells[r * self.cols + c] += by;
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.cells[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_sum(&self, r: usize) -> u64 {
        self.row(r).iter().sum()
    }

    pub fn sum(&self) -> u64 {
        self.cells.iter().sum()
    }
}

#[derive(Serialize, Deserialize)]
struct SparseGrid {
    rows: usize,
    cols: usize,
    nz: Vec<(usize, usize, u64)>,
}

impl Serialize for Grid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let nz = (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter_map(|(r, c)| {
                let v = self.get(r, c);
                (v > 0).then_some((r, c, v))
            })
            .collect();
        SparseGrid {
            rows: self.rows,
            cols: self.cols,
            nz,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let sparse = SparseGrid::deserialize(d)?;
        let mut g = Grid::zeros(sparse.rows, sparse.cols);
        for (r, c, v) in sparse.nz {
            if r >= g.rows || c >= g.cols {
                return Err(serde::de::Error::custom("grid cell out of range"));
            }
            g.add(r, c, v);
        }
        Ok(g)
    }
}

/// Joint counts of a join key (rows) and a second column (columns) within
/// one table.
///
/// `grid` counts every row with both values present; `nulls[i]` counts rows
/// in key bin `i` whose second value is NULL. The `background` grid repeats
/// the tally restricted to rows whose key is *not* in the key's top-k
/// container, so predicate selectivity can be measured on the same rows the
/// background estimate describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TkHist2D {
    pub domain: String,
    pub key_layout: EquiWidthBins,
    pub key_column: String,
    pub attr_column: String,
    pub binning: AttrBinning,
    pub grid: Grid,
    pub nulls: Vec<u64>,
    pub background: Grid,
    pub background_nulls: Vec<u64>,
}

/// Tabulate `keys` against `attrs`. Rows with a NULL key are skipped.
pub fn build_tkhist2d(
    keys: &[Option<i64>],
    attrs: &ColumnData,
    domain: &KeyDomain,
    binning: AttrBinning,
) -> Result<TkHist2D> {
    build_inner(keys, attrs, domain, binning, None)
}

/// Like [`build_tkhist2d`], with the background grid restricted to rows
/// whose key is not tracked by `dominant`.
pub fn build_tkhist2d_split(
    keys: &[Option<i64>],
    attrs: &ColumnData,
    domain: &KeyDomain,
    binning: AttrBinning,
    dominant: &TkHist1D,
) -> Result<TkHist2D> {
    build_inner(keys, attrs, domain, binning, Some(dominant))
}

fn build_inner(
    keys: &[Option<i64>],
    attrs: &ColumnData,
    domain: &KeyDomain,
    binning: AttrBinning,
    dominant: Option<&TkHist1D>,
) -> Result<TkHist2D> {
    if keys.len() != attrs.len() {
        return Err(Error::LengthMismatch {
            left: keys.len(),
            right: attrs.len(),
        });
    }
    let key_layout = *domain.bins()?;
    let mut h = TkHist2D {
        domain: domain.id.clone(),
        key_layout,
        key_column: String::new(),
        attr_column: String::new(),
        grid: Grid::zeros(key_layout.count, binning.len()),
        nulls: vec![0; key_layout.count],
        background: Grid::zeros(key_layout.count, binning.len()),
        background_nulls: vec![0; key_layout.count],
        binning,
    };
    for (row, key) in keys.iter().enumerate() {
        let Some(key) = *key else { continue };
        let kb = domain.locate(key)?;
        let tracked = dominant.is_some_and(|d| d.bins[kb].container.contains(key));
        h.record(kb, attrs.value(row).as_ref(), tracked)?;
    }
    Ok(h)
}

impl TkHist2D {
    pub fn named(mut self, key_column: &str, attr_column: &str) -> Self {
        self.key_column = key_column.to_string();
        self.attr_column = attr_column.to_string();
        self
    }

    pub fn key_bins(&self) -> usize {
        self.grid.rows()
    }

    fn record(&mut self, key_bin: usize, attr: Option<&AttrValue>, tracked: bool) -> Result<()> {
        match attr {
            None => {
                self.nulls[key_bin] += 1;
                if !tracked {
                    self.background_nulls[key_bin] += 1;
                }
            }
            Some(v) => {
                let ab = self.binning.locate(v).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "value {v} of {} lies outside its histogram binning",
                        self.attr_column
                    ))
                })?;
                self.grid.add(key_bin, ab, 1);
                if !tracked {
                    self.background.add(key_bin, ab, 1);
                }
            }
        }
        Ok(())
    }

    /// Whether a row with this attribute value can be recorded without
    /// changing the binning.
    pub fn accepts(&self, attr: Option<&AttrValue>) -> bool {
        attr.is_none_or(|v| self.binning.locate(v).is_some())
    }

    /// Add one row. `tracked` says whether `key` is held in the top-k
    /// container of the matching 1D histogram.
    pub fn insert(&mut self, key: i64, attr: Option<&AttrValue>, tracked: bool) -> Result<()> {
        let lo = self.key_layout.lo;
        let hi = self.key_layout.hi;
        let kb = self.key_layout.locate(key as f64).ok_or(Error::OutOfDomain {
            domain: self.domain.clone(),
            value: key,
            min: lo,
            max: hi,
        })?;
        self.record(kb, attr, tracked)
    }

    /// Per key bin, the number of rows including those with NULL attribute.
    pub fn key_marginal(&self, key_bin: usize) -> u64 {
        self.grid.row_sum(key_bin) + self.nulls[key_bin]
    }
}
