use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{ColumnClass, ColumnData};
use crate::error::Result;
use crate::hist::binning::{AttrBinning, AttrValue, EquiWidthBins};
use crate::serde_util::pair_list;

/// Exact count of every distinct value of a categorical column.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrequencyHist {
    #[serde(with = "pair_list")]
    pub counts: BTreeMap<AttrValue, u64>,
}

impl FrequencyHist {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, v: &AttrValue) -> u64 {
        self.counts.get(v).copied().unwrap_or(0)
    }

    pub fn insert(&mut self, v: AttrValue) {
        *self.counts.entry(v).or_insert(0) += 1;
    }
}

pub fn build_frequency_hist(column: &ColumnData) -> FrequencyHist {
    let mut h = FrequencyHist::default();
    for row in 0..column.len() {
        if let Some(v) = column.value(row) {
            h.insert(v);
        }
    }
    h
}

/// Marginal equi-width counts of a numeric column; used for single-table
/// estimates when no join key is available to condition on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrHist {
    pub binning: AttrBinning,
    pub counts: Vec<u64>,
    pub nulls: u64,
}

impl AttrHist {
    pub fn build(column: &ColumnData, binning: AttrBinning) -> AttrHist {
        let mut h = AttrHist {
            counts: vec![0; binning.len()],
            nulls: 0,
            binning,
        };
        for row in 0..column.len() {
            let v = column.value(row);
            h.insert(v.as_ref());
        }
        h
    }

    /// Returns `false` (and records nothing) when the value lies outside the
    /// binning.
    pub fn insert(&mut self, v: Option<&AttrValue>) -> bool {
        match v {
            None => {
                self.nulls += 1;
                true
            }
            Some(v) => match self.binning.locate(v) {
                Some(b) => {
                    self.counts[b] += 1;
                    true
                }
                None => false,
            },
        }
    }

    pub fn rows(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.nulls
    }
}

/// Default second-axis binning for a column: one bin per distinct value for
/// categorical columns, integer-aligned equal widths for integer columns and
/// plain equal widths for reals.
pub fn attribute_binning(
    column: &ColumnData,
    class: ColumnClass,
    max_bins: usize,
) -> Result<AttrBinning> {
    if class == ColumnClass::Categorical {
        let values: Vec<AttrValue> = (0..column.len()).filter_map(|r| column.value(r)).collect();
        return Ok(AttrBinning::distinct(values.iter()));
    }
    match column {
        ColumnData::Integer(v) => {
            let (mut lo, mut hi) = (i64::MAX, i64::MIN);
            for x in v.iter().flatten() {
                lo = lo.min(*x);
                hi = hi.max(*x);
            }
            if lo > hi {
                return Ok(AttrBinning::Distinct { values: vec![] });
            }
            Ok(AttrBinning::EquiWidth {
                bins: EquiWidthBins::for_integer_attribute(lo, hi, max_bins)?,
                integer: true,
            })
        }
        ColumnData::Real(v) => {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for x in v.iter().flatten() {
                lo = lo.min(*x);
                hi = hi.max(*x);
            }
            if lo > hi {
                return Ok(AttrBinning::Distinct { values: vec![] });
            }
            Ok(AttrBinning::EquiWidth {
                bins: EquiWidthBins::new(lo, hi, max_bins.max(1))?,
                integer: false,
            })
        }
        ColumnData::Text(_) => {
            let values: Vec<AttrValue> =
                (0..column.len()).filter_map(|r| column.value(r)).collect();
            Ok(AttrBinning::distinct(values.iter()))
        }
    }
}
