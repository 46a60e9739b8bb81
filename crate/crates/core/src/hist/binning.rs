use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single non-null cell value as seen by attribute histograms.
///
/// Integers are carried as `Num` (exact up to 2^53). Ordering puts every
/// number before every string so mixed sets sort deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Num(f64),
    Text(String),
}

impl AttrValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Num(v) => Some(*v),
            AttrValue::Text(_) => None,
        }
    }

    fn canonical_bits(v: f64) -> u64 {
        if v == 0.0 {
            0.0f64.to_bits()
        } else {
            v.to_bits()
        }
    }
}

impl PartialEq for AttrValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for AttrValue {}

impl PartialOrd for AttrValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AttrValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (AttrValue::Num(a), AttrValue::Num(b)) => {
                if a == b {
                    Ordering::Equal
                } else {
                    a.total_cmp(b)
                }
            }
            (AttrValue::Num(_), AttrValue::Text(_)) => Ordering::Less,
            (AttrValue::Text(_), AttrValue::Num(_)) => Ordering::Greater,
            (AttrValue::Text(a), AttrValue::Text(b)) => a.cmp(b),
        }
    }
}

impl Hash for AttrValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            AttrValue::Num(v) => {
                0u8.hash(state);
                Self::canonical_bits(*v).hash(state);
            }
            AttrValue::Text(s) => {
                1u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Num(v) => write!(f, "{v}"),
            AttrValue::Text(s) => write!(f, "{s}"),
        }
    }
}

/// Half-open interval `[lo, hi)` over the real line used to measure how much
/// of a bin a predicate covers. `hi_inclusive` only matters for zero-width
/// bins, where coverage is decided on the single point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub hi_inclusive: bool,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            hi_inclusive: false,
        }
    }

    pub fn everything() -> Self {
        Interval::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    fn contains_point(&self, p: f64) -> bool {
        p >= self.lo && (p < self.hi || (self.hi_inclusive && p <= self.hi))
    }
}

/// `count` equal-width bins covering `[lo, hi]`.
///
/// A value `v` lands in bin `floor((v - lo) / width)` clamped to the last
/// bin, so intervals are half-open except the last one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquiWidthBins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl EquiWidthBins {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("bin count must be >= 1".into()));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::InvalidArgument(format!(
                "invalid bin range [{lo}, {hi}]"
            )));
        }
        Ok(EquiWidthBins { lo, hi, count })
    }

    /// Bins for integer join keys. Each integer `v` is treated as occupying
    /// `[v, v + 1)`, so the covered span is `[min, max + 1)` and range
    /// predicates on integer keys map onto exact lengths.
    pub fn for_integer_keys(min: i64, max: i64, count: usize) -> Result<Self> {
        Self::new(min as f64, max as f64 + 1.0, count)
    }

    /// Bins for an integer attribute with integer widths, so bin edges fall
    /// between consecutive integers. May produce fewer than `max_bins` bins.
    pub fn for_integer_attribute(min: i64, max: i64, max_bins: usize) -> Result<Self> {
        let max_bins = max_bins.max(1) as i64;
        let span = max - min + 1;
        let width = ((span + max_bins - 1) / max_bins).max(1);
        let count = ((span + width - 1) / width) as usize;
        Self::new(min as f64, (min + width * count as i64) as f64, count)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.count as f64
    }

    /// `count + 1` ascending edges; the last one is exactly `hi`.
    pub fn boundaries(&self) -> Vec<f64> {
        let w = self.width();
        let mut out: Vec<f64> = (0..self.count).map(|i| self.lo + w * i as f64).collect();
        out.push(self.hi);
        out
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// Bin index for `v`, or `None` when `v` lies outside `[lo, hi]`.
    pub fn locate(&self, v: f64) -> Option<usize> {
        if !self.contains(v) {
            return None;
        }
        Some(self.locate_clamped(v))
    }

    pub fn locate_clamped(&self, v: f64) -> usize {
        let w = self.width();
        if w <= 0.0 || v <= self.lo {
            return 0;
        }
        let idx = ((v - self.lo) / w).floor();
        if idx >= (self.count - 1) as f64 {
            self.count - 1
        } else {
            idx as usize
        }
    }

    pub fn bin_range(&self, bin: usize) -> (f64, f64) {
        let w = self.width();
        let lo = self.lo + w * bin as f64;
        let hi = if bin + 1 == self.count {
            self.hi
        } else {
            self.lo + w * (bin + 1) as f64
        };
        (lo, hi)
    }

    /// Fraction of bin `bin` covered by `iv`, assuming values are spread
    /// uniformly inside the bin.
    pub fn coverage(&self, bin: usize, iv: &Interval) -> f64 {
        let (b_lo, b_hi) = self.bin_range(bin);
        let w = b_hi - b_lo;
        if w <= 0.0 {
            return if iv.contains_point(b_lo) { 1.0 } else { 0.0 };
        }
        let lo = iv.lo.max(b_lo);
        let hi = iv.hi.min(b_hi);
        if hi <= lo {
            0.0
        } else {
            ((hi - lo) / w).clamp(0.0, 1.0)
        }
    }
}

/// How an attribute column is bucketed along the second axis of a 2D
/// histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttrBinning {
    /// Numeric attribute (or another join key) with equal-width bins.
    /// `integer` selects the `[v, v + 1)` embedding for predicates.
    EquiWidth { bins: EquiWidthBins, integer: bool },
    /// One bin per distinct value, sorted ascending.
    Distinct { values: Vec<AttrValue> },
}

impl AttrBinning {
    pub fn len(&self) -> usize {
        match self {
            AttrBinning::EquiWidth { bins, .. } => bins.count,
            AttrBinning::Distinct { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn locate(&self, v: &AttrValue) -> Option<usize> {
        match self {
            AttrBinning::EquiWidth { bins, .. } => v.as_f64().and_then(|x| bins.locate(x)),
            AttrBinning::Distinct { values } => values.binary_search(v).ok(),
        }
    }

    /// Build a distinct-value binning from arbitrary values.
    pub fn distinct<'a>(values: impl IntoIterator<Item = &'a AttrValue>) -> Self {
        let mut vals: Vec<AttrValue> = values.into_iter().cloned().collect();
        vals.sort();
        vals.dedup();
        AttrBinning::Distinct { values: vals }
    }
}
