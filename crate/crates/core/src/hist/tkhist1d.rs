use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::catalog::KeyDomain;
use crate::error::{Error, Result};
use crate::hist::binning::EquiWidthBins;
use crate::hist::topk::TopKContainer;
use crate::serde_util::sorted_set;

/// One bin of a [`TkHist1D`].
///
/// `nv` and `ndv` describe only the background, i.e. the values that did
/// not make it into the container. The set of background values is kept so
/// inserts can maintain `ndv` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Bin1D {
    pub nv: u64,
    pub ndv: u64,
    pub container: TopKContainer,
    #[serde(
        default,
        with = "sorted_set",
        skip_serializing_if = "HashSet::is_empty"
    )]
    background: HashSet<i64>,
}

impl Bin1D {
    /// Background average counter, `nv / ndv` (0 for an empty background).
    pub fn bac(&self) -> f64 {
        if self.ndv == 0 {
            0.0
        } else {
            self.nv as f64 / self.ndv as f64
        }
    }

    /// Exact number of rows in the bin.
    pub fn total(&self) -> u64 {
        self.nv + self.container.total()
    }

    /// Distinct values in the bin, tracked or not.
    pub fn distinct(&self) -> u64 {
        self.ndv + self.container.len() as u64
    }
}

/// Read-only view returned by [`TkHist1D::bin_stats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStats<'a> {
    pub nv: u64,
    pub ndv: u64,
    pub bac: f64,
    pub container: &'a TopKContainer,
}

/// Equi-width histogram over a join key whose bins each carry a top-k
/// container of exact frequencies plus background summary counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TkHist1D {
    pub domain: String,
    pub global_min: i64,
    pub global_max: i64,
    pub layout: EquiWidthBins,
    pub k: usize,
    pub bins: Vec<Bin1D>,
    pub total_rows: u64,
}

/// Build a histogram over `values` (nulls skipped) with `k` container slots
/// per bin.
pub fn build_tkhist1d(values: &[Option<i64>], domain: &KeyDomain, k: usize) -> Result<TkHist1D> {
    let layout = *domain.bins()?;
    let mut per_bin: Vec<HashMap<i64, u64>> = vec![HashMap::new(); layout.count];
    let mut total_rows = 0u64;
    for v in values.iter().flatten() {
        let bin = domain.locate(*v)?;
        *per_bin[bin].entry(*v).or_insert(0) += 1;
        total_rows += 1;
    }
    let bins = per_bin
        .into_iter()
        .map(|counts| {
            let (container, rest) = TopKContainer::select(k, counts);
            Bin1D {
                nv: rest.iter().map(|(_, c)| c).sum(),
                ndv: rest.len() as u64,
                container,
                background: rest.into_iter().map(|(v, _)| v).collect(),
            }
        })
        .collect();
    Ok(TkHist1D {
        domain: domain.id.clone(),
        global_min: domain.global_min,
        global_max: domain.global_max,
        layout,
        k,
        bins,
        total_rows,
    })
}

impl TkHist1D {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn locate(&self, value: i64) -> Result<usize> {
        if value < self.global_min || value > self.global_max {
            return Err(Error::OutOfDomain {
                domain: self.domain.clone(),
                value,
                min: self.global_min as f64,
                max: self.global_max as f64,
            });
        }
        Ok(self.layout.locate_clamped(value as f64))
    }

    pub fn bin_stats(&self, index: usize) -> Result<BinStats<'_>> {
        let bin = self.bins.get(index).ok_or(Error::BinOutOfRange {
            index,
            bins: self.bins.len(),
        })?;
        Ok(BinStats {
            nv: bin.nv,
            ndv: bin.ndv,
            bac: bin.bac(),
            container: &bin.container,
        })
    }

    /// Whether `value` is held in the container of its bin.
    pub fn is_tracked(&self, value: i64) -> bool {
        self.locate(value)
            .map(|b| self.bins[b].container.contains(value))
            .unwrap_or(false)
    }

    /// Record one new row with key `value` in O(1) expected time. Container
    /// membership is never re-ranked; a value that becomes frequent through
    /// inserts stays in the background until the histogram is rebuilt.
    pub fn insert_tuple(&mut self, value: i64) -> Result<()> {
        let b = self.locate(value)?;
        let bin = &mut self.bins[b];
        if !bin.container.increment(value) {
            bin.nv += 1;
            if bin.background.insert(value) {
                bin.ndv += 1;
            }
        }
        self.total_rows += 1;
        Ok(())
    }

    /// Copy without the per-bin background value sets. Those sets only
    /// serve incremental inserts and are excluded from model-size figures.
    pub fn without_update_tracking(&self) -> TkHist1D {
        let mut out = self.clone();
        for b in &mut out.bins {
            b.background = HashSet::new();
        }
        out
    }

    /// Keys held in any container, sorted.
    pub fn tracked_keys(&self) -> Vec<i64> {
        let mut keys: Vec<i64> = self
            .bins
            .iter()
            .flat_map(|b| b.container.iter().map(|(k, _)| k))
            .collect();
        keys.sort_unstable();
        keys
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain(min: i64, max: i64, n: usize) -> KeyDomain {
        let mut d = KeyDomain {
            id: "d".into(),
            members: vec![],
            global_min: 0,
            global_max: 0,
            bins: None,
        };
        d.set_bounds(min, max, n).unwrap();
        d
    }

    fn table1_column() -> Vec<Option<i64>> {
        [2, 2, 2, 2, 3, 3, 5].into_iter().map(Some).collect()
    }

    #[test]
    fn table_one_example_k1() {
        let h = build_tkhist1d(&table1_column(), &domain(2, 5, 1), 1).unwrap();
        let s = h.bin_stats(0).unwrap();
        assert_eq!(s.container.sorted(), vec![(2, 4)]);
        assert_eq!((s.nv, s.ndv), (3, 2));
        assert_eq!(s.bac, 1.5);
        assert_eq!(h.total_rows, 7);
    }

    #[test]
    fn k0_is_plain_histogram_with_distinct_counts() {
        let h = build_tkhist1d(&table1_column(), &domain(2, 5, 1), 0).unwrap();
        let s = h.bin_stats(0).unwrap();
        assert!(s.container.is_empty());
        assert_eq!((s.nv, s.ndv), (7, 3));
    }

    #[test]
    fn full_capture_leaves_empty_background() {
        let h = build_tkhist1d(&table1_column(), &domain(2, 5, 1), 3).unwrap();
        let s = h.bin_stats(0).unwrap();
        assert_eq!(s.container.sorted(), vec![(2, 4), (3, 2), (5, 1)]);
        assert_eq!((s.nv, s.ndv, s.bac), (0, 0, 0.0));
    }

    #[test]
    fn empty_bin_stats() {
        let h = build_tkhist1d(&[Some(0), Some(9)], &domain(0, 9, 10), 2).unwrap();
        let s = h.bin_stats(5).unwrap();
        assert_eq!((s.nv, s.ndv, s.bac), (0, 0, 0.0));
        assert!(s.container.is_empty());
        assert!(matches!(
            h.bin_stats(10),
            Err(Error::BinOutOfRange { index: 10, bins: 10 })
        ));
    }

    #[test]
    fn nulls_are_skipped() {
        let h = build_tkhist1d(&[Some(1), None, Some(1)], &domain(0, 3, 2), 1).unwrap();
        assert_eq!(h.total_rows, 2);
    }

    #[test]
    fn out_of_domain_value_fails_build() {
        let err = build_tkhist1d(&[Some(100)], &domain(0, 9, 2), 1).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { value: 100, .. }));
    }

    #[test]
    fn inserts_follow_container_and_background_rules() {
        let mut h = build_tkhist1d(&table1_column(), &domain(2, 9, 1), 1).unwrap();
        h.insert_tuple(2).unwrap();
        assert_eq!(h.bins[0].container.get(2), Some(5));

        let mut h = build_tkhist1d(&table1_column(), &domain(2, 9, 1), 1).unwrap();
        h.insert_tuple(3).unwrap();
        assert_eq!((h.bins[0].nv, h.bins[0].ndv), (4, 2));

        let mut h = build_tkhist1d(&table1_column(), &domain(2, 9, 1), 1).unwrap();
        h.insert_tuple(9).unwrap();
        assert_eq!((h.bins[0].nv, h.bins[0].ndv), (4, 3));
        assert_eq!(h.total_rows, 8);

        assert!(h.insert_tuple(10).is_err());
    }
}
