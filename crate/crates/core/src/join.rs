//! Bin-wise joins of top-k histograms.
//!
//! Each bin of a join result keeps a map of *dominant* join-key values with
//! their estimated joined counts, plus a background estimate and background
//! distinct count for everything else. Dominant terms are exact products of
//! container counts; keys tracked on one side only are multiplied by the
//! other side's background average; backgrounds are combined with the
//! Selinger formula.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hist::{AttrBinning, EquiWidthBins, TkHist1D, TkHist2D};

/// `nv_a * nv_b / max(ndv_a, ndv_b)`, or 0 when either side is empty.
pub fn selinger_bin_estimate(nv_a: f64, ndv_a: f64, nv_b: f64, ndv_b: f64) -> f64 {
    if nv_a <= 0.0 || nv_b <= 0.0 || ndv_a <= 0.0 || ndv_b <= 0.0 {
        return 0.0;
    }
    nv_a * nv_b / ndv_a.max(ndv_b)
}

/// Distinct background values of a join result.
pub fn propagate_ndv(ndv_a: f64, ndv_b: f64) -> f64 {
    ndv_a.min(ndv_b)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompositeBin {
    pub dominant: BTreeMap<i64, f64>,
    pub background_est: f64,
    pub ndv_est: f64,
}

impl CompositeBin {
    pub fn bac(&self) -> f64 {
        if self.ndv_est > 0.0 {
            self.background_est / self.ndv_est
        } else {
            0.0
        }
    }

    pub fn total(&self) -> f64 {
        self.background_est + self.dominant.values().sum::<f64>()
    }
}

/// Per-bin estimate of a (possibly multi-way) join over one key domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeHist {
    pub domain: String,
    pub layout: EquiWidthBins,
    pub bins: Vec<CompositeBin>,
    pub provenance: Vec<String>,
}

impl CompositeHist {
    /// Lift a base histogram unchanged: containers become dominant maps,
    /// `nv`/`ndv` become the background figures.
    pub fn from_tkhist(h: &TkHist1D, label: impl Into<String>) -> Self {
        let bins = h
            .bins
            .iter()
            .map(|b| CompositeBin {
                dominant: b.container.iter().map(|(k, c)| (k, c as f64)).collect(),
                background_est: b.nv as f64,
                ndv_est: b.ndv as f64,
            })
            .collect();
        CompositeHist {
            domain: h.domain.clone(),
            layout: h.layout,
            bins,
            provenance: vec![label.into()],
        }
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().map(CompositeBin::total).sum()
    }

    pub fn bin_totals(&self) -> Vec<f64> {
        self.bins.iter().map(CompositeBin::total).collect()
    }

    fn check_aligned(&self, other: &CompositeHist) -> Result<()> {
        if self.domain != other.domain
            || self.layout != other.layout
            || self.bins.len() != other.bins.len()
        {
            return Err(Error::DomainMismatch {
                left: self.domain.clone(),
                right: other.domain.clone(),
            });
        }
        Ok(())
    }

    /// Multiply every component of bin `i` by `factors[i]`, leaving the
    /// distinct counts alone.
    pub fn scaled(&self, factors: &[f64]) -> Result<CompositeHist> {
        if factors.len() != self.bins.len() {
            return Err(Error::LengthMismatch {
                left: self.bins.len(),
                right: factors.len(),
            });
        }
        let mut out = self.clone();
        for (bin, &f) in out.bins.iter_mut().zip(factors) {
            bin.background_est *= f;
            for v in bin.dominant.values_mut() {
                *v *= f;
            }
            bin.dominant.retain(|_, v| *v > 0.0);
        }
        Ok(out)
    }

    /// Dominant keys with their estimated contribution, largest first.
    pub fn top_join_keys(&self, limit: usize) -> Vec<(i64, f64)> {
        let mut all: Vec<(i64, f64)> = self
            .bins
            .iter()
            .flat_map(|b| b.dominant.iter().map(|(k, v)| (*k, *v)))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        all.truncate(limit);
        all
    }
}

/// Join two histograms over the same key domain bin by bin. Keys in
/// `excluded` contribute nothing to the dominant terms.
pub fn jtkh_join(
    a: &CompositeHist,
    b: &CompositeHist,
    excluded: &HashSet<i64>,
) -> Result<CompositeHist> {
    a.check_aligned(b)?;
    let bins = a
        .bins
        .iter()
        .zip(&b.bins)
        .map(|(ba, bb)| join_bins(ba, bb, excluded))
        .collect();
    let mut provenance = a.provenance.clone();
    provenance.extend(b.provenance.iter().cloned());
    Ok(CompositeHist {
        domain: a.domain.clone(),
        layout: a.layout,
        bins,
        provenance,
    })
}

fn join_bins(a: &CompositeBin, b: &CompositeBin, excluded: &HashSet<i64>) -> CompositeBin {
    let bac_a = a.bac();
    let bac_b = b.bac();
    let mut dominant = BTreeMap::new();
    for (&k, &ca) in &a.dominant {
        if excluded.contains(&k) {
            continue;
        }
        let v = match b.dominant.get(&k) {
            Some(&cb) => ca * cb,
            None => ca * bac_b,
        };
        if v > 0.0 {
            dominant.insert(k, v);
        }
    }
    for (&k, &cb) in &b.dominant {
        if excluded.contains(&k) || a.dominant.contains_key(&k) {
            continue;
        }
        let v = cb * bac_a;
        if v > 0.0 {
            dominant.insert(k, v);
        }
    }
    CompositeBin {
        dominant,
        background_est: selinger_bin_estimate(
            a.background_est,
            a.ndv_est,
            b.background_est,
            b.ndv_est,
        ),
        ndv_est: propagate_ndv(a.ndv_est, b.ndv_est),
    }
}

/// Left fold of [`jtkh_join`] over `hists` in order.
pub fn join_star_group(hists: &[CompositeHist], excluded: &HashSet<i64>) -> Result<CompositeHist> {
    let (first, rest) = hists
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("star group needs at least one histogram".into()))?;
    let mut acc = first.clone();
    for h in rest {
        acc = jtkh_join(&acc, h, excluded)?;
    }
    Ok(acc)
}

/// Move a composite from the bridge table's first key onto its second key.
///
/// `bridge` tabulates the bridge table's first key (rows) against its second
/// key (columns). The estimate of first-key bin `i` is spread over
/// second-key bins in proportion to the bridge's row counts; rows whose
/// second key is NULL absorb their share, and empty rows contribute
/// nothing. Dominant maps do not survive the move. The background distinct
/// count of each output bin is the number of distinct second-key values of
/// the bridge in that bin, taken from `second_key`.
pub fn chain_translate(
    composite: &CompositeHist,
    bridge: &TkHist2D,
    second_key: &TkHist1D,
) -> Result<CompositeHist> {
    if composite.domain != bridge.domain || composite.bins.len() != bridge.key_bins() {
        return Err(Error::DomainMismatch {
            left: composite.domain.clone(),
            right: bridge.domain.clone(),
        });
    }
    match &bridge.binning {
        AttrBinning::EquiWidth { bins, .. }
            if *bins == second_key.layout && bins.count == second_key.bins.len() => {}
        _ => {
            return Err(Error::DomainMismatch {
                left: format!("{} (bridge column {})", bridge.domain, bridge.attr_column),
                right: second_key.domain.clone(),
            })
        }
    }
    let out_n = second_key.bins.len();
    let mut mass = vec![0.0; out_n];
    for (i, bin) in composite.bins.iter().enumerate() {
        let t = bin.total();
        let m = bridge.key_marginal(i);
        if t <= 0.0 || m == 0 {
            continue;
        }
        for (j, &c) in bridge.grid.row(i).iter().enumerate() {
            if c > 0 {
                mass[j] += t * c as f64 / m as f64;
            }
        }
    }
    let bins = mass
        .into_iter()
        .zip(&second_key.bins)
        .map(|(m, kb)| CompositeBin {
            dominant: BTreeMap::new(),
            background_est: m,
            ndv_est: if m > 0.0 { kb.distinct() as f64 } else { 0.0 },
        })
        .collect();
    Ok(CompositeHist {
        domain: second_key.domain.clone(),
        layout: second_key.layout,
        bins,
        provenance: composite.provenance.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnData, KeyDomain};
    use crate::hist::{build_tkhist1d, build_tkhist2d};

    fn domain(id: &str, min: i64, max: i64, n: usize) -> KeyDomain {
        let mut d = KeyDomain {
            id: id.into(),
            members: vec![],
            global_min: 0,
            global_max: 0,
            bins: None,
        };
        d.set_bounds(min, max, n).unwrap();
        d
    }

    fn lift(vals: &[i64], d: &KeyDomain, k: usize) -> CompositeHist {
        let v: Vec<Option<i64>> = vals.iter().copied().map(Some).collect();
        CompositeHist::from_tkhist(&build_tkhist1d(&v, d, k).unwrap(), "t")
    }

    /// Exact equi-join size by nested loops.
    fn nested_loop(r: &[i64], s: &[i64]) -> usize {
        r.iter().map(|a| s.iter().filter(|b| *b == a).count()).sum()
    }

    #[test]
    fn selinger_examples() {
        assert_eq!(selinger_bin_estimate(6.0, 3.0, 4.0, 2.0), 8.0);
        assert_eq!(selinger_bin_estimate(0.0, 0.0, 100.0, 5.0), 0.0);
        assert_eq!(selinger_bin_estimate(3.0, 2.0, 2.0, 2.0), 3.0);
    }

    #[test]
    fn propagate_ndv_examples() {
        assert_eq!(propagate_ndv(5.0, 3.0), 3.0);
        assert_eq!(propagate_ndv(0.0, 7.0), 0.0);
    }

    #[test]
    fn two_table_example_k1() {
        let r = [1, 1, 1, 2, 3];
        let s = [1, 1, 2, 4];
        assert_eq!(nested_loop(&r, &s), 7);
        let d = domain("d", 1, 4, 1);
        let out = jtkh_join(&lift(&r, &d, 1), &lift(&s, &d, 1), &HashSet::new()).unwrap();
        let bin = &out.bins[0];
        assert_eq!(bin.dominant, BTreeMap::from([(1, 6.0)]));
        assert_eq!(bin.background_est, 2.0);
        assert_eq!(out.total(), 8.0);
        assert_eq!(bin.ndv_est, 2.0);
    }

    #[test]
    fn two_table_example_full_capture_is_exact() {
        let r = [1, 1, 1, 2, 3];
        let s = [1, 1, 2, 4];
        let d = domain("d", 1, 4, 1);
        let out = jtkh_join(&lift(&r, &d, 3), &lift(&s, &d, 3), &HashSet::new()).unwrap();
        assert_eq!(out.bins[0].dominant, BTreeMap::from([(1, 6.0), (2, 1.0)]));
        assert_eq!(out.bins[0].background_est, 0.0);
        assert_eq!(out.total(), nested_loop(&r, &s) as f64);
    }

    #[test]
    fn one_sided_key_uses_other_bac() {
        let d = domain("d", 0, 9, 1);
        let mut a = lift(&[], &d, 0);
        a.bins[0].dominant.insert(9, 10.0);
        let mut b = lift(&[], &d, 0);
        b.bins[0].background_est = 6.0;
        b.bins[0].ndv_est = 3.0;
        let out = jtkh_join(&a, &b, &HashSet::new()).unwrap();
        assert_eq!(out.bins[0].dominant.get(&9), Some(&20.0));
    }

    #[test]
    fn excluded_keys_are_dropped() {
        let r = [1, 1, 1, 2, 3];
        let s = [1, 1, 2, 4];
        let d = domain("d", 1, 4, 1);
        let out = jtkh_join(&lift(&r, &d, 3), &lift(&s, &d, 3), &HashSet::from([1])).unwrap();
        assert_eq!(out.total(), 1.0);
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let a = lift(&[1], &domain("a", 0, 9, 2), 1);
        let b = lift(&[1], &domain("b", 0, 9, 2), 1);
        assert!(matches!(
            jtkh_join(&a, &b, &HashSet::new()),
            Err(Error::DomainMismatch { .. })
        ));
        let c = lift(&[1], &domain("a", 0, 9, 3), 1);
        assert!(jtkh_join(&a, &c, &HashSet::new()).is_err());
    }

    #[test]
    fn star_group_is_a_left_fold() {
        let d = domain("d", 0, 19, 4);
        let a = lift(&[0, 0, 1, 5, 5, 5, 9, 12], &d, 1);
        let b = lift(&[0, 5, 5, 6, 12, 12, 19], &d, 1);
        let c = lift(&[0, 0, 0, 5, 7, 12, 18], &d, 1);
        let none = HashSet::new();
        let folded = join_star_group(&[a.clone(), b.clone(), c.clone()], &none).unwrap();
        let manual = jtkh_join(&jtkh_join(&a, &b, &none).unwrap(), &c, &none).unwrap();
        assert_eq!(folded, manual);
        assert_eq!(join_star_group(std::slice::from_ref(&a), &none).unwrap(), a);
        assert!(join_star_group(&[], &none).is_err());
    }

    #[test]
    fn chain_translate_permutation_grid() {
        // Bridge rows: first key in {0,1} (2 bins), second key in {0,1}.
        let d1 = domain("k1", 0, 1, 2);
        let d2 = domain("k2", 0, 1, 2);
        let k1: Vec<Option<i64>> = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1].map(Some).to_vec();
        let k2 = ColumnData::Integer([0, 0, 0, 0, 1, 1, 1, 1, 1, 1].map(Some).to_vec());
        let bins = d2.bins.unwrap();
        let bridge = build_tkhist2d(
            &k1,
            &k2,
            &d1,
            AttrBinning::EquiWidth {
                bins,
                integer: true,
            },
        )
        .unwrap();
        assert_eq!(bridge.grid.row(0), &[4, 0]);
        assert_eq!(bridge.grid.row(1), &[0, 6]);
        let second = build_tkhist1d(k2.as_integers().unwrap(), &d2, 0).unwrap();
        let mut comp = lift(&[], &d1, 0);
        comp.bins[0].background_est = 10.0;
        comp.bins[1].background_est = 5.0;
        let out = chain_translate(&comp, &bridge, &second).unwrap();
        assert_eq!(out.bin_totals(), vec![10.0, 5.0]);
        assert_eq!(out.domain, "k2");
        assert!(out.bins.iter().all(|b| b.dominant.is_empty()));
        assert_eq!(out.bins[0].ndv_est, 1.0);
    }

    #[test]
    fn chain_translate_empty_row_contributes_nothing() {
        let d1 = domain("k1", 0, 1, 2);
        let d2 = domain("k2", 0, 1, 2);
        let k1: Vec<Option<i64>> = vec![Some(1), Some(1)];
        let k2 = ColumnData::Integer(vec![Some(0), Some(1)]);
        let bridge = build_tkhist2d(
            &k1,
            &k2,
            &d1,
            AttrBinning::EquiWidth {
                bins: d2.bins.unwrap(),
                integer: true,
            },
        )
        .unwrap();
        let second = build_tkhist1d(k2.as_integers().unwrap(), &d2, 0).unwrap();
        let mut comp = lift(&[], &d1, 0);
        comp.bins[0].background_est = 100.0;
        comp.bins[1].background_est = 4.0;
        let out = chain_translate(&comp, &bridge, &second).unwrap();
        assert_eq!(out.bin_totals(), vec![2.0, 2.0]);
    }
}
