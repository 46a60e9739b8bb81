//! Filter predicates and per-key-bin selectivity.
//!
//! Non-key attributes are assumed conditionally independent given the join
//! key, so the selectivity of a conjunction inside one key bin is the
//! product of the per-attribute conditional fractions read off the
//! key-by-attribute grids.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hist::{
    AttrBinning, AttrHist, AttrValue, EquiWidthBins, FrequencyHist, Interval, TkHist2D,
};
use crate::join::CompositeHist;
use crate::query::ColumnRef;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Literal {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Literal::Int(v) => Some(*v as f64),
            Literal::Real(v) => Some(*v),
            Literal::Text(_) => None,
        }
    }

    pub fn to_attr(&self) -> AttrValue {
        match self {
            Literal::Text(s) => AttrValue::Text(s.clone()),
            other => AttrValue::Num(other.as_f64().expect("numeric")),
        }
    }

    pub fn is_text(&self) -> bool {
        matches!(self, Literal::Text(_))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Real(v) => write!(f, "{v:?}"),
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// The operator seen from the other side: `5 < x` is `x > 5`.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredicateOp {
    Cmp(CmpOp, Literal),
    Between(Literal, Literal),
    In(Vec<Literal>),
}

impl PredicateOp {
    pub fn is_range(&self) -> bool {
        match self {
            PredicateOp::Cmp(op, _) => *op != CmpOp::Eq,
            PredicateOp::Between(..) => true,
            PredicateOp::In(_) => false,
        }
    }

    pub fn literals(&self) -> Vec<&Literal> {
        match self {
            PredicateOp::Cmp(_, l) => vec![l],
            PredicateOp::Between(a, b) => vec![a, b],
            PredicateOp::In(v) => v.iter().collect(),
        }
    }

    /// Exact evaluation against one non-null value.
    pub fn matches(&self, v: &AttrValue) -> bool {
        match self {
            PredicateOp::Cmp(op, lit) => {
                let l = lit.to_attr();
                match op {
                    CmpOp::Eq => *v == l,
                    CmpOp::Lt => same_kind(v, &l) && *v < l,
                    CmpOp::Le => same_kind(v, &l) && *v <= l,
                    CmpOp::Gt => same_kind(v, &l) && *v > l,
                    CmpOp::Ge => same_kind(v, &l) && *v >= l,
                }
            }
            PredicateOp::Between(lo, hi) => {
                let (lo, hi) = (lo.to_attr(), hi.to_attr());
                same_kind(v, &lo) && *v >= lo && *v <= hi
            }
            PredicateOp::In(items) => items.iter().any(|l| *v == l.to_attr()),
        }
    }

    /// Whether any value in `[min, max]` could satisfy the predicate.
    pub fn may_match_range(&self, min: f64, max: f64) -> bool {
        match self {
            PredicateOp::Cmp(op, lit) => {
                let Some(c) = lit.as_f64() else { return false };
                match op {
                    CmpOp::Eq => min <= c && c <= max,
                    CmpOp::Lt => min < c,
                    CmpOp::Le => min <= c,
                    CmpOp::Gt => max > c,
                    CmpOp::Ge => max >= c,
                }
            }
            PredicateOp::Between(lo, hi) => match (lo.as_f64(), hi.as_f64()) {
                (Some(lo), Some(hi)) => max >= lo && min <= hi,
                _ => false,
            },
            PredicateOp::In(items) => items
                .iter()
                .filter_map(Literal::as_f64)
                .any(|c| min <= c && c <= max),
        }
    }

    /// Measure intervals covered by the predicate. For integer columns value
    /// `v` occupies `[v, v + 1)`, so `x <= 7` becomes `[-inf, 8)`.
    pub fn intervals(&self, integer: bool) -> Result<Vec<Interval>> {
        let num = |l: &Literal| {
            l.as_f64().ok_or_else(|| {
                Error::UnsupportedPredicate(format!("text literal {l} on a numeric column"))
            })
        };
        let out = match self {
            PredicateOp::Cmp(op, lit) => {
                let c = num(lit)?;
                vec![cmp_interval(*op, c, integer)]
            }
            PredicateOp::Between(lo, hi) => {
                let lo = num(lo)?;
                let hi = num(hi)?;
                let lo_iv = cmp_interval(CmpOp::Ge, lo, integer);
                let hi_iv = cmp_interval(CmpOp::Le, hi, integer);
                vec![Interval {
                    lo: lo_iv.lo,
                    hi: hi_iv.hi,
                    hi_inclusive: hi_iv.hi_inclusive,
                }]
            }
            PredicateOp::In(items) => {
                let mut vals = items.iter().map(num).collect::<Result<Vec<f64>>>()?;
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                vals.into_iter()
                    .map(|c| cmp_interval(CmpOp::Eq, c, integer))
                    .collect()
            }
        };
        Ok(out)
    }
}

fn same_kind(a: &AttrValue, b: &AttrValue) -> bool {
    matches!(
        (a, b),
        (AttrValue::Num(_), AttrValue::Num(_)) | (AttrValue::Text(_), AttrValue::Text(_))
    )
}

fn cmp_interval(op: CmpOp, c: f64, integer: bool) -> Interval {
    let inf = f64::INFINITY;
    if integer {
        let (lo, hi) = match op {
            CmpOp::Eq if c.fract() == 0.0 => (c, c + 1.0),
            CmpOp::Eq => (c, c),
            CmpOp::Lt => (-inf, c.ceil()),
            CmpOp::Le => (-inf, c.floor() + 1.0),
            CmpOp::Gt => (c.floor() + 1.0, inf),
            CmpOp::Ge => (c.ceil(), inf),
        };
        Interval::new(lo, hi)
    } else {
        match op {
            CmpOp::Eq => Interval {
                lo: c,
                hi: c,
                hi_inclusive: true,
            },
            CmpOp::Lt => Interval::new(-inf, c),
            CmpOp::Le => Interval {
                lo: -inf,
                hi: c,
                hi_inclusive: true,
            },
            CmpOp::Gt | CmpOp::Ge => Interval::new(c, inf),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: ColumnRef,
    pub op: PredicateOp,
}

impl Predicate {
    pub fn new(column: ColumnRef, op: PredicateOp) -> Self {
        Predicate { column, op }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.op {
            PredicateOp::Cmp(op, l) => write!(f, "{} {} {}", self.column, op.symbol(), l),
            PredicateOp::Between(a, b) => write!(f, "{} BETWEEN {} AND {}", self.column, a, b),
            PredicateOp::In(items) => {
                let parts: Vec<String> = items.iter().map(|l| l.to_string()).collect();
                write!(f, "{} IN ({})", self.column, parts.join(", "))
            }
        }
    }
}

/// Fraction of each key bin that satisfies the filters, all in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSelectivity(pub Vec<f64>);

impl BinSelectivity {
    pub fn ones(n: usize) -> Self {
        BinSelectivity(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn combine(&self, other: &BinSelectivity) -> Result<BinSelectivity> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(BinSelectivity(
            self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect(),
        ))
    }
}

/// Per attribute bin, the fraction of the bin's values that satisfy `op`.
pub fn attribute_bin_fractions(binning: &AttrBinning, op: &PredicateOp) -> Result<Vec<f64>> {
    match binning {
        AttrBinning::EquiWidth { bins, integer } => {
            let ivs = op.intervals(*integer)?;
            Ok((0..bins.count)
                .map(|j| {
                    ivs.iter()
                        .map(|iv| bins.coverage(j, iv))
                        .sum::<f64>()
                        .min(1.0)
                })
                .collect())
        }
        AttrBinning::Distinct { values } => {
            if op.is_range() && values.iter().any(|v| matches!(v, AttrValue::Text(_))) {
                return Err(Error::UnsupportedPredicate(
                    "range operator on categorical column".into(),
                ));
            }
            Ok(values
                .iter()
                .map(|v| if op.matches(v) { 1.0 } else { 0.0 })
                .collect())
        }
    }
}

/// Conditional selectivity of `pred` within each key bin of `hist`.
///
/// Attribute bins only partly covered by a range contribute linearly
/// interpolated mass; key bins with no rows are neutral (fraction 1). The
/// fractions come from the background grid, i.e. the rows whose key is not
/// tracked in the key's top-k container.
pub fn selectivity_2d(hist: &TkHist2D, pred: &Predicate) -> Result<BinSelectivity> {
    if pred.column.column != hist.attr_column {
        return Err(Error::PredicateColumnMismatch {
            predicate: pred.column.to_string(),
            histogram: hist.attr_column.clone(),
        });
    }
    let fractions = attribute_bin_fractions(&hist.binning, &pred.op)?;
    let out = (0..hist.key_bins())
        .map(|i| {
            let row = hist.background.row(i);
            let mass = row.iter().sum::<u64>() + hist.background_nulls[i];
            if mass == 0 {
                return 1.0;
            }
            let hit: f64 = row
                .iter()
                .zip(&fractions)
                .map(|(&c, &f)| c as f64 * f)
                .sum();
            (hit / mass as f64).clamp(0.0, 1.0)
        })
        .collect();
    Ok(BinSelectivity(out))
}

/// Product of per-attribute conditional selectivities, bin by bin.
pub fn combine_table_selectivity(fractions: &[BinSelectivity]) -> Result<BinSelectivity> {
    let (first, rest) = fractions
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("no selectivities to combine".into()))?;
    rest.iter().try_fold(first.clone(), |acc, s| acc.combine(s))
}

/// Exact selectivity of an equality or IN predicate on a categorical column.
pub fn selectivity_categorical(hist: &FrequencyHist, pred: &Predicate, total: u64) -> Result<f64> {
    if pred.op.is_range() {
        return Err(Error::UnsupportedPredicate(
            "range operator on categorical column".into(),
        ));
    }
    Ok(frequency_fraction(hist, &pred.op, total))
}

pub(crate) fn frequency_fraction(hist: &FrequencyHist, op: &PredicateOp, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let hit: u64 = hist
        .counts
        .iter()
        .filter(|(v, _)| op.matches(v))
        .map(|(_, c)| c)
        .sum();
    (hit as f64 / total as f64).min(1.0)
}

/// Marginal selectivity over an equi-width attribute histogram.
pub fn selectivity_marginal(hist: &AttrHist, op: &PredicateOp) -> Result<f64> {
    let rows = hist.rows();
    if rows == 0 {
        return Ok(0.0);
    }
    let fractions = attribute_bin_fractions(&hist.binning, op)?;
    let hit: f64 = hist
        .counts
        .iter()
        .zip(&fractions)
        .map(|(&c, &f)| c as f64 * f)
        .sum();
    Ok((hit / rows as f64).clamp(0.0, 1.0))
}

/// Fraction of each key bin covered by a predicate on the key itself.
pub fn key_bin_selectivity(layout: &EquiWidthBins, op: &PredicateOp) -> Result<BinSelectivity> {
    let ivs = op.intervals(true)?;
    Ok(BinSelectivity(
        (0..layout.count)
            .map(|i| {
                ivs.iter()
                    .map(|iv| layout.coverage(i, iv))
                    .sum::<f64>()
                    .min(1.0)
            })
            .collect(),
    ))
}

/// What happens to dominant join paths when filters are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominantPolicy {
    /// Dominant paths keep full weight; only exclusion removes them.
    #[default]
    Retain,
    /// Dominant paths are scaled by the same fraction as the background.
    Scale,
}

/// Scale the background of each bin by its selectivity; dominant entries
/// are left at full weight.
pub fn apply_filters(composite: &CompositeHist, fractions: &BinSelectivity) -> Result<CompositeHist> {
    apply_filters_with(composite, fractions, DominantPolicy::Retain)
}

pub fn apply_filters_with(
    composite: &CompositeHist,
    fractions: &BinSelectivity,
    policy: DominantPolicy,
) -> Result<CompositeHist> {
    if fractions.len() != composite.bins.len() {
        return Err(Error::DomainMismatch {
            left: format!("{} ({} bins)", composite.domain, composite.bins.len()),
            right: format!("selectivity over {} bins", fractions.len()),
        });
    }
    let mut out = composite.clone();
    for (bin, &f) in out.bins.iter_mut().zip(&fractions.0) {
        let f = f.clamp(0.0, 1.0);
        bin.background_est *= f;
        if policy == DominantPolicy::Scale {
            for v in bin.dominant.values_mut() {
                *v *= f;
            }
            bin.dominant.retain(|_, v| *v > 0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnData, KeyDomain};
    use crate::hist::{build_frequency_hist, build_tkhist1d, build_tkhist2d};
    use crate::join::CompositeBin;

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

    fn pred(col: &str, op: PredicateOp) -> Predicate {
        Predicate::new(ColumnRef::new("t", col), op)
    }

    fn example_hist() -> TkHist2D {
        let keys = [Some(1), Some(1), Some(2), Some(4)];
        let ys = ColumnData::Integer(vec![Some(5), Some(9), Some(5), Some(7)]);
        let binning = AttrBinning::EquiWidth {
            bins: EquiWidthBins::new(5.0, 9.0, 2).unwrap(),
            integer: false,
        };
        build_tkhist2d(&keys, &ys, &domain(1, 4, 1), binning)
            .unwrap()
            .named("k", "y")
    }

    #[test]
    fn grid_row_fraction() {
        let h = example_hist();
        let s = selectivity_2d(&h, &pred("y", PredicateOp::Cmp(CmpOp::Ge, Literal::Int(7)))).unwrap();
        assert_eq!(s.0, vec![0.5]);
    }

    #[test]
    fn full_range_predicate_is_identity() {
        let h = example_hist();
        let s = selectivity_2d(
            &h,
            &pred(
                "y",
                PredicateOp::Between(Literal::Int(0), Literal::Int(100)),
            ),
        )
        .unwrap();
        assert_eq!(s.0, vec![1.0]);
    }

    #[test]
    fn column_mismatch_is_rejected() {
        let h = example_hist();
        let err = selectivity_2d(&h, &pred("z", PredicateOp::Cmp(CmpOp::Ge, Literal::Int(7))));
        assert!(matches!(err, Err(Error::PredicateColumnMismatch { .. })));
    }

    #[test]
    fn empty_key_bins_are_neutral() {
        let keys = [Some(0), Some(0)];
        let ys = ColumnData::Integer(vec![Some(1), Some(2)]);
        let binning = AttrBinning::EquiWidth {
            bins: EquiWidthBins::for_integer_attribute(1, 2, 2).unwrap(),
            integer: true,
        };
        let h = build_tkhist2d(&keys, &ys, &domain(0, 9, 2), binning)
            .unwrap()
            .named("k", "y");
        let s = selectivity_2d(&h, &pred("y", PredicateOp::Cmp(CmpOp::Eq, Literal::Int(2)))).unwrap();
        assert_eq!(s.0, vec![0.5, 1.0]);
    }

    #[test]
    fn integer_embedding_is_exact_on_aligned_bounds() {
        let iv = PredicateOp::Cmp(CmpOp::Le, Literal::Int(7)).intervals(true).unwrap();
        assert_eq!(iv[0].hi, 8.0);
        let iv = PredicateOp::Cmp(CmpOp::Gt, Literal::Real(2.5)).intervals(true).unwrap();
        assert_eq!(iv[0].lo, 3.0);
        let iv = PredicateOp::Between(Literal::Int(3), Literal::Int(5))
            .intervals(true)
            .unwrap();
        assert_eq!((iv[0].lo, iv[0].hi), (3.0, 6.0));
    }

    #[test]
    fn combine_multiplies() {
        let a = BinSelectivity(vec![0.5, 1.0]);
        let b = BinSelectivity(vec![0.4, 0.25]);
        let c = combine_table_selectivity(&[a.clone(), b]).unwrap();
        assert!((c.0[0] - 0.2).abs() < 1e-15);
        assert_eq!(c.0[1], 0.25);
        assert_eq!(combine_table_selectivity(std::slice::from_ref(&a)).unwrap(), a);
        assert!(combine_table_selectivity(&[a, BinSelectivity(vec![1.0])]).is_err());
    }

    #[test]
    fn categorical_selectivity_is_exact() {
        let col = ColumnData::Text(vec![Some("a".into()), Some("b".into()), Some("a".into())]);
        let h = build_frequency_hist(&col);
        let eq_a = pred("c", PredicateOp::Cmp(CmpOp::Eq, Literal::Text("a".into())));
        assert!((selectivity_categorical(&h, &eq_a, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let in_ab = pred(
            "c",
            PredicateOp::In(vec![Literal::Text("a".into()), Literal::Text("b".into())]),
        );
        assert_eq!(selectivity_categorical(&h, &in_ab, 3).unwrap(), 1.0);
        let eq_z = pred("c", PredicateOp::Cmp(CmpOp::Eq, Literal::Text("z".into())));
        assert_eq!(selectivity_categorical(&h, &eq_z, 3).unwrap(), 0.0);
        let range = pred("c", PredicateOp::Cmp(CmpOp::Lt, Literal::Text("b".into())));
        assert!(selectivity_categorical(&h, &range, 3).is_err());
    }

    #[test]
    fn range_on_text_grid_is_rejected() {
        let binning = AttrBinning::distinct([AttrValue::Text("a".into())].iter());
        assert!(attribute_bin_fractions(
            &binning,
            &PredicateOp::Cmp(CmpOp::Gt, Literal::Text("a".into()))
        )
        .is_err());
    }

    fn composite(bg: &[f64], dom: &[(i64, f64)]) -> CompositeHist {
        let d = domain(0, 9, bg.len());
        let mut c = CompositeHist::from_tkhist(&build_tkhist1d(&[], &d, 0).unwrap(), "t");
        for (b, &v) in c.bins.iter_mut().zip(bg) {
            *b = CompositeBin {
                dominant: Default::default(),
                background_est: v,
                ndv_est: 1.0,
            };
        }
        for &(k, v) in dom {
            c.bins[0].dominant.insert(k, v);
        }
        c
    }

    #[test]
    fn apply_filters_cases() {
        let c = composite(&[4.0, 6.0], &[(1, 10.0)]);
        assert_eq!(apply_filters(&c, &BinSelectivity::ones(2)).unwrap(), c);

        let c0 = composite(&[4.0, 6.0], &[]);
        let zero = apply_filters(&c0, &BinSelectivity(vec![0.0, 0.0])).unwrap();
        assert_eq!(zero.total(), 0.0);

        let half = apply_filters(&c, &BinSelectivity(vec![0.5, 0.5])).unwrap();
        assert_eq!(half.bins[0].dominant.get(&1), Some(&10.0));
        assert_eq!(half.total(), 15.0);

        let scaled =
            apply_filters_with(&c, &BinSelectivity(vec![0.5, 0.5]), DominantPolicy::Scale).unwrap();
        assert_eq!(scaled.total(), 10.0);

        assert!(apply_filters(&c, &BinSelectivity::ones(3)).is_err());
    }

    #[test]
    fn key_restriction_covers_bins() {
        let layout = EquiWidthBins::for_integer_keys(0, 9, 2).unwrap();
        let s = key_bin_selectivity(&layout, &PredicateOp::Cmp(CmpOp::Ge, Literal::Int(3))).unwrap();
        assert_eq!(s.0, vec![0.4, 1.0]);
        let s = key_bin_selectivity(
            &layout,
            &PredicateOp::In(vec![Literal::Int(1), Literal::Int(1), Literal::Int(7)]),
        )
        .unwrap();
        assert_eq!(s.0, vec![0.2, 0.2]);
    }

    #[test]
    fn envelope_intersection() {
        let ge10 = PredicateOp::Cmp(CmpOp::Ge, Literal::Int(10));
        assert!(!ge10.may_match_range(5.0, 9.0));
        let ge7 = PredicateOp::Cmp(CmpOp::Ge, Literal::Int(7));
        assert!(ge7.may_match_range(5.0, 9.0));
        let between = PredicateOp::Between(Literal::Int(0), Literal::Int(4));
        assert!(!between.may_match_range(5.0, 9.0));
    }
}
