//! Estimation over a decomposed query.
//!
//! Groups are evaluated bottom-up. A leaf group is the star fold of its
//! members' key histograms. For an inner group, each child link with bridge
//! alias `B` first evaluates the child group, moves that result onto the
//! parent domain through `B`'s key-by-key grid, and turns it into a
//! per-bin fan-out factor: the number of child-side join tuples per row of
//! `B` in that parent bin. `B`'s parent-key histogram is scaled by the
//! factor before it enters the parent fold, so `B`'s own dominant keys on
//! the parent side survive the chain step.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::djpcd::{find_excluded_keys_with, EnvelopeMode, ExclusionSet};
use crate::error::{Error, Result};
use crate::join::{chain_translate, join_star_group, CompositeHist};
use crate::predicate::{
    apply_filters_with, combine_table_selectivity, key_bin_selectivity, selectivity_2d,
    selectivity_marginal, BinSelectivity, DominantPolicy, Predicate,
};
use crate::query::{decompose, parse_query, ColumnRef, Query, SubQueryPlan};
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Exclude dominant keys whose recorded attribute values cannot
    /// satisfy the query's filters.
    pub djpcd: bool,
    /// Scale dominant join paths by filter selectivity as well as the
    /// background.
    pub scale_dominants: bool,
    pub envelope_mode: EnvelopeMode,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            djpcd: true,
            scale_dominants: false,
            envelope_mode: EnvelopeMode::Full,
        }
    }
}

impl EstimateOptions {
    pub fn without_djpcd() -> Self {
        EstimateOptions {
            djpcd: false,
            ..Default::default()
        }
    }

    fn policy(&self) -> DominantPolicy {
        if self.scale_dominants {
            DominantPolicy::Scale
        } else {
            DominantPolicy::Retain
        }
    }
}

/// A resolved query with its join decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedQuery {
    pub query: Query,
    pub plan: SubQueryPlan,
}

impl PlannedQuery {
    pub fn new(query: Query, state: &State) -> Result<Self> {
        let plan = decompose(&query, &state.schema)?;
        Ok(PlannedQuery { query, plan })
    }

    pub fn parse(text: &str, state: &State) -> Result<Self> {
        PlannedQuery::new(parse_query(text, &state.schema)?, state)
    }
}

/// Estimate with the chosen options.
pub fn estimate_planned(pq: &PlannedQuery, state: &State, opts: EstimateOptions) -> Result<f64> {
    let excl = if opts.djpcd {
        find_excluded_keys_with(&pq.query, &state.correlations, opts.envelope_mode)
    } else {
        ExclusionSet::default()
    };
    estimate_with_exclusions(pq, state, &excl, opts)
}

/// The pipeline without dominant-key exclusion.
pub fn estimate_pure_join(pq: &PlannedQuery, state: &State) -> Result<f64> {
    estimate_planned(pq, state, EstimateOptions::without_djpcd())
}

/// The pipeline with dominant keys excluded from every star-group fold
/// when their recorded attribute values cannot satisfy the filters.
pub fn estimate_with_djpcd(pq: &PlannedQuery, state: &State) -> Result<f64> {
    estimate_planned(pq, state, EstimateOptions::default())
}

pub fn estimate_with_exclusions(
    pq: &PlannedQuery,
    state: &State,
    excl: &ExclusionSet,
    opts: EstimateOptions,
) -> Result<f64> {
    if pq.query.tables.len() == 1 {
        return single_table(&pq.query, state);
    }
    let ev = Evaluator {
        state,
        q: &pq.query,
        plan: &pq.plan,
        excl,
        opts,
        filters: true,
    };
    let mut folds = vec![None; pq.plan.groups.len()];
    Ok(ev.group(0, &mut folds)?.total().max(0.0))
}

/// Unfiltered star-group folds of every group, children before parents'
/// scaling has been applied; used to find dominant keys offline.
pub(crate) fn group_folds(pq: &PlannedQuery, state: &State) -> Result<Vec<CompositeHist>> {
    let excl = ExclusionSet::default();
    let ev = Evaluator {
        state,
        q: &pq.query,
        plan: &pq.plan,
        excl: &excl,
        opts: EstimateOptions::without_djpcd(),
        filters: false,
    };
    let mut folds = vec![None; pq.plan.groups.len()];
    if !pq.plan.groups.is_empty() {
        ev.group(0, &mut folds)?;
    }
    Ok(folds.into_iter().flatten().collect())
}

struct Evaluator<'a> {
    state: &'a State,
    q: &'a Query,
    plan: &'a SubQueryPlan,
    excl: &'a ExclusionSet,
    opts: EstimateOptions,
    filters: bool,
}

impl Evaluator<'_> {
    fn table(&self, alias: &str) -> Result<&str> {
        self.q
            .table_of(alias)
            .ok_or_else(|| Error::UnknownTable(alias.to_string()))
    }

    /// Whether `c` is a member column of some star group.
    fn is_member(&self, c: &ColumnRef) -> bool {
        self.plan.groups.iter().any(|g| g.members.contains(c))
    }

    fn group(&self, g: usize, folds: &mut Vec<Option<CompositeHist>>) -> Result<CompositeHist> {
        let group = &self.plan.groups[g];
        let domain = self.state.domain(&group.domain)?;
        let layout = *domain.bins()?;

        let mut excluded: HashSet<i64> = self.excl.for_columns(&group.members);
        let mut key_frac = BinSelectivity::ones(layout.count);
        let key_preds: Vec<&Predicate> = if self.filters {
            self.q
                .predicates
                .iter()
                .filter(|p| group.members.contains(&p.column))
                .collect()
        } else {
            Vec::new()
        };

        let mut lifted = Vec::with_capacity(group.members.len());
        for m in &group.members {
            let table = self.table(&m.alias)?;
            let h1 = self.state.table(table)?.key_hist(table, &m.column)?;
            for p in &key_preds {
                for k in h1.tracked_keys() {
                    if !p.op.matches(&crate::hist::AttrValue::Num(k as f64)) {
                        excluded.insert(k);
                    }
                }
            }
            let mut h = CompositeHist::from_tkhist(h1, m.to_string());
            if h.domain != group.domain || h.layout != layout {
                return Err(Error::DomainMismatch {
                    left: group.domain.clone(),
                    right: h.domain,
                });
            }
            for link in self
                .plan
                .children(g)
                .filter(|l| l.parent_column == *m)
            {
                let factors = self.child_factors(link.child, folds)?;
                h = h.scaled(&factors)?;
            }
            lifted.push(h);
        }
        for p in &key_preds {
            key_frac = key_frac.combine(&key_bin_selectivity(&layout, &p.op)?)?;
        }

        let mut fold = join_star_group(&lifted, &excluded)?;
        folds[g] = Some(fold.clone());
        if !self.filters {
            return Ok(fold);
        }

        let mut fractions = Vec::new();
        for m in &group.members {
            if self.plan.home.get(&m.alias) != Some(&g) {
                continue;
            }
            let table = self.table(&m.alias)?;
            let stats = self.state.table(table)?;
            for p in self.q.predicates_on(&m.alias) {
                if self.is_member(&p.column) {
                    continue;
                }
                let h2 = stats.hist_2d(table, &m.column, &p.column.column)?;
                fractions.push(selectivity_2d(h2, p)?);
            }
        }
        if !fractions.is_empty() {
            let combined = combine_table_selectivity(&fractions)?;
            fold = apply_filters_with(&fold, &combined, self.opts.policy())?;
        }
        for (bin, f) in fold.bins.iter_mut().zip(&key_frac.0) {
            bin.background_est *= f;
        }
        Ok(fold)
    }

    /// Per parent-side bin of the bridge, child-side join tuples per bridge
    /// row.
    fn child_factors(&self, child: usize, folds: &mut Vec<Option<CompositeHist>>) -> Result<Vec<f64>> {
        let link = self
            .plan
            .parent_link(child)
            .expect("child group has a parent link");
        let comp = self.group(child, folds)?;
        let table = self.table(&link.bridge)?;
        let stats = self.state.table(table)?;
        let grid = stats.hist_2d(table, &link.child_column.column, &link.parent_column.column)?;
        let parent_key = stats.key_hist(table, &link.parent_column.column)?;
        let moved = chain_translate(&comp, grid, parent_key)?;
        Ok(moved
            .bin_totals()
            .into_iter()
            .zip(&parent_key.bins)
            .map(|(w, b)| {
                let rows = b.total();
                if rows == 0 {
                    0.0
                } else {
                    w / rows as f64
                }
            })
            .collect())
    }
}

/// Single-table count. Without filters this is the stored row count.
/// With filters, and a key column to condition on, the filters are
/// evaluated per key bin through the key-by-column grids; otherwise the
/// marginal selectivities are multiplied.
fn single_table(q: &Query, state: &State) -> Result<f64> {
    let alias = &q.tables[0].alias;
    let table = q.tables[0].table.as_str();
    let stats = state.table(table)?;
    let rows = stats.row_count as f64;
    if q.predicates.is_empty() {
        return Ok(rows);
    }
    let pk = state
        .schema
        .table(table)
        .and_then(|t| t.primary_key.clone())
        .filter(|pk| stats.key_hists.contains_key(pk));
    let anchor = pk.or_else(|| stats.key_hists.keys().next().cloned());
    let anchored = anchor
        .as_deref()
        .and_then(|a| stats.key_hists.get(a).map(|h| (a, h)))
        .filter(|(_, h)| h.total_rows > 0);

    let Some((anchor, h1)) = anchored else {
        let mut sel = 1.0;
        for p in &q.predicates {
            let hist = stats.attr_hists.get(&p.column.column).ok_or_else(|| {
                Error::MissingHistogram(format!("{table}.{}", p.column.column))
            })?;
            sel *= selectivity_marginal(hist, &p.op)?;
        }
        return Ok(rows * sel);
    };

    let anchor_ref = ColumnRef::new(alias.as_str(), anchor);
    let mut comp = CompositeHist::from_tkhist(h1, anchor_ref.to_string());
    let mut fractions = Vec::new();
    let mut key_frac = BinSelectivity::ones(comp.bins.len());
    let mut failing = BTreeSet::new();
    for p in &q.predicates {
        if p.column == anchor_ref {
            key_frac = key_frac.combine(&key_bin_selectivity(&h1.layout, &p.op)?)?;
            failing.extend(
                h1.tracked_keys()
                    .into_iter()
                    .filter(|&k| !p.op.matches(&crate::hist::AttrValue::Num(k as f64))),
            );
        } else {
            let h2 = stats.hist_2d(table, anchor, &p.column.column)?;
            fractions.push(selectivity_2d(h2, p)?);
        }
    }
    for bin in &mut comp.bins {
        bin.dominant.retain(|k, _| !failing.contains(k));
    }
    if !fractions.is_empty() {
        let combined = combine_table_selectivity(&fractions)?;
        comp = apply_filters_with(&comp, &combined, DominantPolicy::Scale)?;
    }
    for (bin, f) in comp.bins.iter_mut().zip(&key_frac.0) {
        bin.background_est *= f;
    }
    Ok(comp.total() * rows / h1.total_rows as f64)
}
