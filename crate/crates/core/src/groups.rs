//! Taylor fits per metadata group, laid out like the market, category,
//! sector and region tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GroupError;
use crate::model::{Category, InstrumentId, InstrumentMeta, Market, MeanVariancePoint, Region, Sector, TaylorFit};
use crate::numeric::Precision;
use crate::taylor::fit_taylor;

pub const DEFAULT_MIN_N: usize = 3;
pub const ALL_LABEL: &str = "All";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKey {
    WholeSample,
    Market,
    Category,
    Sector,
    Region,
}

impl FromStr for GroupKey {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" | "whole-sample" => Ok(GroupKey::WholeSample),
            "market" => Ok(GroupKey::Market),
            "category" => Ok(GroupKey::Category),
            "sector" => Ok(GroupKey::Sector),
            "region" => Ok(GroupKey::Region),
            _ => Err(GroupError::UnknownKey(s.to_string())),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupKey::WholeSample => "all",
            GroupKey::Market => "market",
            GroupKey::Category => "category",
            GroupKey::Sector => "sector",
            GroupKey::Region => "region",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CellFit {
    Fitted(TaylorFit),
    /// Too few usable points; printed as `/`.
    Insufficient,
}

impl CellFit {
    pub fn fit(&self) -> Option<&TaylorFit> {
        match self {
            CellFit::Fitted(f) => Some(f),
            CellFit::Insufficient => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    /// Sub-market column, or `All`.
    pub market: String,
    /// Instruments in the cell.
    pub n: usize,
    pub fit: CellFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupFitTable {
    pub key: GroupKey,
    pub rows: Vec<GroupRow>,
    /// Points with no metadata, or none for the active key.
    pub excluded_missing_meta: usize,
}

impl GroupFitTable {
    pub fn row(&self, group: &str, market: &str) -> Option<&GroupRow> {
        self.rows.iter().find(|r| r.group == group && r.market == market)
    }

    /// Tab-separated table; insufficient cells print `/`.
    pub fn to_tsv(&self, precision: Precision) -> String {
        let mut out = String::from("group\tmarket\tn\tb\tse_b\tp_b\tlog_a\tse_log_a\tp_a\tadj_r2\n");
        for row in &self.rows {
            out.push_str(&format!("{}\t{}\t{}", row.group, row.market, row.n));
            match &row.fit {
                CellFit::Fitted(f) => {
                    for v in [f.b, f.se_b, f.p_b, f.log_a, f.se_log_a, f.p_a, f.adj_r2] {
                        out.push('\t');
                        out.push_str(&precision.format(v));
                    }
                }
                CellFit::Insufficient => out.push_str(&"\t/".repeat(7)),
            }
            out.push('\n');
        }
        out
    }
}

/// The group an instrument belongs to under `key`, if its metadata says.
pub fn group_label(meta: &InstrumentMeta, key: GroupKey) -> Option<String> {
    match key {
        GroupKey::WholeSample => Some(ALL_LABEL.to_string()),
        GroupKey::Market => Some(meta.market.to_string()),
        GroupKey::Category => meta.category.map(|c| c.to_string()),
        GroupKey::Sector => meta.sector.map(|s| s.to_string()),
        GroupKey::Region => meta.region.map(|r| r.to_string()),
    }
}

/// Canonical row order for each key.
pub fn group_rank(key: GroupKey, label: &str) -> usize {
    match key {
        GroupKey::WholeSample => 0,
        GroupKey::Market => label
            .parse::<Market>()
            .map_or(usize::MAX, |m| Market::ALL.iter().position(|x| *x == m).unwrap_or(usize::MAX)),
        GroupKey::Category => label
            .parse::<Category>()
            .map_or(usize::MAX, |c| Category::LETTERS.iter().position(|&l| l == c.letter()).unwrap_or(usize::MAX)),
        GroupKey::Sector => label.parse::<Sector>().map_or(usize::MAX, |s| Sector::all().position(|x| x == s).unwrap_or(usize::MAX)),
        GroupKey::Region => label.parse::<Region>().map_or(usize::MAX, |r| Region::all().position(|x| x == r).unwrap_or(usize::MAX)),
    }
}

fn fit_cell(group: &str, market: &str, points: &[MeanVariancePoint], min_n: usize) -> GroupRow {
    let fit = if points.len() >= min_n {
        fit_taylor(points).map_or(CellFit::Insufficient, CellFit::Fitted)
    } else {
        CellFit::Insufficient
    };
    GroupRow {
        group: group.to_string(),
        market: market.to_string(),
        n: points.len(),
        fit,
    }
}

/// Fits every (group, sub-market) cell.
///
/// For `Market` the rows are the whole sample followed by one row per market
/// present. For category, sector and region every group present gets an
/// `All` column plus one column per market in `market_filter` (default: all
/// markets present). `market_filter` always restricts which instruments take part.
pub fn group_fit(
    points: &[MeanVariancePoint],
    meta: &[InstrumentMeta],
    key: GroupKey,
    market_filter: Option<&[Market]>,
    min_n: usize,
) -> Result<GroupFitTable, GroupError> {
    let by_code: HashMap<InstrumentId, &InstrumentMeta> = meta.iter().map(|m| (m.code, m)).collect();
    let allowed = |m: Market| market_filter.is_none_or(|f| f.contains(&m));

    let mut excluded = 0;
    // (group label, market) -> points
    let mut members: Vec<(String, Market, MeanVariancePoint)> = Vec::new();
    for p in points {
        let Some(m) = by_code.get(&p.instrument) else {
            excluded += 1;
            continue;
        };
        if !allowed(m.market) {
            continue;
        }
        match group_label(m, key) {
            Some(label) => members.push((label, m.market, *p)),
            None => excluded += 1,
        }
    }

    let mut rows = Vec::new();
    match key {
        GroupKey::WholeSample | GroupKey::Market => {
            let all: Vec<_> = members.iter().map(|(_, _, p)| *p).collect();
            rows.push(fit_cell(ALL_LABEL, ALL_LABEL, &all, min_n));
            if key == GroupKey::Market {
                let mut per_market: BTreeMap<Market, Vec<MeanVariancePoint>> = BTreeMap::new();
                for (_, market, p) in &members {
                    per_market.entry(*market).or_default().push(*p);
                }
                for (market, pts) in per_market {
                    rows.push(fit_cell(market.name(), ALL_LABEL, &pts, min_n));
                }
            }
        }
        GroupKey::Category | GroupKey::Sector | GroupKey::Region => {
            let columns: Vec<Market> = match market_filter {
                Some(f) => Market::ALL.into_iter().filter(|m| f.contains(m)).collect(),
                None => {
                    let present: BTreeSet<Market> = members.iter().map(|(_, m, _)| *m).collect();
                    present.into_iter().collect()
                }
            };
            let mut groups: BTreeMap<(usize, String), Vec<(Market, MeanVariancePoint)>> = BTreeMap::new();
            for (label, market, p) in &members {
                groups
                    .entry((group_rank(key, label), label.clone()))
                    .or_default()
                    .push((*market, *p));
            }
            for ((_, label), cell) in groups {
                let all: Vec<_> = cell.iter().map(|(_, p)| *p).collect();
                rows.push(fit_cell(&label, ALL_LABEL, &all, min_n));
                for &market in &columns {
                    let pts: Vec<_> = cell.iter().filter(|(m, _)| *m == market).map(|(_, p)| *p).collect();
                    rows.push(fit_cell(&label, market.name(), &pts, min_n));
                }
            }
        }
    }
    Ok(GroupFitTable {
        key,
        rows,
        excluded_missing_meta: excluded,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketComparison {
    pub above_two: Vec<(Market, f64)>,
    pub below_two: Vec<(Market, f64)>,
    /// Markets whose point estimate is exactly 2.
    pub at_two: Vec<Market>,
    /// `Some(true)` when every fitted A-share market has b > 2.
    pub a_share_above_two: Option<bool>,
    /// `Some(true)` when every fitted B-share market has b < 2.
    pub b_share_below_two: Option<bool>,
}

/// Classifies each market row's exponent against 2.
pub fn cross_market_comparison(table: &GroupFitTable) -> MarketComparison {
    let mut report = MarketComparison::default();
    let mut a_share = Vec::new();
    let mut b_share = Vec::new();
    for row in &table.rows {
        let (Ok(market), Some(fit)) = (row.group.parse::<Market>(), row.fit.fit()) else {
            continue;
        };
        if row.market != ALL_LABEL {
            continue;
        }
        let b = fit.b;
        if b > 2.0 {
            report.above_two.push((market, b));
        } else if b < 2.0 {
            report.below_two.push((market, b));
        } else {
            report.at_two.push(market);
        }
        if market.is_b_share() {
            b_share.push(b < 2.0);
        } else {
            a_share.push(b > 2.0);
        }
    }
    let all = |v: &[bool]| (!v.is_empty()).then(|| v.iter().all(|&x| x));
    report.a_share_above_two = all(&a_share);
    report.b_share_below_two = all(&b_share);
    report
}
