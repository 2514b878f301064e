//! The full post-solve pipeline on one market carrier: bids, curves, price setters and
//! period statistics.

use crate::clearing::{
    averaged_curves, build_curves, by_snapshot, identify_all, price_duration_of,
    setter_statistics, AveragedCurve, MarketCurve, PriceDurationCurve, PriceSetterVerdict,
    SetterCriteria, SetterStatistics,
};
use crate::lp::SolvedState;
use crate::pricing::{reconstruct_all, BidRecord, PricingError, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisOptions {
    pub criteria: SetterCriteria,
    /// MW per averaged-curve bin.
    pub bin_width: f64,
    /// Label used for the price-duration curve.
    pub label: String,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            criteria: SetterCriteria::default(),
            bin_width: 1.0,
            label: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub market_carrier: String,
    pub records: Vec<BidRecord>,
    pub curves: Vec<(MarketCurve, MarketCurve)>,
    pub verdicts: Vec<PriceSetterVerdict>,
    pub pdc: PriceDurationCurve,
    pub averaged_supply: AveragedCurve,
    pub averaged_demand: AveragedCurve,
    pub statistics: SetterStatistics,
}

pub fn analyze(
    state: &SolvedState,
    market_carrier: &str,
    options: &AnalysisOptions,
) -> Result<Analysis, PricingError> {
    let records = reconstruct_all(state, market_carrier)?;
    let n = state.snapshot_count();
    let weights = &state.model.snapshots.weights;
    let prices = &state.prices[market_carrier];
    let curves: Vec<(MarketCurve, MarketCurve)> = by_snapshot(&records, n)
        .into_par_iter()
        .enumerate()
        .map(|(t, recs)| {
            let (mut s, mut d) = build_curves(recs);
            s.snapshot = t;
            d.snapshot = t;
            (s, d)
        })
        .collect();
    let verdicts = identify_all(&records, prices, weights, &options.criteria);
    let pdc = price_duration_of(state, market_carrier, &options.label);
    let side = |pick: fn(&(MarketCurve, MarketCurve)) -> &MarketCurve, side: Side| {
        let weighted: Vec<(&MarketCurve, f64)> =
            curves.iter().map(pick).zip(weights.iter().copied()).collect();
        averaged_curves(&weighted, side, options.bin_width)
    };
    let averaged_supply = side(|c| &c.0, Side::Supply);
    let averaged_demand = side(|c| &c.1, Side::Demand);
    let statistics = setter_statistics(&verdicts, weights);
    Ok(Analysis {
        market_carrier: market_carrier.to_string(),
        records,
        curves,
        verdicts,
        pdc,
        averaged_supply,
        averaged_demand,
        statistics,
    })
}

/// Pearson correlation of two equally long series. A constant series has no defined
/// correlation; two identical constant series count as fully correlated and any other
/// constant case as uncorrelated.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let flat = |s: f64, m: f64| s <= 1e-18 * n * m.abs().max(1.0).powi(2);
    match (flat(saa, ma), flat(sbb, mb)) {
        (true, true) => {
            if (ma - mb).abs() <= 1e-9 * ma.abs().max(1.0) {
                1.0
            } else {
                0.0
            }
        }
        (true, false) | (false, true) => 0.0,
        _ => (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
    }
}

/// Weighted share of snapshots whose verdicts name the same technology and side,
/// counting two undetermined verdicts as agreeing.
pub fn setter_agreement(a: &[PriceSetterVerdict], b: &[PriceSetterVerdict], weights: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return 1.0;
    }
    let same: f64 = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.chosen == y.chosen)
        .map(|(x, _)| weights[x.snapshot])
        .sum();
    same / total
}
