//! Supply and demand curves per snapshot, price-setter identification and period
//! statistics built on them.

mod averaged;
mod oracle;
mod setter;
mod stats;

pub use averaged::{averaged_curves, AveragedBin, AveragedCurve, MIN_COVERAGE};
pub use oracle::{clear_single_period, Acceptance, OracleClearing};
pub use setter::{
    bid_variances, identify_all, identify_price_setter, Candidate, PriceSetterVerdict, Rule,
    SetterCriteria, VarianceTable,
};
pub use stats::{
    price_duration, price_duration_of, setter_statistics, Band, PriceDurationCurve,
    SetterShare, SetterStatistics, ZERO_PRICE_THRESHOLD,
};

use crate::pricing::{BidRecord, Side};
use serde::Serialize;
use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveStep {
    /// Cumulative volume where the step begins, MW.
    pub start: f64,
    pub end: f64,
    pub price: f64,
    pub technology: String,
}

impl CurveStep {
    pub fn width(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketCurve {
    pub snapshot: usize,
    pub side: Side,
    pub steps: Vec<CurveStep>,
}

impl MarketCurve {
    pub fn total_volume(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.end)
    }

    /// Price of the step covering `volume`, with steps half-open on the right.
    pub fn price_at(&self, volume: f64) -> Option<f64> {
        self.steps
            .iter()
            .find(|s| s.start <= volume && volume < s.end)
            .map(|s| s.price)
    }
}

/// Merit order: ascending price for supply, descending for demand; ties by technology.
fn merit_order(side: Side) -> impl Fn(&&BidRecord, &&BidRecord) -> Ordering {
    move |a, b| {
        let by_price = a.price.total_cmp(&b.price);
        let by_price = if side == Side::Demand {
            by_price.reverse()
        } else {
            by_price
        };
        by_price.then_with(|| a.technology.cmp(&b.technology))
    }
}

fn curve(records: &[BidRecord], side: Side, snapshot: usize) -> MarketCurve {
    let mut sorted: Vec<&BidRecord> = records
        .iter()
        .filter(|r| r.side == side && r.volume_max > 0.0)
        .collect();
    sorted.sort_by(merit_order(side));
    let mut at = 0.0;
    let steps = sorted
        .into_iter()
        .map(|r| {
            let start = at;
            at += r.volume_max;
            CurveStep {
                start,
                end: at,
                price: r.price,
                technology: r.technology.clone(),
            }
        })
        .collect();
    MarketCurve {
        snapshot,
        side,
        steps,
    }
}

/// Supply and demand curves of one snapshot's records, stepped by `volume_max`.
/// Zero-volume records are left out.
pub fn build_curves(records: &[BidRecord]) -> (MarketCurve, MarketCurve) {
    let snapshot = records.first().map_or(0, |r| r.snapshot);
    debug_assert!(records.iter().all(|r| r.snapshot == snapshot));
    (
        curve(records, Side::Supply, snapshot),
        curve(records, Side::Demand, snapshot),
    )
}

/// Records grouped by snapshot, assuming snapshot-ordered input.
pub fn by_snapshot(records: &[BidRecord], snapshots: usize) -> Vec<&[BidRecord]> {
    let mut out = Vec::with_capacity(snapshots);
    let mut rest = records;
    for t in 0..snapshots {
        let n = rest.iter().take_while(|r| r.snapshot == t).count();
        let (head, tail) = rest.split_at(n);
        out.push(head);
        rest = tail;
    }
    out
}
