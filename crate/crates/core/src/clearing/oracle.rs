//! Brute-force clearing of one snapshot by intersecting its step curves. Valid only where
//! the snapshot is not coupled to others (no storage, or storage values held fixed).

use super::{build_curves, CurveStep};
use crate::pricing::{BidRecord, Side};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Acceptance {
    pub technology: String,
    pub side: Side,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleClearing {
    pub price: f64,
    pub volume: f64,
    /// Set when the curves do not cross: no supply is cheap enough for any demand.
    pub no_trade: bool,
    pub accepted: Vec<Acceptance>,
}

/// Cleared volume and final cursor positions of the merit-order walk. `strict` stops at
/// steps whose prices are equal, giving the smallest cleared volume.
struct Walk {
    volume: f64,
    supply: usize,
    supply_used: f64,
    demand: usize,
    demand_used: f64,
}

fn walk(supply: &[CurveStep], demand: &[CurveStep], strict: bool) -> Walk {
    let (mut i, mut j) = (0, 0);
    let (mut si, mut dj) = (0.0, 0.0);
    let mut volume = 0.0;
    while i < supply.len() && j < demand.len() {
        let trade = if strict {
            supply[i].price < demand[j].price
        } else {
            supply[i].price <= demand[j].price
        };
        if !trade {
            break;
        }
        let s_left = supply[i].width() - si;
        let d_left = demand[j].width() - dj;
        let q = s_left.min(d_left);
        volume += q;
        si += q;
        dj += q;
        if si >= supply[i].width() {
            i += 1;
            si = 0.0;
        }
        if dj >= demand[j].width() {
            j += 1;
            dj = 0.0;
        }
    }
    Walk {
        volume,
        supply: i,
        supply_used: si,
        demand: j,
        demand_used: dj,
    }
}

/// Price where the curves meet after the walk `w`.
fn crossing_price(supply: &[CurveStep], demand: &[CurveStep], w: &Walk) -> f64 {
    let s_now = supply.get(w.supply).map(|s| s.price);
    let d_now = demand.get(w.demand).map(|s| s.price);
    let s_prev = w.supply.checked_sub(1).map(|i| supply[i].price);
    let d_prev = w.demand.checked_sub(1).map(|j| demand[j].price);
    if w.supply_used > 0.0 {
        return s_now.unwrap();
    }
    if w.demand_used > 0.0 {
        return d_now.unwrap();
    }
    match (s_now, d_now) {
        // Demand exhausted at a supply boundary: the last accepted supply sets the price,
        // unless nothing was accepted, then the cheapest supply.
        (_, None) => s_prev.or(s_now).unwrap_or(0.0),
        // Supply exhausted: the next unserved demand sets the price.
        (None, Some(d)) => d,
        // Both curves break at the same volume; take the supply side of the overlap.
        (Some(_), Some(d)) => match s_prev {
            Some(s) => s.max(d).min(d_prev.unwrap_or(f64::INFINITY)),
            None => d,
        },
    }
}

fn accepted(steps: &[CurveStep], side: Side, volume: f64) -> Vec<Acceptance> {
    steps
        .iter()
        .filter(|s| s.start < volume)
        .map(|s| Acceptance {
            technology: s.technology.clone(),
            side,
            volume: s.end.min(volume) - s.start,
        })
        .collect()
}

/// Intersects the supply and demand curves of one snapshot's records.
///
/// Where supply and demand overlap at one price over a range of volumes, the cleared
/// volume is the midpoint of that range.
pub fn clear_single_period(records: &[BidRecord]) -> OracleClearing {
    let (supply, demand) = build_curves(records);
    let (s, d) = (&supply.steps, &demand.steps);
    let low = walk(s, d, true);
    let high = walk(s, d, false);
    let no_trade = high.volume == 0.0;
    let price = if no_trade {
        match (d.first(), s.first()) {
            (Some(top), _) => top.price,
            (None, Some(cheapest)) => cheapest.price,
            (None, None) => 0.0,
        }
    } else {
        crossing_price(s, d, &high)
    };
    let volume = 0.5 * (low.volume + high.volume);
    let mut acc = accepted(s, Side::Supply, volume);
    acc.extend(accepted(d, Side::Demand, volume));
    OracleClearing {
        price,
        volume,
        no_trade,
        accepted: acc,
    }
}
