use super::{PriceSetterVerdict, Rule};
use crate::lp::SolvedState;
use crate::pricing::Side;
use indexmap::IndexMap;
use serde::Serialize;
use std::fmt;

/// Prices strictly below this count as zero prices, currency/MWh.
pub const ZERO_PRICE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceDurationCurve {
    pub label: String,
    /// `(price, weight)` in non-increasing price order; ties keep snapshot order.
    pub points: Vec<(f64, f64)>,
    pub zero_price_share: f64,
}

impl PriceDurationCurve {
    pub fn prices(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn mean_price(&self) -> f64 {
        let total: f64 = self.points.iter().map(|p| p.1).sum();
        self.points.iter().map(|(p, w)| p * w).sum::<f64>() / total
    }
}

pub fn price_duration(label: &str, prices: &[f64], weights: &[f64]) -> PriceDurationCurve {
    assert_eq!(prices.len(), weights.len());
    let total: f64 = weights.iter().sum();
    let zero: f64 = prices
        .iter()
        .zip(weights)
        .filter(|(p, _)| **p < ZERO_PRICE_THRESHOLD)
        .fold(0.0, |acc, (_, w)| acc + w);
    let mut points: Vec<(f64, f64)> = prices.iter().copied().zip(weights.iter().copied()).collect();
    points.sort_by(|a, b| b.0.total_cmp(&a.0));
    PriceDurationCurve {
        label: label.to_string(),
        points,
        zero_price_share: if total > 0.0 { zero / total } else { 0.0 },
    }
}

/// Duration curve of `carrier`'s prices in a solved state.
pub fn price_duration_of(state: &SolvedState, carrier: &str, label: &str) -> PriceDurationCurve {
    price_duration(label, &state.prices[carrier], &state.model.snapshots.weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    All,
    Low,
    Middle,
    High,
}

impl Band {
    pub fn as_str(self) -> &'static str {
        match self {
            Band::All => "all",
            Band::Low => "low",
            Band::Middle => "middle",
            Band::High => "high",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetterShare {
    pub technology: String,
    pub side: Side,
    pub band: Band,
    /// Weighted share of the band's decided snapshots.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetterStatistics {
    pub shares: Vec<SetterShare>,
    /// Weighted share of all snapshots without a candidate.
    pub undetermined_share: f64,
    pub q30: f64,
    pub q70: f64,
}

impl SetterStatistics {
    pub fn share(&self, technology: &str, side: Side, band: Band) -> f64 {
        self.shares
            .iter()
            .find(|s| s.technology == technology && s.side == side && s.band == band)
            .map_or(0.0, |s| s.share)
    }
}

/// Smallest price whose cumulative weight reaches `q` of the total.
fn weighted_quantile(sorted: &[(f64, f64)], q: f64) -> f64 {
    let total: f64 = sorted.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for &(p, w) in sorted {
        acc += w;
        if acc >= q * total * (1.0 - 1e-12) {
            return p;
        }
    }
    sorted.last().map_or(0.0, |p| p.0)
}

/// Band of `price` given the band edges: `[min, q30)`, `[q30, q70]`, `(q70, max]`.
fn band_of(price: f64, q30: f64, q70: f64) -> Band {
    if price < q30 {
        Band::Low
    } else if price <= q70 {
        Band::Middle
    } else {
        Band::High
    }
}

/// Weighted price-setter shares overall and per price band.
pub fn setter_statistics(verdicts: &[PriceSetterVerdict], weights: &[f64]) -> SetterStatistics {
    let mut sorted: Vec<(f64, f64)> = verdicts
        .iter()
        .map(|v| (v.market_price, weights[v.snapshot]))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let q30 = weighted_quantile(&sorted, 0.3);
    let q70 = weighted_quantile(&sorted, 0.7);

    let total: f64 = verdicts.iter().map(|v| weights[v.snapshot]).sum();
    let mut undetermined = 0.0;
    let mut tally: IndexMap<(Band, String, Side), f64> = IndexMap::new();
    let mut band_total: IndexMap<Band, f64> = IndexMap::new();
    for v in verdicts {
        let w = weights[v.snapshot];
        let Some((tech, side)) = &v.chosen else {
            debug_assert_eq!(v.rule, Rule::NoCandidate);
            undetermined += w;
            continue;
        };
        for band in [Band::All, band_of(v.market_price, q30, q70)] {
            *tally.entry((band, tech.clone(), *side)).or_default() += w;
            *band_total.entry(band).or_default() += w;
        }
    }
    let mut shares: Vec<SetterShare> = tally
        .into_iter()
        .map(|((band, technology, side), w)| SetterShare {
            technology,
            side,
            band,
            share: w / band_total[&band],
        })
        .collect();
    shares.sort_by(|a, b| {
        (a.band, a.side, &a.technology).cmp(&(b.band, b.side, &b.technology))
    });
    SetterStatistics {
        shares,
        undetermined_share: if total > 0.0 { undetermined / total } else { 0.0 },
        q30,
        q70,
    }
}
