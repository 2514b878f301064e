use crate::pricing::{BidRecord, Side};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Thresholds a record must meet to count as price-setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SetterCriteria {
    /// Largest `|price − λ|`, currency/MWh.
    pub price_tolerance: f64,
    /// Utilisation must stay strictly below this.
    pub max_utilisation: f64,
    /// Utilisation must exceed this unless the dispatched energy reaches `min_energy`.
    pub min_utilisation: f64,
    /// MWh over the snapshot.
    pub min_energy: f64,
}

impl Default for SetterCriteria {
    fn default() -> Self {
        SetterCriteria {
            price_tolerance: 0.01,
            max_utilisation: 0.99,
            min_utilisation: 0.01,
            min_energy: 10.0,
        }
    }
}

impl SetterCriteria {
    pub fn admits(&self, record: &BidRecord, lambda: f64, weight: f64) -> bool {
        let u = record.utilisation();
        (record.price - lambda).abs() <= self.price_tolerance
            && u < self.max_utilisation
            && (u > self.min_utilisation || weight * record.volume_dispatched >= self.min_energy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    UniqueSupply,
    UniqueDemand,
    VarianceTiebreakSupply,
    VarianceTiebreakDemand,
    NoCandidate,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::UniqueSupply => "unique_supply",
            Rule::UniqueDemand => "unique_demand",
            Rule::VarianceTiebreakSupply => "variance_tiebreak_supply",
            Rule::VarianceTiebreakDemand => "variance_tiebreak_demand",
            Rule::NoCandidate => "no_candidate",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Rule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Rule::UniqueSupply,
            Rule::UniqueDemand,
            Rule::VarianceTiebreakSupply,
            Rule::VarianceTiebreakDemand,
            Rule::NoCandidate,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or_else(|| format!("unknown rule `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub technology: String,
    pub side: Side,
    pub price: f64,
    pub utilisation: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSetterVerdict {
    pub snapshot: usize,
    pub market_price: f64,
    pub candidates: Vec<Candidate>,
    pub chosen: Option<(String, Side)>,
    pub rule: Rule,
}

impl PriceSetterVerdict {
    pub fn chosen_technology(&self) -> Option<&str> {
        self.chosen.as_ref().map(|(t, _)| t.as_str())
    }
}

/// Weighted population variance of each technology's prices over the period, per side.
pub type VarianceTable = HashMap<(String, Side), f64>;

pub fn bid_variances(records: &[BidRecord], weights: &[f64]) -> VarianceTable {
    // (Σw, Σw·p, Σw·p²) would lose precision for large prices; accumulate per key instead.
    let mut series: HashMap<(String, Side), Vec<(f64, f64)>> = HashMap::new();
    for r in records {
        series
            .entry((r.technology.clone(), r.side))
            .or_default()
            .push((weights[r.snapshot], r.price));
    }
    series
        .into_iter()
        .map(|(key, pts)| {
            let total: f64 = pts.iter().map(|(w, _)| w).sum();
            let mean = pts.iter().map(|(w, p)| w * p).sum::<f64>() / total;
            let var = pts.iter().map(|(w, p)| w * (p - mean).powi(2)).sum::<f64>() / total;
            (key, var)
        })
        .collect()
}

/// Variances closer than this count as tied and fall back to the technology id.
const VARIANCE_TIE: f64 = 1e-9;

/// Applies the price-setting criteria to one snapshot's records.
///
/// Supply candidates take priority over demand candidates. Among several candidates on
/// the prevailing side the one with the steadiest bids over the period wins.
pub fn identify_price_setter(
    records: &[BidRecord],
    lambda: f64,
    weight: f64,
    variances: &VarianceTable,
    criteria: &SetterCriteria,
) -> PriceSetterVerdict {
    let snapshot = records.first().map_or(0, |r| r.snapshot);
    let candidates: Vec<Candidate> = records
        .iter()
        .filter(|r| criteria.admits(r, lambda, weight))
        .map(|r| Candidate {
            technology: r.technology.clone(),
            side: r.side,
            price: r.price,
            utilisation: r.utilisation(),
            variance: variances
                .get(&(r.technology.clone(), r.side))
                .copied()
                .unwrap_or(0.0),
        })
        .collect();
    let supply: Vec<&Candidate> = candidates.iter().filter(|c| c.side == Side::Supply).collect();
    let pool = if supply.is_empty() {
        candidates.iter().collect()
    } else {
        supply
    };
    let (chosen, rule) = match pool.as_slice() {
        [] => (None, Rule::NoCandidate),
        [only] => (
            Some(*only),
            if only.side == Side::Supply {
                Rule::UniqueSupply
            } else {
                Rule::UniqueDemand
            },
        ),
        many => {
            let least = many.iter().map(|c| c.variance).fold(f64::INFINITY, f64::min);
            let winner = many
                .iter()
                .filter(|c| c.variance - least <= VARIANCE_TIE * least.abs().max(1.0))
                .min_by(|a, b| a.technology.cmp(&b.technology))
                .copied()
                .expect("non-empty pool");
            let rule = if winner.side == Side::Supply {
                Rule::VarianceTiebreakSupply
            } else {
                Rule::VarianceTiebreakDemand
            };
            (Some(winner), rule)
        }
    };
    PriceSetterVerdict {
        snapshot,
        market_price: lambda,
        chosen: chosen.map(|c| (c.technology.clone(), c.side)),
        candidates,
        rule,
    }
}

/// Verdicts for every snapshot of a period. `records` must be in snapshot order.
pub fn identify_all(
    records: &[BidRecord],
    prices: &[f64],
    weights: &[f64],
    criteria: &SetterCriteria,
) -> Vec<PriceSetterVerdict> {
    use rayon::prelude::*;
    let variances = bid_variances(records, weights);
    let groups = super::by_snapshot(records, prices.len());
    groups
        .into_par_iter()
        .enumerate()
        .map(|(t, recs)| {
            let mut v = identify_price_setter(recs, prices[t], weights[t], &variances, criteria);
            v.snapshot = t;
            v
        })
        .collect()
}
