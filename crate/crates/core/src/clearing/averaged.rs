use super::MarketCurve;
use crate::pricing::Side;
use serde::Serialize;

/// Bins reached by less than this weighted share of snapshots are not reported.
pub const MIN_COVERAGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedBin {
    pub lower: f64,
    pub upper: f64,
    pub mean_price: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedCurve {
    pub side: Side,
    pub bin_width: f64,
    pub bins: Vec<AveragedBin>,
}

/// Weighted mean price per volume bin over snapshots whose curve reaches the bin.
///
/// A curve reaches a bin when its step at the bin midpoint exists; that step's price is
/// the curve's contribution. `curves` pairs each curve with its snapshot weight.
pub fn averaged_curves(curves: &[(&MarketCurve, f64)], side: Side, bin_width: f64) -> AveragedCurve {
    assert!(bin_width > 0.0, "bin width must be positive");
    let total: f64 = curves.iter().map(|(_, w)| w).sum();
    let longest = curves
        .iter()
        .map(|(c, _)| c.total_volume())
        .fold(0.0, f64::max);
    let n_bins = (longest / bin_width).ceil() as usize;
    let mut bins = Vec::new();
    for k in 0..n_bins {
        let mid = (k as f64 + 0.5) * bin_width;
        let (mut covered, mut sum) = (0.0, 0.0);
        for (c, w) in curves {
            if let Some(p) = c.price_at(mid) {
                covered += w;
                sum += w * p;
            }
        }
        if covered == 0.0 {
            continue;
        }
        let coverage = covered / total;
        if coverage < MIN_COVERAGE {
            continue;
        }
        bins.push(AveragedBin {
            lower: k as f64 * bin_width,
            upper: (k + 1) as f64 * bin_width,
            mean_price: sum / covered,
            coverage,
        });
    }
    AveragedCurve {
        side,
        bin_width,
        bins,
    }
}
