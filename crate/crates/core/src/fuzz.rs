//! Randomised single-snapshot merit-order instances, checked against the curve-intersection
//! oracle.

use crate::clearing::clear_single_period;
use crate::lp::{build_lp, kkt_residuals, solve, LpBackend, Mode, Tolerances};
use crate::model::{EnergyModel, GeneratorSpec, LoadSpec, TimeSeries};
use crate::pricing::{volume_bids, BidRecord, Origin, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Seed of instance `index` in a run seeded with `seed`.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 step, so neighbouring runs do not share instances.
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Storage-free instance with 2 to 10 generators and 1 to 3 sheddable load blocks.
pub fn random_instance(instance_seed: u64) -> EnergyModel {
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
    let mut m = EnergyModel::single_carrier(vec![1.0]);
    for k in 0..rng.gen_range(2..=10) {
        let mut g = GeneratorSpec::new("elec", rng.gen_range(0.0..150.0), rng.gen_range(10.0..200.0));
        if rng.gen_bool(0.3) {
            g.availability = TimeSeries::Constant(rng.gen_range(0.1..1.0));
        }
        m.generators.insert(format!("gen{k}"), g);
    }
    for k in 0..rng.gen_range(1..=3) {
        let mut load = LoadSpec::new("elec", rng.gen_range(20.0..300.0));
        load.sheddable = true;
        load.shed_price = rng.gen_range(300.0..3000.0);
        m.loads.insert(format!("load{k}"), load);
    }
    m
}

/// Bids read straight from the model: each generator offers its available capacity at its
/// marginal cost and each load block bids its demand at its shedding price.
pub fn model_bids(model: &EnergyModel, t: usize) -> Vec<BidRecord> {
    let gens = model.generators.iter().map(|(id, g)| BidRecord {
        technology: id.clone(),
        carrier: g.carrier.clone(),
        snapshot: t,
        side: Side::Supply,
        origin: Origin::Generator,
        price: g.marginal_cost,
        volume_max: g.capacity_existing * g.availability.at(t),
        volume_dispatched: 0.0,
        msv: None,
    });
    let loads = model.loads.iter().map(|(id, l)| BidRecord {
        technology: id.clone(),
        carrier: l.carrier.clone(),
        snapshot: t,
        side: Side::Demand,
        origin: Origin::Load,
        price: l.shed_price,
        volume_max: l.profile.at(t),
        volume_dispatched: 0.0,
        msv: None,
    });
    gens.chain(loads).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzCase {
    pub index: usize,
    pub seed: u64,
    pub lp_price: f64,
    /// Clearing price of the model's own bids.
    pub oracle_price: f64,
    /// Clearing price of the bids reconstructed from the solution's duals.
    pub reconstructed_price: f64,
    pub max_stationarity: f64,
    pub error: Option<String>,
}

impl FuzzCase {
    pub fn passed(&self, price_tol: f64, tol: &Tolerances) -> bool {
        self.error.is_none()
            && (self.lp_price - self.oracle_price).abs() <= price_tol
            && (self.lp_price - self.reconstructed_price).abs() <= price_tol
            && self.max_stationarity <= tol.stationarity
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzReport {
    pub seed: u64,
    pub cases: Vec<FuzzCase>,
    pub price_tolerance: f64,
    pub tolerances: Tolerances,
}

impl FuzzReport {
    pub fn failures(&self) -> Vec<&FuzzCase> {
        self.cases
            .iter()
            .filter(|c| !c.passed(self.price_tolerance, &self.tolerances))
            .collect()
    }

    pub fn passed(&self) -> usize {
        self.cases.len() - self.failures().len()
    }

    pub fn summary(&self) -> String {
        format!("{}/{} passed", self.passed(), self.cases.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzOptions {
    pub n: usize,
    pub seed: u64,
    pub price_tolerance: f64,
    pub tolerances: Tolerances,
    /// Shifts the oracle price of this instance, to exercise failure reporting.
    pub inject_failure: Option<usize>,
}

impl Default for FuzzOptions {
    fn default() -> Self {
        FuzzOptions {
            n: 200,
            seed: 7,
            price_tolerance: 1e-6,
            tolerances: Tolerances::default(),
            inject_failure: None,
        }
    }
}

pub fn run_case(index: usize, seed: u64, backend: &dyn LpBackend) -> FuzzCase {
    let model = random_instance(seed);
    let mut case = FuzzCase {
        index,
        seed,
        lp_price: f64::NAN,
        oracle_price: clear_single_period(&model_bids(&model, 0)).price,
        reconstructed_price: f64::NAN,
        max_stationarity: f64::NAN,
        error: None,
    };
    let solved = build_lp(&model, Mode::DispatchOnly, None)
        .map_err(|e| e.to_string())
        .and_then(|p| solve(&p, backend).map(|s| (p, s)).map_err(|e| e.to_string()));
    let (problem, state) = match solved {
        Ok(ps) => ps,
        Err(e) => {
            case.error = Some(e);
            return case;
        }
    };
    case.lp_price = state.price("elec", 0);
    case.max_stationarity = kkt_residuals(&state, &problem).max_stationarity();
    match volume_bids(&state, 0, "elec") {
        Ok(records) => case.reconstructed_price = clear_single_period(&records).price,
        Err(e) => case.error = Some(e.to_string()),
    }
    case
}

pub fn run_fuzz(options: &FuzzOptions, backend: &dyn LpBackend) -> FuzzReport {
    let cases = (0..options.n)
        .into_par_iter()
        .map(|i| {
            let mut case = run_case(i, instance_seed(options.seed, i), backend);
            if options.inject_failure == Some(i) {
                case.oracle_price += 1.0;
            }
            case
        })
        .collect();
    FuzzReport {
        seed: options.seed,
        cases,
        price_tolerance: options.price_tolerance,
        tolerances: options.tolerances,
    }
}
