use super::*;
use crate::lp::{build_lp, kkt_residuals, solve, HighsBackend, Mode, VarKey};
use crate::model::{
    Co2Policy, ConverterSpec, EnergyModel, GeneratorSpec, LoadSpec, StoreSpec, TimeSeries,
};
use approx::assert_abs_diff_eq;

fn solved(m: &EnergyModel) -> SolvedState {
    let p = build_lp(m, Mode::DispatchOnly, None).unwrap();
    solve(&p, &HighsBackend::default()).unwrap()
}

fn find<'a>(records: &'a [BidRecord], tech: &str, side: Side) -> &'a BidRecord {
    records
        .iter()
        .find(|r| r.technology == tech && r.side == side)
        .unwrap_or_else(|| panic!("no {side} record for {tech}"))
}

#[test]
fn solar_ask_is_availability_times_capacity() {
    let mut m = EnergyModel::single_carrier(vec![1.0]);
    let mut solar = GeneratorSpec::new("elec", 0.0, 100.0);
    solar.availability = TimeSeries::Constant(0.6);
    m.generators.insert("solar".into(), solar);
    m.generators.insert("gas".into(), GeneratorSpec::new("elec", 50.0, 100.0));
    m.loads.insert("load".into(), LoadSpec::new("elec", 80.0));
    let s = solved(&m);
    let r = generator_ask(&s, "solar", 0).unwrap();
    assert_eq!(r.price, 0.0);
    assert_abs_diff_eq!(r.volume_max, 60.0, epsilon = 1e-9);
    assert_abs_diff_eq!(r.volume_dispatched, 60.0, epsilon = 1e-6);
    assert_abs_diff_eq!(r.utilisation(), 1.0, epsilon = 1e-6);
}

#[test]
fn binding_volume_limit_adds_rent() {
    let mut m = EnergyModel::single_carrier(vec![1.0, 1.0]);
    let mut biomass = GeneratorSpec::new("elec", 13.65, 100.0);
    biomass.volume_limit = Some(100.0);
    m.generators.insert("biomass".into(), biomass);
    m.generators.insert("gas".into(), GeneratorSpec::new("elec", 25.65, 200.0));
    m.loads.insert("load".into(), LoadSpec::new("elec", 80.0));
    let s = solved(&m);
    assert_abs_diff_eq!(s.generators["biomass"].volume_rent, 12.0, epsilon = 1e-6);
    let r = generator_ask(&s, "biomass", 0).unwrap();
    assert_abs_diff_eq!(r.price, 13.65 + 12.0, epsilon = 1e-6);
}

#[test]
fn carbon_price_raises_coal_ask() {
    let mut m = EnergyModel::single_carrier(vec![1.0]).with_carrier("co2", "t");
    let mut coal = GeneratorSpec::new("elec", 9.55, 100.0);
    coal.co2_intensity = 0.9;
    let mut gas = GeneratorSpec::new("elec", 24.57, 100.0);
    gas.co2_intensity = 0.4;
    m.generators.insert("coal".into(), coal);
    m.generators.insert("gas".into(), gas);
    m.loads.insert("load".into(), LoadSpec::new("elec", 100.0));
    m.co2 = Some(Co2Policy {
        carrier: "co2".into(),
        budget: 60.0,
        offset_volume: 0.0,
        offset_price: 0.0,
    });
    let s = solved(&m);
    assert!(s.co2_price > 1.0, "budget should bind: {}", s.co2_price);
    let coal = generator_ask(&s, "coal", 0).unwrap();
    assert_abs_diff_eq!(coal.price, 9.55 + 0.9 * s.co2_price, epsilon = 1e-6);
    // Both plants run part-loaded, so both asks equal the price.
    let lambda = s.price("elec", 0);
    assert_abs_diff_eq!(coal.price, lambda, epsilon = 1e-6);
    assert_abs_diff_eq!(generator_ask(&s, "gas", 0).unwrap().price, lambda, epsilon = 1e-6);
}

fn gas_system() -> EnergyModel {
    let mut m = EnergyModel::single_carrier(vec![1.0]).with_carrier("gas", "MWh_th");
    m.generators.insert("gas_supply".into(), GeneratorSpec::new("gas", 24.57, 1e4));
    m
}

#[test]
fn gas_turbine_ask() {
    let mut m = gas_system();
    m.converters.insert(
        "turbine".into(),
        ConverterSpec::new("gas", &[("elec", 0.5)], 400.0),
    );
    m.loads.insert("load".into(), LoadSpec::new("elec", 100.0));
    let s = solved(&m);
    let r = converter_ask(&s, "turbine", "elec", 0).unwrap();
    assert_abs_diff_eq!(r.price, 49.14, epsilon = 1e-9);
    assert_abs_diff_eq!(s.price("elec", 0), 49.14, epsilon = 1e-6);
    assert_abs_diff_eq!(r.volume_max, 200.0, epsilon = 1e-9);
    assert_abs_diff_eq!(r.volume_dispatched, 100.0, epsilon = 1e-6);
}

#[test]
fn identity_converter_passes_input_price() {
    let mut m = gas_system();
    m.converters.insert("link".into(), ConverterSpec::new("gas", &[("elec", 1.0)], 400.0));
    m.loads.insert("load".into(), LoadSpec::new("elec", 100.0));
    let s = solved(&m);
    let r = converter_ask(&s, "link", "elec", 0).unwrap();
    assert_abs_diff_eq!(r.price, s.price("gas", 0), epsilon = 1e-12);
}

#[test]
fn chp_ask_credits_heat_revenue() {
    let mut m = gas_system().with_carrier("heat", "MWh_th");
    m.converters.insert(
        "chp".into(),
        ConverterSpec::new("gas", &[("elec", 0.4), ("heat", 0.45)], 200.0),
    );
    m.generators.insert("boiler".into(), GeneratorSpec::new("heat", 40.0, 1e3));
    m.generators.insert("peaker".into(), GeneratorSpec::new("elec", 100.0, 1e3));
    m.loads.insert("load".into(), LoadSpec::new("elec", 40.0));
    m.loads.insert("heat_load".into(), LoadSpec::new("heat", 200.0));
    let s = solved(&m);
    assert_abs_diff_eq!(s.price("heat", 0), 40.0, epsilon = 1e-6);
    let r = converter_ask(&s, "chp", "elec", 0).unwrap();
    let expected = (24.57 - 0.45 * 40.0) / 0.4;
    assert_abs_diff_eq!(expected, 16.425, epsilon = 1e-12);
    assert_abs_diff_eq!(r.price, expected, epsilon = 1e-6);
    // Marginal in electricity, so the ask sets the price.
    assert_abs_diff_eq!(s.price("elec", 0), expected, epsilon = 1e-6);
}

#[test]
fn converter_ask_errors() {
    let mut m = gas_system();
    m.converters.insert("turbine".into(), ConverterSpec::new("gas", &[("elec", 0.5)], 400.0));
    m.loads.insert("load".into(), LoadSpec::new("elec", 10.0));
    let s = solved(&m);
    assert!(matches!(
        converter_ask(&s, "turbine", "gas", 0),
        Err(PricingError::NoOutputPort { .. })
    ));
    assert!(matches!(
        converter_ask(&s, "nope", "elec", 0),
        Err(PricingError::UnknownComponent(_))
    ));
}

#[test]
fn electrolysis_bid() {
    let mut m = EnergyModel::single_carrier(vec![1.0]).with_carrier("h2", "MWh_H2");
    m.generators.insert("wind".into(), GeneratorSpec::new("elec", 10.0, 100.0));
    m.generators.insert("h2_import".into(), GeneratorSpec::new("h2", 78.0, 1e3));
    m.converters.insert("electrolysis".into(), ConverterSpec::new("elec", &[("h2", 0.7)], 200.0));
    m.loads.insert("load".into(), LoadSpec::new("elec", 50.0));
    m.loads.insert("h2_load".into(), LoadSpec::new("h2", 100.0));
    let s = solved(&m);
    let r = converter_bid(&s, "electrolysis", 0).unwrap();
    assert_eq!(r.side, Side::Demand);
    assert_abs_diff_eq!(r.price, 54.6, epsilon = 1e-9);
    assert_abs_diff_eq!(s.price("elec", 0), 54.6, epsilon = 1e-6);
    assert_abs_diff_eq!(r.volume_max, 200.0, epsilon = 1e-9);
    assert_abs_diff_eq!(r.volume_dispatched, 50.0, epsilon = 1e-6);
}

#[test]
fn heat_pump_bid() {
    let mut m = EnergyModel::single_carrier(vec![1.0]).with_carrier("heat", "MWh_th");
    m.generators.insert("wind".into(), GeneratorSpec::new("elec", 10.0, 100.0));
    m.generators.insert("boiler".into(), GeneratorSpec::new("heat", 40.0, 1e3));
    m.converters.insert("heat_pump".into(), ConverterSpec::new("elec", &[("heat", 3.0)], 100.0));
    m.loads.insert("load".into(), LoadSpec::new("elec", 50.0));
    m.loads.insert("heat_load".into(), LoadSpec::new("heat", 300.0));
    let s = solved(&m);
    let r = converter_bid(&s, "heat_pump", 0).unwrap();
    assert_abs_diff_eq!(r.price, 120.0, epsilon = 1e-9);
    assert_abs_diff_eq!(s.price("elec", 0), 120.0, epsilon = 1e-6);
}

/// Battery on its own carrier, filled to `soc` before the only snapshot.
fn battery(soc: f64, capacity: f64) -> EnergyModel {
    let mut m = EnergyModel::single_carrier(vec![1.0]).with_carrier("battery", "MWh_el");
    m.generators.insert("gas".into(), GeneratorSpec::new("elec", 60.0, 200.0));
    m.converters.insert("charger".into(), ConverterSpec::new("elec", &[("battery", 0.96)], 50.0));
    m.converters.insert("discharger".into(), ConverterSpec::new("battery", &[("elec", 0.96)], 50.0));
    m.stores.insert(
        "battery".into(),
        StoreSpec {
            cyclic: false,
            initial_soc: Some(soc),
            linked_charger: Some("charger".into()),
            linked_discharger: Some("discharger".into()),
            ..StoreSpec::cyclic("battery", capacity)
        },
    );
    m.loads.insert("load".into(), LoadSpec::new("elec", 5.0));
    m
}

#[test]
fn charger_bid_from_storage_value() {
    let mut s = solved(&battery(10.0, 100.0));
    s.prices["battery"][0] = 50.0;
    let r = converter_bid(&s, "charger", 0).unwrap();
    assert_abs_diff_eq!(r.price, 48.0, epsilon = 1e-12);
    assert_eq!(r.msv, Some(50.0));
}

#[test]
fn discharger_volume_limited_by_level() {
    let s = solved(&battery(10.0, 100.0));
    let r = converter_ask(&s, "discharger", "elec", 0).unwrap();
    assert_abs_diff_eq!(r.volume_max, 9.6, epsilon = 1e-9);
    assert!(r.msv.is_some());
}

#[test]
fn empty_store_offers_nothing() {
    let s = solved(&battery(0.0, 100.0));
    let r = converter_ask(&s, "discharger", "elec", 0).unwrap();
    assert_eq!(r.volume_max, 0.0);
}

#[test]
fn full_store_bids_nothing() {
    let s = solved(&battery(100.0, 100.0));
    let r = converter_bid(&s, "charger", 0).unwrap();
    assert_eq!(r.volume_max, 0.0);
}

#[test]
fn record_counts_per_snapshot() {
    let mut m = EnergyModel::single_carrier(vec![1.0, 1.0]).with_carrier("battery", "MWh_el");
    for (id, cost) in [("a", 10.0), ("b", 30.0), ("c", 50.0)] {
        m.generators.insert(id.into(), GeneratorSpec::new("elec", cost, 60.0));
    }
    m.converters.insert("charger".into(), ConverterSpec::new("elec", &[("battery", 0.9)], 20.0));
    m.converters.insert("discharger".into(), ConverterSpec::new("battery", &[("elec", 0.9)], 20.0));
    m.stores.insert(
        "battery".into(),
        StoreSpec {
            linked_charger: Some("charger".into()),
            linked_discharger: Some("discharger".into()),
            ..StoreSpec::cyclic("battery", 80.0)
        },
    );
    let mut load = LoadSpec::new("elec", vec![50.0, 110.0]);
    load.sheddable = true;
    m.loads.insert("load".into(), load);
    let s = solved(&m);
    let all = reconstruct_all(&s, "elec").unwrap();
    assert_eq!(all.len(), 2 * 6);
    for t in 0..2 {
        let snap: Vec<_> = all.iter().filter(|r| r.snapshot == t).collect();
        let count = |side, origin| snap.iter().filter(|r| r.side == side && r.origin == origin).count();
        assert_eq!(count(Side::Supply, Origin::Generator), 3);
        assert_eq!(count(Side::Supply, Origin::ConverterOutput), 1);
        assert_eq!(count(Side::Demand, Origin::ConverterInput), 1);
        assert_eq!(count(Side::Demand, Origin::Load), 1);
    }
    // Snapshot order, then model order.
    assert!(all.windows(2).all(|w| w[0].snapshot <= w[1].snapshot));
    assert_eq!(all[0].technology, "a");
}

#[test]
fn residuals_match_kkt_report() {
    let mut m = battery(30.0, 100.0);
    m.loads["load"].profile = TimeSeries::Constant(45.0);
    let p = build_lp(&m, Mode::DispatchOnly, None).unwrap();
    let s = solve(&p, &HighsBackend::default()).unwrap();
    let report = kkt_residuals(&s, &p);
    let records = reconstruct_all(&s, "elec").unwrap();
    for r in &records {
        let Some(res) = record_residual(&s, r) else { continue };
        let key = match r.origin {
            Origin::Generator => VarKey::Dispatch {
                generator: s.model.generators.get_index_of(&r.technology).unwrap(),
                snapshot: r.snapshot,
            },
            _ => VarKey::Flow {
                converter: s.model.converters.get_index_of(&r.technology).unwrap(),
                snapshot: r.snapshot,
            },
        };
        let lp = report.stationarity.iter().find(|x| x.var == key).unwrap().value;
        assert_abs_diff_eq!(res, lp, epsilon = 1e-9);
    }
}

#[test]
fn soc_store_on_market_carrier() {
    // Two snapshots, cheap then dear, with a lossless store held directly on elec.
    let mut m = EnergyModel::single_carrier(vec![1.0, 1.0]);
    let mut cheap = GeneratorSpec::new("elec", 10.0, 100.0);
    cheap.availability = TimeSeries::Profile(vec![1.0, 0.0]);
    m.generators.insert("cheap".into(), cheap);
    m.generators.insert("dear".into(), GeneratorSpec::new("elec", 50.0, 100.0));
    m.stores.insert("pumped".into(), StoreSpec::cyclic("elec", 30.0));
    m.loads.insert("load".into(), LoadSpec::new("elec", 40.0));
    let s = solved(&m);
    let recs = volume_bids(&s, 0, "elec").unwrap();
    let demand = find(&recs, "pumped", Side::Demand);
    assert_abs_diff_eq!(demand.volume_dispatched, 30.0, epsilon = 1e-6);
    // Charging at t0 is valued at next snapshot's price.
    assert_abs_diff_eq!(demand.price, s.price("elec", 1), epsilon = 1e-9);
    let recs = volume_bids(&s, 1, "elec").unwrap();
    let supply = find(&recs, "pumped", Side::Supply);
    assert_abs_diff_eq!(supply.volume_dispatched, 30.0, epsilon = 1e-6);
    assert_abs_diff_eq!(supply.volume_max, 30.0, epsilon = 1e-6);
}

#[test]
fn level_prices_flat_where_interior() {
    let mut m = EnergyModel::single_carrier(vec![1.0; 4]).with_carrier("h2", "MWh_H2");
    let mut wind = GeneratorSpec::new("elec", 0.0, 100.0);
    wind.availability = TimeSeries::Profile(vec![1.0, 0.2, 0.9, 0.1]);
    m.generators.insert("wind".into(), wind);
    m.generators.insert("peaker".into(), GeneratorSpec::new("elec", 80.0, 100.0));
    m.converters.insert("electrolysis".into(), ConverterSpec::new("elec", &[("h2", 0.7)], 50.0));
    m.converters.insert("fuel_cell".into(), ConverterSpec::new("h2", &[("elec", 0.5)], 50.0));
    m.stores.insert(
        "cavern".into(),
        StoreSpec {
            linked_charger: Some("electrolysis".into()),
            linked_discharger: Some("fuel_cell".into()),
            ..StoreSpec::cyclic("h2", 1e4)
        },
    );
    m.loads.insert("load".into(), LoadSpec::new("elec", 40.0));
    let s = solved(&m);
    let lp = store_level_prices(&s, "cavern", 1e-9).unwrap();
    assert!(lp.steps.iter().any(|x| x.relation == StepRelation::Interior));
    assert!(lp.max_interior_gap() <= 1e-6, "{lp:?}");
    let last = lp.steps.last().unwrap();
    if last.relation == StepRelation::Interior {
        assert_abs_diff_eq!(last.value, lp.boundary_value.unwrap(), epsilon = 1e-6);
    }
    assert!(store_level_prices(&s, "missing", 1e-9).is_none());
}

#[test]
fn pinned_step_not_flat() {
    // Tiny store forced full at the first step; value drops across that step.
    let mut m = EnergyModel::single_carrier(vec![1.0, 1.0]);
    let mut cheap = GeneratorSpec::new("elec", 10.0, 100.0);
    cheap.availability = TimeSeries::Profile(vec![1.0, 0.0]);
    m.generators.insert("cheap".into(), cheap);
    m.generators.insert("dear".into(), GeneratorSpec::new("elec", 50.0, 100.0));
    m.stores.insert("small".into(), StoreSpec::cyclic("elec", 5.0));
    m.loads.insert("load".into(), LoadSpec::new("elec", 40.0));
    let s = solved(&m);
    let lp = store_level_prices(&s, "small", 1e-9).unwrap();
    assert_eq!(lp.steps[0].relation, StepRelation::Full);
    assert!(lp.steps[0].gap().abs() > 1.0);
    assert!(lp.max_interior_gap() <= 1e-6);
}
