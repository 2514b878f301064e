//! Acceptance run over the bundled scenarios. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use dualmerit::analysis::{analyze, pearson, Analysis, AnalysisOptions};
use dualmerit::clearing::{averaged_curves, MarketCurve, Rule, MIN_COVERAGE};
use dualmerit::fuzz::{run_fuzz, FuzzOptions};
use dualmerit::lp::{
    build_lp, co2_budget_finite_difference, kkt_residuals, solve, HighsBackend, LpProblem, Mode,
    SolvedState,
};
use dualmerit::model::{load_model, EnergyModel};
use dualmerit::pathway::{
    emissions_from_flows, load_base, load_pathway, run_myopic, run_short_term, PathwayResult,
};
use dualmerit::pricing::{store_level_prices, Side};
use std::path::PathBuf;
use std::time::Instant;

type Check = Result<String, String>;

const SCENARIOS: [&str; 5] = [
    "two_generator.toml",
    "battery_arbitrage.toml",
    "sector_coupled.toml",
    "curtailment.toml",
    "tiebreak.toml",
];

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn model(name: &str) -> EnergyModel {
    load_model(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn solved(m: &EnergyModel) -> Result<(LpProblem, SolvedState), String> {
    let problem = build_lp(m, Mode::Expansion, None).map_err(|e| e.to_string())?;
    let state = solve(&problem, &HighsBackend::default()).map_err(|e| e.to_string())?;
    Ok((problem, state))
}

fn analysed(state: &SolvedState, carrier: &str) -> Result<Analysis, String> {
    analyze(state, carrier, &AnalysisOptions::default()).map_err(|e| e.to_string())
}

fn pathway() -> Result<PathwayResult, String> {
    let config = load_pathway(scenario_path("pathway.toml")).map_err(|e| e.to_string())?;
    let base = load_base(&config).map_err(|e| e.to_string())?;
    run_myopic(&base, &config, &HighsBackend::default(), &AnalysisOptions::default())
        .map_err(|e| e.to_string())
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let report = run_fuzz(&FuzzOptions { n: 200, seed: 7, ..Default::default() }, &HighsBackend::default());
    let secs = start.elapsed().as_secs_f64();
    let failures = report.failures();
    if let Some(f) = failures.first() {
        return Err(format!(
            "{}; first failure instance {} (seed {}): lp {} vs oracle {}",
            report.summary(),
            f.index,
            f.seed,
            f.lp_price,
            f.oracle_price
        ));
    }
    if report.cases.len() != 200 || secs >= 60.0 {
        return Err(format!("{} in {secs:.1} s", report.summary()));
    }
    let worst = report
        .cases
        .iter()
        .map(|c| (c.lp_price - c.oracle_price).abs())
        .fold(0.0, f64::max);
    Ok(format!("{} (max price gap {worst:.1e}) in {secs:.1} s", report.summary()))
}

fn stationarity() -> Check {
    let mut states: Vec<(String, LpProblem, SolvedState)> = Vec::new();
    for name in SCENARIOS {
        let (p, s) = solved(&model(name)).map_err(|e| format!("{name}: {e}"))?;
        states.push((name.to_string(), p, s));
    }
    for y in pathway()?.years {
        let p = build_lp(&y.model, y.state.mode, None).map_err(|e| e.to_string())?;
        states.push((format!("pathway {}", y.label), p, y.state));
    }
    let mut worst_stat: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for (name, p, s) in &states {
        let report = kkt_residuals(s, p);
        let (stat, gap) = (report.max_stationarity(), report.relative_gap());
        if stat > 1e-5 || gap > 1e-6 {
            return Err(format!("{name}: stationarity {stat:.2e}, relative gap {gap:.2e}"));
        }
        worst_stat = worst_stat.max(stat);
        worst_gap = worst_gap.max(gap);
    }
    Ok(format!(
        "{} solves, max stationarity {worst_stat:.1e}, max relative gap {worst_gap:.1e}",
        states.len()
    ))
}

fn converter_reconstruction() -> Check {
    let m = model("sector_coupled.toml");
    let (_, state) = solved(&m)?;
    let analysis = analysed(&state, "elec")?;
    let price = |c: &str, t: usize| state.prices[c][t];
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for v in &analysis.verdicts {
        let Some((tech, side)) = &v.chosen else { continue };
        let Some(conv) = m.converters.get(tech) else { continue };
        let t = v.snapshot;
        let input = conv.input().ok_or("converter without a single input")?;
        let o = conv.marginal_cost;
        let eta = |carrier: &str| conv.port_on(carrier).map_or(0.0, |p| p.coefficient.at(t));
        // Value of every output other than electricity.
        let by_products: f64 = conv
            .outputs()
            .filter(|p| p.carrier != "elec")
            .map(|p| p.coefficient.at(t) * price(&p.carrier, t))
            .sum();
        let bid = match side {
            Side::Supply => (price(&input.carrier, t) + o - by_products) / eta("elec"),
            Side::Demand => by_products - o,
        };
        let err = (bid - price("elec", t)).abs();
        if err > 0.01 {
            return Err(format!("{tech} at snapshot {t}: bid {bid} vs price {}", price("elec", t)));
        }
        worst = worst.max(err);
        checked += 1;
    }
    if checked == 0 {
        return Err("no converter set a price".into());
    }
    Ok(format!("{checked} converter verdicts, max |bid - price| {worst:.1e}"))
}

fn co2_price() -> Check {
    let mut cases = vec![("sector_coupled".to_string(), model("sector_coupled.toml"))];
    for y in pathway()?.years {
        cases.push((format!("pathway {}", y.label), y.model));
    }
    let mut details = Vec::new();
    for (name, m) in &cases {
        let (_, state) = solved(m)?;
        let co2 = &state.prices["co2"];
        let spread = co2.iter().cloned().fold(f64::MIN, f64::max) - co2.iter().cloned().fold(f64::MAX, f64::min);
        if state.co2_price <= 0.0 {
            return Err(format!("{name}: budget does not bind"));
        }
        if spread > 1e-6 {
            return Err(format!("{name}: CO2 price varies by {spread:.2e}"));
        }
        let fd = co2_budget_finite_difference(m, Mode::Expansion, None, 1.0, &HighsBackend::default())
            .map_err(|e| e.to_string())?;
        let rel = (-fd.central() - state.co2_price).abs() / state.co2_price;
        if rel > 0.01 {
            return Err(format!("{name}: dual {} vs finite difference {}", state.co2_price, -fd.central()));
        }
        details.push(format!("{name} {:.3} (fd {rel:.1e})", state.co2_price));
    }
    Ok(details.join(", "))
}

fn storage_flatness() -> Check {
    let (_, state) = solved(&model("battery_arbitrage.toml"))?;
    let spec = &state.model.stores["battery"];
    let sol = &state.stores["battery"];
    let lambda = &state.prices[spec.carrier.as_str()];
    let n = lambda.len();
    let slack = 1e-6 * sol.capacity.max(1.0);
    let mut interior = 0;
    let mut worst: f64 = 0.0;
    for t in 0..n {
        let level = sol.levels[t];
        if level <= slack || level >= sol.capacity - slack {
            continue;
        }
        let next = if t + 1 < n { lambda[t + 1] } else { sol.lambda_cyclic.ok_or("no cyclic dual")? };
        let gap = (lambda[t] - next).abs();
        if gap > 1e-6 {
            return Err(format!("step {t}: {} then {next}", lambda[t]));
        }
        worst = worst.max(gap);
        interior += 1;
    }
    let lib = store_level_prices(&state, "battery", 1e-6).ok_or("no level prices")?;
    if interior == 0 || lib.max_interior_gap() > 1e-6 {
        return Err(format!("{interior} interior steps, library gap {:.2e}", lib.max_interior_gap()));
    }
    Ok(format!("{interior} interior steps, max gap {worst:.1e}"))
}

fn refix() -> Check {
    let mut details = Vec::new();
    let mut worst: f64 = 0.0;
    for name in SCENARIOS {
        let m = model(name);
        let (_, lt) = solved(&m)?;
        let caps = lt.capacities();
        let p = build_lp(&m, Mode::DispatchOnly, Some(&caps)).map_err(|e| e.to_string())?;
        let st = solve(&p, &HighsBackend::default()).map_err(|e| e.to_string())?;
        let (a, b) = (lt.operational_cost(), st.operational_cost());
        let diff = (a - b).abs() / a.abs().max(1.0);
        if diff > 1e-6 {
            return Err(format!("{name}: operational cost {a} vs {b}"));
        }
        worst = worst.max(diff);
        let elec = m.electricity_carrier().unwrap();
        let corr = pearson(&analysed(&lt, elec)?.pdc.prices(), &analysed(&st, elec)?.pdc.prices());
        details.push(format!("{} r={corr:.3}", name.trim_end_matches(".toml")));
    }
    for y in pathway()?.years {
        let (_, _, c) = run_short_term(&y, &HighsBackend::default(), &AnalysisOptions::default())
            .map_err(|e| e.to_string())?;
        if c.cost_relative_diff > 1e-6 {
            return Err(format!("pathway {}: relative cost diff {:.2e}", y.label, c.cost_relative_diff));
        }
        worst = worst.max(c.cost_relative_diff);
        details.push(format!("{} r={:.3}", y.label, c.pdc_correlation));
    }
    Ok(format!("max relative cost diff {worst:.1e}; pdc correlation {}", details.join(", ")))
}

fn setter_rules() -> Check {
    let (_, state) = solved(&model("tiebreak.toml"))?;
    let a = analysed(&state, "elec")?;
    let v = &a.verdicts[1];
    let names: Vec<&str> = v.candidates.iter().map(|c| c.technology.as_str()).collect();
    if v.rule != Rule::VarianceTiebreakSupply
        || v.chosen_technology() != Some("gas")
        || !names.contains(&"battery_discharger")
    {
        return Err(format!("tie hour: {:?} by {} among {names:?}", v.chosen_technology(), v.rule));
    }
    let (_, state) = solved(&model("two_generator.toml"))?;
    let u = &analysed(&state, "elec")?.verdicts[0];
    if u.rule != Rule::UniqueSupply || u.chosen_technology() != Some("mid") {
        return Err(format!("unique margin: {:?} by {}", u.chosen_technology(), u.rule));
    }
    Ok(format!("tie {names:?} -> gas by {}; unique margin -> mid by {}", v.rule, u.rule))
}

fn zero_price_accounting() -> Check {
    let m = model("curtailment.toml");
    let vres: f64 = ["wind", "solar"].iter().map(|g| m.generators[*g].capacity_existing).sum();
    let peak = (0..m.snapshots.len()).map(|t| m.demand("elec", t)).fold(0.0, f64::max);
    if !m.stores.is_empty() || vres < 3.0 * peak - 1e-9 {
        return Err(format!("toy is not curtailment-heavy: {vres} MW renewables, {peak} MW peak"));
    }
    let (_, state) = solved(&m)?;
    let a = analysed(&state, "elec")?;
    let (mut zero, mut total) = (0.0, 0.0);
    for (p, w) in state.prices["elec"].iter().zip(&m.snapshots.weights) {
        total += w;
        if *p < 1.0 {
            zero += w;
        }
    }
    let recount = zero / total;
    if a.pdc.zero_price_share != recount || !(recount > 0.0 && recount < 1.0) {
        return Err(format!("share {} vs recount {recount}", a.pdc.zero_price_share));
    }
    Ok(format!(
        "share {recount:.4} equals recount ({} MW renewables, {:.2}x peak)",
        vres,
        vres / peak
    ))
}

fn averaged_coverage() -> Check {
    let mut analyses = Vec::new();
    for name in ["battery_arbitrage.toml", "sector_coupled.toml", "curtailment.toml"] {
        let (_, s) = solved(&model(name))?;
        analyses.push(analysed(&s, "elec")?);
    }
    analyses.extend(pathway()?.years.into_iter().map(|y| y.analysis));
    let mut bins = 0;
    for a in &analyses {
        for b in a.averaged_supply.bins.iter().chain(&a.averaged_demand.bins) {
            if b.coverage < MIN_COVERAGE {
                return Err(format!("bin [{}, {}) has coverage {}", b.lower, b.upper, b.coverage));
            }
            bins += 1;
        }
    }
    // The same curve repeated with uneven weights averages to itself.
    let supply: &MarketCurve = &analyses[1].curves[0].0;
    let copies: Vec<(&MarketCurve, f64)> = [3.0, 1.0, 0.5, 7.25].iter().map(|w| (supply, *w)).collect();
    let avg = averaged_curves(&copies, Side::Supply, 1.0);
    // Bins whose midpoint lies on the curve.
    let expected_bins = (supply.total_volume() + 0.5).floor() as usize;
    if avg.bins.len() != expected_bins {
        return Err(format!("{} bins for a {} MW curve", avg.bins.len(), supply.total_volume()));
    }
    for b in &avg.bins {
        let mid = 0.5 * (b.lower + b.upper);
        let want = supply.price_at(mid).ok_or("bin beyond curve")?;
        if (b.mean_price - want).abs() > 1e-9 * want.abs().max(1.0) || b.coverage != 1.0 {
            return Err(format!("bin at {mid}: {} vs {want}", b.mean_price));
        }
    }
    Ok(format!("{bins} emitted bins all at coverage >= {MIN_COVERAGE}; identical curves reproduce {expected_bins} bins"))
}

fn myopic_pathway() -> Check {
    let result = pathway()?;
    let mut details = Vec::new();
    // Expected carryover from plain vintage bookkeeping.
    let lifetimes = [("battery", 10), ("electrolysis", 20)];
    let mut built: Vec<(i32, String, f64)> = Vec::new();
    let mut carried = 0;
    for y in &result.years {
        let budget = y.budget.ok_or("no budget")?;
        let stock = y.emissions.ok_or("no atmosphere")?;
        let flows = emissions_from_flows(&y.state).ok_or("no CO2 flows")?;
        if stock > budget + 1e-6 || flows > budget + 1e-6 {
            return Err(format!("{}: emissions {stock} (flows {flows}) over budget {budget}", y.label));
        }
        for (id, g) in &y.model.generators {
            if g.extendable {
                check_carry(y, id, &built, &lifetimes)?;
            }
        }
        for (id, c) in &y.model.converters {
            if c.extendable {
                check_carry(y, id, &built, &lifetimes)?;
            }
        }
        for (id, s) in &y.model.stores {
            if s.extendable && !s.atmosphere {
                check_carry(y, id, &built, &lifetimes)?;
            }
        }
        for (id, cap) in y.state.capacities() {
            let carried = y.carryover.get(&id).copied().unwrap_or(0.0);
            if cap - carried > 1e-9 {
                built.push((y.year, id, cap - carried));
            }
        }
        carried += y.carryover.values().filter(|c| **c > 0.0).count();
        details.push(format!("{} {stock:.1}/{budget}", y.label));
    }
    if carried == 0 {
        return Err("nothing was carried between years".into());
    }
    Ok(format!(
        "emissions within budget ({}); {carried} carried bounds match surviving vintages",
        details.join(", ")
    ))
}

fn check_carry(
    y: &dualmerit::pathway::YearResult,
    id: &str,
    built: &[(i32, String, f64)],
    lifetimes: &[(&str, i32)],
) -> Result<(), String> {
    let life = lifetimes.iter().find(|(n, _)| *n == id).map_or(i32::MAX, |l| l.1);
    let expected: f64 = built
        .iter()
        .filter(|(year, n, _)| n == id && y.year - year < life)
        .map(|(_, _, c)| c)
        .sum();
    let carried = y.carryover.get(id).copied().unwrap_or(0.0);
    if (carried - expected).abs() > 1e-9 * expected.abs().max(1.0) {
        return Err(format!("{} {id}: carried {carried}, expected {expected}", y.label));
    }
    let lower = y
        .model
        .generators
        .get(id)
        .map(|g| g.capacity_min)
        .or_else(|| y.model.converters.get(id).map(|c| c.capacity_min))
        .or_else(|| y.model.stores.get(id).map(|s| s.capacity_min))
        .ok_or_else(|| format!("unknown component {id}"))?;
    if carried > 0.0 && (lower - carried).abs() > 1e-9 * carried.max(1.0) {
        return Err(format!("{} {id}: lower bound {lower}, carried {carried}", y.label));
    }
    let cap = y.state.capacities()[id];
    if cap < carried - 1e-9 {
        return Err(format!("{} {id}: capacity {cap} below carried {carried}", y.label));
    }
    Ok(())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("stationarity", stationarity),
        ("converter ask reconstruction", converter_reconstruction),
        ("CO2 price", co2_price),
        ("storage flatness", storage_flatness),
        ("LT/ST refix", refix),
        ("price-setter rules", setter_rules),
        ("zero-price accounting", zero_price_accounting),
        ("averaged curves", averaged_coverage),
        ("myopic pathway", myopic_pathway),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
