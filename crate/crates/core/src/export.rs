//! CSV reports, and reading a solved state back from them.
//!
//! Numbers are written in Rust's shortest round-trip form, so a state read back from its
//! files is bit-identical to the one written.

use crate::analysis::Analysis;
use crate::clearing::{AveragedCurve, MarketCurve};
use crate::lp::{CapacityMap, Mode, SolveStatus, SolvedState, StoreSolution, UnitSolution};
use crate::model::{load_model, to_toml_string, EnergyModel, ModelIoError};
use indexmap::IndexMap;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const MODEL_FILE: &str = "model.toml";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PRICES_FILE: &str = "prices.csv";
pub const DISPATCH_FILE: &str = "dispatch.csv";
pub const CAPACITIES_FILE: &str = "capacities.csv";
pub const DUALS_FILE: &str = "duals_bounds.csv";

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("{0}: file not found")]
    Missing(String),
    #[error("{0}: no dual values for this solution")]
    MissingDuals(String),
    #[error(transparent)]
    Model(#[from] ModelIoError),
}

/// Shortest representation that parses back to the same value; `-0` is written as `0`.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

struct Writer {
    path: PathBuf,
    inner: csv::Writer<fs::File>,
}

impl Writer {
    fn create(path: PathBuf, header: &[&str]) -> Result<Writer, ExportError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|source| ExportError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        let inner = csv::Writer::from_path(&path).map_err(|e| ExportError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut w = Writer { path, inner };
        w.row(header.iter().copied())?;
        Ok(w)
    }

    fn row<I, S>(&mut self, fields: I) -> Result<(), ExportError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| ExportError::Csv {
            path: self.path.display().to_string(),
            message: e.to_string(),
        })
    }

    fn finish(mut self) -> Result<(), ExportError> {
        self.inner.flush().map_err(|source| ExportError::Io {
            path: self.path.display().to_string(),
            source,
        })
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ExportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| ExportError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| ExportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the model, prices, dispatch, capacities, bound duals and a summary to `dir`.
pub fn write_solution(dir: &Path, state: &SolvedState, backend: &str) -> Result<(), ExportError> {
    let m = &state.model;
    let ts = &m.snapshots.timestamps;
    write_text(&dir.join(MODEL_FILE), &to_toml_string(m)?)?;

    let mut w = Writer::create(dir.join(SUMMARY_FILE), &["key", "value"])?;
    w.row(["status", &state.status.to_string()])?;
    w.row(["mode", &state.mode.to_string()])?;
    w.row(["objective", &num(state.objective)])?;
    w.row(["operational_cost", &num(state.operational_cost())])?;
    w.row(["co2_price", &num(state.co2_price)])?;
    w.row(["backend", backend])?;
    w.finish()?;

    let mut header = vec!["timestamp"];
    header.extend(state.prices.keys().map(String::as_str));
    let mut w = Writer::create(dir.join(PRICES_FILE), &header)?;
    for (t, stamp) in ts.iter().enumerate() {
        let mut row = vec![stamp.clone()];
        row.extend(state.prices.values().map(|l| num(l[t])));
        w.row(row)?;
    }
    w.finish()?;

    let mut w = Writer::create(dir.join(DISPATCH_FILE), &["timestamp", "component", "kind", "value"])?;
    for (t, stamp) in ts.iter().enumerate() {
        for (id, g) in &state.generators {
            w.row([stamp, id, "generator", &num(g.dispatch[t])])?;
        }
        for (id, c) in &state.converters {
            w.row([stamp, id, "converter", &num(c.dispatch[t])])?;
        }
        for (id, s) in &state.stores {
            w.row([stamp, id, "store_level", &num(s.levels[t])])?;
            if m.stores[id.as_str()].inflow.is_some() {
                w.row([stamp, id, "spill", &num(s.spill[t])])?;
            }
        }
    }
    w.finish()?;

    let mut w = Writer::create(
        dir.join(CAPACITIES_FILE),
        &[
            "component",
            "kind",
            "capacity",
            "optimised",
            "cap_lower_dual",
            "cap_upper_dual",
            "volume_rent",
            "initial_level",
            "lambda_cyclic",
            "lambda_initial",
        ],
    )?;
    let unit = |w: &mut Writer, id: &str, kind: &str, u: &UnitSolution| {
        w.row([
            id,
            kind,
            &num(u.capacity),
            &u.optimised.to_string(),
            &num(u.cap_lower_dual),
            &num(u.cap_upper_dual),
            &num(u.volume_rent),
            "",
            "",
            "",
        ])
    };
    for (id, g) in &state.generators {
        unit(&mut w, id, "generator", g)?;
    }
    for (id, c) in &state.converters {
        unit(&mut w, id, "converter", c)?;
    }
    for (id, s) in &state.stores {
        w.row([
            id.as_str(),
            "store",
            &num(s.capacity),
            &s.optimised.to_string(),
            &num(s.cap_lower_dual),
            &num(s.cap_upper_dual),
            "",
            &num(s.initial_level),
            &opt(s.lambda_cyclic),
            &opt(s.lambda_initial),
        ])?;
    }
    w.finish()?;

    let mut w = Writer::create(
        dir.join(DUALS_FILE),
        &["timestamp", "component", "kind", "mu_lower", "mu_upper"],
    )?;
    for (t, stamp) in ts.iter().enumerate() {
        for (id, g) in &state.generators {
            w.row([stamp, id, "generator", &num(g.mu_lower[t]), &num(g.mu_upper[t])])?;
        }
        for (id, c) in &state.converters {
            w.row([stamp, id, "converter", &num(c.mu_lower[t]), &num(c.mu_upper[t])])?;
        }
        for (id, s) in &state.stores {
            w.row([stamp, id, "store", &num(s.mu_lower[t]), &num(s.mu_upper[t])])?;
        }
    }
    w.finish()
}

type Rows = Vec<HashMap<String, String>>;

fn read_rows(path: &Path) -> Result<Rows, ExportError> {
    if !path.exists() {
        return Err(ExportError::Missing(path.display().to_string()));
    }
    let err = |message: String| ExportError::Csv {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| err(e.to_string()))?;
            Ok(headers
                .iter()
                .zip(r.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect())
        })
        .collect()
}

fn field<'a>(path: &Path, row: &'a HashMap<String, String>, key: &str) -> Result<&'a str, ExportError> {
    row.get(key).map(String::as_str).ok_or_else(|| ExportError::Csv {
        path: path.display().to_string(),
        message: format!("missing column `{key}`"),
    })
}

fn parse_num(path: &Path, s: &str) -> Result<f64, ExportError> {
    s.parse().map_err(|_| ExportError::Csv {
        path: path.display().to_string(),
        message: format!("invalid number `{s}`"),
    })
}

fn parse_opt(path: &Path, s: &str) -> Result<Option<f64>, ExportError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_num(path, s).map(Some)
    }
}

fn blank_unit(n: usize) -> UnitSolution {
    UnitSolution {
        capacity: 0.0,
        optimised: false,
        dispatch: vec![0.0; n],
        mu_lower: vec![0.0; n],
        mu_upper: vec![0.0; n],
        volume_rent: 0.0,
        cap_lower_dual: 0.0,
        cap_upper_dual: 0.0,
    }
}

fn blank_store(n: usize) -> StoreSolution {
    StoreSolution {
        capacity: 0.0,
        optimised: false,
        initial_level: 0.0,
        levels: vec![0.0; n],
        spill: vec![0.0; n],
        mu_lower: vec![0.0; n],
        mu_upper: vec![0.0; n],
        lambda_cyclic: None,
        lambda_initial: None,
        cap_lower_dual: 0.0,
        cap_upper_dual: 0.0,
    }
}

/// Rebuilds the solved state written by [`write_solution`].
pub fn read_solution(dir: &Path) -> Result<SolvedState, ExportError> {
    let model_path = dir.join(MODEL_FILE);
    if !model_path.exists() {
        return Err(ExportError::Missing(model_path.display().to_string()));
    }
    let model: EnergyModel = load_model(&model_path)?;
    let n = model.snapshots.len();
    let index: HashMap<&str, usize> = model
        .snapshots
        .timestamps
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let snapshot = |path: &Path, s: &str| {
        index.get(s).copied().ok_or_else(|| ExportError::Csv {
            path: path.display().to_string(),
            message: format!("unknown timestamp `{s}`"),
        })
    };

    let path = dir.join(SUMMARY_FILE);
    let summary: HashMap<String, String> = read_rows(&path)?
        .into_iter()
        .map(|r| (r["key"].clone(), r["value"].clone()))
        .collect();
    let get = |k: &str| {
        summary.get(k).ok_or_else(|| ExportError::Csv {
            path: path.display().to_string(),
            message: format!("missing key `{k}`"),
        })
    };
    let status = match get("status")?.as_str() {
        "optimal" => SolveStatus::Optimal,
        other => {
            return Err(ExportError::Csv {
                path: path.display().to_string(),
                message: format!("solution status is `{other}`"),
            })
        }
    };
    let mode: Mode = get("mode")?.parse().map_err(|e: String| ExportError::Csv {
        path: path.display().to_string(),
        message: e,
    })?;
    let objective = parse_num(&path, get("objective")?)?;
    let co2_price = parse_num(&path, get("co2_price")?)?;

    let path = dir.join(PRICES_FILE);
    let rows = read_rows(&path)?;
    let mut prices: IndexMap<String, Vec<f64>> =
        model.carriers.keys().map(|c| (c.clone(), vec![0.0; n])).collect();
    for row in &rows {
        let t = snapshot(&path, field(&path, row, "timestamp")?)?;
        for (c, lambda) in prices.iter_mut() {
            let v = row.get(c).ok_or_else(|| ExportError::MissingDuals(format!("{}#{c}", path.display())))?;
            lambda[t] = parse_num(&path, v)?;
        }
    }
    if rows.len() != n {
        return Err(ExportError::MissingDuals(path.display().to_string()));
    }

    let mut generators: IndexMap<String, UnitSolution> =
        model.generators.keys().map(|k| (k.clone(), blank_unit(n))).collect();
    let mut converters: IndexMap<String, UnitSolution> =
        model.converters.keys().map(|k| (k.clone(), blank_unit(n))).collect();
    let mut stores: IndexMap<String, StoreSolution> =
        model.stores.keys().map(|k| (k.clone(), blank_store(n))).collect();
    let unknown = |path: &Path, id: &str| ExportError::Csv {
        path: path.display().to_string(),
        message: format!("unknown component `{id}`"),
    };

    let path = dir.join(DISPATCH_FILE);
    for row in read_rows(&path)? {
        let t = snapshot(&path, field(&path, &row, "timestamp")?)?;
        let id = field(&path, &row, "component")?;
        let v = parse_num(&path, field(&path, &row, "value")?)?;
        match field(&path, &row, "kind")? {
            "generator" => generators.get_mut(id).ok_or_else(|| unknown(&path, id))?.dispatch[t] = v,
            "converter" => converters.get_mut(id).ok_or_else(|| unknown(&path, id))?.dispatch[t] = v,
            "store_level" => stores.get_mut(id).ok_or_else(|| unknown(&path, id))?.levels[t] = v,
            "spill" => stores.get_mut(id).ok_or_else(|| unknown(&path, id))?.spill[t] = v,
            other => return Err(unknown(&path, other)),
        }
    }

    let path = dir.join(CAPACITIES_FILE);
    for row in read_rows(&path)? {
        let id = field(&path, &row, "component")?;
        let capacity = parse_num(&path, field(&path, &row, "capacity")?)?;
        let optimised = field(&path, &row, "optimised")? == "true";
        let lo = parse_num(&path, field(&path, &row, "cap_lower_dual")?)?;
        let hi = parse_num(&path, field(&path, &row, "cap_upper_dual")?)?;
        match field(&path, &row, "kind")? {
            kind @ ("generator" | "converter") => {
                let map = if kind == "generator" { &mut generators } else { &mut converters };
                let u = map.get_mut(id).ok_or_else(|| unknown(&path, id))?;
                u.capacity = capacity;
                u.optimised = optimised;
                u.cap_lower_dual = lo;
                u.cap_upper_dual = hi;
                u.volume_rent = parse_num(&path, field(&path, &row, "volume_rent")?)?;
            }
            "store" => {
                let s = stores.get_mut(id).ok_or_else(|| unknown(&path, id))?;
                s.capacity = capacity;
                s.optimised = optimised;
                s.cap_lower_dual = lo;
                s.cap_upper_dual = hi;
                s.initial_level = parse_num(&path, field(&path, &row, "initial_level")?)?;
                s.lambda_cyclic = parse_opt(&path, field(&path, &row, "lambda_cyclic")?)?;
                s.lambda_initial = parse_opt(&path, field(&path, &row, "lambda_initial")?)?;
            }
            other => return Err(unknown(&path, other)),
        }
    }

    let path = dir.join(DUALS_FILE);
    if !path.exists() {
        return Err(ExportError::MissingDuals(path.display().to_string()));
    }
    for row in read_rows(&path)? {
        let t = snapshot(&path, field(&path, &row, "timestamp")?)?;
        let id = field(&path, &row, "component")?;
        let lo = parse_num(&path, field(&path, &row, "mu_lower")?)?;
        let hi = parse_num(&path, field(&path, &row, "mu_upper")?)?;
        let (l, u) = match field(&path, &row, "kind")? {
            "generator" => {
                let g = generators.get_mut(id).ok_or_else(|| unknown(&path, id))?;
                (&mut g.mu_lower, &mut g.mu_upper)
            }
            "converter" => {
                let c = converters.get_mut(id).ok_or_else(|| unknown(&path, id))?;
                (&mut c.mu_lower, &mut c.mu_upper)
            }
            "store" => {
                let s = stores.get_mut(id).ok_or_else(|| unknown(&path, id))?;
                (&mut s.mu_lower, &mut s.mu_upper)
            }
            other => return Err(unknown(&path, other)),
        };
        l[t] = lo;
        u[t] = hi;
    }

    Ok(SolvedState {
        model: Arc::new(model),
        mode,
        status,
        objective,
        prices,
        generators,
        converters,
        stores,
        co2_price,
    })
}

/// Writes every clearing and pricing report of `analysis` to `dir`.
pub fn write_analysis(dir: &Path, state: &SolvedState, analysis: &Analysis) -> Result<(), ExportError> {
    let ts = &state.model.snapshots.timestamps;

    let mut bids: Vec<_> = analysis.records.iter().collect();
    bids.sort_by(|a, b| {
        a.snapshot
            .cmp(&b.snapshot)
            .then_with(|| a.side.as_str().cmp(b.side.as_str()))
            .then_with(|| a.price.total_cmp(&b.price))
            .then_with(|| a.technology.cmp(&b.technology))
    });
    let mut w = Writer::create(
        dir.join("bids.csv"),
        &["timestamp", "technology", "side", "origin", "price", "volume_max", "volume_dispatched", "msv"],
    )?;
    for r in bids {
        w.row([
            ts[r.snapshot].as_str(),
            &r.technology,
            r.side.as_str(),
            r.origin.as_str(),
            &num(r.price),
            &num(r.volume_max),
            &num(r.volume_dispatched),
            &opt(r.msv),
        ])?;
    }
    w.finish()?;

    let mut w = Writer::create(
        dir.join("price_setters.csv"),
        &["timestamp", "price", "chosen_technology", "side", "rule_fired", "n_candidates"],
    )?;
    for v in &analysis.verdicts {
        let (tech, side) = match &v.chosen {
            Some((t, s)) => (t.as_str(), s.as_str()),
            None => ("undetermined", ""),
        };
        w.row([
            ts[v.snapshot].as_str(),
            &num(v.market_price),
            tech,
            side,
            v.rule.as_str(),
            &v.candidates.len().to_string(),
        ])?;
    }
    w.finish()?;

    for (supply, demand) in &analysis.curves {
        write_curve(&dir.join("curves").join(format!("{}.csv", ts[supply.snapshot])), supply, demand)?;
    }

    let mut w = Writer::create(dir.join("pdc.csv"), &["rank", "weight", "price"])?;
    for (k, (p, wt)) in analysis.pdc.points.iter().enumerate() {
        w.row([(k + 1).to_string(), num(*wt), num(*p)])?;
    }
    w.finish()?;

    write_averaged(&dir.join("averaged_supply.csv"), &analysis.averaged_supply)?;
    write_averaged(&dir.join("averaged_demand.csv"), &analysis.averaged_demand)?;

    let st = &analysis.statistics;
    let mut w = Writer::create(dir.join("stats.csv"), &["technology", "side", "share", "band"])?;
    for s in &st.shares {
        w.row([s.technology.as_str(), s.side.as_str(), &num(s.share), s.band.as_str()])?;
    }
    w.row(["undetermined", "", &num(st.undetermined_share), "all"])?;
    w.finish()?;

    let mut w = Writer::create(dir.join("zero_price.csv"), &["label", "zero_price_share", "q30", "q70", "mean_price"])?;
    w.row([
        analysis.pdc.label.as_str(),
        &num(analysis.pdc.zero_price_share),
        &num(st.q30),
        &num(st.q70),
        &num(analysis.pdc.mean_price()),
    ])?;
    w.finish()?;

    let mut w = Writer::create(dir.join("msv.csv"), &["timestamp", "store", "value", "continuation", "level", "relation"])?;
    for id in state.model.stores.keys() {
        if state.model.stores[id].atmosphere {
            continue;
        }
        if let Some(lp) = crate::pricing::store_level_prices(state, id, 1e-9) {
            for s in &lp.steps {
                let relation = match s.relation {
                    crate::pricing::StepRelation::Interior => "interior",
                    crate::pricing::StepRelation::Empty => "empty",
                    crate::pricing::StepRelation::Full => "full",
                };
                w.row([
                    ts[s.snapshot].as_str(),
                    id,
                    &num(s.value),
                    &num(s.continuation),
                    &num(s.level),
                    relation,
                ])?;
            }
        }
    }
    w.finish()
}

fn write_curve(path: &Path, supply: &MarketCurve, demand: &MarketCurve) -> Result<(), ExportError> {
    let mut w = Writer::create(path.to_path_buf(), &["side", "step_start", "step_end", "price", "technology"])?;
    for c in [supply, demand] {
        for s in &c.steps {
            w.row([c.side.as_str(), &num(s.start), &num(s.end), &num(s.price), &s.technology])?;
        }
    }
    w.finish()
}

fn write_averaged(path: &Path, curve: &AveragedCurve) -> Result<(), ExportError> {
    let mut w = Writer::create(path.to_path_buf(), &["mw_bin", "mean_price", "coverage"])?;
    for b in &curve.bins {
        w.row([num(b.upper), num(b.mean_price), num(b.coverage)])?;
    }
    w.finish()
}

/// Reads `price_setters.csv` as `(timestamp, chosen technology)` pairs.
pub fn read_price_setters(path: &Path) -> Result<Vec<(String, String)>, ExportError> {
    read_rows(path)?
        .into_iter()
        .map(|r| {
            Ok((
                field(path, &r, "timestamp")?.to_string(),
                field(path, &r, "chosen_technology")?.to_string(),
            ))
        })
        .collect()
}

/// Reads a capacity table with `component` and `capacity` columns, such as `capacities.csv`.
pub fn read_capacities(path: &Path) -> Result<CapacityMap, ExportError> {
    let mut out = CapacityMap::new();
    for r in read_rows(path)? {
        let id = field(path, &r, "component")?.to_string();
        let cap = parse_num(path, field(path, &r, "capacity")?)?;
        out.insert(id, cap);
    }
    Ok(out)
}

/// Reads `prices.csv` as one price vector per carrier.
pub fn read_prices(path: &Path) -> Result<IndexMap<String, Vec<f64>>, ExportError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| ExportError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| ExportError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut out: IndexMap<String, Vec<f64>> =
        headers.iter().skip(1).map(|h| (h.clone(), Vec::new())).collect();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ExportError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        for (h, v) in headers.iter().zip(rec.iter()).skip(1) {
            out[h.as_str()].push(parse_num(path, v)?);
        }
    }
    Ok(out)
}
