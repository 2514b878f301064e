use crate::error::CliError;
use dualmerit::analysis::{analyze, Analysis, AnalysisOptions};
use dualmerit::clearing::Band;
use dualmerit::export::{
    num, read_capacities, read_solution, write_analysis, write_solution, write_text,
};
use dualmerit::fuzz::{run_fuzz, FuzzOptions};
use dualmerit::lp::{
    backend_by_name, build_lp, kkt_residuals, solve, HighsBackend, LpBackend, Mode, SolvedState,
    Tolerances,
};
use dualmerit::model::{load_model, validate};
use dualmerit::pathway::{load_base, load_pathway, run_myopic, run_short_term};
use serde::Serialize;
use std::path::Path;

/// `println!` that ignores a closed stdout, so output can be piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub const KKT_REPORT_FILE: &str = "kkt_report.txt";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PATHWAY_SUMMARY_FILE: &str = "pathway_summary.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub backend: String,
    pub threads: Option<usize>,
    pub tolerances: Tolerances,
    pub seed: u64,
}

impl Context {
    pub fn backend(&self) -> Result<Box<dyn LpBackend>, CliError> {
        if self.backend.eq_ignore_ascii_case("highs") {
            return Ok(Box::new(HighsBackend {
                threads: self.threads.map(|n| n as u32),
            }));
        }
        backend_by_name(&self.backend)
            .ok_or_else(|| CliError::Usage(format!("unknown backend `{}` (available: highs)", self.backend)))
    }
}

#[derive(Serialize)]
struct ToleranceRecord {
    feasibility: f64,
    stationarity: f64,
}

/// Everything needed to reproduce a run, written next to its outputs.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    configs: Vec<String>,
    backend: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    market_carrier: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
    seed: u64,
    out: String,
    tolerances: ToleranceRecord,
}

impl<'a> Manifest<'a> {
    fn new(ctx: &'a Context, command: &'a str, configs: &[&Path], out: &Path) -> Self {
        Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            configs: configs.iter().map(|p| p.display().to_string()).collect(),
            backend: &ctx.backend,
            mode: None,
            market_carrier: None,
            threads: ctx.threads,
            seed: ctx.seed,
            out: out.display().to_string(),
            tolerances: ToleranceRecord {
                feasibility: ctx.tolerances.feasibility,
                stationarity: ctx.tolerances.stationarity,
            },
        }
    }

    fn write(&self, out: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Usage(e.to_string()))?;
        write_text(&out.join(MANIFEST_FILE), &text)?;
        Ok(())
    }
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<std::fs::File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    w.write_record(header).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(w)
}

fn csv_row<I, S>(w: &mut csv::Writer<std::fs::File>, fields: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| CliError::Usage(e.to_string()))
}

fn csv_finish(mut w: csv::Writer<std::fs::File>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Usage(e.to_string()))
}

pub fn cmd_validate(config: &Path) -> Result<(), CliError> {
    let model = load_model(config)?;
    let diagnostics = validate(&model.augmented());
    if diagnostics.is_empty() {
        say!(
            "{}: valid ({} snapshots, {} generators, {} converters, {} stores, {} loads)",
            config.display(),
            model.snapshots.len(),
            model.generators.len(),
            model.converters.len(),
            model.stores.len(),
            model.loads.len()
        );
        return Ok(());
    }
    for d in &diagnostics {
        eprintln!("{}: {d}", config.display());
    }
    Err(CliError::Usage(format!(
        "{}: {} validation error(s)",
        config.display(),
        diagnostics.len()
    )))
}

/// Writes a solved state with its optimality report; fails if the report does not pass.
fn write_checked(
    dir: &Path,
    state: &SolvedState,
    problem: &dualmerit::lp::LpProblem,
    ctx: &Context,
    backend: &str,
) -> Result<bool, CliError> {
    write_solution(dir, state, backend)?;
    let report = kkt_residuals(state, problem);
    write_text(&dir.join(KKT_REPORT_FILE), &report.to_text(problem, &ctx.tolerances))?;
    Ok(report.passes(&ctx.tolerances))
}

pub fn cmd_solve(
    ctx: &Context,
    config: &Path,
    mode: Mode,
    capacities: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    if mode == Mode::DispatchOnly && capacities.is_none() {
        return Err(CliError::Usage("--mode dispatch_only requires --capacities <csv>".into()));
    }
    let backend = ctx.backend()?;
    let model = load_model(config)?;
    let caps = capacities.map(read_capacities).transpose()?;
    let problem = build_lp(&model, mode, caps.as_ref())?;
    let state = solve(&problem, backend.as_ref())?;
    let passed = write_checked(out, &state, &problem, ctx, backend.name())?;
    let mut configs = vec![config];
    configs.extend(capacities);
    let mut manifest = Manifest::new(ctx, "solve", &configs, out);
    manifest.mode = Some(mode.to_string());
    manifest.write(out)?;

    say!("status: {}", state.status);
    say!("objective: {}", num(state.objective));
    if state.model.co2.is_some() {
        say!("co2_price: {}", num(state.co2_price));
    }
    for (carrier, prices) in &state.prices {
        let mean = prices.iter().sum::<f64>() / prices.len().max(1) as f64;
        say!("mean price {carrier}: {}", num(mean));
    }
    if !passed {
        return Err(CliError::Backend(format!(
            "optimality check failed, see {}",
            out.join(KKT_REPORT_FILE).display()
        )));
    }
    say!("kkt check: PASS");
    Ok(())
}

fn print_summary(analysis: &Analysis) {
    say!(
        "zero-price share ({}): {:.4}",
        analysis.market_carrier, analysis.pdc.zero_price_share
    );
    let mut shares: Vec<_> = analysis
        .statistics
        .shares
        .iter()
        .filter(|s| s.band == Band::All)
        .collect();
    shares.sort_by(|a, b| b.share.total_cmp(&a.share).then_with(|| a.technology.cmp(&b.technology)));
    say!("top price setters:");
    for s in shares.iter().take(5) {
        say!("  {:<24} {:<6} {:.4}", s.technology, s.side.as_str(), s.share);
    }
    say!("  {:<24} {:<6} {:.4}", "undetermined", "", analysis.statistics.undetermined_share);
}

fn market_of<'a>(state: &'a SolvedState, requested: Option<&'a str>) -> Result<&'a str, CliError> {
    let carrier = match requested {
        Some(c) => c,
        None => state
            .model
            .electricity_carrier()
            .ok_or_else(|| CliError::Usage("model has no electricity carrier".into()))?,
    };
    if !state.prices.contains_key(carrier) {
        return Err(CliError::Usage(format!("unknown market carrier `{carrier}`")));
    }
    Ok(carrier)
}

pub fn cmd_analyze(
    ctx: &Context,
    solved: &Path,
    market_carrier: Option<&str>,
    bin_width: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if !(bin_width > 0.0) {
        return Err(CliError::Usage("--bin-width must be positive".into()));
    }
    let state = read_solution(solved)?;
    let carrier = market_of(&state, market_carrier)?;
    let options = AnalysisOptions {
        bin_width,
        label: carrier.to_string(),
        ..Default::default()
    };
    let analysis = analyze(&state, carrier, &options)?;
    let default_out = solved.join("analysis");
    let out = out.unwrap_or(&default_out);
    write_analysis(out, &state, &analysis)?;
    let mut manifest = Manifest::new(ctx, "analyze", &[solved], out);
    manifest.market_carrier = Some(carrier);
    manifest.write(out)?;
    print_summary(&analysis);
    Ok(())
}

pub fn cmd_pathway(
    ctx: &Context,
    config_path: &Path,
    market_carrier: Option<&str>,
    with_st: bool,
    out: &Path,
) -> Result<(), CliError> {
    let backend = ctx.backend()?;
    let mut config = load_pathway(config_path)?;
    if let Some(c) = market_carrier {
        config.market_carrier = Some(c.to_string());
    }
    let base = load_base(&config)?;
    let options = AnalysisOptions::default();
    let result = run_myopic(&base, &config, backend.as_ref(), &options)?;

    let mut failed = Vec::new();
    let mut summary = csv_writer(
        &out.join(PATHWAY_SUMMARY_FILE),
        &["year", "objective", "co2_price", "zero_price_share", "top_setter"],
    )?;
    for y in &result.years {
        let dir = out.join(&y.label);
        let problem = build_lp(&y.model, y.state.mode, None)?;
        if !write_checked(&dir, &y.state, &problem, ctx, backend.name())? {
            failed.push(y.label.clone());
        }
        write_analysis(&dir, &y.state, &y.analysis)?;
        let top = y
            .analysis
            .statistics
            .shares
            .iter()
            .filter(|s| s.band == Band::All)
            .max_by(|a, b| a.share.total_cmp(&b.share).then_with(|| b.technology.cmp(&a.technology)))
            .map_or("undetermined", |s| s.technology.as_str());
        csv_row(
            &mut summary,
            [
                y.label.as_str(),
                &num(y.state.objective),
                &num(y.co2_price),
                &num(y.analysis.pdc.zero_price_share),
                top,
            ],
        )?;
        say!(
            "{}: objective {}, co2 price {}, emissions {}, zero-price share {:.4}, top setter {top}",
            y.label,
            num(y.state.objective),
            num(y.co2_price),
            y.emissions.map_or_else(|| "n/a".into(), num),
            y.analysis.pdc.zero_price_share
        );
    }
    csv_finish(summary)?;

    if with_st {
        let st_dir = out.join("st");
        let mut cmp = csv_writer(
            &st_dir.join(COMPARISON_FILE),
            &[
                "year",
                "lt_operational_cost",
                "st_operational_cost",
                "cost_relative_diff",
                "pdc_correlation",
                "setter_agreement",
            ],
        )?;
        for y in &result.years {
            let (state, analysis, c) = run_short_term(y, backend.as_ref(), &options)?;
            let dir = st_dir.join(&y.label);
            let caps = y.state.capacities();
            let problem = build_lp(&y.model, Mode::DispatchOnly, Some(&caps))?;
            if !write_checked(&dir, &state, &problem, ctx, backend.name())? {
                failed.push(format!("st/{}", y.label));
            }
            write_analysis(&dir, &state, &analysis)?;
            csv_row(
                &mut cmp,
                [
                    c.label.as_str(),
                    &num(c.lt_operational_cost),
                    &num(c.st_operational_cost),
                    &num(c.cost_relative_diff),
                    &num(c.pdc_correlation),
                    &num(c.setter_agreement),
                ],
            )?;
            say!(
                "{} short-term: cost diff {:.3e}, pdc correlation {:.4}, setter agreement {:.4}",
                c.label, c.cost_relative_diff, c.pdc_correlation, c.setter_agreement
            );
        }
        csv_finish(cmp)?;
    }

    let mut configs = vec![config_path];
    configs.extend(config.base.as_deref());
    let mut manifest = Manifest::new(ctx, "pathway", &configs, out);
    manifest.market_carrier = market_carrier;
    manifest.write(out)?;
    if !failed.is_empty() {
        return Err(CliError::Backend(format!(
            "optimality check failed for {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

pub fn cmd_fuzz(
    ctx: &Context,
    n: usize,
    inject_failure: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let backend = ctx.backend()?;
    let options = FuzzOptions {
        n,
        seed: ctx.seed,
        tolerances: ctx.tolerances,
        inject_failure,
        ..Default::default()
    };
    let report = run_fuzz(&options, backend.as_ref());
    if let Some(out) = out {
        Manifest::new(ctx, "fuzz", &[], out).write(out)?;
    }
    say!("{}", report.summary());
    let failures = report.failures();
    for c in &failures {
        eprintln!(
            "instance {} (instance seed {}): lp price {}, oracle price {}, reconstructed price {}, max stationarity residual {:.3e}{}",
            c.index,
            c.seed,
            c.lp_price,
            c.oracle_price,
            c.reconstructed_price,
            c.max_stationarity,
            c.error.as_ref().map_or_else(String::new, |e| format!(", error: {e}"))
        );
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Backend(format!(
            "{} of {} instances failed (run seed {})",
            failures.len(),
            report.cases.len(),
            ctx.seed
        )))
    }
}
