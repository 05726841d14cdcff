use std::path::{Path, PathBuf};

use hestonpw::bs::implied_vol;
use hestonpw::calibrator::{bootstrap_fit, global_fit, CalibrationResult, QuoteSurface, TenorQuotes};
use hestonpw::charfn::{PiecewiseHestonParams, Prob};
use hestonpw::fd::{fd_price, fd_price_vanilla};
use hestonpw::instrument::{BarrierSide, KnockType, VanillaPayoff, WindowBarrierSpec};
use hestonpw::lm::Termination;
use hestonpw::mc::{mc_price, McPayoff};
use hestonpw::pricer::{heston_call_cv, heston_price, probability_integrand_complex};
use hestonpw::{DeltaQuote, MarketSlice, OptionKind, QuotedDelta};

use crate::config::Config;
use crate::io::{num, read_schedule, schedule_rows, sibling, Output, Row, Table};
use crate::{CliError, Engine};

fn lib(e: hestonpw::Error) -> CliError {
    match e {
        hestonpw::Error::Domain(m) => CliError::Input(m),
        other => CliError::Failed(other.to_string()),
    }
}

fn parse_delta(row: &Row<'_>) -> Result<QuotedDelta, CliError> {
    let s = row.text("delta");
    let d = if s.eq_ignore_ascii_case("atm") {
        QuotedDelta::Atm
    } else {
        QuotedDelta::Signed(s.parse().map_err(|_| row.error("delta", format!("expected a signed delta or ATM, got '{s}'")))?)
    };
    d.validate().map_err(|e| row.error("delta", e))?;
    Ok(d)
}

fn market(row: &Row<'_>, maturity_column: &str) -> Result<MarketSlice, CliError> {
    MarketSlice::new(row.f64("spot")?, row.f64("r_dom")?, row.f64("r_for")?, row.f64(maturity_column)?)
        .map_err(|e| row.error(maturity_column, e))
}

pub fn read_quotes(path: &Path, cfg: &Config) -> Result<QuoteSurface, CliError> {
    let table = Table::read(path, &["tenor", "spot", "r_dom", "r_for", "delta", "vol"])?;
    if table.is_empty() {
        return Err(CliError::Usage(format!("{}: no quotes", path.display())));
    }
    let mut tenors: Vec<TenorQuotes> = Vec::new();
    for row in table.rows() {
        let slice = market(&row, "tenor")?;
        let quote = DeltaQuote::new(parse_delta(&row)?, row.f64("vol")?).map_err(|e| row.error("vol", e))?;
        match tenors.iter_mut().find(|t| t.slice.maturity == slice.maturity) {
            Some(t) if t.slice != slice => {
                return Err(row.error("spot", "market data differs from earlier rows of the same tenor"));
            }
            Some(t) => t.quotes.push(quote),
            None => tenors.push(TenorQuotes {
                slice,
                quotes: vec![quote],
            }),
        }
    }
    tenors.sort_by(|a, b| a.slice.maturity.total_cmp(&b.slice.maturity));
    QuoteSurface::new(tenors, cfg.calibration.convention).map_err(lib)
}

pub struct CalibrateArgs<'a> {
    pub quotes: &'a Path,
    pub intervals: &'a [f64],
    pub global_only: bool,
    pub output: Option<&'a Path>,
}

/// Fitted schedule, then residual and smile tables next to it.
pub fn calibrate(args: &CalibrateArgs<'_>, engine: Option<Engine>, cfg: &Config) -> Result<(), CliError> {
    if matches!(engine, Some(e) if e != Engine::Analytic) {
        return Err(CliError::Usage("calibration uses the analytic engine only".into()));
    }
    let surface = read_quotes(args.quotes, cfg)?;
    let options = cfg.calibration_options();
    cfg.bounds.validate().map_err(lib)?;
    let global = global_fit(&surface, &cfg.bounds, &options).map_err(lib)?;
    eprintln!(
        "global fit: {} iterations, objective {}, vol rms {}{}",
        global.iterations,
        num(global.objective),
        num(global.vol_rms()),
        if global.converged { "" } else { " (not converged)" }
    );
    let result = if args.global_only {
        global.clone()
    } else {
        let r = bootstrap_fit(&surface, &global, args.intervals, &cfg.bounds, &options).map_err(lib)?;
        for s in &r.segments {
            eprintln!(
                "segment [{}, {}]: {} quotes, {} iterations, objective {}, {:?}",
                num(s.t_start),
                num(s.t_end),
                s.quotes,
                s.iterations,
                num(s.objective),
                s.termination
            );
        }
        r
    };
    let max_vol = result.fits.iter().map(|f| f.vol_residual.abs()).fold(0.0, f64::max);
    eprintln!("max |vol residual| {}", num(max_vol));

    let mut schedule = Output::new(&["from", "to", "v0", "theta", "kappa", "rho", "xi"]);
    schedule.rows = schedule_rows(&result.params);
    let residuals = residual_table(&result);
    let smile = smile_table(&result, &surface, cfg)?;
    schedule.write(args.output)?;
    if let Some(out) = args.output {
        residuals.write(Some(&sibling(out, "residuals")))?;
        smile.write(Some(&sibling(out, "smile")))?;
    }

    let mut failed = Vec::new();
    if !global.converged {
        failed.push("global fit".to_string());
    }
    if !args.global_only {
        failed.extend(
            result
                .segments
                .iter()
                .filter(|s| s.termination == Termination::MaxIterations)
                .map(|s| format!("segment [{}, {}]", s.t_start, s.t_end)),
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("no convergence within the iteration limit: {}", failed.join(", "))))
    }
}

fn residual_table(result: &CalibrationResult) -> Output {
    let mut out = Output::new(&[
        "tenor",
        "delta",
        "strike",
        "market_vol",
        "model_vol",
        "market_price",
        "model_price",
        "price_residual",
        "vol_residual",
    ]);
    for f in &result.fits {
        out.rows.push(vec![
            num(f.maturity),
            f.delta.to_string(),
            num(f.strike),
            num(f.market_vol),
            num(f.model_vol),
            num(f.market_price),
            num(f.model_price),
            num(f.price_residual),
            num(f.vol_residual),
        ]);
    }
    out
}

const SMILE_POINTS: usize = 41;

/// Model implied vols on a strike grid spanning each tenor's quotes, widened by a quarter on each side.
fn smile_table(result: &CalibrationResult, surface: &QuoteSurface, cfg: &Config) -> Result<Output, CliError> {
    let mut out = Output::new(&["tenor", "strike", "model_vol"]);
    for t in &surface.tenors {
        let strikes: Vec<f64> = result
            .fits
            .iter()
            .filter(|f| f.maturity == t.slice.maturity)
            .map(|f| f.strike)
            .collect();
        let lo = strikes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = strikes.iter().copied().fold(0.0, f64::max);
        let pad = 0.25 * (hi - lo);
        for i in 0..SMILE_POINTS {
            let k = (lo - pad).max(1e-3 * lo) + (hi - lo + 2.0 * pad) * i as f64 / (SMILE_POINTS - 1) as f64;
            let call = heston_call_cv(&result.params, &t.slice, k, &cfg.quadrature).map_err(lib)?;
            // far wings can fall outside the no-arbitrage band at working precision
            let vol = implied_vol(&t.slice, k, call).map(num).unwrap_or_default();
            out.rows.push(vec![num(t.slice.maturity), num(k), vol]);
        }
    }
    Ok(out)
}

enum Contract {
    Vanilla(VanillaPayoff),
    Barrier(WindowBarrierSpec),
}

struct Instrument {
    id: String,
    slice: MarketSlice,
    contract: Contract,
}

fn parse_instrument(row: &Row<'_>) -> Result<Instrument, CliError> {
    let slice = market(row, "maturity")?;
    let kind = match row.text("option").to_ascii_lowercase().as_str() {
        "call" | "c" => OptionKind::Call,
        "put" | "p" => OptionKind::Put,
        other => return Err(row.error("option", format!("expected call or put, got '{other}'"))),
    };
    let payoff = VanillaPayoff {
        kind,
        strike: row.f64("strike")?,
        notional: row.opt_f64("notional")?.unwrap_or(1.0),
    };
    payoff.validate().map_err(|e| row.error("strike", e))?;
    let contract = match row.opt_f64("barrier")? {
        None => Contract::Vanilla(payoff),
        Some(barrier) => {
            let side = match row.text("side").to_ascii_lowercase().as_str() {
                "lower" | "down" => BarrierSide::Lower,
                "upper" | "up" => BarrierSide::Upper,
                other => return Err(row.error("side", format!("expected lower or upper, got '{other}'"))),
            };
            let knock = match row.text("knock").to_ascii_lowercase().as_str() {
                "in" | "knock_in" | "ki" => KnockType::KnockIn,
                "out" | "knock_out" | "ko" => KnockType::KnockOut,
                other => return Err(row.error("knock", format!("expected in or out, got '{other}'"))),
            };
            let spec = WindowBarrierSpec {
                barrier,
                side,
                knock,
                window_start: row.opt_f64("window_start")?.unwrap_or(0.0),
                window_end: row.opt_f64("window_end")?.unwrap_or(slice.maturity),
                payoff,
                rebate: row.opt_f64("rebate")?.unwrap_or(0.0),
            };
            spec.validate(slice.maturity).map_err(|e| row.error("window_end", e))?;
            Contract::Barrier(spec)
        }
    };
    let id = match row.text("id") {
        "" => return Err(row.error("id", "value is missing")),
        s => s.to_string(),
    };
    Ok(Instrument { id, slice, contract })
}

pub struct PriceArgs<'a> {
    pub schedule: &'a Path,
    pub instruments: &'a Path,
    pub output: Option<&'a Path>,
}

pub fn price(args: &PriceArgs<'_>, engine: Engine, cfg: &Config) -> Result<(), CliError> {
    let params = read_schedule(args.schedule)?;
    let table = Table::read(args.instruments, &["id", "maturity", "spot", "r_dom", "r_for", "option", "strike"])?;
    let instruments = table.rows().map(|r| parse_instrument(&r)).collect::<Result<Vec<_>, _>>()?;
    if instruments.is_empty() {
        return Err(CliError::Usage(format!("{}: no instruments", args.instruments.display())));
    }
    if engine == Engine::Analytic {
        if let Some(i) = instruments.iter().find(|i| matches!(i.contract, Contract::Barrier(_))) {
            return Err(CliError::Usage(format!(
                "instrument '{}' has a barrier; use --engine fd or mc",
                i.id
            )));
        }
    }
    let mut out = Output::new(&["id", "engine", "value", "std_error", "vanilla_value"]);
    for inst in &instruments {
        let (value, std_error, vanilla) = price_one(&params, inst, engine, cfg)
            .map_err(|e| CliError::Failed(format!("instrument '{}': {}", inst.id, e.message())))?;
        out.rows.push(vec![
            inst.id.clone(),
            engine.name().to_string(),
            num(value),
            std_error.map(num).unwrap_or_default(),
            vanilla.map(num).unwrap_or_default(),
        ]);
    }
    out.write(args.output)
}

type Priced = (f64, Option<f64>, Option<f64>);

fn price_one(params: &PiecewiseHestonParams, inst: &Instrument, engine: Engine, cfg: &Config) -> Result<Priced, CliError> {
    let s = &inst.slice;
    match (&inst.contract, engine) {
        (Contract::Vanilla(p), Engine::Analytic) => {
            let v = p.notional * heston_price(params, s, p.strike, p.kind, &cfg.quadrature).map_err(lib)?;
            Ok((v, None, None))
        }
        (Contract::Vanilla(p), Engine::Fd) => {
            let grid = cfg.fd.grid(params, s, p.strike, None).map_err(lib)?;
            Ok((fd_price_vanilla(params, s, p, &grid).map_err(lib)?, None, None))
        }
        (Contract::Vanilla(p), Engine::Mc) => {
            let e = mc_price(params, s, &McPayoff::Vanilla(*p), &cfg.mc).map_err(lib)?;
            Ok((e.price, Some(e.std_error), None))
        }
        (Contract::Barrier(spec), Engine::Fd) => {
            let grid = cfg.fd.grid(params, s, spec.payoff.strike, Some(spec.barrier)).map_err(lib)?;
            let r = fd_price(params, s, spec, &grid).map_err(lib)?;
            Ok((r.value, None, Some(r.vanilla)))
        }
        (Contract::Barrier(spec), Engine::Mc) => {
            let e = mc_price(params, s, &McPayoff::WindowBarrier(*spec), &cfg.mc).map_err(lib)?;
            let v = mc_price(params, s, &McPayoff::Vanilla(spec.payoff), &cfg.mc).map_err(lib)?;
            Ok((e.price, Some(e.std_error), Some(v.price)))
        }
        (Contract::Barrier(_), Engine::Analytic) => unreachable!("rejected before pricing"),
    }
}

pub struct DumpArgs<'a> {
    pub schedule: &'a Path,
    pub tenor: f64,
    pub spot: f64,
    pub r_dom: f64,
    pub r_for: f64,
    pub strike: Option<f64>,
    pub moneyness: f64,
    pub prob: u8,
    pub phi_min: f64,
    pub phi_max: f64,
    pub points: usize,
    pub output: Option<&'a PathBuf>,
}

/// Probability integrand with and without the control variate on a uniform phi grid.
pub fn integrand_dump(args: &DumpArgs<'_>) -> Result<(), CliError> {
    let params = read_schedule(args.schedule)?;
    let slice = MarketSlice::new(args.spot, args.r_dom, args.r_for, args.tenor).map_err(|e| CliError::Usage(e.to_string()))?;
    params.check_covers(slice.maturity).map_err(lib)?;
    let strike = args.strike.unwrap_or(args.moneyness * args.spot);
    let j = match args.prob {
        1 => Prob::P1,
        2 => Prob::P2,
        p => return Err(CliError::Usage(format!("--prob must be 1 or 2, got {p}"))),
    };
    if !(args.phi_min > 0.0 && args.phi_max > args.phi_min && args.points >= 2) {
        return Err(CliError::Usage("need 0 < phi-min < phi-max and at least two points".into()));
    }
    let mut out = Output::new(&[
        "phi",
        "with_cv",
        "without_cv",
        "log10_abs_with_cv",
        "log10_abs_without_cv",
        "log10_mod_with_cv",
        "log10_mod_without_cv",
    ]);
    for i in 0..args.points {
        let phi = args.phi_min + (args.phi_max - args.phi_min) * i as f64 / (args.points - 1) as f64;
        let with = probability_integrand_complex(&params, &slice, strike, phi, j, true).map_err(lib)?;
        let without = probability_integrand_complex(&params, &slice, strike, phi, j, false).map_err(lib)?;
        out.rows.push(vec![
            num(phi),
            num(with.re),
            num(without.re),
            num(with.re.abs().log10()),
            num(without.re.abs().log10()),
            num(with.norm().log10()),
            num(without.norm().log10()),
        ]);
    }
    out.write(args.output.map(|p| p.as_path()))
}
