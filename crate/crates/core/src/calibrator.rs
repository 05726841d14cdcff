//! Two-stage calibration to FX smile quotes.
//!
//! A global fit with one segment and mean reversion held fixed provides `v0`
//! and a starting point; the bootstrap then fits one segment at a time from the
//! shortest tenor outward, keeping every earlier segment frozen.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs::{bs_call_price, bs_vega, delta_to_strike, implied_vol, DeltaConvention};
use crate::charfn::{HestonSegment, PiecewiseHestonParams};
use crate::error::{domain, Error, Result};
use crate::lm::{levenberg_marquardt, LmConfig, LmReport, Termination};
use crate::market::{DeltaQuote, MarketSlice, QuotedDelta};
use crate::pricer::heston_call_cv;
use crate::quadrature::QuadratureConfig;

const TENOR_EPS: f64 = 1e-9;
/// Keeps the starting point off the flat top of the sine transform.
const BOUND_NUDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn to_internal(self, p: f64) -> f64 {
        let z = 2.0 * (p - self.lo) / (self.hi - self.lo) - 1.0;
        z.clamp(-1.0 + BOUND_NUDGE, 1.0 - BOUND_NUDGE).asin()
    }

    fn to_external(self, u: f64) -> f64 {
        (self.lo + 0.5 * (self.hi - self.lo) * (u.sin() + 1.0)).clamp(self.lo, self.hi)
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.lo && p <= self.hi
    }
}

/// Box constraints, enforced through a sine reparametrisation.
///
/// Mean reversion is open at zero; its lower edge is a small positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationBounds {
    pub rho: Bound,
    pub kappa: Bound,
    pub theta: Bound,
    pub xi: Bound,
    pub v0: Bound,
}

impl Default for CalibrationBounds {
    fn default() -> Self {
        Self {
            rho: Bound::new(-1.0, 1.0),
            kappa: Bound::new(1e-4, 6.0),
            theta: Bound::new(0.0, 1.0),
            xi: Bound::new(1e-4, 5.0),
            v0: Bound::new(1e-6, 1.0),
        }
    }
}

impl CalibrationBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("rho", self.rho), ("kappa", self.kappa), ("theta", self.theta), ("xi", self.xi), ("v0", self.v0)] {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return domain(format!("{name} bounds must satisfy lower < upper, got [{}, {}]", b.lo, b.hi));
            }
        }
        if self.kappa.lo <= 0.0 || self.xi.lo <= 0.0 || self.v0.lo <= 0.0 || self.theta.lo < 0.0 {
            return domain("kappa, xi and v0 bounds must be positive and theta non-negative");
        }
        if self.rho.lo < -1.0 || self.rho.hi > 1.0 {
            return domain("rho bounds must lie within [-1, 1]");
        }
        Ok(())
    }
}

/// Quotes for one expiry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenorQuotes {
    /// Market data with `maturity` equal to the tenor.
    pub slice: MarketSlice,
    pub quotes: Vec<DeltaQuote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSurface {
    pub tenors: Vec<TenorQuotes>,
    pub convention: DeltaConvention,
}

/// A quote converted to strike and call price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketQuote {
    pub tenor: usize,
    pub maturity: f64,
    pub delta: QuotedDelta,
    pub vol: f64,
    pub strike: f64,
    pub call_price: f64,
    pub vega: f64,
}

impl QuoteSurface {
    pub fn new(tenors: Vec<TenorQuotes>, convention: DeltaConvention) -> Result<Self> {
        let s = Self { tenors, convention };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tenors.is_empty() {
            return domain("quote surface is empty");
        }
        for t in &self.tenors {
            t.slice.validate()?;
            if t.quotes.is_empty() {
                return domain(format!("tenor {} has no quotes", t.slice.maturity));
            }
            for q in &t.quotes {
                DeltaQuote::new(q.delta, q.vol)?;
            }
        }
        for w in self.tenors.windows(2) {
            if w[1].slice.maturity <= w[0].slice.maturity {
                return domain(format!(
                    "tenors must be strictly increasing: {} then {}",
                    w[0].slice.maturity, w[1].slice.maturity
                ));
            }
        }
        Ok(())
    }

    pub fn quote_count(&self) -> usize {
        self.tenors.iter().map(|t| t.quotes.len()).sum()
    }

    pub fn last_maturity(&self) -> f64 {
        self.tenors.last().map_or(0.0, |t| t.slice.maturity)
    }

    /// ATM vol of a tenor, or the mean quoted vol when no ATM pillar is present.
    pub fn atm_vol(&self, tenor: usize) -> f64 {
        let t = &self.tenors[tenor];
        t.quotes
            .iter()
            .find(|q| q.delta == QuotedDelta::Atm)
            .map(|q| q.vol)
            .unwrap_or_else(|| t.quotes.iter().map(|q| q.vol).sum::<f64>() / t.quotes.len() as f64)
    }

    /// Strikes from the quoted vols, with Black-Scholes call prices and vegas.
    pub fn market_quotes(&self) -> Result<Vec<MarketQuote>> {
        let mut out = Vec::with_capacity(self.quote_count());
        for (k, t) in self.tenors.iter().enumerate() {
            for q in &t.quotes {
                let strike = delta_to_strike(&t.slice, q.vol, q.delta, self.convention)?;
                out.push(MarketQuote {
                    tenor: k,
                    maturity: t.slice.maturity,
                    delta: q.delta,
                    vol: q.vol,
                    strike,
                    call_price: bs_call_price(&t.slice, q.vol, strike)?,
                    vega: bs_vega(&t.slice, q.vol, strike)?,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// Price difference divided by the quote's Black-Scholes vega.
    #[default]
    VegaWeightedPrice,
    Price,
    ImpliedVol,
}

/// Starting point of the global fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalGuess {
    pub v0: f64,
    pub theta: f64,
    pub rho: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    pub lm: LmConfig,
    pub quadrature: QuadratureConfig,
    pub residual: ResidualKind,
    /// Mean reversion held fixed in the global fit.
    pub global_kappa: f64,
    pub initial_guess: Option<GlobalGuess>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            lm: LmConfig::default(),
            quadrature: QuadratureConfig::default(),
            residual: ResidualKind::default(),
            global_kappa: 1.5,
            initial_guess: None,
        }
    }
}

/// Fit quality at one quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuoteFit {
    pub maturity: f64,
    pub delta: QuotedDelta,
    pub strike: f64,
    pub market_vol: f64,
    pub model_vol: f64,
    pub market_price: f64,
    pub model_price: f64,
    /// Model minus market call price.
    pub price_residual: f64,
    /// Model minus market implied vol.
    pub vol_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentFit {
    pub t_start: f64,
    pub t_end: f64,
    pub quotes: usize,
    pub iterations: usize,
    pub objective: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub params: PiecewiseHestonParams,
    pub fits: Vec<QuoteFit>,
    pub iterations: usize,
    /// Sum of squared residuals in the configured units.
    pub objective: f64,
    pub converged: bool,
    pub segments: Vec<SegmentFit>,
}

impl CalibrationResult {
    /// Root mean square of the implied-vol residuals.
    pub fn vol_rms(&self) -> f64 {
        (self.fits.iter().map(|f| f.vol_residual.powi(2)).sum::<f64>() / self.fits.len().max(1) as f64).sqrt()
    }
}

fn residuals(
    params: &PiecewiseHestonParams,
    surface: &QuoteSurface,
    quotes: &[MarketQuote],
    options: &CalibrationOptions,
) -> Result<Vec<f64>> {
    quotes
        .par_iter()
        .map(|q| {
            let slice = &surface.tenors[q.tenor].slice;
            let model = heston_call_cv(params, slice, q.strike, &options.quadrature)?;
            let r = match options.residual {
                ResidualKind::VegaWeightedPrice => (model - q.call_price) / q.vega,
                ResidualKind::Price => model - q.call_price,
                ResidualKind::ImpliedVol => implied_vol(slice, q.strike, model)? - q.vol,
            };
            if r.is_finite() {
                Ok(r)
            } else {
                Err(Error::Numerical(format!("non-finite residual at strike {}", q.strike)))
            }
        })
        .collect()
}

fn quote_fits(params: &PiecewiseHestonParams, surface: &QuoteSurface, quotes: &[MarketQuote], config: &QuadratureConfig) -> Result<Vec<QuoteFit>> {
    quotes
        .par_iter()
        .map(|q| {
            let slice = &surface.tenors[q.tenor].slice;
            let model = heston_call_cv(params, slice, q.strike, config)?;
            let price_residual = model - q.call_price;
            let model_vol = implied_vol(slice, q.strike, model).unwrap_or(q.vol + price_residual / q.vega);
            Ok(QuoteFit {
                maturity: q.maturity,
                delta: q.delta,
                strike: q.strike,
                market_vol: q.vol,
                model_vol,
                market_price: q.call_price,
                model_price: model,
                price_residual,
                vol_residual: model_vol - q.vol,
            })
        })
        .collect()
}

/// One-segment fit over `(v0, theta, rho, xi)` with mean reversion fixed.
pub fn global_fit(surface: &QuoteSurface, bounds: &CalibrationBounds, options: &CalibrationOptions) -> Result<CalibrationResult> {
    surface.validate()?;
    bounds.validate()?;
    if surface.quote_count() < 4 {
        return domain(format!("global fit needs at least 4 quotes, got {}", surface.quote_count()));
    }
    if !bounds.kappa.contains(options.global_kappa) {
        return domain(format!("fixed kappa {} outside its bounds", options.global_kappa));
    }
    let quotes = surface.market_quotes()?;
    let horizon = surface.last_maturity();
    let guess = options.initial_guess.unwrap_or_else(|| GlobalGuess {
        v0: surface.atm_vol(0).powi(2),
        theta: surface.atm_vol(surface.tenors.len() - 1).powi(2),
        rho: 0.0,
        xi: 0.3,
    });
    let b = [bounds.v0, bounds.theta, bounds.rho, bounds.xi];
    let build = |u: &[f64]| -> Result<PiecewiseHestonParams> {
        let p: Vec<f64> = u.iter().zip(b).map(|(&u, b)| b.to_external(u)).collect();
        PiecewiseHestonParams::constant(p[0], options.global_kappa, p[1], p[2], p[3], horizon)
    };
    let u0: Vec<f64> = [guess.v0, guess.theta, guess.rho, guess.xi]
        .iter()
        .zip(b)
        .map(|(&p, b)| b.to_internal(p))
        .collect();
    let report = levenberg_marquardt(|u| residuals(&build(u)?, surface, &quotes, options), &u0, &options.lm)?;
    let params = build(&report.x)?;
    let fits = quote_fits(&params, surface, &quotes, &options.quadrature)?;
    Ok(CalibrationResult {
        segments: vec![segment_fit(0.0, horizon, quotes.len(), &report)],
        params,
        fits,
        iterations: report.iterations,
        objective: report.objective,
        converged: report.converged(),
    })
}

fn segment_fit(t_start: f64, t_end: f64, quotes: usize, report: &LmReport) -> SegmentFit {
    SegmentFit {
        t_start,
        t_end,
        quotes,
        iterations: report.iterations,
        objective: report.objective,
        termination: report.termination,
    }
}

/// Fits a piecewise schedule segment by segment.
///
/// `boundaries` are the segment end dates and must be quote tenors ending at
/// the last one; an empty list puts a boundary at every tenor. Segment `k`
/// is fitted to all tenors in `(b_{k-1}, b_k]`, starting from the global
/// parameters, with `v0` and every earlier segment frozen.
pub fn bootstrap_fit(
    surface: &QuoteSurface,
    global: &CalibrationResult,
    boundaries: &[f64],
    bounds: &CalibrationBounds,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    surface.validate()?;
    bounds.validate()?;
    let tenors: Vec<f64> = surface.tenors.iter().map(|t| t.slice.maturity).collect();
    let boundaries: Vec<f64> = if boundaries.is_empty() { tenors.clone() } else { boundaries.to_vec() };
    for w in boundaries.windows(2) {
        if w[1] <= w[0] {
            return domain("segment boundaries must be strictly increasing");
        }
    }
    for &b in &boundaries {
        if !tenors.iter().any(|&t| (t - b).abs() <= TENOR_EPS * t.max(1.0)) {
            return domain(format!("segment boundary {b} is not a quote tenor"));
        }
    }
    let last = *boundaries.last().expect("non-empty boundaries");
    if (last - surface.last_maturity()).abs() > TENOR_EPS * last.max(1.0) {
        return domain(format!("last boundary {last} must equal the last tenor {}", surface.last_maturity()));
    }
    let start = global
        .params
        .segments
        .first()
        .ok_or_else(|| Error::Domain("global result has no segment".into()))?;
    let v0 = global.params.v0;
    let quotes = surface.market_quotes()?;
    let b = [bounds.theta, bounds.kappa, bounds.rho, bounds.xi];
    let u0: Vec<f64> = [start.theta, start.kappa, start.rho, start.xi]
        .iter()
        .zip(b)
        .map(|(&p, b)| b.to_internal(p))
        .collect();

    let mut frozen: Vec<HestonSegment> = Vec::new();
    let mut segments = Vec::new();
    let mut t_start = 0.0;
    for &t_end in &boundaries {
        if t_end - t_start < 1.0 / 12.0 - TENOR_EPS {
            log::warn!("segment [{t_start}, {t_end}] is shorter than one month; such intervals calibrate poorly");
        }
        let seg_quotes: Vec<MarketQuote> = quotes
            .iter()
            .filter(|q| q.maturity > t_start + TENOR_EPS && q.maturity <= t_end + TENOR_EPS)
            .copied()
            .collect();
        let build = |u: &[f64]| -> Result<PiecewiseHestonParams> {
            let p: Vec<f64> = u.iter().zip(b).map(|(&u, b)| b.to_external(u)).collect();
            let mut segs = frozen.clone();
            segs.push(HestonSegment::new(t_start, t_end, p[1], p[0], p[2], p[3])?);
            PiecewiseHestonParams::new(v0, segs)
        };
        let report = levenberg_marquardt(|u| residuals(&build(u)?, surface, &seg_quotes, options), &u0, &options.lm)?;
        let fitted = build(&report.x)?;
        frozen.push(*fitted.segments.last().expect("segment just added"));
        segments.push(segment_fit(t_start, t_end, seg_quotes.len(), &report));
        t_start = t_end;
    }
    let params = PiecewiseHestonParams::new(v0, frozen)?;
    let fits = quote_fits(&params, surface, &quotes, &options.quadrature)?;
    Ok(CalibrationResult {
        params,
        fits,
        iterations: segments.iter().map(|s| s.iterations).sum(),
        objective: segments.iter().map(|s| s.objective).sum(),
        converged: segments.iter().all(|s| s.termination != Termination::MaxIterations),
        segments,
    })
}
