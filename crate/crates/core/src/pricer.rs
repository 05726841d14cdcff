//! Semi-analytic vanilla pricing under piecewise Heston with a Black-Scholes
//! control variate.
//!
//! ```text
//! C = C_BS(sigma = sqrt(v0)) + S P~_1 - K e^{-(r_d - r_f) T} P~_2
//! P~_j = 1/pi int_0^inf Re[ e^{-i phi ln K} (f_j^H - f_j^BS) / (i phi) ] dphi
//! ```
//!
//! `P~_j` is a difference of quasi-probabilities and may be negative. Both
//! characteristic functions carry the factor `e^{-r_f T}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::bs::{bs_call_price, delta_to_strike, implied_vol, DeltaConvention};
use crate::charfn::{bs_char_fn, heston_char_fn, PiecewiseHestonParams, Prob};
use crate::error::{domain, Error, Result};
use crate::market::{MarketSlice, OptionKind, QuotedDelta};
use crate::quadrature::{integrate_semi_infinite, QuadResult, QuadratureConfig};

/// Complex integrand `e^{-i phi ln K} f / (i phi)` before taking the real part.
///
/// With `control_variate` the Black-Scholes characteristic function at
/// `sigma = sqrt(v0)` is subtracted from the Heston one.
pub fn probability_integrand_complex(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    strike: f64,
    phi: f64,
    j: Prob,
    control_variate: bool,
) -> Result<Complex64> {
    if !(phi > 0.0) {
        return domain(format!("integrand requires phi > 0, got {phi}"));
    }
    let mut f = heston_char_fn(params, slice, phi, j)?;
    if control_variate {
        f -= bs_char_fn(slice, params.v0.sqrt(), slice.maturity, phi, j);
    }
    let kernel = Complex64::new(0.0, -phi * strike.ln()).exp() / Complex64::new(0.0, phi);
    Ok(kernel * f)
}

/// Real integrand of `P~_j`.
pub fn tilde_p_integrand(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    strike: f64,
    phi: f64,
    j: Prob,
) -> Result<f64> {
    Ok(probability_integrand_complex(params, slice, strike, phi, j, true)?.re)
}

/// Real integrand of the plain Heston probability, without control variate.
pub fn plain_integrand(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    strike: f64,
    phi: f64,
    j: Prob,
) -> Result<f64> {
    Ok(probability_integrand_complex(params, slice, strike, phi, j, false)?.re)
}

/// `P~_j` with quadrature diagnostics; value and error are already divided by pi.
pub fn tilde_p_detailed(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    strike: f64,
    j: Prob,
    config: &QuadratureConfig,
) -> Result<QuadResult> {
    // the 1/pi factor scales the absolute tolerance as well
    let scaled = QuadratureConfig {
        abs_tol: config.abs_tol * PI,
        ..*config
    };
    let r = integrate_semi_infinite(|phi| tilde_p_integrand(params, slice, strike, phi, j), &scaled)?;
    Ok(QuadResult {
        value: r.value / PI,
        error: r.error / PI,
        evaluations: r.evaluations,
    })
}

pub fn tilde_p(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    strike: f64,
    j: Prob,
    config: &QuadratureConfig,
) -> Result<f64> {
    Ok(tilde_p_detailed(params, slice, strike, j, config)?.value)
}

fn check_pricing_inputs(params: &PiecewiseHestonParams, slice: &MarketSlice, strike: f64) -> Result<()> {
    slice.validate()?;
    params.validate()?;
    params.check_covers(slice.maturity)?;
    if !(strike.is_finite() && strike > 0.0) {
        return domain(format!("strike must be positive, got {strike}"));
    }
    Ok(())
}

/// Heston call price via the control-variate decomposition.
pub fn heston_call_cv(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    strike: f64,
    config: &QuadratureConfig,
) -> Result<f64> {
    check_pricing_inputs(params, slice, strike)?;
    let bs = bs_call_price(slice, params.v0.sqrt(), strike)?;
    let p1 = tilde_p(params, slice, strike, Prob::P1, config)?;
    let p2 = tilde_p(params, slice, strike, Prob::P2, config)?;
    Ok(bs + slice.spot * p1 - strike * (-slice.carry() * slice.maturity).exp() * p2)
}

pub fn heston_price(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    strike: f64,
    kind: OptionKind,
    config: &QuadratureConfig,
) -> Result<f64> {
    let call = heston_call_cv(params, slice, strike, config)?;
    Ok(match kind {
        OptionKind::Call => call,
        OptionKind::Put => call - slice.spot * slice.df_for() + strike * slice.df_dom(),
    })
}

/// How quoted deltas are turned into strikes when pricing a model smile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrikeMode {
    /// Strike consistent with the model's own implied vol at that strike.
    #[default]
    SmileFixedPoint,
    /// Strike from the flat Black-Scholes vol `sqrt(v0)`.
    FlatVol,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmilePoint {
    pub delta: QuotedDelta,
    pub strike: f64,
    /// Price of the quoted option type (puts for negative deltas).
    pub price: f64,
    pub implied_vol: f64,
}

const SMILE_MAX_ITER: usize = 50;
const SMILE_STRIKE_TOL: f64 = 1e-8;

/// Model call price and implied vol at `strike`.
fn model_vol(params: &PiecewiseHestonParams, slice: &MarketSlice, strike: f64, config: &QuadratureConfig) -> Result<(f64, f64)> {
    let call = heston_call_cv(params, slice, strike, config)?;
    Ok((call, implied_vol(slice, strike, call)?))
}

/// Prices the model smile at the given delta pillars.
pub fn price_smile(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    deltas: &[QuotedDelta],
    mode: StrikeMode,
    convention: DeltaConvention,
    config: &QuadratureConfig,
) -> Result<Vec<SmilePoint>> {
    deltas
        .iter()
        .map(|&delta| {
            delta.validate()?;
            let mut strike = delta_to_strike(slice, params.v0.sqrt(), delta, convention)?;
            let (mut call, mut vol) = model_vol(params, slice, strike, config)?;
            if mode == StrikeMode::SmileFixedPoint {
                let mut converged = false;
                for _ in 0..SMILE_MAX_ITER {
                    let next = delta_to_strike(slice, vol, delta, convention)?;
                    let moved = (next - strike).abs();
                    strike = next;
                    (call, vol) = model_vol(params, slice, strike, config)?;
                    if moved <= SMILE_STRIKE_TOL {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::Domain(format!(
                        "smile strike for delta {delta} did not converge in {SMILE_MAX_ITER} iterations"
                    )));
                }
            }
            let price = match delta.kind() {
                OptionKind::Call => call,
                OptionKind::Put => call - slice.spot * slice.df_for() + strike * slice.df_dom(),
            };
            Ok(SmilePoint {
                delta,
                strike,
                price,
                implied_vol: vol,
            })
        })
        .collect()
}
