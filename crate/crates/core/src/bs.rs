//! Closed-form Black-Scholes (Garman-Kohlhagen) analytics for FX options.
//!
//! Prices are in domestic currency per unit of foreign notional:
//! `C = S e^{-r_f T} N(d1) - K e^{-r_d T} N(d2)`.
//! Zero volatility is handled analytically rather than as a limit of `d1`/`d2`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::{domain, Error, Result};
use crate::market::{MarketSlice, OptionKind, QuotedDelta};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal cumulative distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Inverse of [`norm_cdf`], polished with one Newton step.
pub fn norm_inv(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let dens = norm_pdf(x);
    if dens > 0.0 {
        x - (norm_cdf(x) - p) / dens
    } else {
        x
    }
}

/// Delta quoting convention for FX smiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaConvention {
    /// Unadjusted (premium-excluded) spot delta `e^{-r_f T} N(d1)`.
    #[default]
    Spot,
    /// Forward delta `N(d1)`.
    Forward,
}

fn check_inputs(slice: &MarketSlice, sigma: f64, strike: f64) -> Result<()> {
    slice.validate()?;
    if !(strike.is_finite() && strike > 0.0) {
        return domain(format!("strike must be positive, got {strike}"));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return domain(format!("volatility must be non-negative, got {sigma}"));
    }
    Ok(())
}

/// `(d1, d2)` for a strictly positive total volatility.
pub fn d1_d2(slice: &MarketSlice, sigma: f64, strike: f64) -> (f64, f64) {
    let sd = sigma * slice.maturity.sqrt();
    let d1 = ((slice.spot / strike).ln() + (slice.carry() + 0.5 * sigma * sigma) * slice.maturity) / sd;
    (d1, d1 - sd)
}

pub fn bs_call_price(slice: &MarketSlice, sigma: f64, strike: f64) -> Result<f64> {
    check_inputs(slice, sigma, strike)?;
    let fwd_spot = slice.spot * slice.df_for();
    let disc_strike = strike * slice.df_dom();
    if sigma == 0.0 {
        return Ok((fwd_spot - disc_strike).max(0.0));
    }
    let (d1, d2) = d1_d2(slice, sigma, strike);
    Ok(fwd_spot * norm_cdf(d1) - disc_strike * norm_cdf(d2))
}

pub fn bs_price(slice: &MarketSlice, sigma: f64, strike: f64, kind: OptionKind) -> Result<f64> {
    let call = bs_call_price(slice, sigma, strike)?;
    Ok(match kind {
        OptionKind::Call => call,
        OptionKind::Put => call - slice.spot * slice.df_for() + strike * slice.df_dom(),
    })
}

/// Black-Scholes vega `S e^{-r_f T} n(d1) sqrt(T)`.
pub fn bs_vega(slice: &MarketSlice, sigma: f64, strike: f64) -> Result<f64> {
    check_inputs(slice, sigma, strike)?;
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let (d1, _) = d1_d2(slice, sigma, strike);
    Ok(slice.spot * slice.df_for() * norm_pdf(d1) * slice.maturity.sqrt())
}

/// Delta of a call or put under the given convention.
pub fn strike_to_delta(
    slice: &MarketSlice,
    sigma: f64,
    strike: f64,
    kind: OptionKind,
    convention: DeltaConvention,
) -> Result<f64> {
    check_inputs(slice, sigma, strike)?;
    if sigma == 0.0 {
        return domain("delta undefined at zero volatility");
    }
    let (d1, _) = d1_d2(slice, sigma, strike);
    let scale = match convention {
        DeltaConvention::Spot => slice.df_for(),
        DeltaConvention::Forward => 1.0,
    };
    Ok(match kind {
        OptionKind::Call => scale * norm_cdf(d1),
        OptionKind::Put => -scale * norm_cdf(-d1),
    })
}

/// Strike whose delta equals the quote; ATM maps to the delta-neutral straddle
/// strike `F exp(sigma^2 T / 2)`.
pub fn delta_to_strike(
    slice: &MarketSlice,
    sigma: f64,
    delta: QuotedDelta,
    convention: DeltaConvention,
) -> Result<f64> {
    slice.validate()?;
    delta.validate()?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return domain(format!("strike from delta needs a positive volatility, got {sigma}"));
    }
    let t = slice.maturity;
    let sd = sigma * t.sqrt();
    let d1 = match delta {
        QuotedDelta::Atm => return Ok(slice.forward() * (0.5 * sigma * sigma * t).exp()),
        QuotedDelta::Signed(d) => {
            let scale = match convention {
                DeltaConvention::Spot => slice.df_for(),
                DeltaConvention::Forward => 1.0,
            };
            // N(d1) for calls, N(-d1) for puts
            let p = d.abs() / scale;
            if p >= 1.0 {
                return domain(format!("delta {d} unattainable with foreign discount factor {scale}"));
            }
            if d > 0.0 {
                norm_inv(p)
            } else {
                -norm_inv(p)
            }
        }
    };
    let strike = slice.forward() * (-d1 * sd + 0.5 * sd * sd).exp();
    if strike.is_finite() && strike > 0.0 {
        Ok(strike)
    } else {
        Err(Error::Domain(format!("no finite strike for delta {delta}")))
    }
}

/// Implied volatility of a call price by bisection-safeguarded Newton iteration.
///
/// A price at the lower edge of the no-arbitrage band returns zero.
pub fn implied_vol(slice: &MarketSlice, strike: f64, price: f64) -> Result<f64> {
    check_inputs(slice, 0.0, strike)?;
    let (lower, upper) = slice.call_bounds(strike);
    if !price.is_finite() || price < lower - 1e-14 * upper || price >= upper {
        return domain(format!(
            "call price {price} outside no-arbitrage band [{lower}, {upper})"
        ));
    }
    if price <= lower {
        return Ok(0.0);
    }
    let price_at = |s: f64| bs_call_price(slice, s, strike);
    let tol = 1e-12 * price;

    let mut lo = 0.0;
    let mut hi = 1.0;
    while price_at(hi)? < price {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::NoConvergence(format!(
                "implied vol bracket exceeded 1000 for price {price}"
            )));
        }
    }

    // Start from the at-the-money-forward approximation, clamped into the bracket.
    let approx = price / (0.4 * slice.spot * slice.df_for() * slice.maturity.sqrt());
    let mut sigma = if approx > lo && approx < hi { approx } else { 0.5 * (lo + hi) };
    let mut last_diff = f64::INFINITY;
    for _ in 0..100 {
        let diff = price_at(sigma)? - price;
        if diff == 0.0 {
            return Ok(sigma);
        }
        last_diff = diff;
        if diff > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let vega = bs_vega(slice, sigma, strike)?;
        // Newton on the log price: much better behaved far out of the money
        let model = diff + price;
        let step = if model > 0.0 {
            (model / price).ln() * model / vega
        } else {
            f64::INFINITY
        };
        let newton = sigma - step;
        if vega > 0.0 && newton > lo && newton < hi {
            // the price target is met and Newton has stalled at rounding level
            if diff.abs() <= tol && step.abs() <= 1e-14 * sigma {
                return Ok(newton);
            }
            sigma = newton;
        } else {
            sigma = 0.5 * (lo + hi);
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(sigma);
        }
    }
    if last_diff.abs() <= tol {
        return Ok(sigma);
    }
    Err(Error::NoConvergence(format!(
        "implied vol for price {price} at strike {strike} after 100 iterations"
    )))
}
