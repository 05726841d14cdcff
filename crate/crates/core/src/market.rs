//! Market inputs shared by every pricer.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Spot, continuously compounded domestic/foreign rates and a maturity.
///
/// Rates are annualised, the maturity is a year fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketSlice {
    pub spot: f64,
    pub rate_dom: f64,
    pub rate_for: f64,
    pub maturity: f64,
}

impl MarketSlice {
    pub fn new(spot: f64, rate_dom: f64, rate_for: f64, maturity: f64) -> Result<Self> {
        let slice = Self {
            spot,
            rate_dom,
            rate_for,
            maturity,
        };
        slice.validate()?;
        Ok(slice)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return domain(format!("spot must be positive, got {}", self.spot));
        }
        if !(self.maturity.is_finite() && self.maturity > 0.0) {
            return domain(format!("maturity must be positive, got {}", self.maturity));
        }
        if !(self.rate_dom.is_finite() && self.rate_for.is_finite()) {
            return domain("rates must be finite");
        }
        Ok(())
    }

    /// Same market, different maturity.
    pub fn with_maturity(&self, maturity: f64) -> Self {
        Self { maturity, ..*self }
    }

    /// Interest-rate differential `r_d - r_f`.
    pub fn carry(&self) -> f64 {
        self.rate_dom - self.rate_for
    }

    pub fn forward(&self) -> f64 {
        self.spot * (self.carry() * self.maturity).exp()
    }

    pub fn df_dom(&self) -> f64 {
        (-self.rate_dom * self.maturity).exp()
    }

    pub fn df_for(&self) -> f64 {
        (-self.rate_for * self.maturity).exp()
    }

    /// No-arbitrage band `[max(S e^{-r_f T} - K e^{-r_d T}, 0), S e^{-r_f T}]` for a call.
    pub fn call_bounds(&self, strike: f64) -> (f64, f64) {
        let upper = self.spot * self.df_for();
        ((upper - strike * self.df_dom()).max(0.0), upper)
    }
}

/// Call or put.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

/// A quoted delta: a signed number (positive for calls, negative for puts) or ATM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QuotedDelta {
    Signed(f64),
    /// Delta-neutral straddle.
    Atm,
}

impl QuotedDelta {
    pub fn validate(&self) -> Result<()> {
        if let QuotedDelta::Signed(d) = *self {
            if !(d.is_finite() && d != 0.0 && d.abs() < 1.0) {
                return domain(format!("|delta| must lie in (0, 1), got {d}"));
            }
        }
        Ok(())
    }

    /// Option type used to express the quote; ATM quotes are priced as calls.
    pub fn kind(&self) -> OptionKind {
        match *self {
            QuotedDelta::Signed(d) if d < 0.0 => OptionKind::Put,
            _ => OptionKind::Call,
        }
    }

    /// Numerical value used in reports, with ATM written as 0.5.
    pub fn as_number(&self) -> f64 {
        match *self {
            QuotedDelta::Signed(d) => d,
            QuotedDelta::Atm => 0.5,
        }
    }
}

impl std::fmt::Display for QuotedDelta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuotedDelta::Signed(d) => write!(f, "{d}"),
            QuotedDelta::Atm => write!(f, "ATM"),
        }
    }
}

/// An implied volatility quoted against a delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaQuote {
    pub delta: QuotedDelta,
    pub vol: f64,
}

impl DeltaQuote {
    pub fn new(delta: QuotedDelta, vol: f64) -> Result<Self> {
        delta.validate()?;
        if !(vol.is_finite() && vol > 0.0) {
            return domain(format!("quoted vol must be positive, got {vol}"));
        }
        Ok(Self { delta, vol })
    }
}

/// The five standard FX smile pillars: 15/25-delta puts, ATM, 25/15-delta calls.
pub fn standard_deltas() -> [QuotedDelta; 5] {
    [
        QuotedDelta::Signed(-0.15),
        QuotedDelta::Signed(-0.25),
        QuotedDelta::Atm,
        QuotedDelta::Signed(0.25),
        QuotedDelta::Signed(0.15),
    ]
}
