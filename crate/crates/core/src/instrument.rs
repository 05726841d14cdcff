//! Payoff descriptions shared by the finite-difference and Monte Carlo engines.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::market::OptionKind;

/// European call or put paying `notional * max(±(S_T - K), 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanillaPayoff {
    pub kind: OptionKind,
    pub strike: f64,
    pub notional: f64,
}

impl VanillaPayoff {
    pub fn call(strike: f64) -> Self {
        Self {
            kind: OptionKind::Call,
            strike,
            notional: 1.0,
        }
    }

    pub fn put(strike: f64) -> Self {
        Self {
            kind: OptionKind::Put,
            strike,
            notional: 1.0,
        }
    }

    pub fn value(&self, spot: f64) -> f64 {
        let intrinsic = match self.kind {
            OptionKind::Call => spot - self.strike,
            OptionKind::Put => self.strike - spot,
        };
        self.notional * intrinsic.max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return domain(format!("strike must be positive, got {}", self.strike));
        }
        if !self.notional.is_finite() {
            return domain("notional must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierSide {
    /// Triggered when the spot falls to or below the barrier.
    Lower,
    /// Triggered when the spot rises to or above the barrier.
    Upper,
}

impl BarrierSide {
    /// Whether `spot` lies on or beyond the barrier.
    pub fn breached(self, barrier: f64, spot: f64) -> bool {
        match self {
            BarrierSide::Lower => spot <= barrier,
            BarrierSide::Upper => spot >= barrier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnockType {
    KnockIn,
    KnockOut,
}

/// Barrier monitored continuously on the calendar window `[window_start, window_end]`.
///
/// A knock-out pays `rebate` at the hitting time; knock-ins carry no rebate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowBarrierSpec {
    pub barrier: f64,
    pub side: BarrierSide,
    pub knock: KnockType,
    pub window_start: f64,
    pub window_end: f64,
    pub payoff: VanillaPayoff,
    pub rebate: f64,
}

impl WindowBarrierSpec {
    pub fn validate(&self, maturity: f64) -> Result<()> {
        self.payoff.validate()?;
        if !(self.barrier.is_finite() && self.barrier > 0.0) {
            return domain(format!("barrier must be positive, got {}", self.barrier));
        }
        if !(self.window_start >= 0.0 && self.window_start < self.window_end && self.window_end <= maturity + 1e-12) {
            return domain(format!(
                "barrier window [{}, {}] must satisfy 0 <= start < end <= maturity {maturity}",
                self.window_start, self.window_end
            ));
        }
        if !self.rebate.is_finite() {
            return domain("rebate must be finite");
        }
        if self.knock == KnockType::KnockIn && self.rebate != 0.0 {
            return domain("knock-in rebates are not supported");
        }
        Ok(())
    }

    /// The same contract with the opposite knock type.
    pub fn with_knock(&self, knock: KnockType) -> Self {
        Self { knock, ..*self }
    }
}
