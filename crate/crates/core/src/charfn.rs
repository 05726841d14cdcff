//! Characteristic functions of the log-spot: Black-Scholes (used as control
//! variate) and Heston with piecewise-constant parameters.
//!
//! The Heston exponent `C_j + D_j v + i phi x` is propagated segment by segment
//! backwards from maturity. Within a segment the Riccati equation
//!
//! ```text
//! dD/dtau = N D^2 - M_j D + L_j,      dC/dtau = r i phi - r_f + a D
//! ```
//!
//! has constant coefficients and is solved in closed form for an arbitrary
//! initial state `(C_0, D_0)`. The solution is written through the two roots of
//! `N D^2 - M D + L` and a decaying exponential `exp(-d tau)` with `Re d >= 0`,
//! which is algebraically the tan/arctan form but keeps the logarithm in `C`
//! continuous in `tau`: its winding is carried by the explicit `-d tau` term.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::market::MarketSlice;

/// Below this vol-of-vol the Riccati equation is solved as the linear ODE it degenerates to.
pub const XI_LINEAR_LIMIT: f64 = 1e-6;

/// Tolerance used when checking that a maturity lies inside a schedule.
const TIME_EPS: f64 = 1e-12;

/// Index of the quasi-probability `P_j` in `C = S P_1 - K e^{-rT} P_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prob {
    P1,
    P2,
}

impl Prob {
    pub const BOTH: [Prob; 2] = [Prob::P1, Prob::P2];

    /// `(-1)^{j-1}`: +1 for `P1`, -1 for `P2`.
    pub fn sign(self) -> f64 {
        match self {
            Prob::P1 => 1.0,
            Prob::P2 => -1.0,
        }
    }
}

/// Constant Heston coefficients on the calendar interval `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub kappa: f64,
    pub theta: f64,
    pub rho: f64,
    pub xi: f64,
}

impl HestonSegment {
    pub fn new(t_start: f64, t_end: f64, kappa: f64, theta: f64, rho: f64, xi: f64) -> Result<Self> {
        let seg = Self {
            t_start,
            t_end,
            kappa,
            theta,
            rho,
            xi,
        };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.t_start, self.t_end, self.kappa, self.theta, self.rho, self.xi]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return domain("segment parameters must be finite");
        }
        if !(self.t_start >= 0.0 && self.t_end > self.t_start) {
            return domain(format!(
                "segment interval [{}, {}] is empty or negative",
                self.t_start, self.t_end
            ));
        }
        if !(self.kappa > 0.0) {
            return domain(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.theta >= 0.0) {
            return domain(format!("theta must be non-negative, got {}", self.theta));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return domain(format!("rho must lie in [-1, 1], got {}", self.rho));
        }
        if !(self.xi > 0.0) {
            return domain(format!("xi must be positive, got {}", self.xi));
        }
        Ok(())
    }

    /// Same coefficients on a different interval.
    pub fn with_interval(&self, t_start: f64, t_end: f64) -> Self {
        Self {
            t_start,
            t_end,
            ..*self
        }
    }
}

/// Initial variance plus a contiguous schedule of segments starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseHestonParams {
    pub v0: f64,
    pub segments: Vec<HestonSegment>,
}

impl PiecewiseHestonParams {
    pub fn new(v0: f64, segments: Vec<HestonSegment>) -> Result<Self> {
        let p = Self { v0, segments };
        p.validate()?;
        Ok(p)
    }

    /// One segment on `[0, horizon]`.
    pub fn constant(v0: f64, kappa: f64, theta: f64, rho: f64, xi: f64, horizon: f64) -> Result<Self> {
        Self::new(v0, vec![HestonSegment::new(0.0, horizon, kappa, theta, rho, xi)?])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0.is_finite() && self.v0 > 0.0) {
            return domain(format!("v0 must be positive, got {}", self.v0));
        }
        let first = self
            .segments
            .first()
            .ok_or_else(|| Error::Domain("parameter schedule has no segments".into()))?;
        if first.t_start != 0.0 {
            return domain(format!("schedule must start at 0, starts at {}", first.t_start));
        }
        for seg in &self.segments {
            seg.validate()?;
        }
        for pair in self.segments.windows(2) {
            if (pair[1].t_start - pair[0].t_end).abs() > TIME_EPS {
                return domain(format!(
                    "segments not contiguous: {} ends at {}, next starts at {}",
                    pair[0].t_start, pair[0].t_end, pair[1].t_start
                ));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    /// Segment in force at calendar time `t` (right-continuous, last segment closed).
    pub fn segment_at(&self, t: f64) -> &HestonSegment {
        self.segments
            .iter()
            .find(|s| t < s.t_end)
            .unwrap_or_else(|| self.segments.last().expect("validated schedule"))
    }

    /// Interior segment boundaries strictly inside `(0, horizon)`.
    pub fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        self.segments
            .iter()
            .map(|s| s.t_start)
            .filter(|&t| t > 0.0 && t < horizon)
            .collect()
    }

    /// Boundaries strictly inside `(0, horizon)` where the coefficients actually change.
    ///
    /// Time-stepping engines force these dates, so a schedule and its
    /// identical-parameter refinement produce the same time grid.
    pub fn parameter_changes(&self, horizon: f64) -> Vec<f64> {
        self.segments
            .windows(2)
            .filter(|w| {
                let (a, b) = (&w[0], &w[1]);
                (a.kappa, a.theta, a.rho, a.xi) != (b.kappa, b.theta, b.rho, b.xi)
            })
            .map(|w| w[1].t_start)
            .filter(|&t| t > 0.0 && t < horizon)
            .collect()
    }

    pub fn check_covers(&self, maturity: f64) -> Result<()> {
        if maturity > self.horizon() + TIME_EPS {
            return domain(format!(
                "maturity {maturity} beyond parameter schedule ending at {}",
                self.horizon()
            ));
        }
        Ok(())
    }

    /// Splits segment `index` at calendar time `t` into two identical-parameter pieces.
    pub fn split_segment(&self, index: usize, t: f64) -> Result<Self> {
        let seg = self
            .segments
            .get(index)
            .ok_or_else(|| Error::Domain(format!("no segment {index}")))?;
        if !(t > seg.t_start && t < seg.t_end) {
            return domain(format!("split point {t} not inside segment {index}"));
        }
        let mut segments = self.segments.clone();
        segments.splice(
            index..=index,
            [seg.with_interval(seg.t_start, t), seg.with_interval(t, seg.t_end)],
        );
        Self::new(self.v0, segments)
    }
}

/// The pair `(C_j, D_j)` carried across segments.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CfState {
    pub c: Complex64,
    pub d: Complex64,
}

impl CfState {
    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.d.is_finite()
    }
}

/// Riccati coefficients of one segment at a given `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiCoefficients {
    pub l: Complex64,
    pub m: Complex64,
    pub n: f64,
    /// `a = kappa theta`
    pub a: f64,
    /// `b_1 = kappa - xi rho`, `b_2 = kappa`
    pub b: f64,
}

impl RiccatiCoefficients {
    pub fn new(seg: &HestonSegment, phi: f64, j: Prob) -> Self {
        let b = match j {
            Prob::P1 => seg.kappa - seg.xi * seg.rho,
            Prob::P2 => seg.kappa,
        };
        Self {
            l: Complex64::new(-0.5 * phi * phi, 0.5 * j.sign() * phi),
            m: Complex64::new(b, -seg.xi * seg.rho * phi),
            n: 0.5 * seg.xi * seg.xi,
            a: seg.kappa * seg.theta,
            b,
        }
    }

    /// `A_j = sqrt(4 L_j N - M_j^2)` on the principal branch.
    pub fn a_j(&self) -> Complex64 {
        (4.0 * self.l * self.n - self.m * self.m).sqrt()
    }
}

/// Black-Scholes characteristic function `exp(D_j(tau, phi) + i phi ln S)`.
pub fn bs_char_fn(slice: &MarketSlice, sigma: f64, tau: f64, phi: f64, j: Prob) -> Complex64 {
    let var = sigma * sigma;
    let d = Complex64::new(-0.5 * var * phi * phi - slice.rate_for, (slice.carry() + 0.5 * j.sign() * var) * phi) * tau;
    (d + Complex64::new(0.0, phi * slice.spot.ln())).exp()
}

/// `ln(1 + z)` accurate for small `|z|`, principal branch.
fn ln_1p(z: Complex64) -> Complex64 {
    let re = 0.5 * (2.0 * z.re + z.re * z.re + z.im * z.im).ln_1p();
    Complex64::new(re, z.im.atan2(1.0 + z.re))
}

/// Continuous `ln((P + S e^{-d t}) / (P + S))` along `t` in `[0, dt]`, given `Re d >= 0`.
///
/// While `|S e^{-d t}| <= |P|` the log is expanded around `P`, afterwards around
/// `S e^{-d t}`, whose own log `-d t` has no branch cut. Both expansions use
/// `ln(1 + u)` with `|u| <= 1`, which stays on the principal branch.
fn continuous_log_ratio(p: Complex64, s: Complex64, d: Complex64, dt: f64) -> Complex64 {
    let e = (-d * dt).exp();
    let abs_p = p.norm();
    let abs_s0 = s.norm();
    let abs_s1 = abs_s0 * (-d.re * dt).exp();
    if abs_s0 <= abs_p {
        ln_1p(s * e / p) - ln_1p(s / p)
    } else if abs_s1 >= abs_p {
        -d * dt + ln_1p(p / (s * e)) - ln_1p(p / s)
    } else {
        // |S e^{-d t}| crosses |P| at t_star
        let t_star = (abs_s0 / abs_p).ln() / d.re;
        let e_star = (-d * t_star).exp();
        let head = -d * t_star + ln_1p(p / (s * e_star)) - ln_1p(p / s);
        let tail = ln_1p(s * e / p) - ln_1p(s * e_star / p);
        head + tail
    }
}

/// Advances `(C_j, D_j)` from `tau0` to `tau` with constant segment coefficients.
pub fn heston_cd_step(
    seg: &HestonSegment,
    tau0: f64,
    tau: f64,
    phi: f64,
    j: Prob,
    state: CfState,
    slice: &MarketSlice,
) -> Result<CfState> {
    let dt = tau - tau0;
    if !(dt >= 0.0) {
        return domain(format!("step from {tau0} to {tau} runs backwards"));
    }
    if dt == 0.0 {
        return Ok(state);
    }
    let co = RiccatiCoefficients::new(seg, phi, j);
    let drift = Complex64::new(-slice.rate_for, slice.carry() * phi);
    let d0 = state.d;

    let (d_new, int_d) = if seg.xi < XI_LINEAR_LIMIT {
        // dD/dtau = L - M D
        let q = co.l / co.m;
        let e = (-co.m * dt).exp();
        let one_minus_e_over_m = if (co.m * dt).norm() < 1e-8 {
            Complex64::new(dt, 0.0) * (1.0 - 0.5 * co.m * dt)
        } else {
            (1.0 - e) / co.m
        };
        (q + (d0 - q) * e, q * dt + (d0 - q) * one_minus_e_over_m)
    } else {
        let disc = (co.m * co.m - 4.0 * co.l * co.n).sqrt();
        let m_plus_d = co.m + disc;
        if m_plus_d.norm() == 0.0 {
            return Err(Error::Numerical(format!(
                "degenerate Riccati roots at phi={phi}"
            )));
        }
        // small root alpha = 2L/(M+d), inverse large root gamma = 2N/(M+d)
        let alpha = 2.0 * co.l / m_plus_d;
        let gamma = 2.0 * co.n / m_plus_d;
        let s = d0 - alpha;
        if disc.norm() <= 1e-12 * (1.0 + co.m.norm()) {
            // double root: D - alpha = s / (1 - N s t)
            let w = 1.0 - co.n * s * dt;
            (alpha + s / w, alpha * dt - w.ln() / co.n)
        } else {
            let p = 1.0 - d0 * gamma;
            let sg = s * gamma;
            let e = (-disc * dt).exp();
            let d_new = alpha + (1.0 - alpha * gamma) * s * e / (p + sg * e);
            let log_ratio = continuous_log_ratio(p, sg, disc, dt);
            (d_new, alpha * dt - log_ratio / co.n)
        }
    };

    let out = CfState {
        c: state.c + drift * dt + co.a * int_d,
        d: d_new,
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Numerical(format!(
            "non-finite characteristic exponent at phi={phi}, tau={tau}"
        )))
    }
}

/// `(C_j, D_j)` at `tau = T`, chaining segments from maturity back to `t = 0`.
pub fn heston_cf_state(params: &PiecewiseHestonParams, slice: &MarketSlice, phi: f64, j: Prob) -> Result<CfState> {
    let maturity = slice.maturity;
    params.check_covers(maturity)?;
    let mut state = CfState::default();
    for seg in params.segments.iter().rev() {
        if seg.t_start >= maturity {
            continue;
        }
        let tau0 = maturity - seg.t_end.min(maturity);
        let tau1 = maturity - seg.t_start;
        state = heston_cd_step(seg, tau0, tau1, phi, j, state, slice)?;
    }
    Ok(state)
}

/// Heston characteristic function `exp(C_j + D_j v0 + i phi ln S)` at the slice maturity.
pub fn heston_char_fn(params: &PiecewiseHestonParams, slice: &MarketSlice, phi: f64, j: Prob) -> Result<Complex64> {
    let state = heston_cf_state(params, slice, phi, j)?;
    Ok((state.c + state.d * params.v0 + Complex64::new(0.0, phi * slice.spot.ln())).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> MarketSlice {
        MarketSlice::new(1.0, 0.0, 0.0, 1.0).unwrap()
    }

    fn eurusd_2m() -> PiecewiseHestonParams {
        PiecewiseHestonParams::constant(0.00675, 1.04, 0.0199, -0.276, 0.313, 2.0 / 12.0).unwrap()
    }

    #[test]
    fn bs_cf_special_values() {
        let s = flat();
        assert_eq!(bs_char_fn(&s, 0.3, 1.0, 0.0, Prob::P2), Complex64::new(1.0, 0.0));
        let s = MarketSlice::new(1.0, 0.0, 0.03, 1.0).unwrap();
        let f = bs_char_fn(&s, 0.3, 1.0, 0.0, Prob::P1);
        assert!((f - Complex64::new((-0.03f64).exp(), 0.0)).norm() < 1e-15);
        let s = MarketSlice::new(1.3, 0.02, 0.01, 1.0).unwrap();
        let f = bs_char_fn(&s, 0.3, 0.0, 2.5, Prob::P1);
        assert!((f - Complex64::new(0.0, 2.5 * 1.3f64.ln()).exp()).norm() < 1e-15);
    }

    #[test]
    fn step_with_zero_elapsed_time_is_identity() {
        let seg = eurusd_2m().segments[0];
        let state = CfState {
            c: Complex64::new(-0.1, 0.3),
            d: Complex64::new(-0.5, 0.2),
        };
        let out = heston_cd_step(&seg, 0.4, 0.4, 3.0, Prob::P1, state, &flat()).unwrap();
        assert_eq!(out, state);
    }

    #[test]
    fn step_has_flow_property() {
        let s = MarketSlice::new(1.2, 0.01, 0.02, 1.0).unwrap();
        let seg = HestonSegment::new(0.0, 2.0, 2.0, 0.04, -0.7, 0.8).unwrap();
        for j in Prob::BOTH {
            for phi in [0.3, 1.0, 7.0, 40.0] {
                let start = CfState {
                    c: Complex64::new(-0.01, 0.2),
                    d: Complex64::new(-0.3, -0.1),
                };
                let full = heston_cd_step(&seg, 0.1, 1.7, phi, j, start, &s).unwrap();
                let half = heston_cd_step(&seg, 0.1, 0.9, phi, j, start, &s).unwrap();
                let two = heston_cd_step(&seg, 0.9, 1.7, phi, j, half, &s).unwrap();
                assert!((full.c - two.c).norm() < 1e-12 * (1.0 + full.c.norm()), "phi={phi}");
                assert!((full.d - two.d).norm() < 1e-12 * (1.0 + full.d.norm()), "phi={phi}");
            }
        }
    }

    #[test]
    fn zero_frequency_second_measure_is_trivial() {
        let seg = eurusd_2m().segments[0];
        let out = heston_cd_step(&seg, 0.0, 1.0, 0.0, Prob::P2, CfState::default(), &flat()).unwrap();
        assert!(out.c.norm() < 1e-15 && out.d.norm() < 1e-15, "{out:?}");
    }

    #[test]
    fn unit_cf_at_zero_frequency() {
        let p = eurusd_2m();
        let s = MarketSlice::new(1.0, 0.0, 0.0, 2.0 / 12.0).unwrap();
        for j in Prob::BOTH {
            let f = heston_char_fn(&p, &s, 0.0, j).unwrap();
            assert!((f - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn maturity_beyond_schedule_is_rejected() {
        let s = MarketSlice::new(1.0, 0.0, 0.0, 0.5).unwrap();
        assert!(matches!(heston_char_fn(&eurusd_2m(), &s, 1.0, Prob::P1), Err(Error::Domain(_))));
    }

    #[test]
    fn identical_segments_chain_to_single_segment() {
        let single = PiecewiseHestonParams::constant(0.01, 1.5, 0.02, -0.4, 0.5, 1.0).unwrap();
        let split = single.split_segment(0, 0.3).unwrap().split_segment(1, 0.75).unwrap();
        let s = MarketSlice::new(1.1, 0.01, 0.0, 1.0).unwrap();
        for j in Prob::BOTH {
            for phi in [0.5, 2.0, 15.0, 80.0] {
                let a = heston_char_fn(&single, &s, phi, j).unwrap();
                let b = heston_char_fn(&split, &s, phi, j).unwrap();
                assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300), "phi={phi}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let p = PiecewiseHestonParams::new(
            0.006,
            vec![
                HestonSegment::new(0.0, 0.25, 1.4, 0.01, -0.3, 0.28).unwrap(),
                HestonSegment::new(0.25, 1.0, 3.0, 0.016, -0.6, 0.33).unwrap(),
            ],
        )
        .unwrap();
        let s = MarketSlice::new(1.33, 0.002, 0.001, 1.0).unwrap();
        for j in Prob::BOTH {
            for phi in [0.1, 1.0, 9.0, 60.0] {
                let f = heston_char_fn(&p, &s, phi, j).unwrap();
                let g = heston_char_fn(&p, &s, -phi, j).unwrap();
                assert!((f - g.conj()).norm() <= 1e-13 * f.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn vanishing_vol_of_vol_matches_black_scholes() {
        let s = MarketSlice::new(1.0, 0.01, 0.005, 1.5).unwrap();
        for xi in [1e-8, 5e-6] {
            let p = PiecewiseHestonParams::constant(0.02, 1.3, 0.02, 0.0, xi, 1.5).unwrap();
            for j in Prob::BOTH {
                for phi in [0.5, 3.0, 20.0] {
                    let h = heston_char_fn(&p, &s, phi, j).unwrap();
                    let b = bs_char_fn(&s, 0.02f64.sqrt(), 1.5, phi, j);
                    assert!((h - b).norm() < 1e-5 * b.norm().max(1e-12), "xi={xi} phi={phi}");
                }
            }
        }
    }

    #[test]
    fn long_maturity_log_stays_continuous() {
        // Strong vol-of-vol over a long horizon: the principal-branch log in the
        // printed tan/arctan form jumps, the continuous one must not.
        let p = PiecewiseHestonParams::constant(0.04, 0.5, 0.06, -0.9, 1.5, 10.0).unwrap();
        let s = MarketSlice::new(1.0, 0.0, 0.0, 10.0).unwrap();
        let mut prev = heston_cf_state(&p, &s, 0.5, Prob::P2).unwrap().c;
        let mut phi = 0.5;
        while phi < 30.0 {
            phi += 0.01;
            let c = heston_cf_state(&p, &s, phi, Prob::P2).unwrap().c;
            assert!((c.im - prev.im).abs() < 0.5, "jump at phi={phi}: {} -> {}", prev.im, c.im);
            prev = c;
        }
    }
}
