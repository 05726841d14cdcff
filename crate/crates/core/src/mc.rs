//! Monte Carlo oracle for the piecewise Heston SDE.
//!
//! Euler full truncation: the variance may go negative between steps but only
//! its positive part enters drift and diffusion. The log-spot is stepped with
//! the same positive part, so `E[S_T]` is the forward exactly in expectation.
//! Paths are generated in fixed-size blocks, each on its own ChaCha stream,
//! which keeps estimates bit-identical regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfn::PiecewiseHestonParams;
use crate::error::{domain, Result};
use crate::instrument::{BarrierSide, KnockType, VanillaPayoff, WindowBarrierSpec};
use crate::market::MarketSlice;

const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McScheme {
    #[default]
    EulerFullTruncation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub scheme: McScheme,
    /// Brownian-bridge crossing correction between monitoring dates.
    pub brownian_bridge: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            steps_per_year: 365,
            seed: 42,
            scheme: McScheme::EulerFullTruncation,
            brownian_bridge: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps_per_year == 0 {
            return domain("Monte Carlo needs at least one path and one step per year");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McPayoff {
    Vanilla(VanillaPayoff),
    WindowBarrier(WindowBarrierSpec),
    /// Pays `S_T`; its value is `S e^{-r_f T}`.
    Asset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub price: f64,
    pub std_error: f64,
    pub paths: usize,
}

#[derive(Debug, Clone, Copy)]
struct Step {
    dt: f64,
    t_end: f64,
    kappa: f64,
    theta: f64,
    rho: f64,
    xi: f64,
    /// Barrier observed at the end of the step.
    monitor: bool,
    /// Whole step inside the window (bridge correction applies).
    inside: bool,
}

/// Simulation dates: uniform at `steps_per_year` with forced breakpoints.
pub(crate) fn time_grid(forced: &[f64], maturity: f64, steps_per_year: usize) -> Vec<f64> {
    let mut knots: Vec<f64> = forced
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < maturity)
        .chain([0.0, maturity])
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut times = vec![0.0];
    for w in knots.windows(2) {
        let n = ((w[1] - w[0]) * steps_per_year as f64).ceil().max(1.0) as usize;
        for i in 1..=n {
            times.push(if i == n { w[1] } else { w[0] + (w[1] - w[0]) * i as f64 / n as f64 });
        }
    }
    times
}

fn build_steps(params: &PiecewiseHestonParams, maturity: f64, window: Option<(f64, f64)>, steps_per_year: usize) -> Vec<Step> {
    let mut forced = params.parameter_changes(maturity);
    if let Some((a, b)) = window {
        forced.extend([a, b]);
    }
    let times = time_grid(&forced, maturity, steps_per_year);
    let in_window = |t: f64| window.is_some_and(|(a, b)| t >= a - 1e-12 && t <= b + 1e-12);
    times
        .windows(2)
        .map(|w| {
            let seg = params.segment_at(0.5 * (w[0] + w[1]));
            Step {
                dt: w[1] - w[0],
                t_end: w[1],
                kappa: seg.kappa,
                theta: seg.theta,
                rho: seg.rho,
                xi: seg.xi,
                monitor: in_window(w[1]),
                inside: in_window(w[0]) && in_window(w[1]),
            }
        })
        .collect()
}

struct PathOutcome {
    spot: f64,
    /// Probability of never touching the barrier during the window.
    survival: f64,
    /// Discounted expected rebate from the hitting step.
    rebate_pv: f64,
}

#[allow(clippy::too_many_arguments)]
fn simulate_path(
    rng: &mut ChaCha8Rng,
    steps: &[Step],
    x0: f64,
    v0: f64,
    carry: f64,
    rate_dom: f64,
    barrier: Option<(f64, BarrierSide, f64)>,
    bridge: bool,
) -> PathOutcome {
    let mut x = x0;
    let mut v = v0;
    let mut survival = 1.0;
    let mut rebate_pv = 0.0;
    for st in steps {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let vp = v.max(0.0);
        let sd = (vp * st.dt).sqrt();
        let x_prev = x;
        x += (carry - 0.5 * vp) * st.dt + sd * z1;
        v += st.kappa * (st.theta - vp) * st.dt + st.xi * sd * (st.rho * z1 + (1.0 - st.rho * st.rho).max(0.0).sqrt() * z2);

        if let Some((log_b, side, rebate)) = barrier {
            if survival > 0.0 && st.monitor {
                let breached = match side {
                    BarrierSide::Lower => x <= log_b,
                    BarrierSide::Upper => x >= log_b,
                };
                let hit = if breached {
                    1.0
                } else if bridge && st.inside && vp > 0.0 {
                    (-2.0 * (x_prev - log_b) * (x - log_b) / (vp * st.dt)).exp()
                } else {
                    0.0
                };
                if hit > 0.0 {
                    rebate_pv += survival * hit * rebate * (-rate_dom * st.t_end).exp();
                    survival *= 1.0 - hit;
                }
            }
        }
    }
    PathOutcome {
        spot: x.exp(),
        survival,
        rebate_pv,
    }
}

/// Prices a payoff by simulation; returns the discounted mean and its standard error.
pub fn mc_price(params: &PiecewiseHestonParams, slice: &MarketSlice, payoff: &McPayoff, config: &McConfig) -> Result<McEstimate> {
    slice.validate()?;
    params.validate()?;
    params.check_covers(slice.maturity)?;
    config.validate()?;
    let maturity = slice.maturity;
    let (window, barrier, knock) = match payoff {
        McPayoff::WindowBarrier(spec) => {
            spec.validate(maturity)?;
            (
                Some((spec.window_start, spec.window_end)),
                Some((spec.barrier.ln(), spec.side, spec.rebate)),
                Some(spec.knock),
            )
        }
        McPayoff::Vanilla(p) => {
            p.validate()?;
            (None, None, None)
        }
        McPayoff::Asset => (None, None, None),
    };
    let steps = build_steps(params, maturity, window, config.steps_per_year);
    let x0 = slice.spot.ln();
    let df = slice.df_dom();
    // knocked at inception when the window opens at 0 with the spot beyond the barrier
    let knocked_at_start = match payoff {
        McPayoff::WindowBarrier(spec) => spec.window_start == 0.0 && spec.side.breached(spec.barrier, slice.spot),
        _ => false,
    };

    let value_of = |out: &PathOutcome| -> f64 {
        let terminal = match payoff {
            McPayoff::Vanilla(p) => p.value(out.spot),
            McPayoff::WindowBarrier(spec) => spec.payoff.value(out.spot),
            McPayoff::Asset => out.spot,
        };
        match (knock, knocked_at_start) {
            (None, _) => df * terminal,
            (Some(KnockType::KnockOut), true) => match payoff {
                McPayoff::WindowBarrier(spec) => spec.rebate,
                _ => unreachable!(),
            },
            (Some(KnockType::KnockIn), true) => df * terminal,
            (Some(KnockType::KnockOut), false) => df * terminal * out.survival + out.rebate_pv,
            (Some(KnockType::KnockIn), false) => df * terminal * (1.0 - out.survival),
        }
    };

    let blocks = config.paths.div_ceil(BLOCK);
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            let n = BLOCK.min(config.paths - b * BLOCK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let out = simulate_path(&mut rng, &steps, x0, params.v0, slice.carry(), slice.rate_dom, barrier, config.brownian_bridge);
                let y = value_of(&out);
                s += y;
                s2 += y * y;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let n = config.paths as f64;
    let mean = s / n;
    let var = if config.paths > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        price: mean,
        std_error: (var / n).sqrt(),
        paths: config.paths,
    })
}
