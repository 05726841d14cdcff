//! Adaptive 7-15 point Gauss-Kronrod integration on `[0, inf)`.
//!
//! The finite range `[0, phi_max]` is refined by bisecting the panel with the
//! largest Kronrod error estimate; the range is then extended by doubling
//! `phi_max` until the newly added tail contributes less than the tolerance.
//! Nodes never touch panel end points, so the integrand is never evaluated at 0.

// tabulated nodes and weights are kept at their published precision
#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Kronrod abscissae on `[-1, 1]`, non-negative half, descending.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the odd-indexed Kronrod nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Maximum number of times the truncation point is doubled.
const MAX_DOUBLINGS: usize = 40;
/// Hard cap on the number of live panels.
const MAX_PANELS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Initial truncation point of the semi-infinite range.
    pub phi_max: f64,
    /// Maximum bisection depth of any panel.
    pub max_bisections: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            phi_max: 200.0,
            max_bisections: 50,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return domain("quadrature tolerances must be positive");
        }
        if !(self.phi_max > 0.0 && self.phi_max.is_finite()) {
            return domain("quadrature truncation point must be positive");
        }
        Ok(())
    }

    fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Integral estimate with its accumulated error and the number of integrand calls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// One 15-point Kronrod panel with its embedded 7-point Gauss estimate.
#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

/// Applies the 7-15 rule on `[a, b]`; returns `(kronrod, |kronrod - gauss|)`.
pub fn gauss_kronrod_15<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(centre - dx)? + f(centre + dx)?;
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

struct Integrator<'a, F> {
    f: F,
    config: &'a QuadratureConfig,
    evaluations: usize,
}

impl<F> Integrator<'_, F>
where
    F: FnMut(f64) -> Result<f64>,
{
    fn panel(&mut self, a: f64, b: f64, depth: u32) -> Result<Panel> {
        let (value, error) = gauss_kronrod_15(&mut self.f, a, b)?;
        self.evaluations += 15;
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
        }
        Ok(Panel { a, b, value, error, depth })
    }

    /// Bisects the worst panels until the total error meets `tol(total value + offset)`.
    fn refine(&mut self, panels: &mut Vec<Panel>, offset: f64) -> Result<()> {
        loop {
            let (value, error) = totals(panels);
            if error <= self.config.tolerance(value + offset) {
                return Ok(());
            }
            let worst = panels
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
                .map(|(i, _)| i)
                .expect("non-empty panel list");
            let p = panels[worst];
            if p.depth >= self.config.max_bisections || panels.len() >= MAX_PANELS {
                return Err(Error::AccuracyNotReached {
                    estimate: value + offset,
                    error,
                    evaluations: self.evaluations,
                });
            }
            let mid = 0.5 * (p.a + p.b);
            panels[worst] = self.panel(p.a, mid, p.depth + 1)?;
            let right = self.panel(mid, p.b, p.depth + 1)?;
            panels.push(right);
        }
    }
}

/// Sums in order of panel position so the result does not depend on refinement history.
fn totals(panels: &[Panel]) -> (f64, f64) {
    let mut sorted: Vec<&Panel> = panels.iter().collect();
    sorted.sort_by(|x, y| x.a.total_cmp(&y.a));
    sorted
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
}

/// Integrates `f` over `[a, b]` adaptively.
pub fn integrate<F>(f: F, a: f64, b: f64, config: &QuadratureConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    config.validate()?;
    let mut it = Integrator {
        f,
        config,
        evaluations: 0,
    };
    let mut panels = vec![it.panel(a, b, 0)?];
    it.refine(&mut panels, 0.0)?;
    let (value, error) = totals(&panels);
    Ok(QuadResult {
        value,
        error,
        evaluations: it.evaluations,
    })
}

/// Integrates `f` over `(0, inf)` with truncation-point doubling.
pub fn integrate_semi_infinite<F>(f: F, config: &QuadratureConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    config.validate()?;
    let mut it = Integrator {
        f,
        config,
        evaluations: 0,
    };
    let mut hi = config.phi_max;
    let mut panels = vec![it.panel(0.0, hi, 0)?];
    it.refine(&mut panels, 0.0)?;

    for _ in 0..MAX_DOUBLINGS {
        let (body, _) = totals(&panels);
        let mut tail = vec![it.panel(hi, 2.0 * hi, 0)?];
        it.refine(&mut tail, body)?;
        let (tail_value, tail_error) = totals(&tail);
        panels.extend(tail);
        hi *= 2.0;
        if tail_value.abs() + tail_error <= config.tolerance(body + tail_value) {
            let (value, error) = totals(&panels);
            return Ok(QuadResult {
                value,
                error,
                evaluations: it.evaluations,
            });
        }
    }
    let (value, error) = totals(&panels);
    Err(Error::AccuracyNotReached {
        estimate: value,
        error,
        evaluations: it.evaluations,
    })
}
