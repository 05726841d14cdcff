//! Finite-difference solver for the two-factor pricing PDE in `(ln S, v)`.
//!
//! Backward in time-to-maturity `tau`, the value `u(x, v, tau)` solves
//!
//! ```text
//! u_tau = v/2 u_xx + rho xi v u_xv + xi^2 v/2 u_vv
//!       + (r_d - r_f - v/2) u_x + kappa (theta - v) u_v - r_d u
//! ```
//!
//! with coefficients switching at the schedule boundaries. The scheme is
//! Douglas ADI: explicit predictor with the full operator, then one implicit
//! correction per axis; the mixed term stays explicit. Rannacher-style
//! implicit half steps follow the payoff and every barrier activation.

use serde::{Deserialize, Serialize};

use crate::charfn::{HestonSegment, PiecewiseHestonParams};
use crate::error::{domain, Result};
use crate::instrument::{BarrierSide, KnockType, VanillaPayoff, WindowBarrierSpec};
use crate::market::MarketSlice;
use crate::mc::time_grid;

const NODE_EPS: f64 = 1e-12;

/// Settings used to build an [`FdGrid`] around a contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdConfig {
    pub x_nodes: usize,
    pub v_nodes: usize,
    pub steps_per_year: usize,
    /// Implicit weight of the Douglas corrector.
    pub theta: f64,
    /// Fully implicit half steps taken after the payoff and after barrier activation.
    pub damping_steps: usize,
    /// Half-width of the log-spot domain in units of `sqrt(v_bar T)`.
    pub x_stddevs: f64,
    /// Width of the node clustering around strike, spot and barrier, as a fraction of the domain.
    pub x_concentration: f64,
    /// Upper variance boundary as a multiple of `max(v0, theta)`.
    pub v_max_multiple: f64,
    /// Width of the clustering near `v = 0` and `v0`, as a fraction of `v_max`.
    pub v_concentration: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            x_nodes: 200,
            v_nodes: 100,
            steps_per_year: 730,
            theta: 0.5,
            damping_steps: 4,
            x_stddevs: 6.0,
            x_concentration: 0.05,
            v_max_multiple: 15.0,
            v_concentration: 0.02,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x_nodes < 8 || self.v_nodes < 6 {
            return domain("FD grid needs at least 8 x-nodes and 6 v-nodes");
        }
        if self.steps_per_year == 0 {
            return domain("FD needs at least one time step per year");
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return domain(format!("ADI weight must lie in (0, 1], got {}", self.theta));
        }
        for (name, val) in [
            ("x_stddevs", self.x_stddevs),
            ("x_concentration", self.x_concentration),
            ("v_max_multiple", self.v_max_multiple),
            ("v_concentration", self.v_concentration),
        ] {
            if !(val.is_finite() && val > 0.0) {
                return domain(format!("{name} must be positive, got {val}"));
            }
        }
        Ok(())
    }

    /// Grid clustered around strike, spot and (optionally) barrier, with the
    /// barrier, spot and `v0` placed exactly on nodes.
    pub fn grid(&self, params: &PiecewiseHestonParams, slice: &MarketSlice, strike: f64, barrier: Option<f64>) -> Result<FdGrid> {
        self.validate()?;
        slice.validate()?;
        params.validate()?;
        let t = slice.maturity;
        let theta_max = params
            .segments
            .iter()
            .filter(|s| s.t_start < t)
            .map(|s| s.theta)
            .fold(0.0, f64::max);
        let v_bar = params.v0.max(theta_max);
        let half_width = self.x_stddevs * (v_bar * t).sqrt();
        let x_spot = slice.spot.ln();
        let mut centers = vec![strike.ln(), x_spot];
        centers.extend(barrier.map(f64::ln));
        let lo = centers.iter().copied().fold(f64::INFINITY, f64::min) - half_width;
        let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max) + half_width;
        let mut x = clustered_nodes(lo, hi, self.x_nodes, &centers, self.x_concentration * (hi - lo));
        let mut pinned = Vec::new();
        if let Some(b) = barrier {
            pinned.push(snap(&mut x, b.ln(), &pinned));
        }
        snap(&mut x, x_spot, &pinned);

        let v_max = self.v_max_multiple * v_bar;
        let mut v = clustered_nodes(0.0, v_max, self.v_nodes, &[0.0, params.v0], self.v_concentration * v_max);
        snap(&mut v, params.v0, &[]);
        FdGrid::new(x, v, self.steps_per_year)
            .map(|g| FdGrid {
                theta: self.theta,
                damping_steps: self.damping_steps,
                ..g
            })
    }
}

/// Tensor grid in `(ln S, v)` plus time-stepping settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdGrid {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub steps_per_year: usize,
    pub theta: f64,
    pub damping_steps: usize,
    /// Additional calendar dates forced into the time grid.
    pub extra_times: Vec<f64>,
}

impl FdGrid {
    pub fn new(x: Vec<f64>, v: Vec<f64>, steps_per_year: usize) -> Result<Self> {
        let g = Self {
            x,
            v,
            steps_per_year,
            theta: 0.5,
            damping_steps: 4,
            extra_times: Vec::new(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() < 5 || self.v.len() < 4 {
            return domain("FD grid needs at least 5 x-nodes and 4 v-nodes");
        }
        let increasing = |a: &[f64]| a.windows(2).all(|w| w[1] > w[0]) && a.iter().all(|z| z.is_finite());
        if !increasing(&self.x) || !increasing(&self.v) {
            return domain("FD grid axes must be finite and strictly increasing");
        }
        if self.v[0] != 0.0 {
            return domain(format!("variance axis must start at 0, starts at {}", self.v[0]));
        }
        if self.steps_per_year == 0 {
            return domain("FD needs at least one time step per year");
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return domain(format!("ADI weight must lie in (0, 1], got {}", self.theta));
        }
        Ok(())
    }

    pub fn with_extra_times(mut self, times: &[f64]) -> Self {
        self.extra_times.extend_from_slice(times);
        self
    }

    /// Doubles resolution in both axes and in time by inserting midpoints.
    pub fn refined(&self) -> Self {
        let mid = |a: &[f64]| {
            let mut out = Vec::with_capacity(2 * a.len() - 1);
            for w in a.windows(2) {
                out.push(w[0]);
                out.push(0.5 * (w[0] + w[1]));
            }
            out.push(*a.last().expect("non-empty axis"));
            out
        };
        Self {
            x: mid(&self.x),
            v: mid(&self.v),
            steps_per_year: 2 * self.steps_per_year,
            ..self.clone()
        }
    }

    fn index(&self, i: usize, j: usize) -> usize {
        j * self.x.len() + i
    }

    /// Bilinear interpolation of nodal values at `(x, v)`.
    pub fn interpolate(&self, values: &[f64], x: f64, v: f64) -> Result<f64> {
        let (nx, nv) = (self.x.len(), self.v.len());
        if !(x >= self.x[0] && x <= self.x[nx - 1] && v >= 0.0 && v <= self.v[nv - 1]) {
            return domain(format!("point (x={x}, v={v}) outside FD grid"));
        }
        let cell = |axis: &[f64], z: f64| {
            let k = axis.partition_point(|&a| a <= z).clamp(1, axis.len() - 1);
            let w = (z - axis[k - 1]) / (axis[k] - axis[k - 1]);
            (k - 1, w)
        };
        let (i, wx) = cell(&self.x, x);
        let (j, wv) = cell(&self.v, v);
        let f = |a: usize, b: usize| values[self.index(a, b)];
        Ok((1.0 - wv) * ((1.0 - wx) * f(i, j) + wx * f(i + 1, j)) + wv * ((1.0 - wx) * f(i, j + 1) + wx * f(i + 1, j + 1)))
    }
}

/// Nodes on `[lo, hi]` with density proportional to `sum_c 1/sqrt(lambda^2 + (z - c)^2)`.
fn clustered_nodes(lo: f64, hi: f64, n: usize, centers: &[f64], lambda: f64) -> Vec<f64> {
    let g = |z: f64| -> f64 { centers.iter().map(|&c| ((z - c) / lambda).asinh()).sum() };
    let (g_lo, g_hi) = (g(lo), g(hi));
    let mut nodes = Vec::with_capacity(n);
    nodes.push(lo);
    for k in 1..n - 1 {
        let target = g_lo + (g_hi - g_lo) * k as f64 / (n - 1) as f64;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(m) < target {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-15 * (1.0 + m.abs()) {
                break;
            }
        }
        nodes.push(0.5 * (a + b));
    }
    nodes.push(hi);
    nodes
}

/// Moves the interior node nearest to `target` onto it, skipping `pinned` indices.
fn snap(axis: &mut [f64], target: f64, pinned: &[usize]) -> usize {
    let n = axis.len();
    let k = (1..n - 1)
        .filter(|k| !pinned.contains(k))
        .min_by(|&a, &b| (axis[a] - target).abs().total_cmp(&(axis[b] - target).abs()))
        .expect("grid has interior nodes");
    if axis[k - 1] < target && target < axis[k + 1] {
        axis[k] = target;
    }
    k
}

/// Three-point stencil weights for `u[k-1], u[k], u[k+1]`.
#[derive(Debug, Clone, Copy, Default)]
struct Stencil {
    lo: f64,
    mid: f64,
    hi: f64,
}

impl Stencil {
    fn scaled(self, a: f64) -> Self {
        Self {
            lo: a * self.lo,
            mid: a * self.mid,
            hi: a * self.hi,
        }
    }

    fn plus(self, o: Self) -> Self {
        Self {
            lo: self.lo + o.lo,
            mid: self.mid + o.mid,
            hi: self.hi + o.hi,
        }
    }
}

fn central_first(h_m: f64, h_p: f64) -> Stencil {
    Stencil {
        lo: -h_p / (h_m * (h_m + h_p)),
        mid: (h_p - h_m) / (h_m * h_p),
        hi: h_m / (h_p * (h_m + h_p)),
    }
}

fn central_second(h_m: f64, h_p: f64) -> Stencil {
    Stencil {
        lo: 2.0 / (h_m * (h_m + h_p)),
        mid: -2.0 / (h_m * h_p),
        hi: 2.0 / (h_p * (h_m + h_p)),
    }
}

/// Spatial operators on one grid; the v-operators depend on the active segment.
struct Operators<'a> {
    grid: &'a FdGrid,
    nx: usize,
    nv: usize,
    rate_dom: f64,
    carry: f64,
    dx: Vec<Stencil>,
    dxx: Vec<Stencil>,
    dv_central: Vec<Stencil>,
    a2: Vec<Stencil>,
    rho_xi: f64,
}

impl<'a> Operators<'a> {
    fn new(grid: &'a FdGrid, slice: &MarketSlice) -> Self {
        let (nx, nv) = (grid.x.len(), grid.v.len());
        let x = &grid.x;
        let mut dx = vec![Stencil::default(); nx];
        let mut dxx = vec![Stencil::default(); nx];
        for i in 1..nx - 1 {
            dx[i] = central_first(x[i] - x[i - 1], x[i + 1] - x[i]);
            dxx[i] = central_second(x[i] - x[i - 1], x[i + 1] - x[i]);
        }
        // linear in spot at the far ends: u_xx = u_x, one-sided
        let h0 = x[1] - x[0];
        dx[0] = Stencil { lo: 0.0, mid: -1.0 / h0, hi: 1.0 / h0 };
        dxx[0] = dx[0];
        let hn = x[nx - 1] - x[nx - 2];
        dx[nx - 1] = Stencil { lo: -1.0 / hn, mid: 1.0 / hn, hi: 0.0 };
        dxx[nx - 1] = dx[nx - 1];
        let v = &grid.v;
        let mut dv_central = vec![Stencil::default(); nv];
        for j in 1..nv - 1 {
            dv_central[j] = central_first(v[j] - v[j - 1], v[j + 1] - v[j]);
        }
        Self {
            grid,
            nx,
            nv,
            rate_dom: slice.rate_dom,
            carry: slice.carry(),
            dx,
            dxx,
            dv_central,
            a2: vec![Stencil::default(); nv],
            rho_xi: 0.0,
        }
    }

    fn set_segment(&mut self, seg: &HestonSegment) {
        let v = &self.grid.v;
        let nv = self.nv;
        let half_r = 0.5 * self.rate_dom;
        for j in 0..nv {
            let drift = seg.kappa * (seg.theta - v[j]);
            let diff = 0.5 * seg.xi * seg.xi * v[j];
            let st = if j == 0 {
                // degenerate boundary: only the inflowing drift survives
                let h = v[1] - v[0];
                Stencil { lo: 0.0, mid: -drift / h, hi: drift / h }
            } else if j == nv - 1 {
                // zero slope through a mirrored ghost node
                let h = v[j] - v[j - 1];
                Stencil { lo: 2.0 * diff / (h * h), mid: -2.0 * diff / (h * h), hi: 0.0 }
            } else {
                let (h_m, h_p) = (v[j] - v[j - 1], v[j + 1] - v[j]);
                let conv = if drift.abs() * h_m.max(h_p) > 2.0 * diff {
                    if drift > 0.0 {
                        Stencil { lo: 0.0, mid: -1.0 / h_p, hi: 1.0 / h_p }
                    } else {
                        Stencil { lo: -1.0 / h_m, mid: 1.0 / h_m, hi: 0.0 }
                    }
                } else {
                    central_first(h_m, h_p)
                };
                central_second(h_m, h_p).scaled(diff).plus(conv.scaled(drift))
            };
            self.a2[j] = Stencil { mid: st.mid - half_r, ..st };
        }
        self.rho_xi = seg.rho * seg.xi;
    }

    fn a1_row(&self, i: usize, j: usize) -> Stencil {
        let vj = self.grid.v[j];
        let st = self.dxx[i].scaled(0.5 * vj).plus(self.dx[i].scaled(self.carry - 0.5 * vj));
        Stencil { mid: st.mid - 0.5 * self.rate_dom, ..st }
    }

    fn apply_a1(&self, u: &[f64], out: &mut [f64]) {
        let nx = self.nx;
        for j in 0..self.nv {
            let line = &u[j * nx..(j + 1) * nx];
            for i in 0..nx {
                let s = self.a1_row(i, j);
                let mut acc = s.mid * line[i];
                if i > 0 {
                    acc += s.lo * line[i - 1];
                }
                if i + 1 < nx {
                    acc += s.hi * line[i + 1];
                }
                out[j * nx + i] = acc;
            }
        }
    }

    fn apply_a2(&self, u: &[f64], out: &mut [f64]) {
        let nx = self.nx;
        for j in 0..self.nv {
            let s = self.a2[j];
            for i in 0..nx {
                let mut acc = s.mid * u[j * nx + i];
                if j > 0 {
                    acc += s.lo * u[(j - 1) * nx + i];
                }
                if j + 1 < self.nv {
                    acc += s.hi * u[(j + 1) * nx + i];
                }
                out[j * nx + i] = acc;
            }
        }
    }

    /// Mixed term; zero on every boundary line.
    fn apply_a0(&self, u: &[f64], out: &mut [f64]) {
        let nx = self.nx;
        out.fill(0.0);
        if self.rho_xi == 0.0 {
            return;
        }
        for j in 1..self.nv - 1 {
            let c = self.rho_xi * self.grid.v[j];
            let dv = self.dv_central[j];
            let wv = [dv.lo, dv.mid, dv.hi];
            for i in 1..nx - 1 {
                let dx = self.dx[i];
                let wx = [dx.lo, dx.mid, dx.hi];
                let mut acc = 0.0;
                for (l, &b) in wv.iter().enumerate() {
                    let row = (j + l - 1) * nx;
                    for (k, &a) in wx.iter().enumerate() {
                        acc += a * b * u[row + i + k - 1];
                    }
                }
                out[j * nx + i] = c * acc;
            }
        }
    }
}

/// Solves `(I - s A) y = rhs` along one line; `fixed` rows are pinned to `value`.
fn solve_line(rows: &[Stencil], s: f64, rhs: &mut [f64], fixed: impl Fn(usize) -> Option<f64>, c_prime: &mut [f64]) {
    let n = rows.len();
    let mut prev_c = 0.0;
    for k in 0..n {
        let (lo, di, up, r) = match fixed(k) {
            Some(val) => (0.0, 1.0, 0.0, val),
            None => (-s * rows[k].lo, 1.0 - s * rows[k].mid, -s * rows[k].hi, rhs[k]),
        };
        let lo = if k == 0 { 0.0 } else { lo };
        let denom = di - lo * prev_c;
        let prev_r = if k == 0 { 0.0 } else { rhs[k - 1] };
        prev_c = up / denom;
        c_prime[k] = prev_c;
        rhs[k] = (r - lo * prev_r) / denom;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= c_prime[k] * rhs[k + 1];
    }
}

/// Knock-out state active during one time step.
#[derive(Clone, Copy)]
struct Knock<'m> {
    mask: &'m [bool],
    rebate: f64,
}

struct Workspace {
    a0: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    line: Vec<f64>,
    rows: Vec<Stencil>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(nx: usize, nv: usize) -> Self {
        let n = nx * nv;
        let m = nx.max(nv);
        Self {
            a0: vec![0.0; n],
            a1: vec![0.0; n],
            a2: vec![0.0; n],
            line: vec![0.0; m],
            rows: vec![Stencil::default(); m],
            scratch: vec![0.0; m],
        }
    }
}

/// One Douglas step of size `dt` with implicit weight `theta`.
fn douglas_step(ops: &Operators, u: &mut [f64], dt: f64, theta: f64, knock: Option<Knock>, ws: &mut Workspace) {
    let (nx, nv) = (ops.nx, ops.nv);
    ops.apply_a0(u, &mut ws.a0);
    ops.apply_a1(u, &mut ws.a1);
    ops.apply_a2(u, &mut ws.a2);
    let s = theta * dt;
    // predictor, then x-corrector right-hand side, stored in u
    for (k, uk) in u.iter_mut().enumerate() {
        *uk += dt * (ws.a0[k] + ws.a1[k] + ws.a2[k]) - s * ws.a1[k];
    }
    for j in 0..nv {
        for i in 0..nx {
            ws.rows[i] = ops.a1_row(i, j);
        }
        let line = &mut u[j * nx..(j + 1) * nx];
        solve_line(
            &ws.rows[..nx],
            s,
            line,
            |i| knock.filter(|kn| kn.mask[i]).map(|kn| kn.rebate),
            &mut ws.scratch[..nx],
        );
    }
    for (uk, a2) in u.iter_mut().zip(&ws.a2) {
        *uk -= s * a2;
    }
    for i in 0..nx {
        if let Some(kn) = knock.filter(|kn| kn.mask[i]) {
            for j in 0..nv {
                u[j * nx + i] = kn.rebate;
            }
            continue;
        }
        for j in 0..nv {
            ws.line[j] = u[j * nx + i];
        }
        solve_line(&ops.a2, s, &mut ws.line[..nv], |_| None, &mut ws.scratch[..nv]);
        for j in 0..nv {
            u[j * nx + i] = ws.line[j];
        }
    }
}

/// State after each backward step, for diagnostics.
pub struct FdSnapshot<'a> {
    /// Calendar time reached.
    pub time: f64,
    pub vanilla: &'a [f64],
    /// Knock-out values; empty for vanilla-only runs.
    pub knock_out: &'a [f64],
}

/// Vanilla, knock-out and knock-in values from one lockstep run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdBarrierPrice {
    /// Value of the requested contract.
    pub value: f64,
    pub vanilla: f64,
    pub knock_out: f64,
    /// `vanilla - knock_out`.
    pub knock_in: f64,
}

fn check_grid_covers(grid: &FdGrid, slice: &MarketSlice, v0: f64) -> Result<()> {
    let x0 = slice.spot.ln();
    if !(x0 > grid.x[0] && x0 < grid.x[grid.x.len() - 1]) {
        return domain(format!("spot {} outside FD grid", slice.spot));
    }
    if v0 >= grid.v[grid.v.len() - 1] {
        return domain(format!("v0 {v0} beyond FD variance boundary"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    payoff: &VanillaPayoff,
    barrier: Option<&WindowBarrierSpec>,
    grid: &FdGrid,
    observer: &mut dyn FnMut(FdSnapshot),
) -> Result<(f64, Option<f64>)> {
    slice.validate()?;
    params.validate()?;
    params.check_covers(slice.maturity)?;
    payoff.validate()?;
    grid.validate()?;
    check_grid_covers(grid, slice, params.v0)?;
    if grid.theta < 0.5 {
        log::warn!("ADI weight {} below 1/2: explicit mixed term may be unstable", grid.theta);
    }
    let maturity = slice.maturity;
    let (nx, nv) = (grid.x.len(), grid.v.len());

    let mut forced = params.parameter_changes(maturity);
    forced.extend(grid.extra_times.iter().copied());
    let mask: Vec<bool>;
    let mut window = None;
    if let Some(spec) = barrier {
        spec.validate(maturity)?;
        let lb = spec.barrier.ln();
        if !(lb > grid.x[0] && lb < grid.x[nx - 1]) {
            return domain(format!("barrier {} outside FD grid", spec.barrier));
        }
        if !grid.x.iter().any(|&x| (x - lb).abs() <= NODE_EPS * (1.0 + lb.abs())) {
            log::warn!("barrier {} is not an FD node; placement error is first order", spec.barrier);
        }
        mask = grid
            .x
            .iter()
            .map(|&x| match spec.side {
                BarrierSide::Lower => x <= lb + NODE_EPS,
                BarrierSide::Upper => x >= lb - NODE_EPS,
            })
            .collect();
        forced.extend([spec.window_start, spec.window_end]);
        window = Some((spec.window_start, spec.window_end, spec.rebate));
    } else {
        mask = Vec::new();
    }
    let times = time_grid(&forced, maturity, grid.steps_per_year);

    let mut vanilla = vec![0.0; nx * nv];
    for j in 0..nv {
        for i in 0..nx {
            vanilla[grid.index(i, j)] = payoff.value(grid.x[i].exp());
        }
    }
    let mut knock_out = if window.is_some() { vanilla.clone() } else { Vec::new() };
    let mut ops = Operators::new(grid, slice);
    let mut ws = Workspace::new(nx, nv);
    let mut damp_vanilla = grid.damping_steps;
    let mut damp_knock = grid.damping_steps;
    let in_window = |t: f64, (a, b, _): (f64, f64, f64)| t >= a - NODE_EPS && t <= b + NODE_EPS;

    let apply_mask = |u: &mut [f64], rebate: f64| {
        for j in 0..nv {
            for i in 0..nx {
                if mask[i] {
                    u[j * nx + i] = rebate;
                }
            }
        }
    };

    let mut current: Option<HestonSegment> = None;
    for n in (1..times.len()).rev() {
        let (t_hi, t_lo) = (times[n], times[n - 1]);
        let seg = *params.segment_at(0.5 * (t_lo + t_hi));
        if current != Some(seg) {
            ops.set_segment(&seg);
            current = Some(seg);
        }
        let dt = t_hi - t_lo;
        if let Some(w) = window {
            if (t_hi - w.1).abs() <= NODE_EPS {
                apply_mask(&mut knock_out, w.2);
                // the vanilla restarts too so both legs share one discrete scheme
                damp_knock = grid.damping_steps;
                damp_vanilla = grid.damping_steps;
            }
        }
        step_with_damping(&ops, &mut vanilla, dt, grid.theta, None, &mut damp_vanilla, &mut ws);
        if let Some(w) = window {
            let active = in_window(t_lo, w) && in_window(t_hi, w);
            let knock = active.then_some(Knock { mask: &mask, rebate: w.2 });
            step_with_damping(&ops, &mut knock_out, dt, grid.theta, knock, &mut damp_knock, &mut ws);
        }
        observer(FdSnapshot {
            time: t_lo,
            vanilla: &vanilla,
            knock_out: &knock_out,
        });
    }
    let (x0, v0) = (slice.spot.ln(), params.v0);
    let van = grid.interpolate(&vanilla, x0, v0)?;
    let ko = if window.is_some() {
        Some(grid.interpolate(&knock_out, x0, v0)?)
    } else {
        None
    };
    Ok((van, ko))
}

fn step_with_damping(ops: &Operators, u: &mut [f64], dt: f64, theta: f64, knock: Option<Knock>, damping_left: &mut usize, ws: &mut Workspace) {
    if *damping_left > 0 {
        douglas_step(ops, u, 0.5 * dt, 1.0, knock, ws);
        douglas_step(ops, u, 0.5 * dt, 1.0, knock, ws);
        *damping_left = damping_left.saturating_sub(2);
    } else {
        douglas_step(ops, u, dt, theta, knock, ws);
    }
}

/// European vanilla price on `grid`.
pub fn fd_price_vanilla(params: &PiecewiseHestonParams, slice: &MarketSlice, payoff: &VanillaPayoff, grid: &FdGrid) -> Result<f64> {
    run(params, slice, payoff, None, grid, &mut |_| {}).map(|(v, _)| v)
}

/// Window-barrier price; the vanilla and knock-out run in lockstep and the
/// knock-in is their difference.
pub fn fd_price(params: &PiecewiseHestonParams, slice: &MarketSlice, spec: &WindowBarrierSpec, grid: &FdGrid) -> Result<FdBarrierPrice> {
    fd_price_observed(params, slice, spec, grid, &mut |_| {})
}

/// As [`fd_price`], calling `observer` after every time step.
pub fn fd_price_observed(
    params: &PiecewiseHestonParams,
    slice: &MarketSlice,
    spec: &WindowBarrierSpec,
    grid: &FdGrid,
    observer: &mut dyn FnMut(FdSnapshot),
) -> Result<FdBarrierPrice> {
    let (vanilla, ko) = run(params, slice, &spec.payoff, Some(spec), grid, observer)?;
    let knock_out = ko.expect("barrier run returns a knock-out value");
    let knock_in = vanilla - knock_out;
    let value = match spec.knock {
        KnockType::KnockOut => knock_out,
        KnockType::KnockIn => knock_in,
    };
    Ok(FdBarrierPrice {
        value,
        vanilla,
        knock_out,
        knock_in,
    })
}
