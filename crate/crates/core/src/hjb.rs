//! Finite-difference solvers for the epsilon-dependent HJB
//! integro-differential equation
//!
//! `-V_t + H(x, y, V_x, V_xx) - (1/eps) I[y, V] + c V = 0`, `V(T) = g`,
//!
//! and for its averaged limit `-V_t + H_bar(x, V_x, V_xx) + c V = 0`.
//!
//! Time runs backwards from the terminal date. The x-grid may be
//! nonuniform. No condition is imposed at `x = 0`, where the coefficients
//! vanish; at the truncated far field `x_max` the problem supplies
//! Dirichlet data.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::control::{hamiltonian_eval, ControlProblemSpec};
use crate::ergodicity::InvariantMeasure;
use crate::error::{Error, Result};
use crate::jump::ControlPolicy;
use crate::levy::{power_integral, LevyMeasureModel};

/// Strictly increasing grid of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1d {
    points: Vec<f64>,
}

impl Grid1d {
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid", "need at least two strictly increasing points"));
        }
        Ok(Self { points })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::invalid("grid", format!("bad uniform grid [{lo}, {hi}] with {n} points")));
        }
        Self::from_points((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    }

    /// `x(s) = x_max sinh(beta s) / sinh(beta)` for `s` uniform on `[0, 1]`:
    /// nearly uniform near the origin, geometric towards `x_max`.
    pub fn sinh_stretched(x_max: f64, n: usize, beta: f64) -> Result<Self> {
        if n < 3 || !(x_max > 0.0 && beta > 0.0) {
            return Err(Error::invalid("grid", "bad stretched grid parameters"));
        }
        let a = x_max / beta.sinh();
        let mut pts: Vec<f64> = (0..n)
            .map(|i| a * (beta * i as f64 / (n - 1) as f64).sinh())
            .collect();
        pts[n - 1] = x_max;
        Self::from_points(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn max_spacing(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Cell index and weight of `v` in a sorted grid, clamped to the ends.
fn locate(points: &[f64], v: f64) -> (usize, f64) {
    let n = points.len();
    if n == 1 || v <= points[0] {
        return (0, 0.0);
    }
    if v >= points[n - 1] {
        return (n - 2, 1.0);
    }
    let i = points.partition_point(|&p| p <= v) - 1;
    let i = i.min(n - 2);
    (i, (v - points[i]) / (points[i + 1] - points[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Interior scheme with degenerate coefficients at `x = 0` and
    /// far-field Dirichlet data; no lateral condition at the origin.
    NoBcInteriorScheme,
}

/// Diagnostics reported by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveDiagnostics {
    pub dt: f64,
    pub steps: usize,
    /// Stability bound of the explicit Bellman step.
    pub cfl_bound: f64,
    /// Largest jump intensity leaving the y-grid from any node.
    pub extrapolated_mass: f64,
    /// Average number of policy iterations per step.
    pub policy_iterations: f64,
}

/// Value function on a `(t, x[, y])` grid; `values[((ti * ny) + yi) * nx + xi]`
/// with `ny = 1` when there is no y-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub y_grid: Option<Vec<f64>>,
    pub values: Vec<f64>,
    pub boundary_policy: BoundaryPolicy,
    pub epsilon: Option<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl ValueField {
    pub fn ny(&self) -> usize {
        self.y_grid.as_ref().map_or(1, |y| y.len())
    }

    pub fn nx(&self) -> usize {
        self.x_grid.len()
    }

    pub fn at(&self, ti: usize, yi: usize, xi: usize) -> f64 {
        self.values[(ti * self.ny() + yi) * self.nx() + xi]
    }

    /// Slice of `x` values at time index `ti` and y index `yi`.
    pub fn row(&self, ti: usize, yi: usize) -> &[f64] {
        let nx = self.nx();
        let start = (ti * self.ny() + yi) * nx;
        &self.values[start..start + nx]
    }

    /// Multilinear interpolation, clamped to the grid.
    pub fn interpolate(&self, t: f64, x: f64, y: f64) -> f64 {
        let (ti, wt) = locate(&self.t_grid, t);
        let (xi, wx) = locate(&self.x_grid, x);
        let (yi, wy) = match &self.y_grid {
            Some(g) => locate(g, y),
            None => (0, 0.0),
        };
        let nt = self.t_grid.len();
        let ny = self.ny();
        let mut v = 0.0;
        for (dt, ft) in [(0, 1.0 - wt), (1, wt)] {
            if ft == 0.0 || ti + dt >= nt {
                continue;
            }
            for (dy, fy) in [(0, 1.0 - wy), (1, wy)] {
                if fy == 0.0 || yi + dy >= ny {
                    continue;
                }
                for (dx, fx) in [(0, 1.0 - wx), (1, wx)] {
                    if fx == 0.0 {
                        continue;
                    }
                    v += ft * fy * fx * self.at(ti + dt, yi + dy, xi + dx);
                }
            }
        }
        v
    }

    /// Copies the field onto the y-grid `y` (constant in `y`).
    pub fn broadcast_y(&self, y: &[f64]) -> ValueField {
        let nx = self.nx();
        let mut values = Vec::with_capacity(self.t_grid.len() * y.len() * nx);
        for ti in 0..self.t_grid.len() {
            for _ in y {
                values.extend_from_slice(self.row(ti, 0));
            }
        }
        ValueField {
            y_grid: Some(y.to_vec()),
            values,
            ..self.clone()
        }
    }

    /// `max |V| / (1 + x^2)` over the whole grid.
    pub fn growth_ratio(&self) -> f64 {
        let nx = self.nx();
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let x = self.x_grid[k % nx];
                v.abs() / (1.0 + x * x)
            })
            .fold(0.0, f64::max)
    }

    /// Writes `t,x,y,value` (or `t,x,value`) rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        match &self.y_grid {
            Some(ys) => {
                writeln!(w, "t,x,y,value")?;
                for (ti, t) in self.t_grid.iter().enumerate() {
                    for (yi, y) in ys.iter().enumerate() {
                        for (xi, x) in self.x_grid.iter().enumerate() {
                            writeln!(w, "{t},{x},{y},{}", self.at(ti, yi, xi))?;
                        }
                    }
                }
            }
            None => {
                writeln!(w, "t,x,value")?;
                for (ti, t) in self.t_grid.iter().enumerate() {
                    for (xi, x) in self.x_grid.iter().enumerate() {
                        writeln!(w, "{t},{x},{}", self.at(ti, 0, xi))?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Grids for the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverGrids {
    pub x: Grid1d,
    /// Uniform y-grid for the epsilon problem; ignored by the limit solver.
    pub y: Grid1d,
    /// Number of time steps; `None` picks the largest stable step.
    pub time_steps: Option<usize>,
    /// Number of stored time levels, including `t = 0` and `t = T`.
    pub snapshots: usize,
}

/// Generator of the fast factor restricted to a uniform y-grid.
///
/// Jumps shorter than the spacing `h` enter as diffusion with coefficient
/// `1/2 int_{|z|<h} z^2 nu(dz)`; the compensator over `h <= |z| <= 1`
/// becomes a drift; longer jumps are spread over the two nearest nodes
/// with the exact hat-function weights of the power-law density. Jumps
/// leaving the grid are sent to the boundary node (constant extrapolation
/// of the value in `y`). Rows sum to zero and off-diagonal entries are
/// nonnegative, so `I - tau A` is an M-matrix for every `tau > 0`.
#[derive(Debug, Clone)]
pub struct YStencil {
    pub y: Vec<f64>,
    pub matrix: DMatrix<f64>,
    /// Jump intensity leaving the grid, per row.
    pub leaving_mass: Vec<f64>,
}

impl YStencil {
    pub fn new(model: &LevyMeasureModel, y: &Grid1d) -> Result<Self> {
        let ys = y.points().to_vec();
        let n = ys.len();
        let h = ys[1] - ys[0];
        if ys.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
            return Err(Error::invalid("grid.y", "the nonlocal stencil needs a uniform y-grid"));
        }
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut leaving = vec![0.0; n];
        let c = model.intensity();
        let alpha = model.alpha();
        let diff = 0.5 * model.second_moment_below(h) / (h * h);
        // int_h^1 z nu(dz), signed when h > 1
        let comp = if model.is_symmetric() || model.is_null() {
            0.0
        } else {
            c * power_integral(h, 1.0, -alpha)
        };
        // int over [lo, hi] of (p + q z / h) nu(dz) on one side
        let lin = |lo: f64, hi: f64, p: f64, q: f64| {
            if hi <= lo || c == 0.0 {
                return 0.0;
            }
            c * (p * power_integral(lo, hi, -1.0 - alpha) + q / h * power_integral(lo, hi, -alpha))
        };
        let tail = |lo: f64| if c == 0.0 { 0.0 } else { model.positive_mass_between(lo, f64::INFINITY) };
        for j in 0..n {
            // diffusion, clamped at the ends
            if j > 0 {
                a[(j, j - 1)] += diff;
            }
            if j + 1 < n {
                a[(j, j + 1)] += diff;
            }
            // drift -y - compensator, upwinded
            let b = -ys[j] - comp;
            if b > 0.0 && j + 1 < n {
                a[(j, j + 1)] += b / h;
            } else if b < 0.0 && j > 0 {
                a[(j, j - 1)] += -b / h;
            }
            // jumps of size >= h
            let sides: &[i64] = if model.is_symmetric() { &[1, -1] } else { &[1] };
            for &s in sides {
                let room = if s > 0 { n - 1 - j } else { j };
                if room == 0 {
                    leaving[j] += tail(h);
                    continue;
                }
                for d in 1..=room {
                    let k = (j as i64 + s * d as i64) as usize;
                    let df = d as f64;
                    // rising half of the hat: z in [(d-1)h, dh], weight z/h - (d-1)
                    let rise = lin(((df - 1.0) * h).max(h), df * h, -(df - 1.0), 1.0);
                    // falling half: z in [dh, (d+1)h], weight (d+1) - z/h
                    let fall = if d < room { lin(df * h, (df + 1.0) * h, df + 1.0, -1.0) } else { 0.0 };
                    let beyond = if d == room { tail(df * h) } else { 0.0 };
                    a[(j, k)] += rise + fall + beyond;
                    if d == room {
                        leaving[j] += beyond;
                    }
                }
            }
            let off: f64 = (0..n).filter(|&k| k != j).map(|k| a[(j, k)]).sum();
            a[(j, j)] = -off;
        }
        Ok(Self {
            y: ys,
            matrix: a,
            leaving_mass: leaving,
        })
    }

    /// Stationary distribution of the discrete generator.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.y.len();
        let mut m = self.matrix.transpose();
        for k in 0..n {
            m[(n - 1, k)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular stationary system".into()))?;
        Ok(sol.iter().cloned().collect())
    }
}

/// Neighbour weights `l (V_{i-1} - V_i) + r (V_{i+1} - V_i)` of
/// `a V_xx + b V_x` at interior node `i`. With `central`, the first
/// derivative is centred when that keeps both weights nonnegative and
/// upwinded otherwise.
fn stencil(x: &[f64], i: usize, a: f64, b: f64, central: bool) -> (f64, f64) {
    let n = x.len();
    if i == 0 {
        // degenerate boundary: only transport into the domain is kept
        let hp = x[1] - x[0];
        return (0.0, b.max(0.0) / hp);
    }
    if i + 1 >= n {
        return (0.0, 0.0);
    }
    let hm = x[i] - x[i - 1];
    let hp = x[i + 1] - x[i];
    let s = hm + hp;
    let (cm, cp) = (2.0 * a / (hm * s), 2.0 * a / (hp * s));
    if central {
        let l = cm - b * hp / (hm * s);
        let r = cp + b * hm / (hp * s);
        if l >= 0.0 && r >= 0.0 {
            return (l, r);
        }
    }
    (cm + (-b).max(0.0) / hm, cp + b.max(0.0) / hp)
}

fn snapshot_plan(horizon: f64, snapshots: usize, min_steps: usize) -> (usize, Vec<f64>) {
    let intervals = snapshots.max(2) - 1;
    let per = min_steps.div_ceil(intervals).max(1);
    let steps = per * intervals;
    let times = (0..=intervals).map(|k| horizon * k as f64 / intervals as f64).collect();
    (steps, times)
}

/// Solves the epsilon problem by IMEX time stepping: an explicit monotone
/// Bellman step in `x` (upwind first and central second differences), an
/// exact discount factor, then an implicit step `(I - dt/eps A) V = V*` in
/// `y` with the [`YStencil`] matrix factorised once.
pub fn pide_solve(
    spec: &ControlProblemSpec,
    model: &LevyMeasureModel,
    epsilon: f64,
    grids: &SolverGrids,
) -> Result<ValueField> {
    spec.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", format!("{epsilon} must be positive")));
    }
    let report = model.check_assumptions();
    if !report.passes() {
        return Err(Error::Assumption(report.summary()));
    }
    let x = grids.x.points();
    let ys = grids.y.points();
    let (nx, ny, nu) = (x.len(), ys.len(), spec.controls.len());

    // Explicit weights per (y, x, u).
    let mut lw = vec![0.0; ny * nx * nu];
    let mut rw = vec![0.0; ny * nx * nu];
    let mut rate: f64 = 0.0;
    for (j, &y) in ys.iter().enumerate() {
        for i in 0..nx - 1 {
            for (k, &u) in spec.controls.iter().enumerate() {
                let s = (spec.vol)(x[i], y, u);
                let (l, r) = stencil(x, i, 0.5 * s * s, (spec.drift)(x[i], y, u), false);
                let idx = (j * nx + i) * nu + k;
                lw[idx] = l;
                rw[idx] = r;
                rate = rate.max(l + r);
            }
        }
    }
    let cfl = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    let horizon = spec.horizon;
    let (steps, times) = match grids.time_steps {
        Some(n) => {
            let dt = horizon / n as f64;
            if dt > cfl * (1.0 + 1e-12) {
                return Err(Error::Cfl {
                    dt,
                    suggested: 0.95 * cfl,
                });
            }
            snapshot_plan(horizon, grids.snapshots, n)
        }
        None => {
            let min_steps = if cfl.is_finite() {
                (horizon / (0.95 * cfl)).ceil() as usize
            } else {
                1
            };
            snapshot_plan(horizon, grids.snapshots, min_steps.max(grids.snapshots))
        }
    };
    let dt = horizon / steps as f64;
    if dt > cfl * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            dt,
            suggested: 0.95 * cfl,
        });
    }

    let stencil_y = YStencil::new(model, &grids.y)?;
    let system = DMatrix::<f64>::identity(ny, ny) - &stencil_y.matrix * (dt / epsilon);
    let lu = system.lu();
    let extrapolated = stencil_y.leaving_mass.iter().cloned().fold(0.0, f64::max);

    let discount = (-spec.discount * dt).exp();
    let n_out = times.len();
    let per = steps / (n_out - 1);
    let mut out = vec![0.0; n_out * ny * nx];
    let mut v = vec![0.0; ny * nx];
    for j in 0..ny {
        for i in 0..nx {
            v[j * nx + i] = spec.payoff.eval(x[i]);
        }
    }
    let last = n_out - 1;
    out[last * ny * nx..].copy_from_slice(&v);
    let mut next = vec![0.0; ny * nx];
    let mut col = DVector::<f64>::zeros(ny);
    for step in 1..=steps {
        let tau = step as f64 * dt;
        for j in 0..ny {
            let row = &v[j * nx..(j + 1) * nx];
            for i in 0..nx - 1 {
                let vm = if i > 0 { row[i - 1] } else { row[i] };
                let (dm, dp) = (vm - row[i], row[i + 1] - row[i]);
                let base = (j * nx + i) * nu;
                let mut best = f64::NEG_INFINITY;
                for k in 0..nu {
                    let g = lw[base + k] * dm + rw[base + k] * dp;
                    if g > best {
                        best = g;
                    }
                }
                next[j * nx + i] = discount * (row[i] + dt * best);
            }
        }
        for i in 0..nx - 1 {
            for j in 0..ny {
                col[j] = next[j * nx + i];
            }
            let sol = lu
                .solve(&col)
                .ok_or_else(|| Error::Numerical("implicit y-step matrix is singular".into()))?;
            for j in 0..ny {
                v[j * nx + i] = sol[j];
            }
        }
        let far = (spec.far_field)(tau, x[nx - 1]);
        for j in 0..ny {
            v[j * nx + nx - 1] = far;
        }
        if v.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value at step {step}")));
        }
        if step % per == 0 {
            let ti = last - step / per;
            out[ti * ny * nx..(ti + 1) * ny * nx].copy_from_slice(&v);
        }
    }
    Ok(ValueField {
        t_grid: times,
        x_grid: x.to_vec(),
        y_grid: Some(ys.to_vec()),
        values: out,
        boundary_policy: BoundaryPolicy::NoBcInteriorScheme,
        epsilon: Some(epsilon),
        diagnostics: SolveDiagnostics {
            dt,
            steps,
            cfl_bound: cfl,
            extrapolated_mass: extrapolated,
            policy_iterations: 0.0,
        },
    })
}

/// Solves the limit problem with the averaged Hamiltonian
/// `H_bar = sum_m w_m min_u {...}(y_m)` by implicit Euler. The control is
/// chosen separately at every node of `mu`, and each step is solved by
/// policy iteration (tridiagonal solve, then greedy policy update, until
/// the policy is stable).
pub fn effective_solve(spec: &ControlProblemSpec, mu: &InvariantMeasure, grids: &SolverGrids) -> Result<ValueField> {
    spec.validate()?;
    let x = grids.x.points();
    let (nx, nu) = (x.len(), spec.controls.len());
    let nodes = mu.nodes();
    let weights = mu.weights();
    let nm = nodes.len();

    let mut lw = vec![0.0; nx * nm * nu];
    let mut rw = vec![0.0; nx * nm * nu];
    for i in 0..nx - 1 {
        for (m, &y) in nodes.iter().enumerate() {
            for (k, &u) in spec.controls.iter().enumerate() {
                let s = (spec.vol)(x[i], y, u);
                let (l, r) = stencil(x, i, 0.5 * s * s, (spec.drift)(x[i], y, u), true);
                let idx = (i * nm + m) * nu + k;
                lw[idx] = l;
                rw[idx] = r;
            }
        }
    }
    let horizon = spec.horizon;
    let (steps, times) = snapshot_plan(horizon, grids.snapshots, grids.time_steps.unwrap_or(200));
    let dt = horizon / steps as f64;
    let discount = (-spec.discount * dt).exp();
    let n_out = times.len();
    let per = steps / (n_out - 1);
    let last = n_out - 1;

    let mut v: Vec<f64> = x.iter().map(|&xi| spec.payoff.eval(xi)).collect();
    let mut out = vec![0.0; n_out * nx];
    out[last * nx..].copy_from_slice(&v);
    let mut policy = vec![0usize; nx * nm];
    let greedy = |v: &[f64], policy: &mut [usize]| -> bool {
        let mut changed = false;
        for i in 0..nx - 1 {
            let vm = if i > 0 { v[i - 1] } else { v[i] };
            let (dm, dp) = (vm - v[i], v[i + 1] - v[i]);
            let scale = 1e-13 * (dm.abs() + dp.abs());
            for m in 0..nm {
                let base = (i * nm + m) * nu;
                let cur = policy[i * nm + m];
                let mut best = lw[base + cur] * dm + rw[base + cur] * dp;
                let mut arg = cur;
                for k in 0..nu {
                    let g = lw[base + k] * dm + rw[base + k] * dp;
                    if g > best + scale.max(1e-300) {
                        best = g;
                        arg = k;
                    }
                }
                if arg != cur {
                    policy[i * nm + m] = arg;
                    changed = true;
                }
            }
        }
        changed
    };
    greedy(&v, &mut policy);

    let mut lower = vec![0.0; nx];
    let mut diag = vec![0.0; nx];
    let mut upper = vec![0.0; nx];
    let mut rhs = vec![0.0; nx];
    let mut total_iters = 0usize;
    for step in 1..=steps {
        let tau = step as f64 * dt;
        let old: Vec<f64> = v.iter().map(|z| discount * z).collect();
        let far = (spec.far_field)(tau, x[nx - 1]);
        let mut iters = 0;
        loop {
            iters += 1;
            for i in 0..nx - 1 {
                let (mut l, mut r) = (0.0, 0.0);
                for m in 0..nm {
                    let idx = (i * nm + m) * nu + policy[i * nm + m];
                    l += weights[m] * lw[idx];
                    r += weights[m] * rw[idx];
                }
                if i == 0 {
                    // no node to the left; the degenerate boundary carries no weight there
                    lower[i] = 0.0;
                    diag[i] = 1.0 + dt * r;
                } else {
                    lower[i] = -dt * l;
                    diag[i] = 1.0 + dt * (l + r);
                }
                upper[i] = -dt * r;
                rhs[i] = old[i];
            }
            lower[nx - 1] = 0.0;
            diag[nx - 1] = 1.0;
            upper[nx - 1] = 0.0;
            rhs[nx - 1] = far;
            thomas(&lower, &diag, &upper, &mut rhs)?;
            v.copy_from_slice(&rhs);
            if !greedy(&v, &mut policy) || iters >= 50 {
                break;
            }
        }
        total_iters += iters;
        if v.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value at step {step}")));
        }
        if step % per == 0 {
            let ti = last - step / per;
            out[ti * nx..(ti + 1) * nx].copy_from_slice(&v);
        }
    }
    Ok(ValueField {
        t_grid: times,
        x_grid: x.to_vec(),
        y_grid: None,
        values: out,
        boundary_policy: BoundaryPolicy::NoBcInteriorScheme,
        epsilon: None,
        diagnostics: SolveDiagnostics {
            dt,
            steps,
            cfl_bound: f64::INFINITY,
            extrapolated_mass: 0.0,
            policy_iterations: total_iters as f64 / steps as f64,
        },
    })
}

/// Tridiagonal solve; the solution overwrites `rhs`.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::Numerical("zero pivot in tridiagonal solve".into()));
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        if beta == 0.0 {
            return Err(Error::Numerical("zero pivot in tridiagonal solve".into()));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
    Ok(())
}

/// Compact set `[t0, t1] x [x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactBox {
    pub t: (f64, f64),
    pub x: (f64, f64),
    pub y: (f64, f64),
}

/// `max |a - b|` over the grid points of `a` inside the box, with `b`
/// interpolated multilinearly in `(t, x)`. `b` must not depend on `y`.
pub fn sup_norm_gap(a: &ValueField, b: &ValueField, bx: &CompactBox) -> Result<f64> {
    let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo - 1e-12 && v <= hi + 1e-12;
    let covers = |g: &[f64], (lo, hi): (f64, f64)| g[0] <= lo + 1e-12 && *g.last().unwrap() >= hi - 1e-12;
    for f in [a, b] {
        if !covers(&f.t_grid, bx.t) || !covers(&f.x_grid, bx.x) {
            return Err(Error::Usage("the compact box is not contained in both fields".into()));
        }
    }
    let ys: Vec<(usize, f64)> = match &a.y_grid {
        Some(g) => g.iter().cloned().enumerate().filter(|(_, y)| inside(*y, bx.y)).collect(),
        None => vec![(0, 0.5 * (bx.y.0 + bx.y.1))],
    };
    let mut gap: f64 = 0.0;
    let mut count = 0usize;
    for (ti, &t) in a.t_grid.iter().enumerate() {
        if !inside(t, bx.t) {
            continue;
        }
        for &(yi, y) in &ys {
            for (xi, &x) in a.x_grid.iter().enumerate() {
                if !inside(x, bx.x) {
                    continue;
                }
                gap = gap.max((a.at(ti, yi, xi) - b.interpolate(t, x, y)).abs());
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Usage("no grid point of the field lies in the compact box".into()));
    }
    Ok(gap)
}

/// Feedback control read off a solved field: at `(t, x, y)` the minimiser
/// of the Hamiltonian with finite-difference derivatives of the field.
pub fn greedy_policy(spec: &ControlProblemSpec, field: &ValueField) -> ControlPolicy {
    let spec = spec.clone();
    let field = Arc::new(field.clone());
    ControlPolicy::Feedback(Arc::new(move |t, x, y| {
        let xs = &field.x_grid;
        let (i, _) = locate(xs, x);
        let h = (xs[i + 1] - xs[i]).max(1e-8);
        let xc = x.clamp(xs[0] + h, xs[xs.len() - 1] - h);
        let vp = field.interpolate(t, xc + h, y);
        let v0 = field.interpolate(t, xc, y);
        let vm = field.interpolate(t, xc - h, y);
        let p = (vp - vm) / (2.0 * h);
        let xx = (vp - 2.0 * v0 + vm) / (h * h);
        spec.controls[hamiltonian_eval(&spec, x, y, p, xx).1]
    }))
}
