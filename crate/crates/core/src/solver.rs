//! IMEX finite-difference solver for the final-value PIDE of the decoupling field.
//!
//! The PIDE is marched in reversed time `s = T − t`, where it reads
//!
//! ```text
//! ∂_s u = Σ a_ij ∂²_ij u − Σ a_i ∂_i u − a,     u(0, ·) = h · ξ
//! ```
//!
//! with the coefficients of [`assemble_coefficients`]. Each step treats the
//! axis-aligned diffusion `a_dd ∂²_dd` implicitly, with coefficients frozen at the
//! previous level, and everything else (transport, reaction, mixed derivatives and
//! the nonlocal term) explicitly. Transport is centred where the cell Péclet
//! number is at most one and upwinded elsewhere.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_tridiagonal, Matrix};
use crate::nonlocal::{assemble_coefficients, eval_nonlocal_reversed, Grid, GridFunction};
use crate::problem::{AtomTable, ProblemSpec};
use crate::scalar::{all_finite, Scalar};

/// Face values as a function of physical time `t` and position.
pub type BoundaryFn<T> = Arc<dyn Fn(T, &[T]) -> Vec<T> + Send + Sync>;

/// How the truncated box is closed.
#[derive(Clone)]
pub enum BoundaryMode<T> {
    /// Terminal data multiplied by the cutoff [`Cutoff`]; zero on the faces.
    Cutoff(Cutoff<T>),
    /// Terminal data used as given; faces follow the prescribed values.
    Dirichlet(BoundaryFn<T>),
}

impl<T: Scalar> fmt::Debug for BoundaryMode<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryMode::Cutoff(c) => f.debug_tuple("Cutoff").field(c).finish(),
            BoundaryMode::Dirichlet(_) => f.write_str("Dirichlet(..)"),
        }
    }
}

/// Smooth cutoff equal to 1 deeper than `width` inside the box and 0 on its faces.
///
/// Per axis the transition is the quintic `r³(10 − 15r + 6r²)` of the scaled
/// distance to the nearest face, which is C² at both ends; the box cutoff is the
/// product over axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff<T> {
    pub width: T,
}

impl<T: Scalar> Cutoff<T> {
    pub fn new(width: T) -> Self {
        Self { width }
    }

    fn ramp(r: T) -> T {
        if r <= T::zero() {
            T::zero()
        } else if r >= T::one() {
            T::one()
        } else {
            r * r * r * (T::lit(10.0) + r * (T::lit(-15.0) + r * T::lit(6.0)))
        }
    }

    pub fn value(&self, grid: &Grid<T>, x: &[T]) -> T {
        x.iter()
            .enumerate()
            .map(|(d, &v)| {
                let dist = (v - grid.lower()[d]).min(grid.upper()[d] - v);
                Self::ramp(dist / self.width)
            })
            .fold(T::one(), |a, b| a * b)
    }

    /// True where the cutoff equals one.
    pub fn is_inner(&self, grid: &Grid<T>, x: &[T]) -> bool {
        x.iter().enumerate().all(|(d, &v)| {
            v - grid.lower()[d] >= self.width && grid.upper()[d] - v >= self.width
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolver {
    /// One tridiagonal sweep per axis (direct for `n = 1`).
    Splitting,
    /// Gauss–Seidel on the full implicit operator.
    Iterative,
}

#[derive(Clone)]
pub struct SolverConfig<T> {
    pub grid: Grid<T>,
    /// Number of time steps `N_t`; `Δt = T / N_t`.
    pub steps: usize,
    pub boundary: BoundaryMode<T>,
    pub linear_solver: LinearSolver,
    /// Relative stopping tolerance of the iterative solver.
    pub linear_tolerance: T,
    pub max_iterations: usize,
    /// Relative slack allowed by the maximum-principle check.
    pub max_principle_tolerance: T,
}

impl<T: Scalar> fmt::Debug for SolverConfig<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolverConfig")
            .field("grid", &self.grid)
            .field("steps", &self.steps)
            .field("boundary", &self.boundary)
            .field("linear_solver", &self.linear_solver)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> SolverConfig<T> {
    /// Cutoff boundary with unit width, axis splitting.
    pub fn new(grid: Grid<T>, steps: usize) -> Self {
        Self {
            grid,
            steps,
            boundary: BoundaryMode::Cutoff(Cutoff::new(T::one())),
            linear_solver: LinearSolver::Splitting,
            linear_tolerance: T::lit(1e-12).max(T::epsilon() * T::lit(16.0)),
            max_iterations: 20_000,
            max_principle_tolerance: T::lit(1e-10),
        }
    }

    pub fn with_boundary(mut self, boundary: BoundaryMode<T>) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_linear_solver(mut self, solver: LinearSolver) -> Self {
        self.linear_solver = solver;
        self
    }

    pub fn dt(&self, horizon: T) -> T {
        horizon / T::from_usize_lossy(self.steps)
    }

    pub fn validate(&self, spec: &ProblemSpec<T>) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidSolverConfig("at least one time step is required".into()));
        }
        if self.grid.dim() != spec.n() {
            return Err(Error::DimensionMismatch {
                expected: spec.n(),
                got: self.grid.dim(),
                context: "grid dimension vs forward dimension",
            });
        }
        if !(self.linear_tolerance > T::zero()) || !(self.max_principle_tolerance >= T::zero()) {
            return Err(Error::InvalidSolverConfig("tolerances must be positive".into()));
        }
        if let BoundaryMode::Cutoff(c) = &self.boundary {
            if !(c.width > T::zero()) {
                return Err(Error::InvalidSolverConfig("cutoff width must be positive".into()));
            }
            for d in 0..self.grid.dim() {
                let half = T::lit(0.5) * (self.grid.upper()[d] - self.grid.lower()[d]);
                if !(c.width < half) {
                    return Err(Error::InvalidSolverConfig(format!(
                        "cutoff width {} must be below half the box width {half} on axis {d}",
                        c.width
                    )));
                }
            }
        }
        Ok(())
    }

    fn boundary_value(&self, horizon: T, s: T, x: &[T], m: usize) -> Vec<T> {
        match &self.boundary {
            BoundaryMode::Cutoff(_) => vec![T::zero(); m],
            BoundaryMode::Dirichlet(f) => f(horizon - s, x),
        }
    }

    /// Terminal data actually imposed: `h·ξ` or `h`.
    pub fn terminal_value(&self, spec: &ProblemSpec<T>, x: &[T]) -> Vec<T> {
        let h = spec.terminal(x);
        match &self.boundary {
            BoundaryMode::Cutoff(c) => {
                let xi = c.value(&self.grid, x);
                h.into_iter().map(|v| v * xi).collect()
            }
            BoundaryMode::Dirichlet(_) => h,
        }
    }
}

/// Constants `c₁, c₂, c₃` of the one-sided growth bound on `(g, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleConstants<T> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
}

impl<T: Scalar> MaxPrincipleConstants<T> {
    pub fn new(c1: T, c2: T, c3: T) -> Self {
        Self { c1, c2, c3 }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// `λ = c₂ + c₃ L_E² + 1`.
    pub fn rate(&self, l_e: T) -> T {
        self.c2 + self.c3 * l_e * l_e + T::one()
    }

    /// `e^{λT} · max(sup|u₀|, √c₁)`, or `e^{λT} · sup|u₀|` when `c₁ = 0`.
    pub fn bound(&self, l_e: T, horizon: T, initial_sup: T) -> T {
        let base = if self.c1 > T::zero() {
            initial_sup.max(self.c1.sqrt())
        } else {
            initial_sup
        };
        (self.rate(l_e) * horizon).exp() * base
    }
}

/// Per-level monitors recorded while marching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<T> {
    /// `sup_x |θ(t_j, x)|`, in physical level order `j = 0..=N_t`.
    pub sup_norms: Vec<T>,
    /// `sup_x |∂_x θ(t_j, x)|` (Frobenius), in physical level order.
    pub gradient_sup_norms: Vec<T>,
    /// `sup |h·ξ|` of the imposed terminal data.
    pub initial_sup: T,
    pub constants: MaxPrincipleConstants<T>,
    /// `L_E = 2 ν(Z)`.
    pub l_e: T,
    pub lambda: T,
    pub bound: T,
    pub dt: T,
    /// Set when `Δt` exceeds the smallest grid spacing.
    pub coarse_time_step: bool,
    /// Physical levels whose sup norm exceeded the bound, in marching order.
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeOrientation {
    /// Level `j` holds `θ(t_j)`.
    Physical,
    /// Level `k` holds `u(s_k) = θ(T − s_k)`.
    Reversed,
}

/// Decoupling field `θ` and its spatial gradient on every time level.
#[derive(Clone)]
pub struct SolutionField<T> {
    spec: ProblemSpec<T>,
    config: SolverConfig<T>,
    values: Vec<Vec<T>>,
    gradients: Vec<Vec<T>>,
    orientation: TimeOrientation,
}

impl<T: Scalar> fmt::Debug for SolutionField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolutionField")
            .field("spec", &self.spec)
            .field("config", &self.config)
            .field("levels", &self.values.len())
            .field("orientation", &self.orientation)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> SolutionField<T> {
    /// Samples an analytic field `θ(t, x)` on the config's grid and time levels.
    pub fn from_fn(
        spec: &ProblemSpec<T>,
        config: &SolverConfig<T>,
        theta: impl Fn(T, &[T]) -> Vec<T>,
    ) -> Self {
        let horizon = spec.horizon();
        let steps = config.steps;
        let grid = &config.grid;
        let values: Vec<Vec<T>> = (0..=steps)
            .map(|j| {
                let t = level_time(horizon, steps, j);
                (0..grid.len()).flat_map(|node| theta(t, &grid.node(node))).collect()
            })
            .collect();
        Self::from_levels(spec.clone(), config.clone(), values)
    }

    fn from_levels(spec: ProblemSpec<T>, config: SolverConfig<T>, values: Vec<Vec<T>>) -> Self {
        let m = spec.m();
        let gradients = values
            .par_iter()
            .map(|v| gradient_values(&config.grid, m, v))
            .collect();
        Self {
            spec,
            config,
            values,
            gradients,
            orientation: TimeOrientation::Physical,
        }
    }

    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.config
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.config.grid
    }

    pub fn m(&self) -> usize {
        self.spec.m()
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn steps(&self) -> usize {
        self.config.steps
    }

    pub fn dt(&self) -> T {
        self.config.dt(self.spec.horizon())
    }

    pub fn orientation(&self) -> TimeOrientation {
        self.orientation
    }

    /// Physical time of level `j`.
    pub fn time(&self, j: usize) -> T {
        level_time(self.spec.horizon(), self.config.steps, j)
    }

    fn storage_index(&self, j: usize) -> usize {
        match self.orientation {
            TimeOrientation::Physical => j,
            TimeOrientation::Reversed => self.config.steps - j,
        }
    }

    /// `θ(t_j, ·)` at physical level `j`.
    pub fn snapshot(&self, j: usize) -> GridFunction<T> {
        GridFunction {
            grid: self.config.grid.clone(),
            m: self.m(),
            values: self.values[self.storage_index(j)].clone(),
            time: self.time(j),
        }
    }

    pub fn level_values(&self, j: usize) -> &[T] {
        &self.values[self.storage_index(j)]
    }

    pub fn level_gradients(&self, j: usize) -> &[T] {
        &self.gradients[self.storage_index(j)]
    }

    /// Reverses the storage order and flips the orientation tag.
    pub fn reindexed(&self) -> Self {
        let mut out = self.clone();
        out.values.reverse();
        out.gradients.reverse();
        out.orientation = match self.orientation {
            TimeOrientation::Physical => TimeOrientation::Reversed,
            TimeOrientation::Reversed => TimeOrientation::Physical,
        };
        out
    }

    /// The same field multiplied by `factor` (values and gradients).
    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut().chain(out.gradients.iter_mut()) {
            v.iter_mut().for_each(|a| *a *= factor);
        }
        out
    }

    /// Terminal data the field was solved with.
    pub fn terminal_value(&self, x: &[T]) -> Vec<T> {
        self.config.terminal_value(&self.spec, x)
    }

    /// Bracketing levels and weight for physical time `t` (clamped to `[0, T]`).
    pub(crate) fn bracket(&self, t: T) -> (usize, usize, T) {
        let steps = self.config.steps;
        let pos = (t / self.dt()).max(T::zero()).min(T::from_usize_lossy(steps));
        let j = pos.floor().to_usize().unwrap_or(0).min(steps - 1);
        let w = (pos - T::from_usize_lossy(j)).max(T::zero()).min(T::one());
        (j, j + 1, w)
    }

    fn interpolate_levels(&self, data: &[Vec<T>], comps: usize, t: T, x: &[T], out: &mut [T]) {
        let (j0, j1, w) = self.bracket(t);
        let grid = &self.config.grid;
        grid.interpolate_into(&data[self.storage_index(j0)], comps, x, out);
        if w > T::zero() {
            let mut upper = vec![T::zero(); comps];
            grid.interpolate_into(&data[self.storage_index(j1)], comps, x, &mut upper);
            for (o, u) in out.iter_mut().zip(upper) {
                *o = *o + w * (u - *o);
            }
        }
    }

    /// `θ(t, x)`: multilinear in space, linear in time.
    pub fn value_at(&self, t: T, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.m()];
        self.interpolate_levels(&self.values, self.m(), t, x, &mut out);
        out
    }

    /// `∂_x θ(t, x)` as an `m × n` matrix.
    pub fn gradient_at(&self, t: T, x: &[T]) -> Matrix<T> {
        let (m, n) = (self.m(), self.n());
        let mut out = vec![T::zero(); m * n];
        self.interpolate_levels(&self.gradients, m * n, t, x, &mut out);
        Matrix::from_row_slice(m, n, &out)
    }

    /// `ϑ_θ(t, x)(y_k) = θ(t, x + φ(t, x, θ(t,x), y_k)) − θ(t, x)` with `θ(t, x) = theta`.
    pub fn nonlocal_at(&self, t: T, x: &[T], theta: &[T]) -> AtomTable<T> {
        let measure = self.spec.measure();
        let mut table = AtomTable::zeros(measure.len(), self.m());
        let mut shifted = x.to_vec();
        for (k, y) in measure.marks().enumerate() {
            let phi = self.spec.jump(t, x, theta, y);
            for ((s, &xi), &p) in shifted.iter_mut().zip(x).zip(&phi) {
                *s = xi + p;
            }
            let shifted_value = self.value_at(t, &shifted);
            for ((r, a), &b) in table.row_mut(k).iter_mut().zip(shifted_value).zip(theta) {
                *r = a - b;
            }
        }
        table
    }

    pub fn sup_norm(&self, j: usize) -> T {
        sup_norm(self.level_values(j), self.m())
    }

    pub fn gradient_sup_norm(&self, j: usize) -> T {
        sup_norm(self.level_gradients(j), self.m() * self.n())
    }
}

pub(crate) fn level_time<T: Scalar>(horizon: T, steps: usize, j: usize) -> T {
    if j == steps {
        horizon
    } else {
        horizon * T::from_usize_lossy(j) / T::from_usize_lossy(steps)
    }
}

fn sup_norm<T: Scalar>(values: &[T], comps: usize) -> T {
    values
        .chunks(comps)
        .map(crate::scalar::norm)
        .fold(T::zero(), T::max)
}

/// Node-wise spatial gradient: central differences inside, one-sided second
/// order on the faces. Returned flat as `node × m × n` (row-major `m × n`).
pub fn spatial_gradient<T: Scalar>(u: &GridFunction<T>) -> Vec<T> {
    gradient_values(&u.grid, u.m, &u.values)
}

/// The gradient of [`spatial_gradient`] at one node as a matrix.
pub fn gradient_matrix<T: Scalar>(gradient: &[T], node: usize, m: usize, n: usize) -> Matrix<T> {
    Matrix::from_row_slice(m, n, &gradient[node * m * n..(node + 1) * m * n])
}

fn gradient_values<T: Scalar>(grid: &Grid<T>, m: usize, values: &[T]) -> Vec<T> {
    let n = grid.dim();
    let mut out = vec![T::zero(); grid.len() * m * n];
    let half = T::lit(0.5);
    let (three, four) = (T::lit(3.0), T::lit(4.0));
    out.par_chunks_mut(m * n).enumerate().for_each(|(node, g)| {
        let idx = grid.multi_index(node);
        for d in 0..n {
            let h = grid.spacing()[d];
            let stride = grid.stride(d);
            let last = grid.counts()[d] - 1;
            let at = |k: isize| -> usize { (node as isize + k * stride as isize) as usize };
            for c in 0..m {
                let v = |k: isize| values[at(k) * m + c];
                g[c * n + d] = if idx[d] == 0 {
                    (-three * v(0) + four * v(1) - v(2)) * half / h
                } else if idx[d] == last {
                    (three * v(0) - four * v(-1) + v(-2)) * half / h
                } else {
                    (v(1) - v(-1)) * half / h
                };
            }
        }
    });
    out
}

/// Per-node data gathered for the explicit part of one step.
struct NodeUpdate<T> {
    explicit: Vec<T>,
    diffusion: Vec<T>,
}

/// Advances `u_now` (reversed time `s = u_now.time`) by one step `Δt = T / N_t`.
pub fn step_imex<T: Scalar>(
    u_now: &GridFunction<T>,
    spec: &ProblemSpec<T>,
    config: &SolverConfig<T>,
) -> Result<GridFunction<T>> {
    let grid = &u_now.grid;
    let (n, m) = (grid.dim(), u_now.m);
    let s = u_now.time;
    let horizon = spec.horizon();
    let dt = config.dt(horizon);
    let s_next = s + dt;
    if !all_finite(&u_now.values) {
        return Err(Error::NonFiniteCoefficient(format!("input field at s = {s}")));
    }

    let gradient = spatial_gradient(u_now);
    let nonlocal = eval_nonlocal_reversed(u_now, spec, s)?;

    let updates: Vec<Result<Option<NodeUpdate<T>>>> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            if grid.is_boundary(node) {
                return Ok(None);
            }
            let x = grid.node(node);
            let u = u_now.at(node);
            let p = gradient_matrix(&gradient, node, m, n);
            let coeffs = assemble_coefficients(spec, s, &x, u, &p, &nonlocal.table(node))?;
            let mut explicit = vec![T::zero(); m];
            for c in 0..m {
                let mut e = -coeffs.reaction[c];
                for i in 0..n {
                    let b = coeffs.transport[i];
                    let h = grid.spacing()[i];
                    // central differences unless the cell Péclet number exceeds one
                    let slope = if b.abs() * h <= T::lit(2.0) * coeffs.diffusion[(i, i)] {
                        p[(c, i)]
                    } else {
                        let stride = grid.stride(i);
                        let here = u_now.values[node * m + c];
                        if b > T::zero() {
                            (here - u_now.values[(node - stride) * m + c]) / h
                        } else {
                            (u_now.values[(node + stride) * m + c] - here) / h
                        }
                    };
                    e -= b * slope;
                }
                explicit[c] = e;
            }
            // mixed second derivatives, central in both directions
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let a = coeffs.diffusion[(i, j)];
                    if a == T::zero() {
                        continue;
                    }
                    let (si, sj) = (grid.stride(i) as isize, grid.stride(j) as isize);
                    let at = |di: isize, dj: isize| (node as isize + di * si + dj * sj) as usize;
                    let scale = T::lit(0.25) / (grid.spacing()[i] * grid.spacing()[j]);
                    for c in 0..m {
                        let v = |k: usize| u_now.values[k * m + c];
                        let mixed = (v(at(1, 1)) - v(at(1, -1)) - v(at(-1, 1)) + v(at(-1, -1))) * scale;
                        explicit[c] += a * mixed;
                    }
                }
            }
            let diffusion: Vec<T> = (0..n).map(|d| coeffs.diffusion[(d, d)]).collect();
            if let Some(&bad) = diffusion.iter().find(|&&a| !(a > T::zero())) {
                return Err(Error::Ellipticity {
                    node,
                    value: bad.to_f64_lossy(),
                });
            }
            Ok(Some(NodeUpdate { explicit, diffusion }))
        })
        .collect();

    let mut rhs = vec![T::zero(); grid.len() * m];
    let mut diffusion = vec![T::zero(); grid.len() * n];
    for (node, update) in updates.into_iter().enumerate() {
        match update? {
            Some(up) => {
                for c in 0..m {
                    rhs[node * m + c] = u_now.values[node * m + c] + dt * up.explicit[c];
                }
                diffusion[node * n..(node + 1) * n].copy_from_slice(&up.diffusion);
            }
            None => {
                let b = config.boundary_value(horizon, s_next, &grid.node(node), m);
                rhs[node * m..(node + 1) * m].copy_from_slice(&b);
            }
        }
    }

    let values = match config.linear_solver {
        LinearSolver::Splitting => implicit_splitting(grid, m, dt, &diffusion, rhs)?,
        LinearSolver::Iterative => implicit_gauss_seidel(grid, m, dt, &diffusion, rhs, config)?,
    };
    Ok(GridFunction {
        grid: grid.clone(),
        m,
        values,
        time: s_next,
    })
}

/// `Π_d (I − Δt a_dd D²_d) u = rhs`, one tridiagonal sweep per axis.
fn implicit_splitting<T: Scalar>(
    grid: &Grid<T>,
    m: usize,
    dt: T,
    diffusion: &[T],
    mut values: Vec<T>,
) -> Result<Vec<T>> {
    let n = grid.dim();
    for d in 0..n {
        let len = grid.counts()[d];
        let stride = grid.stride(d);
        let r_scale = dt / (grid.spacing()[d] * grid.spacing()[d]);
        // line starts: nodes with index 0 along d that are interior on every other axis
        let starts: Vec<usize> = (0..grid.len())
            .filter(|&node| {
                let idx = grid.multi_index(node);
                idx[d] == 0
                    && idx
                        .iter()
                        .zip(grid.counts())
                        .enumerate()
                        .all(|(e, (&i, &c))| e == d || (i > 0 && i + 1 < c))
            })
            .collect();
        let solved: Vec<Result<Vec<(usize, Vec<T>)>>> = starts
            .par_iter()
            .map(|&start| {
                let mut lower = vec![T::zero(); len];
                let mut diag = vec![T::one(); len];
                let mut upper = vec![T::zero(); len];
                for i in 1..len - 1 {
                    let r = r_scale * diffusion[(start + i * stride) * n + d];
                    lower[i] = -r;
                    upper[i] = -r;
                    diag[i] = T::one() + r + r;
                }
                let mut scratch = Vec::with_capacity(len);
                let mut line = Vec::with_capacity(m);
                for c in 0..m {
                    let mut b: Vec<T> = (0..len).map(|i| values[(start + i * stride) * m + c]).collect();
                    solve_tridiagonal(&lower, &diag, &upper, &mut b, &mut scratch).map_err(|e| match e {
                        Error::Ellipticity { node, value } => Error::Ellipticity {
                            node: start + node * stride,
                            value,
                        },
                        other => other,
                    })?;
                    line.push((c, b));
                }
                Ok(line)
            })
            .collect();
        for (start, line) in starts.iter().zip(solved) {
            for (c, b) in line? {
                for (i, v) in b.into_iter().enumerate() {
                    values[(start + i * stride) * m + c] = v;
                }
            }
        }
    }
    Ok(values)
}

/// `(I − Δt Σ_d a_dd D²_d) u = rhs` by Gauss–Seidel sweeps.
fn implicit_gauss_seidel<T: Scalar>(
    grid: &Grid<T>,
    m: usize,
    dt: T,
    diffusion: &[T],
    rhs: Vec<T>,
    config: &SolverConfig<T>,
) -> Result<Vec<T>> {
    let n = grid.dim();
    let interior: Vec<usize> = (0..grid.len()).filter(|&k| !grid.is_boundary(k)).collect();
    let r_scale: Vec<T> = grid.spacing().iter().map(|&h| dt / (h * h)).collect();
    let mut u = rhs.clone();
    let scale = rhs.iter().fold(T::one(), |a, v| a.max(v.abs()));
    for iteration in 1..=config.max_iterations {
        let mut change = T::zero();
        for &node in &interior {
            let mut diag = T::one();
            let mut r: Vec<T> = Vec::with_capacity(n);
            for d in 0..n {
                let rd = r_scale[d] * diffusion[node * n + d];
                diag += rd + rd;
                r.push(rd);
            }
            for c in 0..m {
                let mut acc = rhs[node * m + c];
                for (d, &rd) in r.iter().enumerate() {
                    let s = grid.stride(d);
                    acc += rd * (u[(node + s) * m + c] + u[(node - s) * m + c]);
                }
                let new = acc / diag;
                change = change.max((new - u[node * m + c]).abs());
                u[node * m + c] = new;
            }
        }
        if change <= config.linear_tolerance * scale {
            return Ok(u);
        }
        if iteration == config.max_iterations {
            return Err(Error::LinearSolve {
                iterations: iteration,
                residual: change.to_f64_lossy(),
            });
        }
    }
    Ok(u)
}

/// Solves the final-value problem for `θ` on every level `t_j = jT/N_t`.
///
/// The reversed Cauchy problem is marched from `u(0) = h·ξ` (or `h` with
/// prescribed faces) to `s = T` and the snapshots are re-indexed as
/// `θ(t_j) = u(T − t_j)`.
pub fn solve_final_value<T: Scalar>(
    spec: &ProblemSpec<T>,
    config: &SolverConfig<T>,
    constants: MaxPrincipleConstants<T>,
) -> Result<(SolutionField<T>, Diagnostics<T>)> {
    config.validate(spec)?;
    let grid = &config.grid;
    let m = spec.m();
    let horizon = spec.horizon();
    let steps = config.steps;

    let initial: Vec<T> = (0..grid.len())
        .flat_map(|node| config.terminal_value(spec, &grid.node(node)))
        .collect();
    if initial.len() != grid.len() * m {
        return Err(Error::DimensionMismatch {
            expected: grid.len() * m,
            got: initial.len(),
            context: "terminal data",
        });
    }
    if !all_finite(&initial) {
        return Err(Error::BlowUp {
            level: steps,
            time: horizon.to_f64_lossy(),
        });
    }

    let mut reversed = Vec::with_capacity(steps + 1);
    let mut current = GridFunction {
        grid: grid.clone(),
        m,
        values: initial,
        time: T::zero(),
    };
    for k in 0..steps {
        current.time = level_time(horizon, steps, k);
        let next = step_imex(&current, spec, config)?;
        if !all_finite(&next.values) {
            return Err(Error::BlowUp {
                level: steps - (k + 1),
                time: (horizon - level_time(horizon, steps, k + 1)).to_f64_lossy(),
            });
        }
        reversed.push(std::mem::replace(&mut current, next).values);
    }
    reversed.push(current.values);
    reversed.reverse();

    let field = SolutionField::from_levels(spec.clone(), config.clone(), reversed);
    let sup_norms: Vec<T> = (0..=steps).map(|j| field.sup_norm(j)).collect();
    let gradient_sup_norms: Vec<T> = (0..=steps).map(|j| field.gradient_sup_norm(j)).collect();
    let initial_sup = sup_norms[steps];
    let l_e = T::lit(2.0) * spec.measure().total_mass();
    let lambda = constants.rate(l_e);
    let bound = constants.bound(l_e, horizon, initial_sup);
    let limit = bound * (T::one() + config.max_principle_tolerance);
    let violations = (0..=steps).rev().filter(|&j| sup_norms[j] > limit).collect();
    let dt = config.dt(horizon);
    let diagnostics = Diagnostics {
        sup_norms,
        gradient_sup_norms,
        initial_sup,
        constants,
        l_e,
        lambda,
        bound,
        dt,
        coarse_time_step: dt > grid.min_spacing(),
        violations,
    };
    Ok((field, diagnostics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleOutcome<T> {
    pub pass: bool,
    /// `bound − observed`.
    pub margin: T,
    pub bound: T,
    pub observed: T,
    pub lambda: T,
    /// First physical level, in marching order, whose sup norm exceeds the bound.
    pub first_violation: Option<usize>,
}

/// Checks `sup_{t,x} |θ| ≤ e^{λT} max(sup|h·ξ|, √c₁)` with `L_E = 2ν(Z)`.
///
/// The observed sup is read from the field, `sup|h·ξ|` from the diagnostics, so a
/// rescaled field is judged against the original data.
pub fn check_max_principle<T: Scalar>(
    field: &SolutionField<T>,
    diag: &Diagnostics<T>,
    constants: MaxPrincipleConstants<T>,
) -> MaxPrincipleOutcome<T> {
    let horizon = field.spec().horizon();
    let l_e = T::lit(2.0) * field.spec().measure().total_mass();
    let bound = constants.bound(l_e, horizon, diag.initial_sup);
    let limit = bound * (T::one() + field.config().max_principle_tolerance);
    let steps = field.steps();
    let sups: Vec<T> = (0..=steps).map(|j| field.sup_norm(j)).collect();
    let observed = sups.iter().copied().fold(T::zero(), T::max);
    let first_violation = (0..=steps).rev().find(|&j| sups[j] > limit);
    MaxPrincipleOutcome {
        pass: first_violation.is_none(),
        margin: bound - observed,
        bound,
        observed,
        lambda: constants.rate(l_e),
        first_violation,
    }
}
