//! Reconstruction of `(Y, Z, Z̃)` along forward paths, the backward residual,
//! the class-𝒮 norm estimate and the jump Itô identity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::nonlocal::GridFunction;
use crate::paths::{local_state, JumpPath, LocalState};
use crate::problem::{AtomTable, ProblemSpec};
use crate::scalar::Scalar;
use crate::solver::{spatial_gradient, SolutionField};

/// `(Y, Z, Z̃)` on the time levels and on every simulation segment of one path.
#[derive(Clone)]
pub struct LinkedProcesses<'a, T> {
    pub path: &'a JumpPath<T>,
    pub field: &'a SolutionField<T>,
    /// `Y_j = θ(t_j, X_j)`.
    pub y: Vec<Vec<T>>,
    /// `Z_j = ∂_xθ(t_j, X_j) σ(t_j, X_j, Y_j)`.
    pub z: Vec<Matrix<T>>,
    /// `Z̃_j = ϑ_θ(t_j, X_j)`.
    pub z_tilde: Vec<AtomTable<T>>,
    /// Link values at the start of each segment of `path.segments`.
    pub segment_links: Vec<SegmentLink<T>>,
    /// `ϑ_θ(τ, X_{τ−})` at each logged jump.
    pub jump_z_tilde: Vec<AtomTable<T>>,
}

#[derive(Debug, Clone)]
pub struct SegmentLink<T> {
    pub y: Vec<T>,
    pub z: Matrix<T>,
    pub z_tilde: AtomTable<T>,
}

impl<T: Scalar> From<LocalState<T>> for SegmentLink<T> {
    fn from(l: LocalState<T>) -> Self {
        Self {
            y: l.y,
            z: l.z,
            z_tilde: l.z_tilde,
        }
    }
}

impl<T: Scalar> LinkedProcesses<'_, T> {
    pub fn excluded(&self) -> bool {
        self.path.exited
    }
}

/// Evaluates the link formulas along `path`.
pub fn link_processes<'a, T: Scalar>(
    path: &'a JumpPath<T>,
    field: &'a SolutionField<T>,
    spec: &ProblemSpec<T>,
) -> LinkedProcesses<'a, T> {
    let levels: Vec<LocalState<T>> = path
        .times
        .iter()
        .zip(&path.states)
        .map(|(&t, x)| local_state(field, spec, t, x))
        .collect();
    let segment_links = path
        .segments
        .iter()
        .map(|s| local_state(field, spec, s.t, &s.x).into())
        .collect();
    let jump_z_tilde = path
        .jumps
        .iter()
        .map(|e| {
            let y = field.value_at(e.time, &e.pre);
            field.nonlocal_at(e.time, &e.pre, &y)
        })
        .collect();
    let mut y = Vec::with_capacity(levels.len());
    let mut z = Vec::with_capacity(levels.len());
    let mut z_tilde = Vec::with_capacity(levels.len());
    for l in levels {
        y.push(l.y);
        z.push(l.z);
        z_tilde.push(l.z_tilde);
    }
    LinkedProcesses {
        path,
        field,
        y,
        z,
        z_tilde,
        segment_links,
        jump_z_tilde,
    }
}

/// `R = Y_0 − [h(X_T) + Σ g δ − Σ Z δB − (Σ_jumps Z̃(y_k) − Σ δ Σ_k w_k Z̃(y_k))]`.
///
/// The terminal value is the data the field was solved with.
pub fn path_residual<T: Scalar>(linked: &LinkedProcesses<'_, T>, spec: &ProblemSpec<T>) -> Vec<T> {
    let path = linked.path;
    let m = spec.m();
    let measure = spec.measure();
    let mut generator = vec![T::zero(); m];
    let mut brownian = vec![T::zero(); m];
    let mut compensator = vec![T::zero(); m];
    for (seg, link) in path.segments.iter().zip(&linked.segment_links) {
        let g = spec.generator(seg.t, &seg.x, &link.y, &link.z, &link.z_tilde);
        let zdb = link.z.mul_vec(&seg.db);
        let nu = measure.integrate(&link.z_tilde).expect("link table matches the measure");
        for c in 0..m {
            generator[c] += g[c] * seg.dt;
            brownian[c] += zdb[c];
            compensator[c] += seg.dt * nu[c];
        }
    }
    let mut jumps = vec![T::zero(); m];
    for (event, table) in path.jumps.iter().zip(&linked.jump_z_tilde) {
        for (acc, &v) in jumps.iter_mut().zip(table.row(event.atom)) {
            *acc += v;
        }
    }
    let terminal = linked.field.terminal_value(path.terminal());
    (0..m)
        .map(|c| {
            let martingale = jumps[c] - compensator[c];
            linked.y[0][c] - (terminal[c] + generator[c] - brownian[c] - martingale)
        })
        .collect()
}

/// Ensemble statistics of the backward residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport<T> {
    /// Per-path residual vector; `None` for paths that left the grid.
    pub residuals: Vec<Option<Vec<T>>>,
    pub included: usize,
    pub excluded: usize,
    /// `sqrt(mean |R|²)` over included paths.
    pub rms: T,
    /// Component-wise sample mean.
    pub mean: Vec<T>,
    /// Component-wise standard error of the mean.
    pub stderr: Vec<T>,
    pub class_s_norm: Option<T>,
}

impl<T: Scalar> ResidualReport<T> {
    pub fn from_residuals(residuals: Vec<Option<Vec<T>>>, m: usize) -> Self {
        let kept: Vec<&Vec<T>> = residuals.iter().flatten().collect();
        let included = kept.len();
        let excluded = residuals.len() - included;
        let count = T::from_usize_lossy(included.max(1));
        let sq: T = kept.iter().map(|r| r.iter().map(|&v| v * v).sum::<T>()).sum();
        let rms = (sq / count).sqrt();
        let mean: Vec<T> = (0..m).map(|c| kept.iter().map(|r| r[c]).sum::<T>() / count).collect();
        let stderr = (0..m)
            .map(|c| {
                if included < 2 {
                    return T::zero();
                }
                let var = kept.iter().map(|r| (r[c] - mean[c]) * (r[c] - mean[c])).sum::<T>()
                    / T::from_usize_lossy(included - 1);
                (var / count).sqrt()
            })
            .collect();
        Self {
            residuals,
            included,
            excluded,
            rms,
            mean,
            stderr,
            class_s_norm: None,
        }
    }

    pub fn with_class_s_norm(mut self, norm: T) -> Self {
        self.class_s_norm = Some(norm);
        self
    }
}

/// Residuals of every linked path plus the class-𝒮 estimate over the included ones.
pub fn bsde_residual<T: Scalar>(linked: &[LinkedProcesses<'_, T>], spec: &ProblemSpec<T>) -> ResidualReport<T> {
    let residuals = linked
        .par_iter()
        .map(|l| (!l.excluded()).then(|| path_residual(l, spec)))
        .collect();
    let report = ResidualReport::from_residuals(residuals, spec.m());
    match estimate_class_s_norm(linked, spec) {
        Some(norm) => report.with_class_s_norm(norm),
        None => report,
    }
}

/// Per-level sums behind the class-𝒮 estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSAccumulator<T> {
    pub count: usize,
    pub dt: T,
    x_sq: Vec<T>,
    y_sq: Vec<T>,
    z_sq: Vec<T>,
    z_tilde_sq: Vec<T>,
}

impl<T: Scalar> ClassSAccumulator<T> {
    pub fn new(levels: usize, dt: T) -> Self {
        Self {
            count: 0,
            dt,
            x_sq: vec![T::zero(); levels],
            y_sq: vec![T::zero(); levels],
            z_sq: vec![T::zero(); levels],
            z_tilde_sq: vec![T::zero(); levels],
        }
    }

    pub fn add(&mut self, linked: &LinkedProcesses<'_, T>, spec: &ProblemSpec<T>) {
        let sq = |v: &[T]| v.iter().map(|&a| a * a).sum::<T>();
        for j in 0..self.x_sq.len() {
            self.x_sq[j] += sq(&linked.path.states[j]);
            self.y_sq[j] += sq(&linked.y[j]);
            let z = linked.z[j].frobenius_norm();
            self.z_sq[j] += z * z;
            self.z_tilde_sq[j] += spec.measure().norm_sq(&linked.z_tilde[j]);
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        for (a, b) in [
            (&mut self.x_sq, &other.x_sq),
            (&mut self.y_sq, &other.y_sq),
            (&mut self.z_sq, &other.z_sq),
            (&mut self.z_tilde_sq, &other.z_tilde_sq),
        ] {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
    }

    /// `max_j (E|X_j|² + E|Y_j|²) + Δt Σ_{j<N} (E|Z_j|² + E‖Z̃_j‖²_ν)`.
    pub fn finish(&self) -> Option<T> {
        if self.count == 0 {
            return None;
        }
        let n = T::from_usize_lossy(self.count);
        let sup = self
            .x_sq
            .iter()
            .zip(&self.y_sq)
            .map(|(&a, &b)| (a + b) / n)
            .fold(T::zero(), T::max);
        let last = self.x_sq.len() - 1;
        let integral: T = (0..last).map(|j| (self.z_sq[j] + self.z_tilde_sq[j]) / n).sum();
        Some(sup + self.dt * integral)
    }
}

/// Monte Carlo estimate of the class-𝒮 norm over the paths that stayed in the box.
pub fn estimate_class_s_norm<T: Scalar>(linked: &[LinkedProcesses<'_, T>], spec: &ProblemSpec<T>) -> Option<T> {
    let first = linked.iter().find(|l| !l.excluded())?;
    let path = first.path;
    let dt = path.times[1] - path.times[0];
    let mut acc = ClassSAccumulator::new(path.times.len(), dt);
    for l in linked.iter().filter(|l| !l.excluded()) {
        acc.add(l, spec);
    }
    acc.finish()
}

/// Outcome of simulating, linking and checking an ensemble path by path.
#[derive(Debug, Clone)]
pub struct Ensemble<T> {
    pub report: ResidualReport<T>,
    /// The first `keep` paths with their `Y_j`.
    pub kept: Vec<(JumpPath<T>, Vec<Vec<T>>)>,
    /// Whether `Y_j` reproduced `θ(t_j, X_j)` bit for bit on every path.
    pub link_exact: bool,
}

/// Simulates `count` paths on streams `(seed, i)`, links them and aggregates the
/// backward residual and the class-𝒮 norm without holding the whole ensemble.
///
/// Paths are processed in fixed chunks and reduced in chunk order, so the
/// result does not depend on the thread count.
pub fn run_ensemble<T: Scalar>(
    field: &SolutionField<T>,
    spec: &ProblemSpec<T>,
    x0: &[T],
    dt: T,
    seed: u64,
    count: usize,
    keep: usize,
) -> crate::error::Result<Ensemble<T>> {
    const CHUNK: usize = 128;
    let steps = crate::paths::steps_for(spec.horizon(), dt)?;
    let chunks: Vec<usize> = (0..count.div_ceil(CHUNK)).collect();
    type ChunkOut<T> = (Vec<Option<Vec<T>>>, ClassSAccumulator<T>, Vec<(JumpPath<T>, Vec<Vec<T>>)>, bool);
    let results: Vec<crate::error::Result<ChunkOut<T>>> = chunks
        .par_iter()
        .map(|&c| {
            let mut residuals = Vec::with_capacity(CHUNK);
            let mut acc = ClassSAccumulator::new(steps + 1, dt);
            let mut kept = Vec::new();
            let mut exact = true;
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                let stream = crate::paths::RngStream::new(seed, i as u64);
                let path = crate::paths::simulate_forward(field, spec, x0, dt, stream)?;
                let linked = link_processes(&path, field, spec);
                exact &= path
                    .times
                    .iter()
                    .zip(&path.states)
                    .zip(&linked.y)
                    .all(|((&t, x), y)| field.value_at(t, x) == *y);
                if linked.excluded() {
                    residuals.push(None);
                } else {
                    residuals.push(Some(path_residual(&linked, spec)));
                    acc.add(&linked, spec);
                }
                if i < keep {
                    let y = linked.y.clone();
                    drop(linked);
                    kept.push((path, y));
                }
            }
            Ok((residuals, acc, kept, exact))
        })
        .collect();
    let mut residuals = Vec::with_capacity(count);
    let mut acc = ClassSAccumulator::new(steps + 1, dt);
    let mut kept = Vec::new();
    let mut link_exact = true;
    for r in results {
        let (res, a, k, e) = r?;
        residuals.extend(res);
        acc.merge(&a);
        kept.extend(k);
        link_exact &= e;
    }
    let mut report = ResidualReport::from_residuals(residuals, spec.m());
    if let Some(norm) = acc.finish() {
        report = report.with_class_s_norm(norm);
    }
    Ok(Ensemble {
        report,
        kept,
        link_exact,
    })
}

/// Smooth scalar test function `φ(t, x)` for the Itô identity.
pub trait TestFunction<T: Scalar>: Send + Sync {
    fn value(&self, t: T, x: &[T]) -> T;
    fn time_derivative(&self, t: T, x: &[T]) -> T;
    fn gradient(&self, t: T, x: &[T]) -> Vec<T>;
    fn hessian(&self, t: T, x: &[T]) -> Matrix<T>;
}

type ScalarFn<T> = Box<dyn Fn(T, &[T]) -> T + Send + Sync>;
type VectorFn<T> = Box<dyn Fn(T, &[T]) -> Vec<T> + Send + Sync>;
type MatrixFn<T> = Box<dyn Fn(T, &[T]) -> Matrix<T> + Send + Sync>;

/// Test function with closed-form derivatives.
pub struct AnalyticTestFunction<T> {
    value: ScalarFn<T>,
    time_derivative: ScalarFn<T>,
    gradient: VectorFn<T>,
    hessian: MatrixFn<T>,
}

impl<T: Scalar> AnalyticTestFunction<T> {
    pub fn new(
        value: impl Fn(T, &[T]) -> T + Send + Sync + 'static,
        time_derivative: impl Fn(T, &[T]) -> T + Send + Sync + 'static,
        gradient: impl Fn(T, &[T]) -> Vec<T> + Send + Sync + 'static,
        hessian: impl Fn(T, &[T]) -> Matrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Box::new(value),
            time_derivative: Box::new(time_derivative),
            gradient: Box::new(gradient),
            hessian: Box::new(hessian),
        }
    }

    /// `a · x`.
    pub fn linear(a: Vec<T>) -> Self {
        let n = a.len();
        let a2 = a.clone();
        Self::new(
            move |_, x| a.iter().zip(x).map(|(&c, &v)| c * v).sum(),
            |_, _| T::zero(),
            move |_, _| a2.clone(),
            move |_, _| Matrix::zeros(n, n),
        )
    }

    /// `|x|²`.
    pub fn squared_norm(n: usize) -> Self {
        Self::new(
            |_, x| x.iter().map(|&v| v * v).sum(),
            |_, _| T::zero(),
            |_, x| x.iter().map(|&v| T::lit(2.0) * v).collect(),
            move |_, _| Matrix::identity(n).scale(T::lit(2.0)),
        )
    }
}

impl<T: Scalar> TestFunction<T> for AnalyticTestFunction<T> {
    fn value(&self, t: T, x: &[T]) -> T {
        (self.value)(t, x)
    }
    fn time_derivative(&self, t: T, x: &[T]) -> T {
        (self.time_derivative)(t, x)
    }
    fn gradient(&self, t: T, x: &[T]) -> Vec<T> {
        (self.gradient)(t, x)
    }
    fn hessian(&self, t: T, x: &[T]) -> Matrix<T> {
        (self.hessian)(t, x)
    }
}

/// One component of a solved field used as a test function.
///
/// Time derivatives are forward differences of consecutive snapshots; the
/// Hessian is the spatial gradient of the stored gradient field.
pub struct FieldComponent<'a, T> {
    field: &'a SolutionField<T>,
    component: usize,
    hessians: Vec<Vec<T>>,
}

impl<'a, T: Scalar> FieldComponent<'a, T> {
    pub fn new(field: &'a SolutionField<T>, component: usize) -> Self {
        assert!(component < field.m(), "component out of range");
        let (m, n) = (field.m(), field.n());
        let hessians = (0..=field.steps())
            .into_par_iter()
            .map(|j| {
                let grads = GridFunction {
                    grid: field.grid().clone(),
                    m: m * n,
                    values: field.level_gradients(j).to_vec(),
                    time: field.time(j),
                };
                let second = spatial_gradient(&grads);
                // keep the n×n block of the chosen component, symmetrized
                let block = m * n * n;
                second
                    .chunks(block)
                    .flat_map(|node| {
                        let h = &node[component * n * n..(component + 1) * n * n];
                        (0..n * n)
                            .map(|ab| {
                                let (a, b) = (ab / n, ab % n);
                                T::lit(0.5) * (h[a * n + b] + h[b * n + a])
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect()
            })
            .collect();
        Self {
            field,
            component,
            hessians,
        }
    }
}

impl<T: Scalar> TestFunction<T> for FieldComponent<'_, T> {
    fn value(&self, t: T, x: &[T]) -> T {
        self.field.value_at(t, x)[self.component]
    }

    fn time_derivative(&self, t: T, x: &[T]) -> T {
        let (j0, j1, _) = self.field.bracket(t);
        let grid = self.field.grid();
        let m = self.field.m();
        let a = grid.interpolate(self.field.level_values(j0), m, x)[self.component];
        let b = grid.interpolate(self.field.level_values(j1), m, x)[self.component];
        (b - a) / (self.field.time(j1) - self.field.time(j0))
    }

    fn gradient(&self, t: T, x: &[T]) -> Vec<T> {
        self.field.gradient_at(t, x).row(self.component).to_vec()
    }

    fn hessian(&self, t: T, x: &[T]) -> Matrix<T> {
        let n = self.field.n();
        let (j0, j1, w) = self.field.bracket(t);
        let grid = self.field.grid();
        let a = grid.interpolate(&self.hessians[j0], n * n, x);
        let b = grid.interpolate(&self.hessians[j1], n * n, x);
        let h: Vec<T> = a.iter().zip(&b).map(|(&p, &q)| p + w * (q - p)).collect();
        Matrix::from_row_slice(n, n, &h)
    }
}

/// Discretized jump Itô identity for `φ(t, X_t)` along `path`.
///
/// Returns `φ(T, X_T) − φ(0, x)` minus the segment sums of `∂_tφ δ`, `∇φ·f δ`,
/// `½ tr(∇²φ σσᵀ) δ`, `∇φ·σ δB`, the compensator integrand
/// `δ Σ_k w_k [φ(X + Φ_k) − φ(X) − ∇φ·Φ_k]`, and the compensated jump sum.
pub fn ito_residual<T: Scalar>(
    path: &JumpPath<T>,
    field: &SolutionField<T>,
    spec: &ProblemSpec<T>,
    test: &dyn TestFunction<T>,
) -> T {
    let measure = spec.measure();
    let half = T::lit(0.5);
    let mut rhs = T::zero();
    for seg in &path.segments {
        let (t, x, dt) = (seg.t, &seg.x, seg.dt);
        let local = local_state(field, spec, t, x);
        let f = spec.drift(t, x, &local.y, &local.z, &local.z_tilde);
        let grad = test.gradient(t, x);
        let hess = test.hessian(t, x);
        let a = local.sigma.gram();
        let dot = |u: &[T], v: &[T]| u.iter().zip(v).map(|(&p, &q)| p * q).sum::<T>();
        let trace = hess.matmul(&a).trace();
        let phi_x = test.value(t, x);
        let mut compensator = T::zero();
        let mut compensated = T::zero();
        for (k, mark) in measure.marks().enumerate() {
            let shift = spec.jump(t, x, &local.y, mark);
            let moved: Vec<T> = x.iter().zip(&shift).map(|(&p, &q)| p + q).collect();
            let diff = test.value(t, &moved) - phi_x;
            compensator += measure.weight(k) * (diff - dot(&grad, &shift));
            compensated += measure.weight(k) * diff;
        }
        rhs += test.time_derivative(t, x) * dt
            + dot(&grad, &f) * dt
            + half * trace * dt
            + dot(&grad, &local.sigma.mul_vec(&seg.db))
            + compensator * dt
            - compensated * dt;
    }
    for e in &path.jumps {
        rhs += test.value(e.time, &e.post) - test.value(e.time, &e.pre);
    }
    let horizon = spec.horizon();
    test.value(horizon, path.terminal()) - test.value(T::zero(), path.initial()) - rhs
}
