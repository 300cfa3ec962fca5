//! FBSDE problem data and sampled checks of the standing assumptions.
//!
//! The coefficients `f, g, σ, φ, h` are plain closures. The space of jump
//! integrands `L₂(ν)` is represented by an [`AtomTable`]: one `m`-vector per atom
//! of the (always atomic) Lévy measure, with `‖w‖²_ν = Σ_k w_k |w(y_k)|²`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen_bounds, Matrix};
use crate::scalar::{norm, Scalar};

/// `(t, x, u, p, w) -> R^k`, the signature shared by the drift `f` and the generator `g`.
pub type CoefficientFn<T> =
    Arc<dyn Fn(T, &[T], &[T], &Matrix<T>, &AtomTable<T>) -> Vec<T> + Send + Sync>;
/// `(t, x, u) -> R^{n×n}`.
pub type DiffusionFn<T> = Arc<dyn Fn(T, &[T], &[T]) -> Matrix<T> + Send + Sync>;
/// `(t, x, u, y) -> R^n`.
pub type JumpFn<T> = Arc<dyn Fn(T, &[T], &[T], &[T]) -> Vec<T> + Send + Sync>;
/// `x -> R^m`.
pub type TerminalFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

/// Finite-activity Lévy measure `ν = Σ_k w_k δ_{y_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasure<T> {
    marks: Vec<Vec<T>>,
    weights: Vec<T>,
    total_mass: T,
}

impl<T: Scalar> LevyMeasure<T> {
    pub fn new(atoms: Vec<(Vec<T>, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("atom list is empty".into()));
        }
        let dim = atoms[0].0.len();
        if dim == 0 {
            return Err(Error::InvalidMeasure("marks must have dimension ≥ 1".into()));
        }
        let mut marks = Vec::with_capacity(atoms.len());
        let mut weights = Vec::with_capacity(atoms.len());
        for (k, (mark, weight)) in atoms.into_iter().enumerate() {
            if mark.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: mark.len(),
                    context: "mark dimension",
                });
            }
            if !(weight > T::zero()) || !weight.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "atom {k} has non-positive weight {weight}"
                )));
            }
            if mark.iter().all(|&c| c == T::zero()) {
                return Err(Error::InvalidMeasure(format!(
                    "atom {k} sits at the origin"
                )));
            }
            if !crate::scalar::all_finite(&mark) {
                return Err(Error::InvalidMeasure(format!("atom {k} has a non-finite mark")));
            }
            marks.push(mark);
            weights.push(weight);
        }
        let total_mass = weights.iter().copied().sum();
        Ok(Self {
            marks,
            weights,
            total_mass,
        })
    }

    /// Scalar marks with the given weights (`l = 1`).
    pub fn scalar(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            atoms
                .iter()
                .map(|&(y, w)| (vec![T::lit(y)], T::lit(w)))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mark_dim(&self) -> usize {
        self.marks[0].len()
    }

    pub fn mark(&self, k: usize) -> &[T] {
        &self.marks[k]
    }

    pub fn weight(&self, k: usize) -> T {
        self.weights[k]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn marks(&self) -> impl Iterator<Item = &[T]> {
        self.marks.iter().map(Vec::as_slice)
    }

    /// `ν(Z)`, the Poisson arrival rate.
    pub fn total_mass(&self) -> T {
        self.total_mass
    }

    /// `∫ w dν = Σ_k w_k w(y_k)`.
    pub fn integrate(&self, table: &AtomTable<T>) -> Result<Vec<T>> {
        if table.atoms() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: table.atoms(),
                context: "atom table rows vs measure atoms",
            });
        }
        let mut out = vec![T::zero(); table.dim()];
        for (k, &w) in self.weights.iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(table.row(k)) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// `‖w‖²_ν = Σ_k w_k |w(y_k)|²`.
    pub fn norm_sq(&self, table: &AtomTable<T>) -> T {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, &w)| w * table.row(k).iter().map(|&v| v * v).sum::<T>())
            .sum()
    }
}

/// Free-function form of [`LevyMeasure::total_mass`].
pub fn total_mass<T: Scalar>(measure: &LevyMeasure<T>) -> T {
    measure.total_mass()
}

/// Per-atom value table: `atoms` rows of `dim`-vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomTable<T> {
    atoms: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> AtomTable<T> {
    pub fn zeros(atoms: usize, dim: usize) -> Self {
        Self {
            atoms,
            dim,
            data: vec![T::zero(); atoms * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == dim), "ragged atom table");
        Self {
            atoms: rows.len(),
            dim,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn constant(atoms: usize, value: &[T]) -> Self {
        Self {
            atoms,
            dim: value.len(),
            data: value.iter().copied().cycle().take(atoms * value.len()).collect(),
        }
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// The coefficient bundle `(f, g, σ, φ, h)` of a coupled FBSDE with jumps.
///
/// The Brownian motion has the same dimension `n` as the forward state.
#[derive(Clone)]
pub struct ProblemSpec<T> {
    n: usize,
    m: usize,
    horizon: T,
    drift: CoefficientFn<T>,
    generator: CoefficientFn<T>,
    diffusion: DiffusionFn<T>,
    jump: JumpFn<T>,
    terminal: TerminalFn<T>,
    measure: LevyMeasure<T>,
    ellipticity_lower: T,
    ellipticity_upper: T,
}

impl<T: Scalar> fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("l", &self.l())
            .field("horizon", &self.horizon)
            .field("measure", &self.measure)
            .field("ellipticity", &(self.ellipticity_lower, self.ellipticity_upper))
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> ProblemSpec<T> {
    /// Starts a builder with `f = g = φ = 0`, `σ = I` and `h = 0`.
    pub fn builder(n: usize, m: usize, horizon: T, measure: LevyMeasure<T>) -> ProblemSpecBuilder<T> {
        ProblemSpecBuilder::new(n, m, horizon, measure)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.measure.mark_dim()
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn measure(&self) -> &LevyMeasure<T> {
        &self.measure
    }

    /// Declared `(μ̂, μ)` with `μ̂ I ≤ σσᵀ ≤ μ I` on the working range.
    pub fn ellipticity_bounds(&self) -> (T, T) {
        (self.ellipticity_lower, self.ellipticity_upper)
    }

    pub fn drift(&self, t: T, x: &[T], u: &[T], p: &Matrix<T>, w: &AtomTable<T>) -> Vec<T> {
        (self.drift)(t, x, u, p, w)
    }

    pub fn generator(&self, t: T, x: &[T], u: &[T], p: &Matrix<T>, w: &AtomTable<T>) -> Vec<T> {
        (self.generator)(t, x, u, p, w)
    }

    pub fn diffusion(&self, t: T, x: &[T], u: &[T]) -> Matrix<T> {
        (self.diffusion)(t, x, u)
    }

    pub fn jump(&self, t: T, x: &[T], u: &[T], y: &[T]) -> Vec<T> {
        (self.jump)(t, x, u, y)
    }

    /// `φ(t, x, u, y_k)` for every atom, in atom order.
    pub fn jumps_per_atom(&self, t: T, x: &[T], u: &[T]) -> Vec<Vec<T>> {
        self.measure.marks().map(|y| (self.jump)(t, x, u, y)).collect()
    }

    pub fn terminal(&self, x: &[T]) -> Vec<T> {
        (self.terminal)(x)
    }

    /// Same problem with a different terminal function.
    pub fn with_terminal(&self, terminal: TerminalFn<T>) -> Self {
        Self {
            terminal,
            ..self.clone()
        }
    }
}

pub struct ProblemSpecBuilder<T> {
    spec: ProblemSpec<T>,
}

impl<T: Scalar> ProblemSpecBuilder<T> {
    fn new(n: usize, m: usize, horizon: T, measure: LevyMeasure<T>) -> Self {
        let zero_n: CoefficientFn<T> = Arc::new(move |_, _, _, _, _| vec![T::zero(); n]);
        let zero_m: CoefficientFn<T> = Arc::new(move |_, _, _, _, _| vec![T::zero(); m]);
        Self {
            spec: ProblemSpec {
                n,
                m,
                horizon,
                drift: zero_n,
                generator: zero_m,
                diffusion: Arc::new(move |_, _, _| Matrix::identity(n)),
                jump: Arc::new(move |_, _, _, _| vec![T::zero(); n]),
                terminal: Arc::new(move |_| vec![T::zero(); m]),
                measure,
                ellipticity_lower: T::one(),
                ellipticity_upper: T::one(),
            },
        }
    }

    pub fn drift(
        mut self,
        f: impl Fn(T, &[T], &[T], &Matrix<T>, &AtomTable<T>) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        self.spec.drift = Arc::new(f);
        self
    }

    pub fn generator(
        mut self,
        g: impl Fn(T, &[T], &[T], &Matrix<T>, &AtomTable<T>) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        self.spec.generator = Arc::new(g);
        self
    }

    pub fn diffusion(mut self, sigma: impl Fn(T, &[T], &[T]) -> Matrix<T> + Send + Sync + 'static) -> Self {
        self.spec.diffusion = Arc::new(sigma);
        self
    }

    pub fn jump(mut self, phi: impl Fn(T, &[T], &[T], &[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        self.spec.jump = Arc::new(phi);
        self
    }

    pub fn terminal(mut self, h: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        self.spec.terminal = Arc::new(h);
        self
    }

    pub fn ellipticity(mut self, lower: T, upper: T) -> Self {
        self.spec.ellipticity_lower = lower;
        self.spec.ellipticity_upper = upper;
        self
    }

    pub fn build(self) -> Result<ProblemSpec<T>> {
        let s = self.spec;
        if !(s.horizon > T::zero()) || !s.horizon.is_finite() {
            return Err(Error::InvalidProblem(format!("horizon must be positive, got {}", s.horizon)));
        }
        if s.n == 0 || s.m == 0 {
            return Err(Error::InvalidProblem("dimensions n and m must be ≥ 1".into()));
        }
        if !(s.ellipticity_lower > T::zero()) || s.ellipticity_upper < s.ellipticity_lower {
            return Err(Error::InvalidProblem(format!(
                "ellipticity bounds must satisfy 0 < μ̂ ≤ μ, got ({}, {})",
                s.ellipticity_lower, s.ellipticity_upper
            )));
        }
        Ok(s)
    }
}

/// Outcome of one sampled assumption check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionEntry {
    pub name: String,
    pub samples: usize,
    /// Largest `lhs − rhs` over all samples and inequalities; `≤ 0` means satisfied.
    pub worst_margin: f64,
    pub pass: bool,
    /// Worst margin of each individual inequality that makes up the entry.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<(String, f64)>,
}

impl AssumptionEntry {
    fn new(name: &str, samples: usize, parts: Vec<(String, f64)>) -> Self {
        let worst_margin = parts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        Self {
            name: name.to_string(),
            samples,
            worst_margin,
            pass: worst_margin <= 0.0,
            parts,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub entries: Vec<AssumptionEntry>,
}

impl AssumptionReport {
    pub fn push(&mut self, entry: AssumptionEntry) {
        self.entries.push(entry);
    }

    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

fn max_margin(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

/// Samples `μ̂ I ≤ σσᵀ ≤ μ I` at the given `(t, x, u)` points.
pub fn check_ellipticity<T: Scalar>(
    spec: &ProblemSpec<T>,
    samples: &[(T, Vec<T>, Vec<T>)],
) -> Result<AssumptionEntry> {
    if samples.is_empty() {
        return Err(Error::InvalidProblem("ellipticity check needs sample points".into()));
    }
    let (lower, upper) = spec.ellipticity_bounds();
    let bounds: Vec<(T, T)> = samples
        .par_iter()
        .map(|(t, x, u)| symmetric_eigen_bounds(&spec.diffusion(*t, x, u).gram()))
        .collect();
    if let Some((sample, &(lo, _))) = bounds
        .iter()
        .enumerate()
        .find(|(_, (lo, _))| !(*lo > T::zero()))
    {
        return Err(Error::DegenerateDiffusion {
            sample,
            lambda_min: lo.to_f64_lossy(),
        });
    }
    let low = max_margin(bounds.iter().map(|(lo, _)| (lower - *lo).to_f64_lossy()));
    let high = max_margin(bounds.iter().map(|(_, hi)| (*hi - upper).to_f64_lossy()));
    Ok(AssumptionEntry::new(
        "B1",
        samples.len(),
        vec![("lower".into(), low), ("upper".into(), high)],
    ))
}

/// One `(t, x, u, p, w)` point for [`check_growth`].
#[derive(Debug, Clone)]
pub struct GrowthSample<T> {
    pub t: T,
    pub x: Vec<T>,
    pub u: Vec<T>,
    pub p: Matrix<T>,
    pub w: AtomTable<T>,
}

/// User-supplied growth envelopes `η(|u|, ‖w‖)`, `ε(|u|, ‖w‖)`, `P(|u|, |p|, ‖w‖)`, `ς(|u|)`.
#[derive(Clone)]
pub struct GrowthEnvelopes<T> {
    pub eta: Arc<dyn Fn(T, T) -> T + Send + Sync>,
    pub epsilon: Arc<dyn Fn(T, T) -> T + Send + Sync>,
    pub p: Arc<dyn Fn(T, T, T) -> T + Send + Sync>,
    pub varsigma: Arc<dyn Fn(T) -> T + Send + Sync>,
}

impl<T: Scalar> GrowthEnvelopes<T> {
    /// Constant envelopes.
    pub fn constant(eta: T, epsilon: T, p: T, varsigma: T) -> Self {
        Self {
            eta: Arc::new(move |_, _| eta),
            epsilon: Arc::new(move |_, _| epsilon),
            p: Arc::new(move |_, _, _| p),
            varsigma: Arc::new(move |_| varsigma),
        }
    }
}

/// Samples the growth conditions on `f`, `g` and `∫φ dν`.
///
/// Violations are reported through the margins, never as errors.
pub fn check_growth<T: Scalar>(
    spec: &ProblemSpec<T>,
    samples: &[GrowthSample<T>],
    env: &GrowthEnvelopes<T>,
) -> Result<AssumptionEntry> {
    if samples.is_empty() {
        return Err(Error::InvalidProblem("growth check needs sample points".into()));
    }
    let margins: Vec<Result<[f64; 3]>> = samples
        .par_iter()
        .map(|s| {
            let u_abs = norm(&s.u);
            let p_abs = s.p.frobenius_norm();
            let w_norm = spec.measure().norm_sq(&s.w).sqrt();
            let one_p = T::one() + p_abs;
            let f = norm(&spec.drift(s.t, &s.x, &s.u, &s.p, &s.w));
            let g = norm(&spec.generator(s.t, &s.x, &s.u, &s.p, &s.w));
            let jumps = AtomTable::from_rows(&spec.jumps_per_atom(s.t, &s.x, &s.u));
            let phi = norm(&spec.measure().integrate(&jumps)?);
            let f_margin = f - (env.eta)(u_abs, w_norm) * one_p;
            let g_margin =
                g - ((env.epsilon)(u_abs, w_norm) + (env.p)(u_abs, p_abs, w_norm)) * one_p * one_p;
            let phi_margin = phi - (env.varsigma)(u_abs);
            Ok([
                f_margin.to_f64_lossy(),
                g_margin.to_f64_lossy(),
                phi_margin.to_f64_lossy(),
            ])
        })
        .collect();
    let margins = margins.into_iter().collect::<Result<Vec<_>>>()?;
    let part = |i: usize| max_margin(margins.iter().map(|m| m[i]));
    Ok(AssumptionEntry::new(
        "B5",
        samples.len(),
        vec![
            ("drift".into(), part(0)),
            ("generator".into(), part(1)),
            ("jump".into(), part(2)),
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_measure() -> LevyMeasure<f64> {
        LevyMeasure::scalar(&[(1.0, 1.0)]).unwrap()
    }

    fn sigma_spec(sigma: Matrix<f64>, lower: f64, upper: f64) -> ProblemSpec<f64> {
        let n = sigma.rows();
        ProblemSpec::builder(n, 1, 1.0, unit_measure())
            .diffusion(move |_, _, _| sigma.clone())
            .ellipticity(lower, upper)
            .build()
            .unwrap()
    }

    fn samples(n: usize) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        vec![(0.0, vec![0.0; n], vec![0.0]), (0.5, vec![1.0; n], vec![2.0])]
    }

    #[test]
    fn total_mass_examples() {
        assert_eq!(total_mass(&LevyMeasure::<f64>::scalar(&[(1.0, 2.0)]).unwrap()), 2.0);
        assert_eq!(
            total_mass(&LevyMeasure::<f64>::scalar(&[(1.0, 0.5), (-1.0, 0.5)]).unwrap()),
            1.0
        );
        let k = 8;
        let atoms: Vec<(f64, f64)> = (1..=k).map(|i| (i as f64, 1.0 / k as f64)).collect();
        assert!((total_mass(&LevyMeasure::<f64>::scalar(&atoms).unwrap()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn measure_rejects_bad_atoms() {
        assert!(LevyMeasure::<f64>::new(vec![]).is_err());
        assert!(LevyMeasure::<f64>::scalar(&[(0.0, 1.0)]).is_err());
        assert!(LevyMeasure::<f64>::scalar(&[(1.0, 0.0)]).is_err());
        assert!(LevyMeasure::<f64>::scalar(&[(1.0, -1.0)]).is_err());
        assert!(LevyMeasure::<f64>::new(vec![(vec![1.0], 1.0), (vec![1.0, 2.0], 1.0)]).is_err());
    }

    #[test]
    fn builder_validates() {
        assert!(ProblemSpec::builder(1, 1, 0.0, unit_measure()).build().is_err());
        assert!(ProblemSpec::builder(0, 1, 1.0, unit_measure()).build().is_err());
        assert!(ProblemSpec::builder(1, 1, 1.0, unit_measure())
            .ellipticity(2.0, 1.0)
            .build()
            .is_err());
    }

    #[test]
    fn ellipticity_identity_is_tight() {
        let spec = sigma_spec(Matrix::identity(2), 1.0, 1.0);
        let e = check_ellipticity(&spec, &samples(2)).unwrap();
        assert!(e.pass);
        assert_eq!(e.worst_margin, 0.0);
    }

    #[test]
    fn ellipticity_diagonal() {
        let spec = sigma_spec(Matrix::diagonal(&[1.0, 2.0]), 1.0, 4.0);
        let e = check_ellipticity(&spec, &samples(2)).unwrap();
        assert!(e.pass);
        assert_eq!(e.parts[0].1, 0.0);
        assert_eq!(e.parts[1].1, 0.0);
    }

    #[test]
    fn ellipticity_reports_violation() {
        let spec = sigma_spec(Matrix::diagonal(&[1.0, 2.0]), 1.0, 3.0);
        let e = check_ellipticity(&spec, &samples(2)).unwrap();
        assert!(!e.pass);
        assert!((e.worst_margin - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ellipticity_zero_sigma_is_degenerate() {
        let spec = sigma_spec(Matrix::zeros(2, 2), 1.0, 1.0);
        assert!(matches!(
            check_ellipticity(&spec, &samples(2)),
            Err(Error::DegenerateDiffusion { sample: 0, .. })
        ));
    }

    fn growth_sample(p: f64) -> GrowthSample<f64> {
        GrowthSample {
            t: 0.0,
            x: vec![0.3],
            u: vec![0.5],
            p: Matrix::from_row_slice(1, 1, &[p]),
            w: AtomTable::constant(1, &[0.0]),
        }
    }

    #[test]
    fn growth_zero_coefficients_pass() {
        let spec = ProblemSpec::builder(1, 1, 1.0, unit_measure()).build().unwrap();
        let env = GrowthEnvelopes::constant(0.1, 0.1, 0.1, 0.1);
        let e = check_growth(&spec, &[growth_sample(1.0), growth_sample(-3.0)], &env).unwrap();
        assert!(e.pass);
    }

    #[test]
    fn growth_linear_drift_unit_envelope() {
        let spec = ProblemSpec::builder(1, 1, 1.0, unit_measure())
            .drift(|_, _, _, p, _| vec![p[(0, 0)]])
            .build()
            .unwrap();
        let env = GrowthEnvelopes::constant(1.0, 1.0, 0.0, 1.0);
        let e = check_growth(&spec, &[growth_sample(2.0), growth_sample(-5.0)], &env).unwrap();
        assert!(e.pass);
        // |p| − (1 + |p|) = −1 at every sample
        assert_eq!(e.parts[0].1, -1.0);
    }

    #[test]
    fn growth_cubic_generator_fails_quadratic_envelope() {
        let spec = ProblemSpec::builder(1, 1, 1.0, unit_measure())
            .generator(|_, _, _, p, _| vec![p[(0, 0)].abs().powi(3)])
            .build()
            .unwrap();
        let env = GrowthEnvelopes::constant(1.0, 1.0, 0.0, 1.0);
        let e = check_growth(&spec, &[growth_sample(10.0)], &env).unwrap();
        assert!(!e.pass);
        // 10³ − (1 + 0)(1 + 10)² = 1000 − 121
        assert_eq!(e.worst_margin, 879.0);
    }

    fn rotation(angle: f64) -> Matrix<f64> {
        let (s, c) = angle.sin_cos();
        Matrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    proptest! {
        #[test]
        fn total_mass_is_permutation_invariant(
            weights in prop::collection::vec(0.01f64..10.0, 1..12),
            shift in 0usize..12,
        ) {
            let atoms: Vec<(f64, f64)> = weights.iter().enumerate().map(|(i, &w)| (i as f64 + 1.0, w)).collect();
            let mut rotated = atoms.clone();
            rotated.rotate_left(shift % atoms.len());
            rotated.reverse();
            let a = LevyMeasure::<f64>::scalar(&atoms).unwrap().total_mass();
            let b = LevyMeasure::<f64>::scalar(&rotated).unwrap().total_mass();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn ellipticity_invariant_under_orthogonal_factor(
            entries in prop::collection::vec(-2.0f64..2.0, 4),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let mut sigma = Matrix::from_row_slice(2, 2, &entries);
            sigma[(0, 0)] += 5.0;
            sigma[(1, 1)] += 5.0;
            let rotated = sigma.matmul(&rotation(angle));
            let a = check_ellipticity(&sigma_spec(sigma, 1.0, 10.0), &samples(2)).unwrap();
            let b = check_ellipticity(&sigma_spec(rotated, 1.0, 10.0), &samples(2)).unwrap();
            for (pa, pb) in a.parts.iter().zip(&b.parts) {
                prop_assert!((pa.1 - pb.1).abs() < 1e-9);
            }
        }

        #[test]
        fn adding_samples_never_turns_failure_into_pass(
            ps in prop::collection::vec(-12.0f64..12.0, 1..6),
            extra in prop::collection::vec(-12.0f64..12.0, 0..6),
        ) {
            let spec = ProblemSpec::builder(1, 1, 1.0, unit_measure())
                .generator(|_, _, _, p, _| vec![p[(0, 0)].abs().powi(3)])
                .build()
                .unwrap();
            let env = GrowthEnvelopes::constant(1.0, 1.0, 0.0, 1.0);
            let base: Vec<_> = ps.iter().map(|&p| growth_sample(p)).collect();
            let mut more = base.clone();
            more.extend(extra.iter().map(|&p| growth_sample(p)));
            let a = check_growth(&spec, &base, &env).unwrap();
            let b = check_growth(&spec, &more, &env).unwrap();
            prop_assert!(b.worst_margin >= a.worst_margin);
            prop_assert!(a.pass || !b.pass);
        }
    }
}
