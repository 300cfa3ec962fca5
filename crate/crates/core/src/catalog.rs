//! Benchmark problems with default discretizations, constants and oracles.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nonlocal::Grid;
use crate::problem::{AtomTable, GrowthSample, LevyMeasure, ProblemSpec};
use crate::scalar::Scalar;
use crate::solver::{BoundaryMode, Cutoff, MaxPrincipleConstants, SolverConfig};

/// Closed-form decoupling field `θ(t, x)`.
pub type Oracle<T> = Arc<dyn Fn(T, &[T]) -> Vec<T> + Send + Sync>;

/// One rung of a refinement ladder: grid nodes per axis, solver steps and
/// optionally the number of path steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rung {
    pub nodes: usize,
    pub steps: usize,
    pub path_steps: Option<usize>,
}

impl Rung {
    pub const fn new(nodes: usize, steps: usize) -> Self {
        Self {
            nodes,
            steps,
            path_steps: None,
        }
    }

    pub const fn with_paths(nodes: usize, steps: usize, path_steps: usize) -> Self {
        Self {
            nodes,
            steps,
            path_steps: Some(path_steps),
        }
    }
}

/// Static description of a catalog entry.
#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Tunable parameters with their defaults.
    pub params: &'static [(&'static str, f64)],
    pub oracle: Option<&'static str>,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "heat",
        summary: "n = m = 1, σ = 1, f = g = φ = 0, h = sin on [0, π] with zero faces",
        params: &[("horizon", 1.0)],
        oracle: Some("θ(t, x) = exp(−(T − t)/2) sin x"),
    },
    CatalogEntry {
        name: "heat-2d",
        summary: "n = 2, m = 1, σ = I, h = sin x sin y on [0, π]² with zero faces",
        params: &[("horizon", 1.0)],
        oracle: Some("θ(t, x, y) = exp(−(T − t)) sin x sin y"),
    },
    CatalogEntry {
        name: "manufactured-nonlocal",
        summary: "state-dependent σ and φ, forcing g chosen so that θ* = exp(−t) cos x on [−2, 2]",
        params: &[("horizon", 1.0)],
        oracle: Some("θ(t, x) = exp(−t) cos x"),
    },
    CatalogEntry {
        name: "pure-jump",
        summary: "small σ, f = g = 0, φ = y, single atom y = 1, h = exp(−x²/2), cutoff box [−10, 10]",
        params: &[("horizon", 1.0), ("sigma", 0.05), ("rate", 2.0)],
        oracle: None,
    },
    CatalogEntry {
        name: "coupled-linear",
        summary: "σ = 1, f and g linear in (u, p, ∫w), φ = y with two atoms, h = cos, cutoff box [−6, 6]",
        params: &[("horizon", 1.0)],
        oracle: None,
    },
    CatalogEntry {
        name: "brownian-linear",
        summary: "σ = 1, f = g = φ = 0, h = x on [−8, 8] with faces θ = x",
        params: &[("horizon", 1.0)],
        oracle: Some("θ(t, x) = x"),
    },
];

pub fn names() -> Vec<String> {
    CATALOG.iter().map(|e| e.name.to_string()).collect()
}

pub fn entry(name: &str) -> Result<&'static CatalogEntry> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownProblem {
            name: name.to_string(),
            available: names(),
        })
}

/// A catalog problem instantiated with concrete parameters.
#[derive(Clone)]
pub struct Problem<T> {
    pub name: &'static str,
    pub params: BTreeMap<String, f64>,
    pub spec: ProblemSpec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub boundary: BoundaryMode<T>,
    pub nodes: usize,
    pub steps: usize,
    pub x0: Vec<T>,
    pub path_steps: usize,
    pub paths: usize,
    pub constants: MaxPrincipleConstants<T>,
    pub oracle: Option<Oracle<T>>,
    pub ladder: Vec<Rung>,
}

impl<T: Scalar> std::fmt::Debug for Problem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("spec", &self.spec)
            .field("boundary", &self.boundary)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> Problem<T> {
    pub fn grid(&self, nodes: usize) -> Result<Grid<T>> {
        Grid::new(self.lower.clone(), self.upper.clone(), vec![nodes; self.spec.n()])
    }

    /// Solver configuration on `nodes` per axis; `cutoff_width` overrides the default width.
    pub fn solver_config(&self, nodes: usize, steps: usize, cutoff_width: Option<T>) -> Result<SolverConfig<T>> {
        let boundary = match (&self.boundary, cutoff_width) {
            (BoundaryMode::Cutoff(_), Some(w)) => BoundaryMode::Cutoff(Cutoff::new(w)),
            (b, _) => b.clone(),
        };
        let config = SolverConfig::new(self.grid(nodes)?, steps).with_boundary(boundary);
        config.validate(&self.spec)?;
        Ok(config)
    }

    pub fn default_config(&self) -> Result<SolverConfig<T>> {
        self.solver_config(self.nodes, self.steps, None)
    }

    pub fn path_dt(&self) -> T {
        self.spec.horizon() / T::from_usize_lossy(self.path_steps)
    }

    /// `(t, x, u)` points on a coarse lattice of the box, with `u` in `[−2, 2]`.
    pub fn ellipticity_samples(&self) -> Vec<(T, Vec<T>, Vec<T>)> {
        let m = self.spec.m();
        let mut out = Vec::new();
        for t in [T::zero(), T::lit(0.5) * self.spec.horizon(), self.spec.horizon()] {
            for x in self.lattice(5) {
                for u in [-2.0, -0.5, 0.0, 1.0, 2.0] {
                    out.push((t, x.clone(), vec![T::lit(u); m]));
                }
            }
        }
        out
    }

    /// `(t, x, u, p, w)` points for growth checks.
    pub fn growth_samples(&self) -> Vec<GrowthSample<T>> {
        let (n, m) = (self.spec.n(), self.spec.m());
        let atoms = self.spec.measure().len();
        let mut out = Vec::new();
        for x in self.lattice(3) {
            for scale in [0.0, 0.5, 2.0] {
                out.push(GrowthSample {
                    t: T::lit(0.5) * self.spec.horizon(),
                    x: x.clone(),
                    u: vec![T::lit(scale); m],
                    p: Matrix::from_fn(m, n, |_, _| T::lit(scale)),
                    w: AtomTable::constant(atoms, &vec![T::lit(-scale); m]),
                });
            }
        }
        out
    }

    fn lattice(&self, per_axis: usize) -> Vec<Vec<T>> {
        let n = self.spec.n();
        let total = per_axis.pow(n as u32);
        (0..total)
            .map(|mut k| {
                (0..n)
                    .map(|d| {
                        let i = k % per_axis;
                        k /= per_axis;
                        let r = T::from_usize_lossy(i) / T::from_usize_lossy(per_axis - 1);
                        self.lower[d] + r * (self.upper[d] - self.lower[d])
                    })
                    .collect()
            })
            .collect()
    }
}

fn resolve(entry: &CatalogEntry, overrides: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    let mut params: BTreeMap<String, f64> = entry.params.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    for (k, &v) in overrides {
        if !params.contains_key(k) {
            let known: Vec<&str> = entry.params.iter().map(|p| p.0).collect();
            return Err(Error::config(
                &format!("param.{k}"),
                format!("unknown parameter for `{}`; known: {}", entry.name, known.join(", ")),
            ));
        }
        if !v.is_finite() {
            return Err(Error::config(&format!("param.{k}"), "must be finite"));
        }
        params.insert(k.clone(), v);
    }
    if !(params["horizon"] > 0.0) {
        return Err(Error::config("param.horizon", "must be positive"));
    }
    Ok(params)
}

fn lit<T: Scalar>(v: f64) -> T {
    T::lit(v)
}

fn integral<T: Scalar>(measure: &LevyMeasure<T>, w: &AtomTable<T>) -> T {
    (0..measure.len()).map(|k| measure.weight(k) * w.row(k)[0]).sum()
}

/// Instantiates catalog problem `name` with parameter overrides.
pub fn build<T: Scalar>(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Problem<T>> {
    let entry = entry(name)?;
    let params = resolve(entry, overrides)?;
    let horizon: T = lit(params["horizon"]);
    match entry.name {
        "heat" => heat(entry.name, params, horizon),
        "heat-2d" => heat_2d(entry.name, params, horizon),
        "manufactured-nonlocal" => manufactured(entry.name, params, horizon),
        "pure-jump" => pure_jump(entry.name, params, horizon),
        "coupled-linear" => coupled_linear(entry.name, params, horizon),
        "brownian-linear" => brownian_linear(entry.name, params, horizon),
        _ => unreachable!("catalog entry without constructor"),
    }
}

fn zero_faces<T: Scalar>(m: usize) -> BoundaryMode<T> {
    BoundaryMode::Dirichlet(Arc::new(move |_, _| vec![T::zero(); m]))
}

fn heat<T: Scalar>(name: &'static str, params: BTreeMap<String, f64>, horizon: T) -> Result<Problem<T>> {
    let measure = LevyMeasure::new(vec![(vec![T::one()], T::one())])?;
    let spec = ProblemSpec::builder(1, 1, horizon, measure)
        .terminal(|x| vec![x[0].sin()])
        .build()?;
    Ok(Problem {
        name,
        params,
        spec,
        lower: vec![T::zero()],
        upper: vec![lit(PI)],
        boundary: zero_faces(1),
        nodes: 201,
        steps: 400,
        x0: vec![lit(PI / 2.0)],
        path_steps: 400,
        paths: 1000,
        constants: MaxPrincipleConstants::zero(),
        oracle: Some(Arc::new(move |t: T, x: &[T]| {
            vec![(lit::<T>(-0.5) * (horizon - t)).exp() * x[0].sin()]
        })),
        ladder: vec![Rung::new(201, 400), Rung::new(401, 1600)],
    })
}

fn heat_2d<T: Scalar>(name: &'static str, params: BTreeMap<String, f64>, horizon: T) -> Result<Problem<T>> {
    let measure = LevyMeasure::new(vec![(vec![T::one()], T::one())])?;
    let spec = ProblemSpec::builder(2, 1, horizon, measure)
        .terminal(|x| vec![x[0].sin() * x[1].sin()])
        .build()?;
    Ok(Problem {
        name,
        params,
        spec,
        lower: vec![T::zero(); 2],
        upper: vec![lit(PI); 2],
        boundary: zero_faces(1),
        nodes: 41,
        steps: 100,
        x0: vec![lit(PI / 2.0); 2],
        path_steps: 100,
        paths: 1000,
        constants: MaxPrincipleConstants::zero(),
        oracle: Some(Arc::new(move |t: T, x: &[T]| {
            vec![(t - horizon).exp() * x[0].sin() * x[1].sin()]
        })),
        ladder: vec![Rung::new(21, 25), Rung::new(41, 100)],
    })
}

/// Shift of the manufactured problem; keeps `x + φ` inside `[−2, 2]`.
fn manufactured_shift<T: Scalar>(x: T, u: T, y: T) -> T {
    y * lit::<T>(0.2) * (lit::<T>(4.0) - x * x) * (T::one() + lit::<T>(0.1) * u.sin())
}

fn manufactured_sigma<T: Scalar>(u: T) -> T {
    T::one() + lit::<T>(0.1) * u * u / (T::one() + u * u)
}

fn manufactured<T: Scalar>(name: &'static str, params: BTreeMap<String, f64>, horizon: T) -> Result<Problem<T>> {
    let measure = LevyMeasure::new(vec![
        (vec![T::one()], lit(0.6)),
        (vec![lit(-0.5)], lit(0.9)),
    ])?;
    let exact = |t: T, x: T| (-t).exp() * x.cos();
    let m_drift = measure.clone();
    let m_forcing = measure.clone();
    let forcing = move |t: T, x: T| -> T {
        let theta = exact(t, x);
        let theta_x = -(-t).exp() * x.sin();
        let sigma = manufactured_sigma(theta);
        let z = theta_x * sigma;
        let mut nu_shift = T::zero();
        let mut nu_jump = T::zero();
        for k in 0..m_forcing.len() {
            let phi = manufactured_shift(x, theta, m_forcing.mark(k)[0]);
            nu_shift += m_forcing.weight(k) * phi;
            nu_jump += m_forcing.weight(k) * (exact(t, x + phi) - theta);
        }
        let f = lit::<T>(0.2) * theta + lit::<T>(0.1) * z + lit::<T>(0.1) * nu_jump;
        // θ_t = −θ and θ_xx = −θ for the manufactured field
        -(-theta - lit::<T>(0.5) * sigma * sigma * theta + (f - nu_shift) * theta_x + nu_jump)
    };
    let spec = ProblemSpec::builder(1, 1, horizon, measure)
        .diffusion(|_, _, u| Matrix::from_row_slice(1, 1, &[manufactured_sigma(u[0])]))
        .drift(move |_, _, u, p, w| {
            vec![lit::<T>(0.2) * u[0] + lit::<T>(0.1) * p[(0, 0)] + lit::<T>(0.1) * integral(&m_drift, w)]
        })
        .generator(move |t, x, _, _, _| vec![forcing(t, x[0])])
        .jump(|_, x, u, y| vec![manufactured_shift(x[0], u[0], y[0])])
        .terminal(move |x| vec![exact(horizon, x[0])])
        .ellipticity(T::one(), lit(1.25))
        .build()?;
    Ok(Problem {
        name,
        params,
        spec,
        lower: vec![lit(-2.0)],
        upper: vec![lit(2.0)],
        boundary: BoundaryMode::Dirichlet(Arc::new(move |t, x| vec![exact(t, x[0])])),
        nodes: 81,
        steps: 160,
        x0: vec![T::zero()],
        path_steps: 250,
        paths: 10_000,
        constants: MaxPrincipleConstants::new(lit(20.0), lit(0.5), T::zero()),
        oracle: Some(Arc::new(move |t: T, x: &[T]| vec![exact(t, x[0])])),
        ladder: vec![Rung::new(21, 10), Rung::new(41, 40), Rung::new(81, 160)],
    })
}

fn pure_jump<T: Scalar>(name: &'static str, params: BTreeMap<String, f64>, horizon: T) -> Result<Problem<T>> {
    let sigma = params["sigma"];
    let rate = params["rate"];
    if !(sigma > 0.0) {
        return Err(Error::config("param.sigma", "must be positive for the PIDE solve"));
    }
    if !(rate > 0.0) {
        return Err(Error::config("param.rate", "must be positive"));
    }
    let measure = LevyMeasure::new(vec![(vec![T::one()], lit(rate))])?;
    let s: T = lit(sigma);
    let spec = ProblemSpec::builder(1, 1, horizon, measure)
        .diffusion(move |_, _, _| Matrix::from_row_slice(1, 1, &[s]))
        .jump(|_, _, _, y| vec![y[0]])
        .terminal(|x| vec![(-x[0] * x[0] / lit(2.0)).exp()])
        .ellipticity(s * s, s * s)
        .build()?;
    Ok(Problem {
        name,
        params,
        spec,
        lower: vec![lit(-10.0)],
        upper: vec![lit(10.0)],
        boundary: BoundaryMode::Cutoff(Cutoff::new(T::one())),
        nodes: 401,
        steps: 1000,
        x0: vec![T::zero()],
        path_steps: 1000,
        paths: 10_000,
        constants: MaxPrincipleConstants::zero(),
        oracle: None,
        ladder: vec![Rung::new(201, 250), Rung::new(401, 1000)],
    })
}

fn coupled_linear<T: Scalar>(name: &'static str, params: BTreeMap<String, f64>, horizon: T) -> Result<Problem<T>> {
    let measure = LevyMeasure::new(vec![(vec![lit(0.5)], lit(0.8)), (vec![lit(-0.4)], lit(0.6))])?;
    let (mf, mg) = (measure.clone(), measure.clone());
    let spec = ProblemSpec::builder(1, 1, horizon, measure)
        .drift(move |_, _, u, p, w| {
            vec![lit::<T>(0.2) * u[0] + lit::<T>(0.1) * p[(0, 0)] + lit::<T>(0.1) * integral(&mf, w)]
        })
        .generator(move |_, _, u, p, w| {
            vec![lit::<T>(-0.5) * u[0] + lit::<T>(0.2) * p[(0, 0)] + lit::<T>(0.1) * integral(&mg, w)]
        })
        .jump(|_, _, _, y| vec![y[0]])
        .terminal(|x| vec![x[0].cos()])
        .build()?;
    Ok(Problem {
        name,
        params,
        spec,
        lower: vec![lit(-6.0)],
        upper: vec![lit(6.0)],
        boundary: BoundaryMode::Cutoff(Cutoff::new(T::one())),
        nodes: 481,
        steps: 1000,
        x0: vec![T::zero()],
        path_steps: 1000,
        paths: 10_000,
        constants: MaxPrincipleConstants::new(T::zero(), lit(0.07), lit(0.05)),
        oracle: None,
        ladder: vec![
            Rung::with_paths(481, 1000, 250),
            Rung::with_paths(481, 1000, 500),
            Rung::with_paths(481, 1000, 1000),
        ],
    })
}

fn brownian_linear<T: Scalar>(name: &'static str, params: BTreeMap<String, f64>, horizon: T) -> Result<Problem<T>> {
    let measure = LevyMeasure::new(vec![(vec![T::one()], T::one())])?;
    let spec = ProblemSpec::builder(1, 1, horizon, measure)
        .terminal(|x| vec![x[0]])
        .build()?;
    Ok(Problem {
        name,
        params,
        spec,
        lower: vec![lit(-8.0)],
        upper: vec![lit(8.0)],
        boundary: BoundaryMode::Dirichlet(Arc::new(|_, x| vec![x[0]])),
        nodes: 65,
        steps: 100,
        x0: vec![T::zero()],
        path_steps: 100,
        paths: 1000,
        constants: MaxPrincipleConstants::zero(),
        oracle: Some(Arc::new(|_, x: &[T]| vec![x[0]])),
        ladder: vec![Rung::new(33, 50), Rung::new(65, 200)],
    })
}
