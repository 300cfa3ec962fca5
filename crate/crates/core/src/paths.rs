//! Euler–Maruyama simulation of the decoupled forward jump SDE.
//!
//! Between jumps the state moves by `f̃ δ + σ δB` with the compensated drift
//! `f̃ = f − Σ_k w_k φ(·, y_k)`; each jump of the atomic Poisson measure is placed
//! at its exact time and adds `φ(τ, X_{τ−}, θ(τ, X_{τ−}), y_k)`.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::problem::{AtomTable, LevyMeasure, ProblemSpec};
use crate::scalar::{all_finite, Scalar};
use crate::solver::SolutionField;

/// Seed and stream id of one independent ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// One logged jump: time, atom index, the step it falls in and the states around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent<T> {
    pub time: T,
    pub atom: usize,
    /// Index `j` with `t_j < τ ≤ t_{j+1}`.
    pub step: usize,
    pub pre: Vec<T>,
    pub post: Vec<T>,
}

/// A continuous piece of the path between consecutive event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment<T> {
    pub t: T,
    pub dt: T,
    /// State at the start of the segment (after any jump at `t`).
    pub x: Vec<T>,
    pub db: Vec<T>,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPath<T> {
    pub stream: RngStream,
    pub times: Vec<T>,
    /// `X_j`, post-jump at `t_j`.
    pub states: Vec<Vec<T>>,
    /// `ΔB_j` over `[t_j, t_{j+1}]`.
    pub brownian: Vec<Vec<T>>,
    pub jumps: Vec<JumpEvent<T>>,
    pub segments: Vec<Segment<T>>,
    /// Set once the state has left the grid box.
    pub exited: bool,
}

impl<T: Scalar> JumpPath<T> {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn initial(&self) -> &[T] {
        &self.states[0]
    }

    pub fn terminal(&self) -> &[T] {
        &self.states[self.states.len() - 1]
    }

    /// Number of jumps in `(t_j, t_{j+1}]`.
    pub fn jumps_in_step(&self, j: usize) -> usize {
        self.jumps.iter().filter(|e| e.step == j).count()
    }
}

/// Draws the atoms of the Poisson random measure on `[0, T] × Z`.
///
/// Count ~ Poisson(ν(Z)T), times uniform then sorted, atoms with probabilities `w_k / ν(Z)`.
pub fn sample_poisson_measure<T: Scalar, R: Rng + ?Sized>(
    measure: &LevyMeasure<T>,
    horizon: T,
    rng: &mut R,
) -> Vec<(T, usize)> {
    let rate = (measure.total_mass() * horizon).to_f64_lossy();
    let count = match Poisson::new(rate) {
        Ok(p) => p.sample(rng) as usize,
        Err(_) => 0,
    };
    if count == 0 {
        return Vec::new();
    }
    let weights: Vec<f64> = measure.weights().iter().map(|w| w.to_f64_lossy()).collect();
    let marks = WeightedIndex::new(&weights).expect("measure weights are positive");
    let h = horizon.to_f64_lossy();
    let mut events: Vec<(T, usize)> = (0..count)
        .map(|_| {
            let t = T::lit(rng.random::<f64>() * h);
            (t, marks.sample(rng))
        })
        .collect();
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("jump times are finite"));
    events
}

/// Number of steps `T / Δt`, which must be an integer up to rounding.
pub fn steps_for<T: Scalar>(horizon: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || dt > horizon {
        return Err(Error::InvalidSimulation(format!("time step {dt} must lie in (0, {horizon}]")));
    }
    let ratio = (horizon / dt).to_f64_lossy();
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidSimulation(format!(
            "time step {dt} does not divide the horizon {horizon}"
        )));
    }
    Ok(steps as usize)
}

/// `θ`, `Z = ∂_xθ σ`, `ϑ_θ` and `σ` at `(t, x)`.
#[derive(Debug, Clone)]
pub(crate) struct LocalState<T> {
    pub y: Vec<T>,
    pub z: Matrix<T>,
    pub z_tilde: AtomTable<T>,
    pub sigma: Matrix<T>,
}

pub(crate) fn local_state<T: Scalar>(
    field: &SolutionField<T>,
    spec: &ProblemSpec<T>,
    t: T,
    x: &[T],
) -> LocalState<T> {
    let y = field.value_at(t, x);
    let sigma = spec.diffusion(t, x, &y);
    let z = field.gradient_at(t, x).matmul(&sigma);
    let z_tilde = field.nonlocal_at(t, x, &y);
    LocalState { y, z, z_tilde, sigma }
}

/// Compensated drift `f − Σ_k w_k φ(t, x, y, y_k)`.
fn compensated_drift<T: Scalar>(spec: &ProblemSpec<T>, t: T, x: &[T], local: &LocalState<T>) -> Vec<T> {
    let mut drift = spec.drift(t, x, &local.y, &local.z, &local.z_tilde);
    let measure = spec.measure();
    for (k, mark) in measure.marks().enumerate() {
        let w = measure.weight(k);
        for (d, p) in drift.iter_mut().zip(spec.jump(t, x, &local.y, mark)) {
            *d -= w * p;
        }
    }
    drift
}

/// Simulates one forward path from `x0` with step `Δt`, reading `θ` from `field`.
pub fn simulate_forward<T: Scalar>(
    field: &SolutionField<T>,
    spec: &ProblemSpec<T>,
    x0: &[T],
    dt: T,
    stream: RngStream,
) -> Result<JumpPath<T>> {
    let n = spec.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
            context: "initial point",
        });
    }
    if !field.grid().contains(x0) {
        return Err(Error::InvalidSimulation(format!("initial point {x0:?} lies outside the grid")));
    }
    let horizon = spec.horizon();
    let steps = steps_for(horizon, dt)?;
    let mut rng = stream.rng();
    let events = sample_poisson_measure(spec.measure(), horizon, &mut rng);

    let time = |j: usize| if j == steps { horizon } else { dt * T::from_usize_lossy(j) };
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut brownian = Vec::with_capacity(steps);
    let mut segments = Vec::with_capacity(steps + events.len());
    let mut jumps = Vec::with_capacity(events.len());
    let mut exited = false;
    let mut x = x0.to_vec();
    let mut next_event = 0;
    times.push(T::zero());
    states.push(x.clone());

    for j in 0..steps {
        let t_end = time(j + 1);
        let mut t = time(j);
        let mut db_step = vec![T::zero(); n];
        loop {
            let jump = events.get(next_event).filter(|e| e.0 <= t_end).copied();
            let stop = jump.map_or(t_end, |(tau, _)| tau.max(t));
            let delta = stop - t;
            if delta > T::zero() {
                let local = local_state(field, spec, t, &x);
                let drift = compensated_drift(spec, t, &x, &local);
                let scale = delta.sqrt();
                let db: Vec<T> = (0..n)
                    .map(|_| scale * T::lit(StandardNormal.sample(&mut rng)))
                    .collect();
                let noise = local.sigma.mul_vec(&db);
                let start = x.clone();
                for ((xi, &f), &s) in x.iter_mut().zip(&drift).zip(&noise) {
                    *xi = *xi + f * delta + s;
                }
                for (acc, &b) in db_step.iter_mut().zip(&db) {
                    *acc += b;
                }
                segments.push(Segment {
                    t,
                    dt: delta,
                    x: start,
                    db,
                    step: j,
                });
                t = stop;
            }
            let Some((tau, atom)) = jump else { break };
            let pre = x.clone();
            let y = field.value_at(tau, &pre);
            let phi = spec.jump(tau, &pre, &y, spec.measure().mark(atom));
            for (xi, &p) in x.iter_mut().zip(&phi) {
                *xi += p;
            }
            jumps.push(JumpEvent {
                time: tau,
                atom,
                step: j,
                pre,
                post: x.clone(),
            });
            next_event += 1;
        }
        if !all_finite(&x) {
            return Err(Error::InvalidSimulation(format!(
                "non-finite state at t = {t_end} (stream {}/{})",
                stream.seed, stream.stream
            )));
        }
        exited |= !field.grid().contains(&x);
        times.push(t_end);
        states.push(x.clone());
        brownian.push(db_step);
    }

    Ok(JumpPath {
        stream,
        times,
        states,
        brownian,
        jumps,
        segments,
        exited,
    })
}

/// Simulates `count` paths on streams `(seed, first_stream + i)`.
pub fn simulate_ensemble<T: Scalar>(
    field: &SolutionField<T>,
    spec: &ProblemSpec<T>,
    x0: &[T],
    dt: T,
    seed: u64,
    count: usize,
) -> Result<Vec<JumpPath<T>>> {
    use rayon::prelude::*;
    (0..count as u64)
        .into_par_iter()
        .map(|i| simulate_forward(field, spec, x0, dt, RngStream::new(seed, i)))
        .collect()
}
