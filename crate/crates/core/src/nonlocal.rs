//! Tensor grids, multilinear interpolation, the nonlocal shift operator
//! `ϑ_u(t,x)(y) = u(t, x + φ(t,x,u(t,x),y)) − u(t,x)` and the PDE coefficients
//! `a_ij, a_i, a` obtained from the FBSDE coefficients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::problem::{LevyMeasure, ProblemSpec};
use crate::scalar::{all_finite, norm, Scalar};

pub use crate::problem::AtomTable;

/// Uniform tensor-product grid on a box. Nodes are stored row-major, last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    counts: Vec<usize>,
    spacing: Vec<T>,
    strides: Vec<usize>,
}

impl<T: Scalar> Grid<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>, counts: Vec<usize>) -> Result<Self> {
        let n = lower.len();
        if n == 0 || upper.len() != n || counts.len() != n {
            return Err(Error::InvalidGrid(format!(
                "bounds and counts must share a non-zero dimension (got {}, {}, {})",
                lower.len(),
                upper.len(),
                counts.len()
            )));
        }
        let mut spacing = Vec::with_capacity(n);
        for d in 0..n {
            if counts[d] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} needs at least 3 nodes, got {}",
                    counts[d]
                )));
            }
            let h = (upper[d] - lower[d]) / T::from_usize_lossy(counts[d] - 1);
            if !(h > T::zero()) || !h.is_finite() {
                return Err(Error::InvalidGrid(format!("axis {d} has non-positive spacing")));
            }
            spacing.push(h);
        }
        let mut strides = vec![1; n];
        for d in (0..n.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * counts[d + 1];
        }
        Ok(Self {
            lower,
            upper,
            counts,
            spacing,
            strides,
        })
    }

    /// Same node count on every axis of the box `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: T, hi: T, nodes: usize) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n], vec![nodes; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn min_spacing(&self) -> T {
        self.spacing.iter().copied().fold(T::infinity(), T::min)
    }

    /// Coordinate of node `i` along `axis`; the last node is the upper bound exactly.
    pub fn coord(&self, axis: usize, i: usize) -> T {
        if i + 1 == self.counts[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + T::from_usize_lossy(i) * self.spacing[axis]
        }
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| (flat / s) % c)
            .collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }

    pub fn node(&self, flat: usize) -> Vec<T> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(d, &i)| self.coord(d, i))
            .collect()
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        self.multi_index(flat)
            .iter()
            .zip(&self.counts)
            .any(|(&i, &c)| i == 0 || i + 1 == c)
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// Cell index and fractional offset of `x` along `axis`, clamped to the box.
    fn locate(&self, axis: usize, x: T) -> (usize, T) {
        let lo = self.lower[axis];
        let hi = self.upper[axis];
        let xc = x.max(lo).min(hi);
        let s = (xc - lo) / self.spacing[axis];
        let last = self.counts[axis] - 2;
        let i = s.floor().to_usize().unwrap_or(0).min(last);
        let frac = (s - T::from_usize_lossy(i)).max(T::zero()).min(T::one());
        (i, frac)
    }

    /// Multilinear interpolation of an `m`-component nodal field at `x`.
    ///
    /// Points outside the box are clamped to the nearest face.
    pub fn interpolate_into(&self, values: &[T], m: usize, x: &[T], out: &mut [T]) {
        debug_assert_eq!(values.len(), self.len() * m);
        out.iter_mut().for_each(|o| *o = T::zero());
        if self.dim() == 1 {
            let (i, f) = self.locate(0, x[0]);
            let a = &values[i * m..(i + 1) * m];
            let b = &values[(i + 1) * m..(i + 2) * m];
            for c in 0..m {
                out[c] = a[c] + f * (b[c] - a[c]);
            }
            return;
        }
        let n = self.dim();
        let cells: Vec<(usize, T)> = (0..n).map(|d| self.locate(d, x[d])).collect();
        for corner in 0..(1usize << n) {
            let mut weight = T::one();
            let mut flat = 0;
            for (d, &(i, f)) in cells.iter().enumerate() {
                let upper = (corner >> d) & 1 == 1;
                weight *= if upper { f } else { T::one() - f };
                flat += (i + usize::from(upper)) * self.strides[d];
            }
            if weight == T::zero() {
                continue;
            }
            for c in 0..m {
                out[c] += weight * values[flat * m + c];
            }
        }
    }

    pub fn interpolate(&self, values: &[T], m: usize, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); m];
        self.interpolate_into(values, m, x, &mut out);
        out
    }
}

/// Nodal values of an `m`-vector field at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction<T> {
    pub grid: Grid<T>,
    pub m: usize,
    pub values: Vec<T>,
    pub time: T,
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(grid: Grid<T>, m: usize, values: Vec<T>, time: T) -> Result<Self> {
        if values.len() != grid.len() * m {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * m,
                got: values.len(),
                context: "grid function values",
            });
        }
        if !all_finite(&values) {
            return Err(Error::NonFiniteCoefficient("grid function has non-finite values".into()));
        }
        Ok(Self {
            grid,
            m,
            values,
            time,
        })
    }

    pub fn zeros(grid: Grid<T>, m: usize, time: T) -> Self {
        let values = vec![T::zero(); grid.len() * m];
        Self {
            grid,
            m,
            values,
            time,
        }
    }

    pub fn from_fn(grid: Grid<T>, m: usize, time: T, f: impl Fn(&[T]) -> Vec<T>) -> Self {
        let mut values = Vec::with_capacity(grid.len() * m);
        for node in 0..grid.len() {
            let v = f(&grid.node(node));
            assert_eq!(v.len(), m, "field callback returned wrong dimension");
            values.extend(v);
        }
        Self {
            grid,
            m,
            values,
            time,
        }
    }

    pub fn at(&self, node: usize) -> &[T] {
        &self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn interpolate(&self, x: &[T]) -> Vec<T> {
        self.grid.interpolate(&self.values, self.m, x)
    }

    /// `max_x |u(x)|` with the Euclidean norm on components.
    pub fn sup_norm(&self) -> T {
        self.values
            .chunks(self.m)
            .map(norm)
            .fold(T::zero(), T::max)
    }
}

/// `ϑ_u(t, x)(y_k)` at every node and atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlocalField<T> {
    pub grid: Grid<T>,
    pub atoms: usize,
    pub m: usize,
    pub data: Vec<T>,
    pub time: T,
}

impl<T: Scalar> NonlocalField<T> {
    pub fn at(&self, node: usize) -> &[T] {
        let stride = self.atoms * self.m;
        &self.data[node * stride..(node + 1) * stride]
    }

    pub fn table(&self, node: usize) -> AtomTable<T> {
        let rows: Vec<Vec<T>> = self.at(node).chunks(self.m).map(<[T]>::to_vec).collect();
        AtomTable::from_rows(&rows)
    }

    pub fn sup_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }
}

/// `ϑ_u` at one point `x` with value `ux`, for a field given by nodal values.
pub(crate) fn shift_table<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Grid<T>,
    values: &[T],
    m: usize,
    jump_time: T,
    x: &[T],
    ux: &[T],
) -> Option<AtomTable<T>> {
    let measure = spec.measure();
    let mut table = AtomTable::zeros(measure.len(), m);
    let mut shifted = x.to_vec();
    for (k, y) in measure.marks().enumerate() {
        let phi = spec.jump(jump_time, x, ux, y);
        if !all_finite(&phi) {
            return None;
        }
        for ((s, &xi), &p) in shifted.iter_mut().zip(x).zip(&phi) {
            *s = xi + p;
        }
        let row = table.row_mut(k);
        grid.interpolate_into(values, m, &shifted, row);
        for (r, &u0) in row.iter_mut().zip(ux) {
            *r -= u0;
        }
    }
    Some(table)
}

/// Evaluates the nonlocal operator on every node of `u`.
///
/// `jump_time` is the time argument handed to `φ`. Shifted points that leave
/// the grid box are clamped to the nearest face.
pub fn eval_nonlocal<T: Scalar>(
    u: &GridFunction<T>,
    spec: &ProblemSpec<T>,
    jump_time: T,
) -> Result<NonlocalField<T>> {
    let grid = &u.grid;
    let m = u.m;
    let tables: Vec<Result<AtomTable<T>>> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x = grid.node(node);
            shift_table(spec, grid, &u.values, m, jump_time, &x, u.at(node)).ok_or_else(|| {
                let atom = spec
                    .measure()
                    .marks()
                    .position(|y| !all_finite(&spec.jump(jump_time, &x, u.at(node), y)))
                    .unwrap_or(0);
                Error::NonFiniteShift { node, atom }
            })
        })
        .collect();
    let mut data = Vec::with_capacity(grid.len() * spec.measure().len() * m);
    for t in tables {
        data.extend_from_slice(t?.as_slice());
    }
    Ok(NonlocalField {
        grid: grid.clone(),
        atoms: spec.measure().len(),
        m,
        data,
        time: u.time,
    })
}

/// Nonlocal operator of the time-reversed problem: `u` lives in reversed time `s`
/// and `φ` is evaluated at `T − s`.
pub fn eval_nonlocal_reversed<T: Scalar>(
    u: &GridFunction<T>,
    spec: &ProblemSpec<T>,
    s: T,
) -> Result<NonlocalField<T>> {
    eval_nonlocal(u, spec, spec.horizon() - s)
}

/// `∫ w dν` for one node's atom table.
pub fn integrate_over_nu<T: Scalar>(w: &AtomTable<T>, measure: &LevyMeasure<T>) -> Result<Vec<T>> {
    measure.integrate(w)
}

/// Coefficients of `∂_s u = Σ a_ij ∂²_ij u − Σ a_i ∂_i u − a` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeCoefficients<T> {
    /// `a_ij = ½ (σσᵀ)_ij`, symmetric.
    pub diffusion: Matrix<T>,
    /// `a_i = ∫ φ_i dν − f_i`.
    pub transport: Vec<T>,
    /// `a = −g − ∫ w dν`.
    pub reaction: Vec<T>,
}

/// Assembles `a_ij, a_i, a` at reversed time `s`.
///
/// All FBSDE coefficients are evaluated at `T − s`; `p` is the raw spatial
/// gradient of the field and the composite `p σ` is formed here.
pub fn assemble_coefficients<T: Scalar>(
    spec: &ProblemSpec<T>,
    s: T,
    x: &[T],
    u: &[T],
    p: &Matrix<T>,
    w: &AtomTable<T>,
) -> Result<PdeCoefficients<T>> {
    let tau = spec.horizon() - s;
    let sigma = spec.diffusion(tau, x, u);
    let diffusion = sigma.gram().scale(T::lit(0.5));
    let z = p.matmul(&sigma);
    let f = spec.drift(tau, x, u, &z, w);
    let g = spec.generator(tau, x, u, &z, w);
    let jumps = AtomTable::from_rows(&spec.jumps_per_atom(tau, x, u));
    let phi_mass = spec.measure().integrate(&jumps)?;
    let w_mass = spec.measure().integrate(w)?;
    if f.len() != spec.n() || g.len() != spec.m() {
        return Err(Error::DimensionMismatch {
            expected: spec.n(),
            got: f.len(),
            context: "drift/generator output",
        });
    }
    let transport: Vec<T> = phi_mass.iter().zip(&f).map(|(&a, &b)| a - b).collect();
    let reaction: Vec<T> = g.iter().zip(&w_mass).map(|(&a, &b)| -a - b).collect();
    if !diffusion.is_finite() || !all_finite(&transport) || !all_finite(&reaction) {
        return Err(Error::NonFiniteCoefficient(format!(
            "PDE coefficients at s = {s}, x = {x:?}"
        )));
    }
    Ok(PdeCoefficients {
        diffusion,
        transport,
        reaction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::LevyMeasure;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn spec_with_shift(atoms: &[(f64, f64)]) -> ProblemSpec<f64> {
        ProblemSpec::builder(1, 1, 1.0, LevyMeasure::scalar(atoms).unwrap())
            .jump(|_, _, _, y| vec![y[0]])
            .build()
            .unwrap()
    }

    fn line(lo: f64, hi: f64, nodes: usize) -> Grid<f64> {
        Grid::uniform(1, lo, hi, nodes).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_axes() {
        assert!(Grid::<f64>::uniform(1, 0.0, 1.0, 2).is_err());
        assert!(Grid::<f64>::uniform(1, 1.0, 1.0, 5).is_err());
        assert!(Grid::<f64>::new(vec![0.0], vec![1.0, 2.0], vec![3]).is_err());
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::<f64>::new(vec![0.0, -1.0, 2.0], vec![1.0, 1.0, 3.0], vec![3, 4, 5]).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
        assert_eq!(g.node(g.len() - 1), vec![1.0, 1.0, 3.0]);
        assert!(g.is_boundary(0));
        assert!(!g.is_boundary(g.flat_index(&[1, 1, 1])));
    }

    #[test]
    fn zero_shift_gives_zero_field() {
        let spec = ProblemSpec::builder(1, 1, 1.0, LevyMeasure::scalar(&[(1.0, 1.0)]).unwrap())
            .build()
            .unwrap();
        let u = GridFunction::from_fn(line(-5.0, 5.0, 21), 1, 0.0, |x| vec![x[0].sin()]);
        let field = eval_nonlocal(&u, &spec, 0.0).unwrap();
        assert!(field.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_field_shift_is_exact() {
        let spec = spec_with_shift(&[(1.0, 1.0)]);
        let u = GridFunction::from_fn(line(-5.0, 5.0, 41), 1, 0.0, |x| vec![x[0]]);
        let field = eval_nonlocal(&u, &spec, 0.0).unwrap();
        for node in 0..u.grid.len() {
            if u.grid.node(node)[0] + 1.0 <= 5.0 {
                assert!((field.at(node)[0] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_shift_error_within_interpolation_bound() {
        // oracle: u(1) − u(0) = 1 exactly; linear interpolation error ≤ h²·max|u''|/8
        let spec = spec_with_shift(&[(1.0, 1.0)]);
        for &nodes in &[11usize, 21, 41, 81] {
            let grid = line(-5.0, 5.0, nodes);
            let h = grid.spacing()[0];
            // shift a half cell off the lattice so the interpolation error is visible
            let offset = 0.5 * h;
            let spec = ProblemSpec::builder(1, 1, 1.0, spec.measure().clone())
                .jump(move |_, _, _, y| vec![y[0] + offset])
                .build()
                .unwrap();
            let u = GridFunction::from_fn(grid.clone(), 1, 0.0, |x| vec![x[0] * x[0]]);
            let field = eval_nonlocal(&u, &spec, 0.0).unwrap();
            let node = grid.flat_index(&[(nodes - 1) / 2]);
            let exact = (1.0 + offset).powi(2);
            let err = (field.at(node)[0] - exact).abs();
            assert!(err <= h * h * 2.0 / 8.0 + 1e-14, "nodes {nodes}: err {err}");
        }
    }

    #[test]
    fn integrate_examples() {
        let two = LevyMeasure::<f64>::scalar(&[(1.0, 0.5), (2.0, 1.5)]).unwrap();
        let c = AtomTable::constant(2, &[3.0, -1.0]);
        assert_eq!(integrate_over_nu(&c, &two).unwrap(), vec![6.0, -2.0]);
        let cancel = LevyMeasure::<f64>::scalar(&[(1.0, 0.7), (2.0, 0.7)]).unwrap();
        let pm = AtomTable::from_rows(&[vec![1.5], vec![-1.5]]);
        assert_eq!(integrate_over_nu(&pm, &cancel).unwrap(), vec![0.0]);
        // w(y) = y: hand sum 0.5·1 + 1.5·2
        let wy = AtomTable::from_rows(&[vec![1.0], vec![2.0]]);
        let oracle = 0.5 * 1.0 + 1.5 * 2.0;
        assert_eq!(integrate_over_nu(&wy, &two).unwrap(), vec![oracle]);
        assert!(integrate_over_nu(&AtomTable::constant(3, &[1.0]), &two).is_err());
    }

    #[test]
    fn coefficients_examples() {
        let measure = LevyMeasure::<f64>::scalar(&[(1.0, 0.5), (-1.0, 1.5)]).unwrap();
        let spec = ProblemSpec::builder(2, 1, 1.0, measure.clone()).build().unwrap();
        let c = assemble_coefficients(
            &spec,
            0.3,
            &[0.1, 0.2],
            &[0.5],
            &Matrix::zeros(1, 2),
            &AtomTable::zeros(2, 1),
        )
        .unwrap();
        assert_eq!(c.diffusion, Matrix::identity(2).scale(0.5));

        let spec = ProblemSpec::builder(1, 1, 1.0, measure)
            .jump(|_, _, _, _| vec![1.0])
            .build()
            .unwrap();
        let w = AtomTable::constant(2, &[0.25]);
        let c = assemble_coefficients(&spec, 0.0, &[0.0], &[0.0], &Matrix::zeros(1, 1), &w).unwrap();
        assert_eq!(c.transport, vec![2.0]);
        assert_eq!(c.reaction, vec![-0.5]);
    }

    #[test]
    fn coefficients_use_reflected_time() {
        let spec = ProblemSpec::builder(1, 1, 2.0, LevyMeasure::scalar(&[(1.0, 1.0)]).unwrap())
            .drift(|t, _, _, _, _| vec![t])
            .diffusion(|t, _, _| Matrix::from_row_slice(1, 1, &[1.0 + t]))
            .build()
            .unwrap();
        let c = assemble_coefficients(&spec, 0.5, &[0.0], &[0.0], &Matrix::zeros(1, 1), &AtomTable::zeros(1, 1))
            .unwrap();
        assert_eq!(c.transport, vec![-1.5]);
        assert_eq!(c.diffusion[(0, 0)], 0.5 * 2.5 * 2.5);
    }

    #[test]
    fn non_finite_shift_is_reported() {
        let spec = ProblemSpec::builder(1, 1, 1.0, LevyMeasure::scalar(&[(1.0, 1.0)]).unwrap())
            .jump(|_, x, _, _| vec![if x[0] > 0.0 { f64::NAN } else { 0.0 }])
            .build()
            .unwrap();
        let u = GridFunction::zeros(line(-1.0, 1.0, 5), 1, 0.0);
        assert!(matches!(
            eval_nonlocal(&u, &spec, 0.0),
            Err(Error::NonFiniteShift { node: 3, atom: 0 })
        ));
    }

    #[test]
    fn two_dimensional_affine_exactness() {
        let measure = LevyMeasure::<f64>::new(vec![(vec![0.3, -0.2], 1.0), (vec![-0.45, 0.1], 2.0)]).unwrap();
        let spec = ProblemSpec::builder(2, 2, 1.0, measure)
            .jump(|_, _, _, y| y.to_vec())
            .build()
            .unwrap();
        let grid = Grid::uniform(2, -1.0, 1.0, 9).unwrap();
        let u = GridFunction::from_fn(grid.clone(), 2, 0.0, |x| {
            vec![1.0 + 2.0 * x[0] - x[1], 0.5 * x[1] - 3.0 * x[0]]
        });
        let field = eval_nonlocal(&u, &spec, 0.0).unwrap();
        for node in 0..grid.len() {
            let x = grid.node(node);
            for (k, y) in spec.measure().marks().enumerate() {
                let inside = x.iter().zip(y).all(|(a, b)| (a + b).abs() <= 1.0);
                if inside {
                    let expect = [2.0 * y[0] - y[1], 0.5 * y[1] - 3.0 * y[0]];
                    for c in 0..2 {
                        assert!((field.at(node)[k * 2 + c] - expect[c]).abs() < 1e-14);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn diffusion_block_is_exactly_symmetric(entries in prop::collection::vec(-3.0f64..3.0, 9)) {
            let sigma = Matrix::from_row_slice(3, 3, &entries);
            let spec = ProblemSpec::builder(3, 1, 1.0, LevyMeasure::scalar(&[(1.0, 1.0)]).unwrap())
                .diffusion(move |_, _, _| sigma.clone())
                .build()
                .unwrap();
            let c = assemble_coefficients(&spec, 0.0, &[0.0; 3], &[0.0], &Matrix::zeros(1, 3), &AtomTable::zeros(1, 1)).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(c.diffusion[(i, j)], c.diffusion[(j, i)]);
                }
            }
        }

        #[test]
        fn identity_sigma_gives_half_quadratic_form(xi in prop::collection::vec(-10.0f64..10.0, 2)) {
            let spec = ProblemSpec::builder(2, 1, 1.0, LevyMeasure::scalar(&[(1.0, 1.0)]).unwrap()).build().unwrap();
            let c = assemble_coefficients(&spec, 0.0, &[0.0; 2], &[0.0], &Matrix::zeros(1, 2), &AtomTable::zeros(1, 1)).unwrap();
            let q: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| c.diffusion[(i, j)] * xi[i] * xi[j]).sum();
            let half = 0.5 * (xi[0] * xi[0] + xi[1] * xi[1]);
            prop_assert!((q - half).abs() <= 1e-12 * (1.0 + half));
        }

        #[test]
        fn nu_integral_bounded_by_twice_mass_times_sup(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let atoms: Vec<(f64, f64)> = (0..3).map(|_| (rng.random_range(-3.0..3.0), rng.random_range(0.1..2.0))).collect();
            let spec = spec_with_shift(&atoms);
            let grid = line(-2.0, 2.0, 17);
            let vals: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let u = GridFunction::new(grid.clone(), 1, vals, 0.0).unwrap();
            let field = eval_nonlocal(&u, &spec, 0.0).unwrap();
            let bound = 2.0 * spec.measure().total_mass() * u.sup_norm();
            for node in 0..grid.len() {
                let integral = integrate_over_nu(&field.table(node), spec.measure()).unwrap();
                prop_assert!(integral[0].abs() <= bound * (1.0 + 1e-12));
            }
        }
    }
}
