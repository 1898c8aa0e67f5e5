//! Meshes on 1-D intervals and discretised functions living on them.
//!
//! All L² geometry goes through quadrature weights: `⟨x, y⟩ = Σ wᵢ xᵢ yᵢ`.
//! Uniform meshes carry equal weights `(t_max − t_min)/N`, so the discrete
//! norm is the Riemann sum of the continuous one and kernel values stay
//! stable as the mesh is refined. Non-uniform meshes use trapezoid weights.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// Ordered sample locations on an interval together with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    points: Vec<f64>,
    weights: Vec<f64>,
    interval: (f64, f64),
    uniform: bool,
}

impl Mesh {
    /// Builds a mesh from explicit points and weights.
    pub fn new(points: Vec<f64>, weights: Vec<f64>, interval: (f64, f64)) -> Result<Arc<Mesh>> {
        let (lo, hi) = interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("degenerate interval ({lo}, {hi})")));
        }
        if points.is_empty() {
            return Err(invalid("mesh needs at least one point"));
        }
        if points.len() != weights.len() {
            return Err(invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("mesh points must be strictly increasing"));
        }
        if points.iter().any(|&t| !(lo..=hi).contains(&t)) {
            return Err(invalid("mesh points must lie inside the interval"));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid("quadrature weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if ((total - (hi - lo)) / (hi - lo)).abs() > 1e-12 {
            return Err(invalid(format!(
                "weights sum to {total}, expected interval length {}",
                hi - lo
            )));
        }
        let uniform = weights.windows(2).all(|w| w[0] == w[1]);
        Ok(Arc::new(Mesh {
            points,
            weights,
            interval,
            uniform,
        }))
    }

    /// `n_points` evenly spaced points covering `interval`, each with weight
    /// `(t_max − t_min)/n_points`.
    pub fn uniform(n_points: usize, interval: (f64, f64)) -> Result<Arc<Mesh>> {
        if n_points < 2 {
            return Err(invalid(format!("uniform mesh needs n_points >= 2, got {n_points}")));
        }
        let (lo, hi) = interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("degenerate interval ({lo}, {hi})")));
        }
        let step = (hi - lo) / (n_points - 1) as f64;
        let mut points: Vec<f64> = (0..n_points).map(|i| lo + step * i as f64).collect();
        points[n_points - 1] = hi;
        let w = (hi - lo) / n_points as f64;
        Mesh::new(points, vec![w; n_points], interval)
    }

    /// Trapezoid-rule mesh over `[points[0], points[last]]`.
    pub fn trapezoid(points: Vec<f64>) -> Result<Arc<Mesh>> {
        let n = points.len();
        if n < 2 {
            return Err(invalid("trapezoid mesh needs at least two points"));
        }
        let mut weights = vec![0.0; n];
        for i in 0..n - 1 {
            let h = 0.5 * (points[i + 1] - points[i]);
            weights[i] += h;
            weights[i + 1] += h;
        }
        let interval = (points[0], points[n - 1]);
        Mesh::new(points, weights, interval)
    }

    /// Chooses the uniform rule when the points are evenly spaced (relative
    /// tolerance `1e-9`) and the trapezoid rule otherwise.
    pub fn from_points(points: Vec<f64>) -> Result<Arc<Mesh>> {
        let n = points.len();
        if n < 2 {
            return Err(invalid("mesh needs at least two points"));
        }
        let span = points[n - 1] - points[0];
        let step = span / (n - 1) as f64;
        let even = points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * span.abs());
        if even {
            let interval = (points[0], points[n - 1]);
            let w = span / n as f64;
            Mesh::new(points, vec![w; n], interval)
        } else {
            Mesh::trapezoid(points)
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn length(&self) -> f64 {
        self.interval.1 - self.interval.0
    }

    /// True when every weight is identical.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// `√wᵢ`, the change of basis to coordinates in which the mesh inner
    /// product is the Euclidean one.
    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }
}

/// Two mesh handles describe the same discretisation.
pub fn same_mesh(a: &Arc<Mesh>, b: &Arc<Mesh>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Function values at the points of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSample {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl FunctionSample {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(invalid(format!(
                "{} values for a mesh of {} points",
                values.len(),
                mesh.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("function values must be finite"));
        }
        Ok(FunctionSample { mesh, values })
    }

    /// Evaluates `f` at every mesh point.
    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = mesh.points().iter().map(|&t| f(t)).collect();
        FunctionSample::new(mesh, values)
    }

    pub fn constant(mesh: Arc<Mesh>, c: f64) -> Result<Self> {
        let n = mesh.len();
        FunctionSample::new(mesh, vec![c; n])
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.len();
        FunctionSample {
            mesh,
            values: vec![0.0; n],
        }
    }

    pub(crate) fn from_parts_unchecked(mesh: Arc<Mesh>, values: Vec<f64>) -> Self {
        debug_assert_eq!(mesh.len(), values.len());
        FunctionSample { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_mesh(&self, other: &FunctionSample) -> Result<()> {
        if same_mesh(&self.mesh, &other.mesh) {
            Ok(())
        } else {
            Err(Error::IncompatibleMesh)
        }
    }

    /// Pointwise `self − other`.
    pub fn sub(&self, other: &FunctionSample) -> Result<FunctionSample> {
        self.check_mesh(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(FunctionSample::from_parts_unchecked(self.mesh.clone(), values))
    }

    /// Pointwise `self + other`.
    pub fn add(&self, other: &FunctionSample) -> Result<FunctionSample> {
        self.check_mesh(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(FunctionSample::from_parts_unchecked(self.mesh.clone(), values))
    }

    pub fn scale(&self, c: f64) -> FunctionSample {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FunctionSample {
        FunctionSample::from_parts_unchecked(
            self.mesh.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Squared L² norm under the mesh quadrature.
    pub fn norm_sq(&self) -> f64 {
        self.values
            .iter()
            .zip(self.mesh.weights())
            .map(|(v, w)| w * v * v)
            .sum()
    }

    /// Values in the `√w`-scaled basis, where the mesh inner product is
    /// the Euclidean dot product.
    pub fn quadrature_coords(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.mesh.weights())
            .map(|(v, w)| v * w.sqrt())
            .collect()
    }

    /// Inverse of [`FunctionSample::quadrature_coords`].
    pub fn from_quadrature_coords(mesh: Arc<Mesh>, coords: &[f64]) -> Result<Self> {
        if coords.len() != mesh.len() {
            return Err(invalid("coordinate length does not match mesh"));
        }
        let values = coords
            .iter()
            .zip(mesh.weights())
            .map(|(c, w)| c / w.sqrt())
            .collect();
        FunctionSample::new(mesh, values)
    }

    /// Piecewise-linear evaluation at `t`, clamped to the end values
    /// outside the mesh span.
    pub fn interpolate(&self, t: f64) -> f64 {
        linear_interpolate(self.mesh.points(), &self.values, t)
    }
}

/// Piecewise-linear interpolant through `(xs, ys)` evaluated at `t`;
/// constant extrapolation beyond the ends.
pub(crate) fn linear_interpolate(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    let n = xs.len();
    if n == 1 || t <= xs[0] {
        return ys[0];
    }
    if t >= xs[n - 1] {
        return ys[n - 1];
    }
    // first index with xs[i] > t
    let i = xs.partition_point(|&x| x <= t);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let (y0, y1) = (ys[i - 1], ys[i]);
    (y1 - y0) * (t - x0) / (x1 - x0) + y0
}

/// Mesh inner product `Σ wᵢ xᵢ yᵢ`.
pub fn inner_product(x: &FunctionSample, y: &FunctionSample) -> Result<f64> {
    x.check_mesh(y)?;
    Ok(dot_weighted(x.mesh.weights(), &x.values, &y.values))
}

/// Squared L² distance `⟨x − y, x − y⟩`.
pub fn sq_distance(x: &FunctionSample, y: &FunctionSample) -> Result<f64> {
    x.check_mesh(y)?;
    Ok(sq_dist_weighted(x.mesh.weights(), &x.values, &y.values))
}

pub(crate) fn dot_weighted(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(x).zip(y).map(|((w, a), b)| w * a * b).sum()
}

pub(crate) fn sq_dist_weighted(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    w.iter()
        .zip(x)
        .zip(y)
        .map(|((w, a), b)| {
            let d = a - b;
            w * d * d
        })
        .sum()
}

/// A collection of samples on one shared mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSet {
    mesh: Arc<Mesh>,
    samples: Vec<FunctionSample>,
}

impl FunctionSet {
    pub fn new(mesh: Arc<Mesh>, samples: Vec<FunctionSample>) -> Result<Self> {
        if samples.iter().any(|s| !same_mesh(&mesh, s.mesh())) {
            return Err(Error::IncompatibleMesh);
        }
        // Re-point every member at the one shared handle.
        let samples = samples
            .into_iter()
            .map(|s| FunctionSample::from_parts_unchecked(mesh.clone(), s.values))
            .collect();
        Ok(FunctionSet { mesh, samples })
    }

    /// Builds a set from raw value rows, one row per sample.
    pub fn from_rows(mesh: Arc<Mesh>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let samples = rows
            .into_iter()
            .map(|r| FunctionSample::new(mesh.clone(), r))
            .collect::<Result<Vec<_>>>()?;
        Ok(FunctionSet { mesh, samples })
    }

    pub fn empty(mesh: Arc<Mesh>) -> Self {
        FunctionSet {
            mesh,
            samples: Vec::new(),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn samples(&self) -> &[FunctionSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, i: usize) -> &FunctionSample {
        &self.samples[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FunctionSample> {
        self.samples.iter()
    }

    pub fn push(&mut self, sample: FunctionSample) -> Result<()> {
        if !same_mesh(&self.mesh, sample.mesh()) {
            return Err(Error::IncompatibleMesh);
        }
        self.samples
            .push(FunctionSample::from_parts_unchecked(self.mesh.clone(), sample.values));
        Ok(())
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &FunctionSet) -> Result<FunctionSet> {
        if !same_mesh(&self.mesh, &other.mesh) {
            return Err(Error::IncompatibleMesh);
        }
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Ok(FunctionSet {
            mesh: self.mesh.clone(),
            samples,
        })
    }

    /// Samples at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> FunctionSet {
        FunctionSet {
            mesh: self.mesh.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Pointwise mean of the samples.
    pub fn mean(&self) -> Result<FunctionSample> {
        if self.samples.is_empty() {
            return Err(Error::InsufficientData("mean of an empty set".into()));
        }
        let mut acc = vec![0.0; self.mesh.len()];
        for s in &self.samples {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
        let n = self.samples.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(FunctionSample::from_parts_unchecked(self.mesh.clone(), acc))
    }
}

impl<'a> IntoIterator for &'a FunctionSet {
    type Item = &'a FunctionSample;
    type IntoIter = std::slice::Iter<'a, FunctionSample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}
