//! Chart-based manifold representation.
//!
//! Index convention used throughout the crate:
//!
//! ```text
//! (∇_k Y)^i = ∂_k Y^i + Γ^i_{jk} Y^j
//! ```
//!
//! The middle lower index `j` contracts the differentiated vector and the
//! last lower index `k` is the differentiation direction. Transport
//! coefficients `H^i_{jk}` share the same layout.
//!
//! With this layout the torsion components `T^i_{jk} = Γ^i_{jk} - Γ^i_{kj}`
//! act on vectors as `T(X, Y)^i = T^i_{jk} Y^j X^k` (see [`torsion_map`]),
//! while generic (1,2) tensors such as `S` act as `S(B, Z)^i = S^i_{jk} B^j Z^k`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default finite-difference step for derivatives that are not supplied analytically.
pub const DEFAULT_H_FD: f64 = 1e-5;
/// Default threshold below which a scalar square counts as null.
pub const DEFAULT_NULL_TOL: f64 = 1e-10;
/// Metrics with `|det g|` at or below this value are rejected.
pub const DEGENERACY_TOL: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-12;
const BASE_TOL: f64 = 1e-12;

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// A point in the single global chart.
#[derive(Clone, PartialEq)]
pub struct ChartPoint {
    coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if !all_finite(&coords) {
            return Err(Error::NonFinite {
                what: "chart coordinates",
                point: coords,
            });
        }
        Ok(ChartPoint { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Equality up to a small relative tolerance.
    pub fn same_as(&self, other: &ChartPoint) -> bool {
        self.dim() == other.dim()
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| (a - b).abs() <= BASE_TOL * (1.0 + a.abs().max(b.abs())))
    }

    pub(crate) fn ensure_same(&self, other: &ChartPoint) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::BaseMismatch {
                left: self.coords.clone(),
                right: other.coords.clone(),
            })
        }
    }
}

impl fmt::Debug for ChartPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChartPoint{:?}", self.coords)
    }
}

/// A tangent vector: base point plus chart components.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    base: ChartPoint,
    components: Vec<f64>,
}

impl Tangent {
    pub fn new(base: ChartPoint, components: Vec<f64>) -> Result<Self> {
        if components.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: components.len(),
            });
        }
        if !all_finite(&components) {
            return Err(Error::NonFinite {
                what: "tangent components",
                point: base.coords.clone(),
            });
        }
        Ok(Tangent { base, components })
    }

    pub fn zero(base: ChartPoint) -> Self {
        let d = base.dim();
        Tangent {
            base,
            components: vec![0.0; d],
        }
    }

    pub fn base(&self) -> &ChartPoint {
        &self.base
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn scale(&self, k: f64) -> Tangent {
        Tangent {
            base: self.base.clone(),
            components: self.components.iter().map(|c| c * k).collect(),
        }
    }

    /// `self + k * other`, requiring a common base point.
    pub fn axpy(&self, k: f64, other: &Tangent) -> Result<Tangent> {
        self.base.ensure_same(&other.base)?;
        Ok(Tangent {
            base: self.base.clone(),
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + k * b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Tangent) -> Result<Tangent> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Tangent) -> Result<Tangent> {
        self.axpy(-1.0, other)
    }

    /// Max-absolute component.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.components)
    }
}

pub(crate) fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Dense `d x d x d` coefficient array with layout `[i][j][k]`, used for
/// connection coefficients `Γ^i_{jk}` and transport coefficients `H^i_{jk}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coeffs {
    dim: usize,
    data: Vec<f64>,
}

impl Coeffs {
    pub fn zeros(dim: usize) -> Self {
        Coeffs {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim * dim,
                got: data.len(),
            });
        }
        Ok(Coeffs { dim, data })
    }

    /// Builds coefficients from a function of `(i, j, k)`.
    pub fn from_fn(dim: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut c = Coeffs::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    c.set(i, j, k, f(i, j, k));
                }
            }
        }
        c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }

    pub fn scaled(&self, k: f64) -> Coeffs {
        Coeffs {
            dim: self.dim,
            data: self.data.iter().map(|x| x * k).collect(),
        }
    }

    pub fn plus(&self, other: &Coeffs) -> Coeffs {
        Coeffs {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// `C^i_{jk} a^j b^k`.
    pub fn contract(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, aj) in a.iter().enumerate() {
                for (k, bk) in b.iter().enumerate() {
                    acc += self.get(i, j, k) * aj * bk;
                }
            }
            *o = acc;
        }
        out
    }

    /// The `d x d` matrix `M^i_j = C^i_{jk} v^k` (row-major).
    pub fn contract_last(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] = (0..d).map(|k| self.get(i, j, k) * v[k]).sum();
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Coeffs) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Tensor valence `(p, q)`: `p` contravariant and `q` covariant indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Valence {
    pub upper: usize,
    pub lower: usize,
}

impl Valence {
    pub const fn new(upper: usize, lower: usize) -> Self {
        Valence { upper, lower }
    }

    pub fn rank(&self) -> usize {
        self.upper + self.lower
    }
}

/// Dense tensor of valence `(p, q)` at a chart point. Entries are stored
/// row-major over the index tuple `(upper..., lower...)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    base: ChartPoint,
    valence: Valence,
    entries: Vec<f64>,
}

impl Tensor {
    pub fn new(base: ChartPoint, valence: Valence, entries: Vec<f64>) -> Result<Self> {
        let expected = base.dim().pow(valence.rank() as u32);
        if entries.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: entries.len(),
            });
        }
        if !all_finite(&entries) {
            return Err(Error::NonFinite {
                what: "tensor entries",
                point: base.coords.clone(),
            });
        }
        Ok(Tensor {
            base,
            valence,
            entries,
        })
    }

    pub fn zeros(base: ChartPoint, valence: Valence) -> Self {
        let n = base.dim().pow(valence.rank() as u32);
        Tensor {
            base,
            valence,
            entries: vec![0.0; n],
        }
    }

    pub fn from_coeffs(base: ChartPoint, c: &Coeffs) -> Result<Self> {
        Tensor::new(base, Valence::new(1, 2), c.as_slice().to_vec())
    }

    pub fn base(&self) -> &ChartPoint {
        &self.base
    }

    pub fn valence(&self) -> Valence {
        self.valence
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.valence.rank());
        let d = self.dim();
        idx.iter().fold(0, |acc, &i| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.entries[o] = v;
    }

    /// For valence (1,2): `t^i_{jk} a^j b^k`.
    pub fn contract_12(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.valence, Valence::new(1, 2));
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, aj) in a.iter().enumerate() {
                for (k, bk) in b.iter().enumerate() {
                    acc += self.entries[(i * d + j) * d + k] * aj * bk;
                }
            }
            *o = acc;
        }
        out
    }

    /// For valence (0,2): `t_{ij} a^i b^j`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(self.valence, Valence::new(0, 2));
        let d = self.dim();
        let mut acc = 0.0;
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                acc += self.entries[i * d + j] * ai * bj;
            }
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.entries)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `T(X, Y)` for torsion components `T^i_{jk} = Γ^i_{jk} - Γ^i_{kj}`.
pub fn torsion_map(t: &Tensor, x: &[f64], y: &[f64]) -> Vec<f64> {
    t.contract_12(y, x)
}

/// `R(X, Y) Z` with `R(X,Y)Z^i = R^i_{jkl} Z^j X^k Y^l`.
pub fn curvature_map(r: &Tensor, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
    debug_assert_eq!(r.valence(), Valence::new(1, 3));
    let d = r.dim();
    let e = r.entries();
    let mut out = vec![0.0; d];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    acc += e[((i * d + j) * d + k) * d + l] * z[j] * x[k] * y[l];
                }
            }
        }
        *o = acc;
    }
    out
}

pub type CoeffFn = dyn Fn(&[f64]) -> Coeffs + Send + Sync;
pub type CoeffPartialsFn = dyn Fn(&[f64]) -> Vec<Coeffs> + Send + Sync;

/// An affine connection given by its coefficients in the chart.
#[derive(Clone)]
pub struct ConnectionField {
    dim: usize,
    gamma: Arc<CoeffFn>,
    partials: Option<Arc<CoeffPartialsFn>>,
    h_fd: f64,
}

impl fmt::Debug for ConnectionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionField")
            .field("dim", &self.dim)
            .field("analytic_partials", &self.partials.is_some())
            .field("h_fd", &self.h_fd)
            .finish()
    }
}

impl ConnectionField {
    pub fn new(
        dim: usize,
        gamma: impl Fn(&[f64]) -> Coeffs + Send + Sync + 'static,
    ) -> Self {
        ConnectionField {
            dim,
            gamma: Arc::new(gamma),
            partials: None,
            h_fd: DEFAULT_H_FD,
        }
    }

    /// Supplies analytic partials: element `l` of the returned vector is `∂_l Γ`.
    pub fn with_partials(
        mut self,
        partials: impl Fn(&[f64]) -> Vec<Coeffs> + Send + Sync + 'static,
    ) -> Self {
        self.partials = Some(Arc::new(partials));
        self
    }

    pub fn with_step(mut self, h_fd: f64) -> Self {
        self.h_fd = h_fd;
        self
    }

    /// The zero connection of a flat chart.
    pub fn flat(dim: usize) -> Self {
        ConnectionField::new(dim, move |_| Coeffs::zeros(dim))
            .with_partials(move |_| vec![Coeffs::zeros(dim); dim])
    }

    /// A connection with constant coefficients.
    pub fn constant(c: Coeffs) -> Self {
        let dim = c.dim();
        ConnectionField::new(dim, move |_| c.clone())
            .with_partials(move |_| vec![Coeffs::zeros(dim); dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h_fd(&self) -> f64 {
        self.h_fd
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn gamma_at(&self, x: &ChartPoint) -> Result<Coeffs> {
        self.gamma_raw(x.coords())
    }

    pub(crate) fn gamma_raw(&self, x: &[f64]) -> Result<Coeffs> {
        let g = (self.gamma)(x);
        if g.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: g.dim(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: "connection coefficients",
                point: x.to_vec(),
            });
        }
        Ok(g)
    }

    /// `∂_l Γ` for every `l`: analytic when available, else central differences.
    pub fn partials_at(&self, x: &ChartPoint) -> Result<Vec<Coeffs>> {
        match &self.partials {
            Some(p) => {
                let parts = p(x.coords());
                if parts.len() != self.dim || parts.iter().any(|c| !c.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "connection partials",
                        point: x.coords().to_vec(),
                    });
                }
                Ok(parts)
            }
            None => self.fd_partials_at(x),
        }
    }

    /// Central-difference partials with step `h_fd`, regardless of analytic availability.
    pub fn fd_partials_at(&self, x: &ChartPoint) -> Result<Vec<Coeffs>> {
        let h = self.h_fd;
        (0..self.dim)
            .map(|l| {
                let mut xp = x.coords().to_vec();
                let mut xm = x.coords().to_vec();
                xp[l] += h;
                xm[l] -= h;
                let gp = self.gamma_raw(&xp)?;
                let gm = self.gamma_raw(&xm)?;
                Ok(gp.plus(&gm.scaled(-1.0)).scaled(0.5 / h))
            })
            .collect()
    }
}

pub type MetricFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
pub type MetricPartialsFn = dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync;

/// A symmetric nondegenerate (0,2) field, not necessarily positive definite.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    g: Arc<MetricFn>,
    partials: Option<Arc<MetricPartialsFn>>,
    h_fd: f64,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("dim", &self.dim)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl MetricField {
    /// `g` returns the `d x d` components row-major.
    pub fn new(dim: usize, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        MetricField {
            dim,
            g: Arc::new(g),
            partials: None,
            h_fd: DEFAULT_H_FD,
        }
    }

    pub fn with_partials(
        mut self,
        p: impl Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.partials = Some(Arc::new(p));
        self
    }

    /// A constant diagonal metric such as Euclidean or Minkowski.
    pub fn constant_diagonal(diag: Vec<f64>) -> Self {
        let d = diag.len();
        let mut m = vec![0.0; d * d];
        for (i, v) in diag.iter().enumerate() {
            m[i * d + i] = *v;
        }
        MetricField::new(d, move |_| m.clone()).with_partials(move |_| vec![vec![0.0; d * d]; d])
    }

    pub fn euclidean(dim: usize) -> Self {
        MetricField::constant_diagonal(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = (self.g)(x);
        if m.len() != self.dim * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.dim,
                got: m.len(),
            });
        }
        if !all_finite(&m) {
            return Err(Error::NonFinite {
                what: "metric components",
                point: x.to_vec(),
            });
        }
        Ok(m)
    }

    /// Metric components at `x`, validated for symmetry and nondegeneracy.
    pub fn g_at(&self, x: &ChartPoint) -> Result<Tensor> {
        let m = self.raw(x.coords())?;
        let d = self.dim;
        let mut asym = 0.0_f64;
        for i in 0..d {
            for j in 0..i {
                asym = asym.max((m[i * d + j] - m[j * d + i]).abs());
            }
        }
        if asym > SYMMETRY_TOL {
            return Err(Error::AsymmetricMetric { asym });
        }
        let det = nalgebra::DMatrix::from_row_slice(d, d, &m).determinant();
        if det.abs() <= DEGENERACY_TOL {
            return Err(Error::DegenerateMetric { det });
        }
        Tensor::new(x.clone(), Valence::new(0, 2), m)
    }

    /// `∂_l g_{ij}` for every `l`, row-major in `(i, j)`.
    pub fn partials_at(&self, x: &ChartPoint) -> Result<Vec<Vec<f64>>> {
        if let Some(p) = &self.partials {
            return Ok(p(x.coords()));
        }
        let h = self.h_fd;
        (0..self.dim)
            .map(|l| {
                let mut xp = x.coords().to_vec();
                let mut xm = x.coords().to_vec();
                xp[l] += h;
                xm[l] -= h;
                let gp = self.raw(&xp)?;
                let gm = self.raw(&xm)?;
                Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            })
            .collect()
    }
}

pub type CurveFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;

/// A parametrized path with its tangent and optionally its second derivative.
#[derive(Clone)]
pub struct PathCurve {
    dim: usize,
    map: Arc<CurveFn>,
    velocity: Arc<CurveFn>,
    accel: Option<Arc<CurveFn>>,
    domain: (f64, f64),
    h_fd: f64,
}

impl fmt::Debug for PathCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathCurve")
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("analytic_accel", &self.accel.is_some())
            .finish()
    }
}

impl PathCurve {
    pub fn new(
        dim: usize,
        domain: (f64, f64),
        map: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        velocity: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        PathCurve {
            dim,
            map: Arc::new(map),
            velocity: Arc::new(velocity),
            accel: None,
            domain,
            h_fd: DEFAULT_H_FD,
        }
    }

    pub fn with_accel(mut self, accel: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.accel = Some(Arc::new(accel));
        self
    }

    /// Same curve with a different finite-difference step.
    pub fn with_step(&self, h_fd: f64) -> Self {
        PathCurve {
            h_fd,
            ..self.clone()
        }
    }

    /// Straight line `x0 + (s - s0) v`.
    pub fn line(x0: Vec<f64>, v: Vec<f64>, s0: f64, domain: (f64, f64)) -> Self {
        let d = x0.len();
        let vv = v.clone();
        PathCurve::new(
            d,
            domain,
            move |s| x0.iter().zip(&vv).map(|(x, v)| x + (s - s0) * v).collect(),
            move |_| v.clone(),
        )
        .with_accel(move |_| vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn h_fd(&self) -> f64 {
        self.h_fd
    }

    pub fn check_param(&self, s: f64) -> Result<()> {
        let (lo, hi) = self.domain;
        if !(s >= lo && s <= hi) {
            return Err(Error::OutOfDomain {
                param: "s",
                value: s,
                lo,
                hi,
            });
        }
        Ok(())
    }

    pub fn point(&self, s: f64) -> Result<ChartPoint> {
        self.check_param(s)?;
        ChartPoint::new((self.map)(s))
    }

    pub fn tangent(&self, s: f64) -> Result<Tangent> {
        let base = self.point(s)?;
        Tangent::new(base, (self.velocity)(s))
    }

    /// Point evaluation without the domain check (used inside stencils).
    pub(crate) fn point_raw(&self, s: f64) -> Vec<f64> {
        (self.map)(s)
    }

    pub(crate) fn velocity_raw(&self, s: f64) -> Vec<f64> {
        (self.velocity)(s)
    }

    /// Component second derivative: analytic if supplied, else central
    /// differences of the tangent with one Richardson level.
    pub fn second_derivative(&self, s: f64) -> Result<Vec<f64>> {
        self.check_param(s)?;
        match &self.accel {
            Some(a) => Ok(a(s)),
            None => Ok(derivative5(|t| Ok((self.velocity)(t)), s, self.h_fd)?),
        }
    }
}

/// Five-point central difference (central difference plus one Richardson level).
pub(crate) fn derivative5(
    f: impl Fn(f64) -> Result<Vec<f64>>,
    s: f64,
    h: f64,
) -> Result<Vec<f64>> {
    let p1 = f(s + h)?;
    let m1 = f(s - h)?;
    let p2 = f(s + 2.0 * h)?;
    let m2 = f(s - 2.0 * h)?;
    Ok((0..p1.len())
        .map(|i| (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * h))
        .collect())
}

/// A vector field along a path.
pub trait TangentField {
    fn at(&self, s: f64) -> Result<Tangent>;

    /// Analytic component derivative `dB^i/ds`, when the field knows it.
    fn component_derivative(&self, _s: f64) -> Option<Result<Vec<f64>>> {
        None
    }
}

impl<F> TangentField for F
where
    F: Fn(f64) -> Result<Tangent>,
{
    fn at(&self, s: f64) -> Result<Tangent> {
        self(s)
    }
}

/// A field that carries its own analytic component derivative.
pub struct AnalyticField<V, D> {
    pub value: V,
    pub derivative: D,
}

impl<V, D> TangentField for AnalyticField<V, D>
where
    V: Fn(f64) -> Result<Tangent>,
    D: Fn(f64) -> Result<Vec<f64>>,
{
    fn at(&self, s: f64) -> Result<Tangent> {
        (self.value)(s)
    }

    fn component_derivative(&self, s: f64) -> Option<Result<Vec<f64>>> {
        Some((self.derivative)(s))
    }
}

/// Torsion `T^i_{jk} = Γ^i_{jk} - Γ^i_{kj}` at `x`.
pub fn torsion_at(conn: &ConnectionField, x: &ChartPoint) -> Result<Tensor> {
    let g = conn.gamma_at(x)?;
    let d = conn.dim();
    let t = Coeffs::from_fn(d, |i, j, k| g.get(i, j, k) - g.get(i, k, j));
    Tensor::from_coeffs(x.clone(), &t)
}

/// Curvature `R^i_{jkl} = ∂_k Γ^i_{jl} - ∂_l Γ^i_{jk} + Γ^i_{mk} Γ^m_{jl} - Γ^i_{ml} Γ^m_{jk}`.
pub fn curvature_at(conn: &ConnectionField, x: &ChartPoint) -> Result<Tensor> {
    let g = conn.gamma_at(x)?;
    let dg = conn.partials_at(x)?;
    let d = conn.dim();
    let mut r = Tensor::zeros(x.clone(), Valence::new(1, 3));
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut v = dg[k].get(i, j, l) - dg[l].get(i, j, k);
                    for m in 0..d {
                        v += g.get(i, m, k) * g.get(m, j, l) - g.get(i, m, l) * g.get(m, j, k);
                    }
                    r.set(&[i, j, k, l], v);
                }
            }
        }
    }
    Ok(r)
}

/// `DB/ds = dB/ds + Γ(B, γ̇)` along `path`.
pub fn cov_derivative_along(
    conn: &ConnectionField,
    path: &PathCurve,
    field: &dyn TangentField,
    s: f64,
) -> Result<Tangent> {
    let b = field.at(s)?;
    let x = path.point(s)?;
    b.base().ensure_same(&x)?;
    let db = match field.component_derivative(s) {
        Some(d) => d?,
        None => derivative5(
            |t| field.at(t).map(Tangent::into_components),
            s,
            path.h_fd(),
        )?,
    };
    let v = path.velocity_raw(s);
    let corr = conn.gamma_at(&x)?.contract(b.components(), &v);
    let comps = db.iter().zip(&corr).map(|(a, c)| a + c).collect();
    Tangent::new(x, comps)
}

/// Covariant derivative along `path` of a tensor field of constant valence.
pub fn cov_derivative_tensor_along(
    conn: &ConnectionField,
    path: &PathCurve,
    tfield: &dyn Fn(f64) -> Result<Tensor>,
    s: f64,
) -> Result<Tensor> {
    let t = tfield(s)?;
    let x = path.point(s)?;
    t.base().ensure_same(&x)?;
    let valence = t.valence();
    let h = path.h_fd();
    let dt = derivative5(
        |u| {
            let tu = tfield(u)?;
            if tu.valence() != valence {
                return Err(Error::InvalidArgument(
                    "tensor field changes valence along the path".into(),
                ));
            }
            Ok(tu.entries().to_vec())
        },
        s,
        h,
    )?;
    let v = path.velocity_raw(s);
    let gv = conn.gamma_at(&x)?.contract_last(&v); // (Γ v)^a_b = Γ^a_{bn} v^n
    let d = x.dim();
    let rank = valence.rank();
    let mut out = Tensor::new(x, valence, dt)?;
    let mut idx = vec![0usize; rank];
    let total = d.pow(rank as u32);
    for flat in 0..total {
        let mut rem = flat;
        for slot in (0..rank).rev() {
            idx[slot] = rem % d;
            rem /= d;
        }
        let mut acc = 0.0;
        let mut probe = idx.clone();
        for slot in 0..rank {
            let orig = idx[slot];
            for m in 0..d {
                probe[slot] = m;
                let tv = t.get(&probe);
                if slot < valence.upper {
                    acc += gv[orig * d + m] * tv;
                } else {
                    acc -= gv[m * d + orig] * tv;
                }
            }
            probe[slot] = orig;
        }
        let cur = out.get(&idx);
        out.set(&idx, cur + acc);
    }
    Ok(out)
}

/// `g(X, Y)` at `x`.
pub fn metric_dot(g: &MetricField, x: &ChartPoint, a: &Tangent, b: &Tangent) -> Result<f64> {
    a.base().ensure_same(x)?;
    b.base().ensure_same(x)?;
    Ok(g.g_at(x)?.bilinear(a.components(), b.components()))
}

/// Sign of the scalar square `(X)^2`; null vectors are an error.
pub fn sign_of_square(g: &MetricField, x: &ChartPoint, a: &Tangent, null_tol: f64) -> Result<f64> {
    let sq = metric_dot(g, x, a, a)?;
    if sq.abs() <= null_tol {
        return Err(Error::NullVector {
            square: sq,
            tol: null_tol,
        });
    }
    Ok(sq.signum())
}
