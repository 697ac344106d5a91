//! Linear transports along paths generated by coefficient fields.
//!
//! A law supplies coefficients `H^i_{jk}(u; γ)`. The transport matrix
//! `H(t, s)` solves `dH(u, s)/du = M(u) H(u, s)` with `H(s, s) = I` and
//! `M(u)^i_j = H^i_{jk}(u; γ) γ̇^k(u)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{derivative5, ChartPoint, Coeffs, ConnectionField, PathCurve, Tangent, Tensor};
use crate::ode::{self, OdeConfig};

pub type LawFn = dyn Fn(f64, &PathCurve) -> Result<Coeffs> + Send + Sync;

/// Coefficient field of a linear transport along arbitrary paths.
#[derive(Clone)]
pub struct TransportLaw {
    dim: usize,
    label: String,
    coeff: Arc<LawFn>,
}

impl fmt::Debug for TransportLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransportLaw")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .finish()
    }
}

impl TransportLaw {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        coeff: impl Fn(f64, &PathCurve) -> Result<Coeffs> + Send + Sync + 'static,
    ) -> Self {
        TransportLaw {
            dim,
            label: label.into(),
            coeff: Arc::new(coeff),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `H^i_{jk}(s; γ)`.
    pub fn coeff_at(&self, s: f64, path: &PathCurve) -> Result<Coeffs> {
        let c = (self.coeff)(s, path)?;
        if c.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: c.dim(),
            });
        }
        if !c.is_finite() {
            return Err(Error::NonFinite {
                what: "transport coefficients",
                point: path.point_raw(s),
            });
        }
        Ok(c)
    }

    /// Generator `M(u) = H_k(u) γ̇^k(u)`, row-major.
    fn generator(&self, u: f64, path: &PathCurve) -> Result<Vec<f64>> {
        Ok(self.coeff_at(u, path)?.contract_last(&path.velocity_raw(u)))
    }
}

/// Matrix `H(t, s)` of the transport from parameter `s` to `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportMatrix {
    from: f64,
    to: f64,
    dim: usize,
    entries: Vec<f64>,
}

impl TransportMatrix {
    pub fn identity(dim: usize, s: f64) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        TransportMatrix {
            from: s,
            to: s,
            dim,
            entries,
        }
    }

    pub fn from_entries(from: f64, to: f64, dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Ok(TransportMatrix {
            from,
            to,
            dim,
            entries,
        })
    }

    pub fn from_param(&self) -> f64 {
        self.from
    }

    pub fn to_param(&self) -> f64 {
        self.to
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.entries[i * d + j] * u[j]).sum())
            .collect()
    }

    /// `self · earlier`, the transport `earlier.from → self.to`.
    pub fn after(&self, earlier: &TransportMatrix) -> TransportMatrix {
        let d = self.dim;
        let mut e = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                e[i * d + j] = (0..d).map(|k| self.get(i, k) * earlier.get(k, j)).sum();
            }
        }
        TransportMatrix {
            from: earlier.from,
            to: self.to,
            dim: d,
            entries: e,
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn determinant(&self) -> f64 {
        self.to_dmatrix().determinant()
    }

    pub fn max_abs_diff(&self, other: &TransportMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_identity(&self) -> bool {
        self.max_abs_diff(&TransportMatrix::identity(self.dim, self.from)) == 0.0
    }
}

/// Transport matrix together with the smallest adaptive step taken.
pub(crate) fn solve_transport(
    law: &TransportLaw,
    path: &PathCurve,
    s: f64,
    t: f64,
    cfg: &OdeConfig,
) -> Result<(TransportMatrix, f64)> {
    path.check_param(s)?;
    path.check_param(t)?;
    let d = law.dim();
    if path.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: path.dim(),
        });
    }
    if s == t {
        return Ok((TransportMatrix::identity(d, s), 0.0));
    }
    let rhs = |u: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let m = law.generator(u, path)?;
        for i in 0..d {
            for j in 0..d {
                dy[i * d + j] = (0..d).map(|k| m[i * d + k] * y[k * d + j]).sum();
            }
        }
        Ok(())
    };
    let id = TransportMatrix::identity(d, s);
    let sol = ode::integrate(&rhs, s, &id.entries, t, cfg)?;
    Ok((
        TransportMatrix {
            from: s,
            to: t,
            dim: d,
            entries: sol.y,
        },
        // half the mean accepted step, for callers that freeze the grid
        0.5 * (t - s).abs() / sol.accepted.max(1) as f64,
    ))
}

/// `H(t, s; γ)`.
pub fn transport_matrix(
    law: &TransportLaw,
    path: &PathCurve,
    s: f64,
    t: f64,
    cfg: &OdeConfig,
) -> Result<TransportMatrix> {
    solve_transport(law, path, s, t, cfg).map(|(m, _)| m)
}

/// `L_{s→t} u`.
pub fn transport_vector(
    law: &TransportLaw,
    path: &PathCurve,
    s: f64,
    t: f64,
    u: &Tangent,
    cfg: &OdeConfig,
) -> Result<Tangent> {
    u.base().ensure_same(&path.point(s)?)?;
    let m = transport_matrix(law, path, s, t, cfg)?;
    Tangent::new(path.point(t)?, m.apply(u.components()))
}

/// Parallel transport of the connection: `H = -Γ(γ(s))`.
pub fn law_from_connection(conn: &ConnectionField) -> TransportLaw {
    let conn = conn.clone();
    TransportLaw::new(conn.dim(), "parallel", move |s, path| {
        Ok(conn.gamma_raw(&path.point_raw(s))?.scaled(-1.0))
    })
}

/// `H = -Γ - σ`, so that the S-tensor of the law is `σ`.
pub fn law_with_offset(
    conn: &ConnectionField,
    sigma: impl Fn(&ChartPoint) -> Coeffs + Send + Sync + 'static,
) -> TransportLaw {
    let conn = conn.clone();
    TransportLaw::new(conn.dim(), "offset", move |s, path| {
        let x = ChartPoint::new(path.point_raw(s))?;
        let sig = sigma(&x);
        if !sig.is_finite() {
            return Err(Error::NonFinite {
                what: "offset tensor",
                point: x.coords().to_vec(),
            });
        }
        Ok(conn.gamma_at(&x)?.scaled(-1.0).plus(&sig.scaled(-1.0)))
    })
}

/// Law with closed form `H(t, s) = exp(A (t - s))` along any regular path.
///
/// The coefficients are `H^i_{jk} = A^i_j γ̇^k / |γ̇|²` (Euclidean norm of the
/// chart components), so that the generator is `A` itself.
pub fn exp_law(a: DMatrix<f64>) -> TransportLaw {
    let d = a.nrows();
    TransportLaw::new(d, "exp", move |s, path| {
        let v = path.velocity_raw(s);
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 <= 0.0 {
            return Err(Error::InvalidArgument(
                "exponential transport needs a regular path".into(),
            ));
        }
        Ok(Coeffs::from_fn(d, |i, j, k| a[(i, j)] * v[k] / n2))
    })
}

/// A path through a given point, parametrized so that `path.point(param) == x`.
#[derive(Clone, Debug)]
pub struct Probe {
    pub path: PathCurve,
    pub param: f64,
}

/// Step of the central difference used to differentiate transport matrices.
pub const EXTRACT_STEP: f64 = 1e-5;
/// Probe sets with a tangent-matrix condition number at or above this are rejected.
pub const PROBE_COND_LIMIT: f64 = 1e6;

/// Recovers `H^i_{jk}` at `x` from transport matrices along `d` probe paths.
pub fn extract_first_coeff(
    law: &TransportLaw,
    x: &ChartPoint,
    probes: &[Probe],
    cfg: &OdeConfig,
) -> Result<Coeffs> {
    let d = law.dim();
    if probes.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: probes.len(),
        });
    }
    let mut tangents = DMatrix::<f64>::zeros(d, d);
    let mut first = Vec::with_capacity(d);
    for (p, probe) in probes.iter().enumerate() {
        let tan = probe.path.tangent(probe.param)?;
        tan.base().ensure_same(x)?;
        for k in 0..d {
            tangents[(p, k)] = tan.components()[k];
        }
        let s = probe.param;
        let deriv = derivative5(
            |t| Ok(transport_matrix(law, &probe.path, s, t, cfg)?.entries.clone()),
            s,
            EXTRACT_STEP,
        )?;
        first.push(deriv);
    }
    let sv = tangents.clone().svd(false, false).singular_values;
    let (smax, smin) = sv.iter().fold((0.0_f64, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond >= PROBE_COND_LIMIT {
        return Err(Error::RankDeficient { cond });
    }
    let lu = tangents.lu();
    let mut out = Coeffs::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let rhs = nalgebra::DVector::from_iterator(d, first.iter().map(|m| m[i * d + j]));
            let sol = lu
                .solve(&rhs)
                .ok_or(Error::RankDeficient { cond: f64::INFINITY })?;
            for k in 0..d {
                out.set(i, j, k, sol[k]);
            }
        }
    }
    Ok(out)
}

/// `N`-th order approximant of `H(t, s)` in `t - s` for `N ∈ {0, 1}`.
///
/// The first-order term uses the law's own coefficients at `s`.
pub fn approx_transport(
    law: &TransportLaw,
    path: &PathCurve,
    s: f64,
    t: f64,
    order: u8,
) -> Result<TransportMatrix> {
    path.check_param(s)?;
    path.check_param(t)?;
    let d = law.dim();
    let mut m = TransportMatrix::identity(d, s);
    m.to = t;
    match order {
        0 => Ok(m),
        1 => {
            let xs = path.point_raw(s);
            let xt = path.point_raw(t);
            let dx: Vec<f64> = xt.iter().zip(&xs).map(|(a, b)| a - b).collect();
            let lin = law.coeff_at(s, path)?.contract_last(&dx);
            m.entries.iter_mut().zip(&lin).for_each(|(e, l)| *e += l);
            Ok(m)
        }
        n => Err(Error::InvalidArgument(format!(
            "approximation order must be 0 or 1, got {n}"
        ))),
    }
}

/// `S^i_{jk} = -H^i_{jk}(r; γ) - Γ^i_{jk}(γ(r))`.
pub fn s_tensor(law: &TransportLaw, conn: &ConnectionField, path: &PathCurve, r: f64) -> Result<Tensor> {
    let x = path.point(r)?;
    let h = law.coeff_at(r, path)?;
    let g = conn.gamma_at(&x)?;
    Tensor::from_coeffs(x, &h.plus(&g).scaled(-1.0))
}
