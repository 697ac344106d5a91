//! Two-particle kinematics on a connecting surface `γ(s, r)`.
//!
//! Particle 1 moves along `x₁(s) = γ(s, r′)` and particle 2 along
//! `x₂(s) = γ(s, r′ + ε)`. Quantities of particle 2 are carried back to
//! `x₁(s)` along the connecting path `r ↦ γ(s, r)` with the scenario's law.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    sign_of_square, ChartPoint, ConnectionField, MetricField, PathCurve, Tangent, DEFAULT_H_FD,
    DEFAULT_NULL_TOL,
};
use crate::jet::Jet2;
use crate::ode::OdeConfig;
use crate::quadrature::{self, DEFAULT_QUAD_TOL};
use crate::transport::{solve_transport, transport_matrix, TransportLaw, TransportMatrix};

/// Position and partials of the surface up to second order at one `(s, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceJet {
    pub x: Vec<f64>,
    pub xs: Vec<f64>,
    pub xr: Vec<f64>,
    pub xss: Vec<f64>,
    pub xsr: Vec<f64>,
    pub xrr: Vec<f64>,
}

impl SurfaceJet {
    fn from_jets(js: &[Jet2]) -> Self {
        SurfaceJet {
            x: js.iter().map(|j| j.v).collect(),
            xs: js.iter().map(|j| j.ds).collect(),
            xr: js.iter().map(|j| j.dr).collect(),
            xss: js.iter().map(|j| j.dss).collect(),
            xsr: js.iter().map(|j| j.dsr).collect(),
            xrr: js.iter().map(|j| j.drr).collect(),
        }
    }
}

pub type SurfaceFn = dyn Fn(Jet2, Jet2) -> Vec<Jet2> + Send + Sync;

/// Two-parameter family of points `γ(s, r)` with analytic partials.
#[derive(Clone)]
pub struct WorldSurface {
    dim: usize,
    f: Arc<SurfaceFn>,
    s_domain: (f64, f64),
    r_domain: (f64, f64),
    r_base: f64,
    /// Parameter shift applied before evaluating `f`.
    r_offset: f64,
}

impl fmt::Debug for WorldSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WorldSurface")
            .field("dim", &self.dim)
            .field("s_domain", &self.s_domain)
            .field("r_domain", &self.r_domain)
            .field("r_base", &self.r_base)
            .finish()
    }
}

impl WorldSurface {
    /// `f` maps jet-valued `(s, r)` to jet-valued chart coordinates; all partials follow from it.
    pub fn new(
        dim: usize,
        s_domain: (f64, f64),
        r_domain: (f64, f64),
        r_base: f64,
        f: impl Fn(Jet2, Jet2) -> Vec<Jet2> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(r_base >= r_domain.0 && r_base <= r_domain.1) {
            return Err(Error::OutOfDomain {
                param: "r_base",
                value: r_base,
                lo: r_domain.0,
                hi: r_domain.1,
            });
        }
        Ok(WorldSurface {
            dim,
            f: Arc::new(f),
            s_domain,
            r_domain,
            r_base,
            r_offset: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn s_domain(&self) -> (f64, f64) {
        self.s_domain
    }

    pub fn r_domain(&self) -> (f64, f64) {
        self.r_domain
    }

    pub fn r_base(&self) -> f64 {
        self.r_base
    }

    fn raw(&self, s: f64, r: f64) -> SurfaceJet {
        let js = (self.f)(Jet2::var_s(s), Jet2::var_r(r - self.r_offset));
        SurfaceJet::from_jets(&js)
    }

    /// Jet at `(s, r)` after domain and finiteness checks.
    pub fn jet(&self, s: f64, r: f64) -> Result<SurfaceJet> {
        check_in("s", s, self.s_domain)?;
        check_in("r", r, self.r_domain)?;
        let j = self.raw(s, r);
        if j.x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: j.x.len(),
            });
        }
        let all = [&j.x, &j.xs, &j.xr, &j.xss, &j.xsr, &j.xrr];
        if all.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite {
                what: "surface jet",
                point: vec![s, r],
            });
        }
        Ok(j)
    }

    pub fn map(&self, s: f64, r: f64) -> Result<ChartPoint> {
        ChartPoint::new(self.jet(s, r)?.x)
    }

    pub fn d_s(&self, s: f64, r: f64) -> Result<Vec<f64>> {
        Ok(self.jet(s, r)?.xs)
    }

    pub fn d_r(&self, s: f64, r: f64) -> Result<Vec<f64>> {
        Ok(self.jet(s, r)?.xr)
    }

    /// The curve `s ↦ γ(s, r)`.
    pub fn s_curve(&self, r: f64) -> Result<PathCurve> {
        check_in("r", r, self.r_domain)?;
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        Ok(PathCurve::new(
            self.dim,
            self.s_domain,
            move |s| a.raw(s, r).x,
            move |s| b.raw(s, r).xs,
        )
        .with_accel(move |s| c.raw(s, r).xss))
    }

    /// The connecting path `r ↦ γ(s, r)`.
    pub fn r_curve(&self, s: f64) -> Result<PathCurve> {
        check_in("s", s, self.s_domain)?;
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        Ok(PathCurve::new(
            self.dim,
            self.r_domain,
            move |r| a.raw(s, r).x,
            move |r| b.raw(s, r).xr,
        )
        .with_accel(move |r| c.raw(s, r).xrr))
    }

    /// The same surface described with `r` shifted by `c`: `γ̃(s, r) = γ(s, r - c)`.
    pub fn shifted(&self, c: f64) -> WorldSurface {
        WorldSurface {
            r_domain: (self.r_domain.0 + c, self.r_domain.1 + c),
            r_base: self.r_base + c,
            r_offset: self.r_offset + c,
            ..self.clone()
        }
    }
}

fn check_in(param: &'static str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            param,
            value: v,
            lo,
            hi,
        })
    }
}

pub type MassFn = dyn Fn(Jet2, Jet2) -> Jet2 + Send + Sync;

/// Mass function `μ(s, r)` with analytic partials.
#[derive(Clone)]
pub struct MassSurface {
    f: Arc<MassFn>,
    r_offset: f64,
}

impl fmt::Debug for MassSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MassSurface")
    }
}

impl MassSurface {
    pub fn new(f: impl Fn(Jet2, Jet2) -> Jet2 + Send + Sync + 'static) -> Self {
        MassSurface {
            f: Arc::new(f),
            r_offset: 0.0,
        }
    }

    pub fn constant(m: f64) -> Self {
        MassSurface::new(move |_, _| Jet2::constant(m))
    }

    /// `μ = 1 + a s + b r`.
    pub fn linear(a: f64, b: f64) -> Self {
        MassSurface::new(move |s, r| s * a + r * b + 1.0)
    }

    pub fn jet(&self, s: f64, r: f64) -> Result<Jet2> {
        let j = (self.f)(Jet2::var_s(s), Jet2::var_r(r - self.r_offset));
        if !j.v.is_finite() {
            return Err(Error::NonFinite {
                what: "mass",
                point: vec![s, r],
            });
        }
        if j.v.abs() <= 1e-12 {
            return Err(Error::ZeroMass { s, r });
        }
        Ok(j)
    }

    pub fn mu(&self, s: f64, r: f64) -> Result<f64> {
        Ok(self.jet(s, r)?.v)
    }

    pub fn d_s_mu(&self, s: f64, r: f64) -> Result<f64> {
        Ok(self.jet(s, r)?.ds)
    }

    pub fn d_r_mu(&self, s: f64, r: f64) -> Result<f64> {
        Ok(self.jet(s, r)?.dr)
    }

    pub fn shifted(&self, c: f64) -> MassSurface {
        MassSurface {
            f: self.f.clone(),
            r_offset: self.r_offset + c,
        }
    }
}

pub type ProbeFn = dyn Fn(&[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync;

/// A chart vector field `B(x)` with its Jacobian `∂_l B^i` (row-major in `(i, l)`).
#[derive(Clone)]
pub struct ProbeField {
    f: Arc<ProbeFn>,
}

impl fmt::Debug for ProbeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ProbeField")
    }
}

impl ProbeField {
    pub fn new(f: impl Fn(&[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static) -> Self {
        ProbeField { f: Arc::new(f) }
    }

    pub fn eval(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.f)(x)
    }
}

/// Everything needed to evaluate any deviation equation.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub label: String,
    pub dim: usize,
    pub conn: ConnectionField,
    pub metric: Option<MetricField>,
    pub law: TransportLaw,
    pub surface: WorldSurface,
    pub mass: MassSurface,
    pub probe: ProbeField,
    /// Default point on the worldline for studies.
    pub s_eval: f64,
}

impl Scenario {
    /// The same physical setup with the connecting-path parameter shifted by `c`.
    pub fn shift_r(&self, c: f64) -> Scenario {
        Scenario {
            surface: self.surface.shifted(c),
            mass: self.mass.shifted(c),
            ..self.clone()
        }
    }

    pub fn r_pair(&self, eps: f64) -> Result<(f64, f64)> {
        let r1 = self.surface.r_base();
        let r2 = r1 + eps;
        check_in("epsilon", r2, self.surface.r_domain())?;
        Ok((r1, r2))
    }

    pub fn require_metric(&self) -> Result<&MetricField> {
        self.metric.as_ref().ok_or_else(|| Error::MissingMetric {
            scenario: self.label.clone(),
        })
    }
}

/// Numerical settings for kinematic evaluations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ode: OdeConfig,
    pub quad_tol: f64,
    /// Step for first derivatives in `s` of separation-dependent quantities.
    pub h_s: f64,
    /// Outer step for the nested second derivative of the deviation vector.
    pub h_ss: f64,
    pub null_tol: f64,
    /// Fixed quadrature partition (fractions of `[r′, r″]`) replacing adaptive subdivision.
    #[serde(default)]
    pub partition: Option<Vec<f64>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ode: OdeConfig::default(),
            quad_tol: DEFAULT_QUAD_TOL,
            h_s: DEFAULT_H_FD,
            h_ss: 1e-3,
            null_tol: DEFAULT_NULL_TOL,
            partition: None,
        }
    }
}

impl EvalConfig {
    /// Replaces adaptive step and interval selection by the choices made at `(s, ε)`.
    ///
    /// Finite differences in `s` then see a smooth function instead of one
    /// whose discretization changes between stencil points.
    pub fn frozen(&self, sc: &Scenario, s: f64, eps: f64) -> Result<EvalConfig> {
        let (r1, r2) = sc.r_pair(eps)?;
        let out = self.frozen_transport(sc, s, eps)?;
        if r1 == r2 {
            return Ok(out);
        }
        let path = sc.surface.r_curve(s)?;
        let quad = quadrature::integrate(
            &|u| deviation_integrand(sc, &path, r1, u, &out.ode),
            r1,
            r2,
            self.quad_tol,
        )?;
        Ok(EvalConfig {
            partition: Some(quad.partition),
            ..out
        })
    }

    /// Like [`EvalConfig::frozen`] but fixes only the ODE step.
    pub fn frozen_transport(&self, sc: &Scenario, s: f64, eps: f64) -> Result<EvalConfig> {
        let (r1, r2) = sc.r_pair(eps)?;
        if r1 == r2 {
            return Ok(self.clone());
        }
        let path = sc.surface.r_curve(s)?;
        let (_, step) = solve_transport(&sc.law, &path, r2, r1, &self.ode)?;
        let step = if step.is_finite() && step > 0.0 {
            step
        } else {
            (r2 - r1).abs()
        };
        Ok(EvalConfig {
            ode: self.ode.uniform(step),
            ..self.clone()
        })
    }
}

/// Worldline `x₁` (which = 1) or `x₂` (which = 2).
pub fn worldline(sc: &Scenario, which: u8, eps: f64) -> Result<PathCurve> {
    let (r1, r2) = sc.r_pair(eps)?;
    match which {
        1 => sc.surface.s_curve(r1),
        2 => sc.surface.s_curve(r2),
        w => Err(Error::InvalidArgument(format!("particle index must be 1 or 2, got {w}"))),
    }
}

/// Covariant `s`-derivative of the `s`-tangent along `s ↦ γ(s, r)`.
pub fn force_field(sc: &Scenario, s: f64, r: f64) -> Result<Tangent> {
    let j = sc.surface.jet(s, r)?;
    force_from_jet(&sc.conn, &j)
}

fn force_from_jet(conn: &ConnectionField, j: &SurfaceJet) -> Result<Tangent> {
    let g = conn.gamma_raw(&j.x)?;
    let corr = g.contract(&j.xs, &j.xs);
    let comps = j.xss.iter().zip(&corr).map(|(a, b)| a + b).collect();
    Tangent::new(ChartPoint::new(j.x.clone())?, comps)
}

fn deviation_integrand(
    sc: &Scenario,
    path: &PathCurve,
    r1: f64,
    u: f64,
    ode: &OdeConfig,
) -> Result<Vec<f64>> {
    let m = transport_matrix(&sc.law, path, u, r1, ode)?;
    Ok(m.apply(&path.velocity_raw(u)))
}

/// `h₂₁ = ∫_{r′}^{r″} L_{u→r′} γ_r(s, u) du`.
pub fn deviation_vector(sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<Tangent> {
    let (r1, r2) = sc.r_pair(eps)?;
    let x1 = sc.surface.map(s, r1)?;
    if r1 == r2 {
        return Ok(Tangent::zero(x1));
    }
    let path = sc.surface.r_curve(s)?;
    let f = |u: f64| deviation_integrand(sc, &path, r1, u, &cfg.ode);
    let value = match &cfg.partition {
        Some(p) => quadrature::integrate_on(&f, r1, r2, p)?,
        None => quadrature::integrate(&f, r1, r2, cfg.quad_tol)?.value,
    };
    Tangent::new(x1, value)
}

/// `ζ₂₁ = ε γ_r(s, r′)`.
pub fn infinitesimal_deviation(sc: &Scenario, s: f64, eps: f64) -> Result<Tangent> {
    let (r1, _) = sc.r_pair(eps)?;
    let j = sc.surface.jet(s, r1)?;
    Tangent::new(
        ChartPoint::new(j.x)?,
        j.xr.iter().map(|c| c * eps).collect(),
    )
}

/// `L_{r″→r′}` along the connecting path at `s`.
pub fn back_transport(sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<TransportMatrix> {
    let (r1, r2) = sc.r_pair(eps)?;
    let path = sc.surface.r_curve(s)?;
    transport_matrix(&sc.law, &path, r2, r1, &cfg.ode)
}

/// `ΔB₂₁ = L_{r″→r′} B(s, r″) - B(s, r′)`.
pub fn delta_field(
    sc: &Scenario,
    s: f64,
    eps: f64,
    b: &dyn Fn(f64, f64) -> Result<Tangent>,
    cfg: &EvalConfig,
) -> Result<Tangent> {
    let (r1, r2) = sc.r_pair(eps)?;
    let x1 = sc.surface.map(s, r1)?;
    let x2 = sc.surface.map(s, r2)?;
    let b1 = b(s, r1)?;
    let b2 = b(s, r2)?;
    b1.base().ensure_same(&x1)?;
    b2.base().ensure_same(&x2)?;
    let l = back_transport(sc, s, eps, cfg)?;
    let moved = Tangent::new(x1, l.apply(b2.components()))?;
    moved.sub(&b1)
}

/// Both particles' data at one `s`, sharing a single back-transport solve.
#[derive(Clone, Debug)]
pub struct PairState {
    pub s: f64,
    pub eps: f64,
    pub x1: ChartPoint,
    pub j1: SurfaceJet,
    pub j2: SurfaceJet,
    pub mu1: Jet2,
    pub mu2: Jet2,
    pub back: TransportMatrix,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

impl PairState {
    pub fn new(sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<Self> {
        let (r1, r2) = sc.r_pair(eps)?;
        let j1 = sc.surface.jet(s, r1)?;
        let j2 = sc.surface.jet(s, r2)?;
        let mu1 = sc.mass.jet(s, r1)?;
        let mu2 = sc.mass.jet(s, r2)?;
        let back = back_transport(sc, s, eps, cfg)?;
        let a1 = force_from_jet(&sc.conn, &j1)?.into_components();
        let a2 = force_from_jet(&sc.conn, &j2)?.into_components();
        Ok(PairState {
            s,
            eps,
            x1: ChartPoint::new(j1.x.clone())?,
            j1,
            j2,
            mu1,
            mu2,
            back,
            a1,
            a2,
        })
    }

    fn delta(&self, b2: &[f64], b1: &[f64]) -> Vec<f64> {
        self.back
            .apply(b2)
            .iter()
            .zip(b1)
            .map(|(a, b)| a - b)
            .collect()
    }

    pub fn v1(&self) -> &[f64] {
        &self.j1.xs
    }

    pub fn p1(&self) -> Vec<f64> {
        scale(&self.j1.xs, self.mu1.v)
    }

    pub fn p2(&self) -> Vec<f64> {
        scale(&self.j2.xs, self.mu2.v)
    }

    pub fn zeta(&self) -> Vec<f64> {
        scale(&self.j1.xr, self.eps)
    }

    pub fn delta_v(&self) -> Vec<f64> {
        self.delta(&self.j2.xs, &self.j1.xs)
    }

    pub fn delta_a(&self) -> Vec<f64> {
        self.delta(&self.a2, &self.a1)
    }

    pub fn delta_p(&self) -> Vec<f64> {
        self.delta(&self.p2(), &self.p1())
    }

    pub fn delta_k(&self) -> Vec<f64> {
        self.delta(&scale(&self.a2, self.mu2.v), &scale(&self.a1, self.mu1.v))
    }

    /// `(L p₂) · V₁` times the sign of `(V₁)²`.
    pub fn energy(&self, g: &MetricField, null_tol: f64) -> Result<f64> {
        let gx = g.g_at(&self.x1)?;
        let v1 = Tangent::new(self.x1.clone(), self.j1.xs.clone())?;
        let sign = sign_of_square(g, &self.x1, &v1, null_tol)?;
        Ok(sign * gx.bilinear(&self.back.apply(&self.p2()), &self.j1.xs))
    }

    /// The second algebraic form `sign · (Δp₂₁ · V₁ + p₁ · V₁)`.
    pub fn energy_split(&self, g: &MetricField, null_tol: f64) -> Result<f64> {
        let gx = g.g_at(&self.x1)?;
        let v1 = Tangent::new(self.x1.clone(), self.j1.xs.clone())?;
        let sign = sign_of_square(g, &self.x1, &v1, null_tol)?;
        Ok(sign * (gx.bilinear(&self.delta_p(), &self.j1.xs) + gx.bilinear(&self.p1(), &self.j1.xs)))
    }

    fn tangent(&self, c: Vec<f64>) -> Result<Tangent> {
        Tangent::new(self.x1.clone(), c)
    }
}

pub(crate) fn scale(v: &[f64], k: f64) -> Vec<f64> {
    v.iter().map(|x| x * k).collect()
}

/// `ΔV₂₁ = L_{r″→r′} V₂ - V₁`.
pub fn relative_velocity(sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<Tangent> {
    let p = PairState::new(sc, s, eps, cfg)?;
    p.tangent(p.delta_v())
}

/// `ΔA₂₁ = L_{r″→r′} F_s(r″) - F_s(r′)`.
pub fn relative_acceleration(sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<Tangent> {
    let p = PairState::new(sc, s, eps, cfg)?;
    p.tangent(p.delta_a())
}

/// `p_a = μ(s, r_a) V_a`.
pub fn momentum(sc: &Scenario, which: u8, s: f64, eps: f64) -> Result<Tangent> {
    let (r1, r2) = sc.r_pair(eps)?;
    let r = match which {
        1 => r1,
        2 => r2,
        w => return Err(Error::InvalidArgument(format!("particle index must be 1 or 2, got {w}"))),
    };
    let j = sc.surface.jet(s, r)?;
    let mu = sc.mass.mu(s, r)?;
    Tangent::new(ChartPoint::new(j.x)?, scale(&j.xs, mu))
}

/// `Δp₂₁ = L_{r″→r′} p₂ - p₁`.
pub fn relative_momentum(sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<Tangent> {
    let p = PairState::new(sc, s, eps, cfg)?;
    p.tangent(p.delta_p())
}

/// `ΔK₂₁` for the force `K = μ F_s`.
pub fn relative_force(sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<Tangent> {
    let p = PairState::new(sc, s, eps, cfg)?;
    p.tangent(p.delta_k())
}

/// `E₂₁ = ε((V₁)²) (L_{r″→r′} p₂) · V₁`.
pub fn relative_energy(sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<f64> {
    let g = sc.require_metric()?;
    PairState::new(sc, s, eps, cfg)?.energy(g, cfg.null_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::law_from_connection;

    fn flat_scenario(f: impl Fn(Jet2, Jet2) -> Vec<Jet2> + Send + Sync + 'static) -> Scenario {
        let conn = ConnectionField::flat(2);
        Scenario {
            label: "test".into(),
            dim: 2,
            law: law_from_connection(&conn),
            conn,
            metric: Some(MetricField::euclidean(2)),
            surface: WorldSurface::new(2, (-1.0, 1.0), (-0.5, 0.5), 0.0, f).unwrap(),
            mass: MassSurface::constant(1.0),
            probe: ProbeField::new(|x| (x.to_vec(), vec![1.0, 0.0, 0.0, 1.0])),
            s_eval: 0.3,
        }
    }

    #[test]
    fn worldlines_and_velocity() {
        let sc = flat_scenario(|s, r| vec![s, r]);
        let x1 = worldline(&sc, 1, 0.0).unwrap();
        let x2 = worldline(&sc, 2, 0.0).unwrap();
        assert_eq!(x1.point(0.4).unwrap(), x2.point(0.4).unwrap());
        assert_eq!(x1.point(0.4).unwrap().coords(), &[0.4, 0.0]);
        assert_eq!(x1.tangent(0.4).unwrap().components(), &[1.0, 0.0]);
        assert!(matches!(worldline(&sc, 1, 0.9), Err(Error::OutOfDomain { .. })));
        assert!(worldline(&sc, 3, 0.1).is_err());
    }

    #[test]
    fn force_field_flat_cases() {
        let sc = flat_scenario(|s, r| vec![s, r]);
        assert_eq!(force_field(&sc, 0.2, 0.1).unwrap().max_abs(), 0.0);
        let a = 0.7;
        let sc = flat_scenario(move |s, r| vec![s, r + s * s * (0.5 * a)]);
        let f = force_field(&sc, 0.2, 0.1).unwrap();
        assert!((f.components()[0]).abs() < 1e-15);
        assert!((f.components()[1] - a).abs() < 1e-15);
    }

    #[test]
    fn deviation_in_flat_plane() {
        let sc = flat_scenario(|s, r| vec![s, r]);
        let cfg = EvalConfig::default();
        assert_eq!(deviation_vector(&sc, 0.3, 0.0, &cfg).unwrap().max_abs(), 0.0);
        let h = deviation_vector(&sc, 0.3, 0.2, &cfg).unwrap();
        assert!(h.components()[0].abs() < 1e-15);
        assert!((h.components()[1] - 0.2).abs() < 1e-14);
        let z = infinitesimal_deviation(&sc, 0.3, 0.2).unwrap();
        assert_eq!(z.components(), &[0.0, 0.2]);
        let z2 = infinitesimal_deviation(&sc, 0.3, 0.4).unwrap();
        assert_eq!(z2.components(), &[0.0, 0.4]);
    }

    #[test]
    fn curved_r_lines_closed_form() {
        // γ = (s + r², r): with Γ ≡ 0 the deviation is the chord γ(r″) - γ(r′).
        let sc = flat_scenario(|s, r| vec![s + r * r, r]);
        let h = deviation_vector(&sc, 0.1, 0.3, &EvalConfig::default()).unwrap();
        assert!((h.components()[0] - 0.09).abs() < 1e-14);
        assert!((h.components()[1] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn relative_velocity_hand_value() {
        let sc = flat_scenario(|s, r| vec![s * (r + 1.0), r]);
        let cfg = EvalConfig::default();
        let dv = relative_velocity(&sc, 0.3, 0.05, &cfg).unwrap();
        assert!((dv.components()[0] - 0.05).abs() < 1e-14);
        assert!(dv.components()[1].abs() < 1e-15);
        let via = delta_field(
            &sc,
            0.3,
            0.05,
            &|s, r| Tangent::new(sc.surface.map(s, r)?, sc.surface.d_s(s, r)?),
            &cfg,
        )
        .unwrap();
        assert!(via.sub(&dv).unwrap().max_abs() < 1e-12);
        assert_eq!(relative_velocity(&sc, 0.3, 0.0, &cfg).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn energy_forms_and_static_limit() {
        let sc = flat_scenario(|s, r| vec![s, r]);
        let cfg = EvalConfig::default();
        assert!((relative_energy(&sc, 0.2, 0.0, &cfg).unwrap() - 1.0).abs() < 1e-15);
        let sc = Scenario {
            mass: MassSurface::linear(0.1, 0.2),
            ..flat_scenario(|s, r| vec![s + 0.3 * r * s, r + s * s])
        };
        let p = PairState::new(&sc, 0.3, 0.1, &cfg).unwrap();
        let g = sc.metric.as_ref().unwrap();
        let e1 = p.energy(g, 1e-10).unwrap();
        let e2 = p.energy_split(g, 1e-10).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn momentum_requires_nonzero_mass() {
        let sc = Scenario {
            mass: MassSurface::new(|_, r| r * 2.0),
            ..flat_scenario(|s, r| vec![s, r])
        };
        assert!(momentum(&sc, 1, 0.0, 0.0).is_err());
        assert!(momentum(&sc, 2, 0.0, 0.1).is_ok());
    }

    #[test]
    fn missing_metric_for_energy() {
        let sc = Scenario {
            metric: None,
            ..flat_scenario(|s, r| vec![s, r])
        };
        assert!(matches!(
            relative_energy(&sc, 0.0, 0.1, &EvalConfig::default()),
            Err(Error::MissingMetric { .. })
        ));
    }

    #[test]
    fn shift_keeps_worldlines() {
        let sc = flat_scenario(|s, r| vec![s + r * r, r + s * r]);
        let sh = sc.shift_r(0.25);
        for eps in [0.0, 0.1] {
            let a = worldline(&sc, 2, eps).unwrap().point(0.4).unwrap();
            let b = worldline(&sh, 2, eps).unwrap().point(0.4).unwrap();
            assert!(a.same_as(&b));
        }
    }
}
