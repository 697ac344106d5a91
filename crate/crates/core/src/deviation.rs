//! Residuals of the first-order deviation equations and convergence-order fits.
//!
//! Every residual is `lhs - Σ terms`, evaluated at `x₁(s)`. Terms that enter
//! an equation with a minus sign are stored already negated, so the list
//! always sums to the right-hand side.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    cov_derivative_tensor_along, curvature_at, curvature_map, derivative5, max_abs, torsion_at,
    torsion_map, ChartPoint, Coeffs, PathCurve, Tensor,
};
use crate::kinematics::{scale, EvalConfig, PairState, Scenario};
use crate::transport::s_tensor;

/// Residual magnitudes at or below this are treated as numerical noise.
pub const NUMERICAL_FLOOR: f64 = 1e-11;
/// Points with residual within this factor of the floor are excluded from fits.
pub const FLOOR_MARGIN: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EquationId {
    E2_10,
    E2_13,
    E3_1,
    E4_1,
    E4_3,
    E4_4,
    E4_5,
    E5_1,
    E5_2,
    E6_2,
    E6_3,
    E6_4,
    E6_5,
    E7_1,
    E7_2,
    E7_4,
}

impl EquationId {
    pub const ALL: [EquationId; 16] = [
        EquationId::E2_10,
        EquationId::E2_13,
        EquationId::E3_1,
        EquationId::E4_1,
        EquationId::E4_3,
        EquationId::E4_4,
        EquationId::E4_5,
        EquationId::E5_1,
        EquationId::E5_2,
        EquationId::E6_2,
        EquationId::E6_3,
        EquationId::E6_4,
        EquationId::E6_5,
        EquationId::E7_1,
        EquationId::E7_2,
        EquationId::E7_4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EquationId::E2_10 => "E2_10",
            EquationId::E2_13 => "E2_13",
            EquationId::E3_1 => "E3_1",
            EquationId::E4_1 => "E4_1",
            EquationId::E4_3 => "E4_3",
            EquationId::E4_4 => "E4_4",
            EquationId::E4_5 => "E4_5",
            EquationId::E5_1 => "E5_1",
            EquationId::E5_2 => "E5_2",
            EquationId::E6_2 => "E6_2",
            EquationId::E6_3 => "E6_3",
            EquationId::E6_4 => "E6_4",
            EquationId::E6_5 => "E6_5",
            EquationId::E7_1 => "E7_1",
            EquationId::E7_2 => "E7_2",
            EquationId::E7_4 => "E7_4",
        }
    }

    /// Exact identities have no remainder term.
    pub fn is_exact(&self) -> bool {
        matches!(self, EquationId::E5_1)
    }

    pub fn needs_metric(&self) -> bool {
        matches!(self, EquationId::E7_4)
    }

    /// Whether the deviation vector (and hence quadrature) enters the residual.
    pub fn needs_deviation_vector(&self) -> bool {
        matches!(self, EquationId::E2_13 | EquationId::E4_1 | EquationId::E6_3)
    }
}

impl fmt::Display for EquationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EquationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EquationId::ALL
            .iter()
            .copied()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown equation id `{s}`")))
    }
}

/// Alternative forms of an equation, used to cross-check the standard form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    Standard,
    /// Relative-acceleration equation with both S-terms added instead of subtracted.
    PrintedSign,
    /// Force expansion weighted by `μ₁` instead of `μ₂`.
    MassOne,
}

/// Left-hand side and labelled right-hand-side terms of one residual.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTerms {
    pub eq: EquationId,
    pub lhs: Vec<f64>,
    pub terms: Vec<(&'static str, Vec<f64>)>,
}

impl ResidualTerms {
    pub fn residual(&self) -> Vec<f64> {
        let mut r = self.lhs.clone();
        for (_, t) in &self.terms {
            r.iter_mut().zip(t).for_each(|(a, b)| *a -= b);
        }
        r
    }

    pub fn norm(&self) -> f64 {
        max_abs(&self.residual())
    }

    pub fn term(&self, label: &str) -> Option<&[f64]> {
        self.terms
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualSample {
    pub eq: EquationId,
    pub s: f64,
    pub epsilon: f64,
    pub residual_norm: f64,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub eq: EquationId,
    pub scenario: String,
    pub s: f64,
    pub epsilon_ladder: Vec<f64>,
    pub samples: Vec<ResidualSample>,
    pub fitted_order: Option<f64>,
    pub fit_r2: Option<f64>,
    pub floor_detected: bool,
    pub exact: bool,
    pub points_in_fit: usize,
}

impl ConvergenceReport {
    pub fn max_residual(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.residual_norm))
    }

    /// Passes when exact, or at the floor everywhere, or the fitted order reaches `threshold`.
    pub fn meets(&self, threshold: f64) -> bool {
        if self.exact {
            return true;
        }
        match self.fitted_order {
            Some(p) => p >= threshold,
            None => self.floor_detected,
        }
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn neg(a: &[f64]) -> Vec<f64> {
    scale(a, -1.0)
}

/// Evaluation context for one `(s, ε)`; closures of `u` give the fields along `x₁`.
struct Ctx<'a> {
    sc: &'a Scenario,
    eps: f64,
    cfg: &'a EvalConfig,
    r1: f64,
    x1: PathCurve,
}

impl<'a> Ctx<'a> {
    fn new(sc: &'a Scenario, eps: f64, cfg: &'a EvalConfig) -> Result<Self> {
        let (r1, _) = sc.r_pair(eps)?;
        let x1 = sc.surface.s_curve(r1)?.with_step(cfg.h_s);
        Ok(Ctx {
            sc,
            eps,
            cfg,
            r1,
            x1,
        })
    }

    fn pair(&self, u: f64) -> Result<PairState> {
        PairState::new(self.sc, u, self.eps, self.cfg)
    }

    fn point(&self, u: f64) -> Result<ChartPoint> {
        self.x1.point(u)
    }

    fn gamma(&self, u: f64) -> Result<Coeffs> {
        self.sc.conn.gamma_at(&self.point(u)?)
    }

    fn velocity(&self, u: f64) -> Vec<f64> {
        self.x1.velocity_raw(u)
    }

    /// Covariant derivative along `x₁` of the component field `f` with step `h`.
    fn cov_d(&self, f: &dyn Fn(f64) -> Result<Vec<f64>>, u: f64, h: f64) -> Result<Vec<f64>> {
        let d = derivative5(f, u, h)?;
        let b = f(u)?;
        let corr = self.gamma(u)?.contract(&b, &self.velocity(u));
        Ok(add(&d, &corr))
    }

    fn torsion(&self, u: f64) -> Result<Tensor> {
        torsion_at(&self.sc.conn, &self.point(u)?)
    }

    fn curvature(&self, u: f64) -> Result<Tensor> {
        curvature_at(&self.sc.conn, &self.point(u)?)
    }

    fn s_tensor(&self, u: f64) -> Result<Tensor> {
        let path = self.sc.surface.r_curve(u)?;
        s_tensor(&self.sc.law, &self.sc.conn, &path, self.r1)
    }

    fn d_torsion(&self, u: f64) -> Result<Tensor> {
        cov_derivative_tensor_along(&self.sc.conn, &self.x1, &|v| self.torsion(v), u)
    }

    fn d_s_tensor(&self, u: f64) -> Result<Tensor> {
        cov_derivative_tensor_along(&self.sc.conn, &self.x1, &|v| self.s_tensor(v), u)
    }

    fn zeta(&self, u: f64) -> Result<Vec<f64>> {
        Ok(scale(&self.sc.surface.jet(u, self.r1)?.xr, self.eps))
    }

    /// `Dζ/ds = ε (γ_rs + Γ(γ_r, γ_s))`.
    fn d_zeta(&self, u: f64) -> Result<Vec<f64>> {
        let j = self.sc.surface.jet(u, self.r1)?;
        let corr = self.sc.conn.gamma_raw(&j.x)?.contract(&j.xr, &j.xs);
        Ok(scale(&add(&j.xsr, &corr), self.eps))
    }

    fn dd_zeta(&self, u: f64) -> Result<Vec<f64>> {
        self.cov_d(&|v| self.d_zeta(v), u, self.cfg.h_s)
    }

    /// `D_r γ_s = γ_sr + Γ(γ_s, γ_r)` at `r′`.
    fn dr_gamma_s(&self, u: f64) -> Result<Vec<f64>> {
        let j = self.sc.surface.jet(u, self.r1)?;
        let corr = self.sc.conn.gamma_raw(&j.x)?.contract(&j.xs, &j.xr);
        Ok(add(&j.xsr, &corr))
    }

    /// `D F_s / dr` at `r′` along the connecting path.
    fn dr_force(&self, u: f64) -> Result<Vec<f64>> {
        let sf = &self.sc.surface;
        let conn = &self.sc.conn;
        let force = |r: f64| -> Result<Vec<f64>> {
            let j = sf.jet(u, r)?;
            let corr = conn.gamma_raw(&j.x)?.contract(&j.xs, &j.xs);
            Ok(add(&j.xss, &corr))
        };
        let d = derivative5(force, self.r1, self.cfg.h_s)?;
        let j = sf.jet(u, self.r1)?;
        let corr = conn.gamma_raw(&j.x)?.contract(&force(self.r1)?, &j.xr);
        Ok(add(&d, &corr))
    }

    fn deviation(&self, u: f64) -> Result<Vec<f64>> {
        Ok(crate::kinematics::deviation_vector(self.sc, u, self.eps, self.cfg)?.into_components())
    }

    fn d_deviation(&self, u: f64, h: f64) -> Result<Vec<f64>> {
        self.cov_d(&|v| self.deviation(v), u, h)
    }
}

/// Labelled terms of `eq` at `(s, ε)` using `cfg` exactly as given.
///
/// Callers differentiating residuals in `s` should pass a configuration from
/// [`EvalConfig::frozen`] so that every stencil point shares one discretization.
pub fn residual_terms_with(
    eq: EquationId,
    form: Form,
    sc: &Scenario,
    s: f64,
    eps: f64,
    cfg: &EvalConfig,
) -> Result<ResidualTerms> {
    let c = Ctx::new(sc, eps, cfg)?;
    let p = c.pair(s)?;
    let v = p.v1().to_vec();
    let a = p.a1.clone();
    let zeta = p.zeta();
    let (mu1, mu2) = (p.mu1, p.mu2);
    let out = |lhs: Vec<f64>, terms: Vec<(&'static str, Vec<f64>)>| ResidualTerms { eq, lhs, terms };
    let curv_term = |x: &[f64]| -> Result<Vec<f64>> {
        Ok(curvature_map(&c.curvature(s)?, x, &zeta, x))
    };

    Ok(match eq {
        EquationId::E2_10 => {
            let (b1, jac) = sc.probe.eval(p.x1.coords());
            let (b2, _) = sc.probe.eval(&p.j2.x);
            let lhs = sub(&p.back.apply(&b2), &b1);
            let d = sc.dim;
            let xr = &p.j1.xr;
            let db: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|l| jac[i * d + l] * xr[l]).sum())
                .collect();
            let db = add(&db, &c.gamma(s)?.contract(&b1, xr));
            let st = c.s_tensor(s)?;
            out(
                lhs,
                vec![
                    ("DB/dr eps", scale(&db, eps)),
                    ("S(B,zeta)", st.contract_12(&b1, &zeta)),
                ],
            )
        }
        EquationId::E2_13 => out(c.deviation(s)?, vec![("zeta", zeta)]),
        EquationId::E3_1 => {
            let t = c.torsion(s)?;
            let dz = c.d_zeta(s)?;
            out(
                c.dd_zeta(s)?,
                vec![
                    ("R(V,zeta)V", curv_term(&v)?),
                    ("T(V,Dzeta)", torsion_map(&t, &v, &dz)),
                    ("DT(V,zeta)", torsion_map(&c.d_torsion(s)?, &v, &zeta)),
                    ("T(F,zeta)", torsion_map(&t, &a, &zeta)),
                    ("DF/dr eps", scale(&c.dr_force(s)?, eps)),
                ],
            )
        }
        EquationId::E4_1 => out(c.d_deviation(s, cfg.h_s)?, vec![("Dzeta", c.d_zeta(s)?)]),
        EquationId::E4_3 => {
            let st = c.s_tensor(s)?;
            out(
                p.delta_v(),
                vec![
                    ("D_r gamma_s eps", scale(&c.dr_gamma_s(s)?, eps)),
                    ("S(V,zeta)", st.contract_12(&v, &zeta)),
                ],
            )
        }
        EquationId::E4_4 => {
            let st = c.s_tensor(s)?;
            let t = c.torsion(s)?;
            out(
                c.d_zeta(s)?,
                vec![
                    ("dV", p.delta_v()),
                    ("T(V,zeta)", torsion_map(&t, &v, &zeta)),
                    ("-S(V,zeta)", neg(&st.contract_12(&v, &zeta))),
                ],
            )
        }
        EquationId::E4_5 => {
            let d_dv = c.cov_d(&|u| Ok(c.pair(u)?.delta_v()), s, cfg.h_s)?;
            let sv = |u: f64| -> Result<Vec<f64>> {
                Ok(c.s_tensor(u)?.contract_12(&c.velocity(u), &c.zeta(u)?))
            };
            out(
                d_dv,
                vec![
                    ("R(V,zeta)V", curv_term(&v)?),
                    ("D[S(V,zeta)]", c.cov_d(&sv, s, cfg.h_s)?),
                    ("DF/dr eps", scale(&c.dr_force(s)?, eps)),
                ],
            )
        }
        EquationId::E5_1 => out(
            p.delta_p(),
            vec![
                ("mu2 dV", scale(&p.delta_v(), mu2.v)),
                ("(mu2/mu1-1) p1", scale(&p.p1(), mu2.v / mu1.v - 1.0)),
            ],
        ),
        EquationId::E5_2 => {
            let d_dp = c.cov_d(&|u| Ok(c.pair(u)?.delta_p()), s, cfg.h_s)?;
            let p1 = p.p1();
            let sp = |u: f64| -> Result<Vec<f64>> {
                let q = c.pair(u)?;
                Ok(scale(&c.s_tensor(u)?.contract_12(&q.p1(), &q.zeta()), 1.0 / q.mu1.v))
            };
            let ratio = |u: f64| -> Result<Vec<f64>> {
                let q = c.pair(u)?;
                Ok(scale(&q.p1(), q.mu2.v / q.mu1.v - 1.0))
            };
            out(
                d_dp,
                vec![
                    ("mu2/mu1^2 R(p1,zeta)p1", scale(&curv_term(&p1)?, mu2.v / (mu1.v * mu1.v))),
                    ("mu2 D[S(p1,zeta)/mu1]", scale(&c.cov_d(&sp, s, cfg.h_s)?, mu2.v)),
                    ("mu2' dV", scale(&p.delta_v(), mu2.ds)),
                    ("D[(mu2/mu1-1) p1]", c.cov_d(&ratio, s, cfg.h_s)?),
                    ("mu2 DF/dr eps", scale(&c.dr_force(s)?, mu2.v * eps)),
                ],
            )
        }
        EquationId::E6_2 => {
            let st = c.s_tensor(s)?;
            out(
                p.delta_a(),
                vec![
                    ("DF/dr eps", scale(&c.dr_force(s)?, eps)),
                    ("S(A,zeta)", st.contract_12(&a, &zeta)),
                ],
            )
        }
        EquationId::E6_3 => {
            // both levels use the wider step: roundoff scales like 1/h²
            let dd_h = {
                let d = derivative5(|u| c.d_deviation(u, cfg.h_ss), s, cfg.h_ss)?;
                let corr = c.gamma(s)?.contract(&c.d_deviation(s, cfg.h_ss)?, &v);
                add(&d, &corr)
            };
            out(dd_h, vec![("DDzeta", c.dd_zeta(s)?)])
        }
        EquationId::E6_4 => {
            let st = c.s_tensor(s)?;
            let t = c.torsion(s)?;
            let dz = c.d_zeta(s)?;
            out(
                c.dd_zeta(s)?,
                vec![
                    ("dA", p.delta_a()),
                    ("R(V,zeta)V", curv_term(&v)?),
                    ("T(A,zeta)", torsion_map(&t, &a, &zeta)),
                    ("-S(A,zeta)", neg(&st.contract_12(&a, &zeta))),
                    ("T(V,Dzeta)", torsion_map(&t, &v, &dz)),
                    ("DT(V,zeta)", torsion_map(&c.d_torsion(s)?, &v, &zeta)),
                ],
            )
        }
        EquationId::E6_5 => {
            let d_dv = c.cov_d(&|u| Ok(c.pair(u)?.delta_v()), s, cfg.h_s)?;
            let st = c.s_tensor(s)?;
            let dz = c.d_zeta(s)?;
            let s_term = st.contract_12(&v, &dz);
            let ds_term = c.d_s_tensor(s)?.contract_12(&v, &zeta);
            let sign = if form == Form::PrintedSign { 1.0 } else { -1.0 };
            out(
                p.delta_a(),
                vec![
                    ("DdV", d_dv),
                    ("-R(V,zeta)V", neg(&curv_term(&v)?)),
                    ("S(V,Dzeta)", scale(&s_term, sign)),
                    ("DS(V,zeta)", scale(&ds_term, sign)),
                ],
            )
        }
        EquationId::E7_1 => {
            let st = c.s_tensor(s)?;
            let w = if form == Form::MassOne { mu1.v } else { mu2.v };
            out(
                p.delta_k(),
                vec![
                    ("(mu2-mu1) A", scale(&a, mu2.v - mu1.v)),
                    ("mu DF/dr eps", scale(&c.dr_force(s)?, w * eps)),
                    ("mu S(A,zeta)", scale(&st.contract_12(&a, &zeta), w)),
                ],
            )
        }
        EquationId::E7_2 => {
            let d_dp = c.cov_d(&|u| Ok(c.pair(u)?.delta_p()), s, cfg.h_s)?;
            let p1 = p.p1();
            let st = c.s_tensor(s)?;
            let dz = c.d_zeta(s)?;
            let s_sum = add(
                &st.contract_12(&p1, &dz),
                &c.d_s_tensor(s)?.contract_12(&p1, &zeta),
            );
            out(
                d_dp,
                vec![
                    ("mu2/mu1^2 R(p1,zeta)p1", scale(&curv_term(&p1)?, mu2.v / (mu1.v * mu1.v))),
                    ("mu2/mu1 [S + DS]", scale(&s_sum, mu2.v / mu1.v)),
                    ("mu2' dV", scale(&p.delta_v(), mu2.ds)),
                    ("(mu2-mu1)'/mu1 p1", scale(&p1, (mu2.ds - mu1.ds) / mu1.v)),
                    ("dK", p.delta_k()),
                ],
            )
        }
        EquationId::E7_4 => {
            let g = sc.require_metric()?;
            let x1 = p.x1.clone();
            let gx = g.g_at(&x1)?;
            let dot = |a: &[f64], b: &[f64]| gx.bilinear(a, b);
            let energy = |u: f64| -> Result<Vec<f64>> { Ok(vec![c.pair(u)?.energy(g, cfg.null_tol)?]) };
            let lhs = derivative5(energy, s, cfg.h_s)?;
            let v1t = crate::geometry::Tangent::new(x1.clone(), v.clone())?;
            let sign = crate::geometry::sign_of_square(g, &x1, &v1t, cfg.null_tol)?;
            let dg = cov_derivative_tensor_along(&sc.conn, &c.x1, &|u| g.g_at(&c.point(u)?), s)?;
            let p1 = p.p1();
            let dp = p.delta_p();
            let st = c.s_tensor(s)?;
            let dz = c.d_zeta(s)?;
            let s_sum = add(
                &st.contract_12(&p1, &dz),
                &c.d_s_tensor(s)?.contract_12(&p1, &zeta),
            );
            let (m1, m2) = (mu1.v, mu2.v);
            let raw = [
                ("R", m2 / m1.powi(3) * dot(&curv_term(&p1)?, &p1)),
                ("S + DS", m2 / (m1 * m1) * dot(&p1, &s_sum)),
                ("mu2' V.dV", mu2.ds * dot(&v, &p.delta_v())),
                ("(mu2-mu1)' p.p", (mu2.ds - mu1.ds) / (m1 * m1) * dot(&p1, &p1)),
                ("V.dK", dot(&v, &p.delta_k())),
                ("Dg(dp,V)", dg.bilinear(&dp, &v)),
                ("dp.A", dot(&dp, &a)),
                ("mu1' V.V", mu1.ds * dot(&v, &v)),
                ("mu1 (2 V.A + Dg(V,V))", m1 * (2.0 * dot(&v, &a) + dg.bilinear(&v, &v))),
            ];
            out(
                lhs,
                raw.iter().map(|(l, x)| (*l, vec![sign * x])).collect(),
            )
        }
    })
}

/// Standard-form terms with a discretization frozen at `(s, ε)`.
pub fn residual_terms(eq: EquationId, sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<ResidualTerms> {
    let frozen = freeze(eq, sc, s, eps, cfg)?;
    residual_terms_with(eq, Form::Standard, sc, s, eps, &frozen)
}

fn freeze(eq: EquationId, sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<EvalConfig> {
    if eq.needs_deviation_vector() {
        cfg.frozen(sc, s, eps)
    } else {
        cfg.frozen_transport(sc, s, eps)
    }
}

/// One residual sample.
pub fn residual(eq: EquationId, sc: &Scenario, s: f64, eps: f64, cfg: &EvalConfig) -> Result<ResidualSample> {
    if eq.needs_metric() {
        sc.require_metric()?;
    }
    let start = Instant::now();
    let terms = residual_terms(eq, sc, s, eps, cfg)?;
    let norm = terms.norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite {
            what: "residual",
            point: vec![s, eps],
        });
    }
    Ok(ResidualSample {
        eq,
        s,
        epsilon: eps,
        residual_norm: norm,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Least-squares fit of `log residual` against `log ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn fit_order(eps: &[f64], res: &[f64]) -> Option<OrderFit> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(res)
        .filter(|(_, r)| **r > FLOOR_MARGIN * NUMERICAL_FLOOR)
        .map(|(e, r)| (e.ln(), r.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(OrderFit { slope, r2, points: n })
}

fn validate_ladder(sc: &Scenario, ladder: &[f64]) -> Result<()> {
    if ladder.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "epsilon ladder needs at least 5 points, got {}",
            ladder.len()
        )));
    }
    if ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidArgument("epsilon ladder entries must be positive".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("epsilon ladder must be strictly decreasing".into()));
    }
    sc.r_pair(ladder[0])?;
    Ok(())
}

/// Residuals over the ladder (evaluated in parallel, returned in ladder order) and their order fit.
pub fn convergence_study(
    eq: EquationId,
    sc: &Scenario,
    s: f64,
    ladder: &[f64],
    cfg: &EvalConfig,
) -> Result<ConvergenceReport> {
    validate_ladder(sc, ladder)?;
    let samples: Vec<ResidualSample> = ladder
        .par_iter()
        .map(|&e| residual(eq, sc, s, e, cfg))
        .collect::<Result<Vec<_>>>()?;
    let res: Vec<f64> = samples.iter().map(|x| x.residual_norm).collect();
    let fit = fit_order(ladder, &res);
    let floor_detected = res.iter().any(|r| *r <= FLOOR_MARGIN * NUMERICAL_FLOOR);
    Ok(ConvergenceReport {
        eq,
        scenario: sc.label.clone(),
        s,
        epsilon_ladder: ladder.to_vec(),
        samples,
        fitted_order: fit.map(|f| f.slope),
        fit_r2: fit.map(|f| f.r2),
        floor_detected,
        exact: eq.is_exact(),
        points_in_fit: fit.map_or(0, |f| f.points),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for e in EquationId::ALL {
            assert_eq!(e.as_str().parse::<EquationId>().unwrap(), e);
            let j = serde_json::to_string(&e).unwrap();
            assert_eq!(j, format!("\"{}\"", e.as_str()));
        }
        assert!("E9_9".parse::<EquationId>().is_err());
        assert_eq!(EquationId::ALL.iter().filter(|e| e.is_exact()).count(), 1);
    }

    #[test]
    fn fit_recovers_power_law() {
        let eps = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3];
        let res: Vec<f64> = eps.iter().map(|e| 3.0 * e * e).collect();
        let f = fit_order(&eps, &res).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert_eq!(f.points, 5);
    }

    #[test]
    fn fit_excludes_floor() {
        let eps = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3];
        let res = [1e-4, 2.5e-5, 4e-6, 1e-12, 1e-13];
        let f = fit_order(&eps, &res).unwrap();
        assert_eq!(f.points, 3);
        assert!(fit_order(&eps, &[1e-12; 5]).is_none());
    }
}
