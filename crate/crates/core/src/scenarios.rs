//! Built-in scenario families and configuration ingestion.
//!
//! A scenario name has the form `family[/variant][+linear-drift]`, for
//! example `flat-euclidean/quadratic+linear-drift`. The `+linear-drift`
//! suffix switches the default masses from constant to `1 + 0.1 s + 0.2 r`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::deviation::EquationId;
use crate::error::{Error, Result};
use crate::geometry::{Coeffs, ConnectionField, MetricField};
use crate::jet::Jet2;
use crate::kinematics::{MassSurface, ProbeField, Scenario, WorldSurface};
use crate::transport::{exp_law, law_from_connection, law_with_offset};

pub const S_DOMAIN: (f64, f64) = (-1.0, 1.0);
pub const R_DOMAIN: (f64, f64) = (-0.5, 0.5);
pub const DEFAULT_S_EVAL: f64 = 0.3;
pub const DEFAULT_LADDER: [f64; 7] = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3];
/// Sphere surfaces must stay within this polar angle band.
pub const THETA_MIN: f64 = 0.3;

const LINEAR_DRIFT: (f64, f64) = (0.1, 0.2);

/// One tunable number of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSchema {
    pub key: String,
    pub default: f64,
    pub min: f64,
    pub max: f64,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub description: String,
    pub variants: Vec<String>,
    pub params: Vec<ParamSchema>,
}

fn param(key: &str, default: f64, min: f64, max: f64, description: &str) -> ParamSchema {
    ParamSchema {
        key: key.into(),
        default,
        min,
        max,
        description: description.into(),
    }
}

fn common_params(sigma_default: f64) -> Vec<ParamSchema> {
    vec![
        param(
            "sigma",
            sigma_default,
            -2.0,
            2.0,
            "constant offset S^1_{22} added to the parallel law",
        ),
        param("mass_a", 0.0, -0.5, 0.5, "mass slope in s: mu = 1 + a s + b r"),
        param("mass_b", 0.0, -0.5, 0.5, "mass slope in r: mu = 1 + a s + b r"),
    ]
}

fn sphere_params() -> Vec<ParamSchema> {
    vec![
        param("i0", 0.5, -1.2, 1.2, "inclination of the central great circle"),
        param("k_i", 0.6, -1.0, 1.0, "rate of inclination change across the family"),
        param("k_psi", 0.8, -2.0, 2.0, "rate of node rotation across the family"),
    ]
}

/// Registered families in stable order.
pub fn list_scenarios() -> Vec<ScenarioInfo> {
    let with = |mut base: Vec<ParamSchema>, extra: Vec<ParamSchema>| {
        base.extend(extra);
        base
    };
    vec![
        ScenarioInfo {
            name: "flat-euclidean".into(),
            description: "Euclidean chart, zero connection; ruled or accelerating quadratic surface".into(),
            variants: vec!["ruled".into(), "quadratic".into()],
            params: with(
                vec![param("dim", 2.0, 2.0, 4.0, "chart dimension (integer)")],
                common_params(0.0),
            ),
        },
        ScenarioInfo {
            name: "flat-torsion".into(),
            description: "flat chart with constant Gamma^1_{21} = c: zero curvature, nonzero torsion".into(),
            variants: vec!["quadratic".into()],
            params: with(
                vec![param("c", 0.3, -2.0, 2.0, "the constant connection coefficient")],
                common_params(0.0),
            ),
        },
        ScenarioInfo {
            name: "sphere".into(),
            description: "unit 2-sphere in (theta, phi), Levi-Civita connection, family of great circles".into(),
            variants: vec!["great-circles".into()],
            params: with(sphere_params(), common_params(0.0)),
        },
        ScenarioInfo {
            name: "sphere-torsion".into(),
            description: "unit 2-sphere with an extra constant Gamma^1_{21} = c: curvature, torsion, nonmetricity and forces".into(),
            variants: vec!["great-circles".into()],
            params: with(
                with(
                    sphere_params(),
                    vec![param("c", 0.2, -1.0, 1.0, "extra connection coefficient")],
                ),
                common_params(0.0),
            ),
        },
        ScenarioInfo {
            name: "minkowski".into(),
            description: "4-dimensional flat chart with metric diag(+1,-1,-1,-1) and timelike worldlines".into(),
            variants: vec!["timelike".into()],
            params: common_params(0.0),
        },
        ScenarioInfo {
            name: "offset-transport".into(),
            description: "flat quadratic surface transported with a constant offset S = sigma".into(),
            variants: vec!["quadratic".into()],
            params: common_params(0.2),
        },
        ScenarioInfo {
            name: "exp-transport".into(),
            description: "flat chart, transport matrices exp(A (t - s)) for a constant matrix A".into(),
            variants: vec!["quadratic".into()],
            params: vec![
                param("a11", 0.1, -2.0, 2.0, "entry A^1_1"),
                param("a12", -0.4, -2.0, 2.0, "entry A^1_2"),
                param("a21", 0.3, -2.0, 2.0, "entry A^2_1"),
                param("a22", 0.2, -2.0, 2.0, "entry A^2_2"),
                param("mass_a", 0.0, -0.5, 0.5, "mass slope in s: mu = 1 + a s + b r"),
                param("mass_b", 0.0, -0.5, 0.5, "mass slope in r: mu = 1 + a s + b r"),
            ],
        },
    ]
}

/// Optional run settings carried by a configuration document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_eval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_ladder: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equations: Option<Vec<EquationId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_tol: Option<f64>,
}

/// A scenario request: family name, parameters and run overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(rename = "scenario")]
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, rename = "run")]
    pub overrides: RunOverrides,
}

impl ScenarioSpec {
    pub fn new(name: impl Into<String>) -> Self {
        ScenarioSpec {
            name: name.into(),
            params: BTreeMap::new(),
            overrides: RunOverrides::default(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

struct ParsedName<'a> {
    family: &'a str,
    variant: Option<&'a str>,
    drift: bool,
}

fn parse_name(name: &str) -> Result<ParsedName<'_>> {
    let (head, drift) = match name.split_once('+') {
        Some((h, "linear-drift")) => (h, true),
        Some((h, "constant")) => (h, false),
        Some(_) => return Err(Error::UnknownScenario(name.into())),
        None => (name, false),
    };
    let (family, variant) = match head.split_once('/') {
        Some((f, v)) => (f, Some(v)),
        None => (head, None),
    };
    Ok(ParsedName {
        family,
        variant,
        drift,
    })
}

/// Resolved parameter values, validated against the schema.
struct Params {
    values: BTreeMap<String, f64>,
}

impl Params {
    fn get(&self, k: &str) -> f64 {
        self.values[k]
    }

    fn resolve(info: &ScenarioInfo, given: &BTreeMap<String, f64>, drift: bool) -> Result<Params> {
        for key in given.keys() {
            if !info.params.iter().any(|p| &p.key == key) {
                return Err(Error::Config(format!(
                    "unknown parameter `{key}` for scenario family `{}`",
                    info.name
                )));
            }
        }
        let mut values = BTreeMap::new();
        for p in &info.params {
            let mut default = p.default;
            if drift && p.key == "mass_a" {
                default = LINEAR_DRIFT.0;
            }
            if drift && p.key == "mass_b" {
                default = LINEAR_DRIFT.1;
            }
            let v = given.get(&p.key).copied().unwrap_or(default);
            if !v.is_finite() || v < p.min || v > p.max {
                return Err(Error::ParamOutOfRange {
                    key: p.key.clone(),
                    value: v,
                    reason: format!("allowed range [{}, {}]", p.min, p.max),
                });
            }
            values.insert(p.key.clone(), v);
        }
        Ok(Params { values })
    }
}

fn sphere_gamma(x: &[f64]) -> Coeffs {
    let (s, c) = x[0].sin_cos();
    let mut g = Coeffs::zeros(2);
    g.set(0, 1, 1, -s * c);
    g.set(1, 0, 1, c / s);
    g.set(1, 1, 0, c / s);
    g
}

fn sphere_gamma_partials(x: &[f64]) -> Vec<Coeffs> {
    let s = x[0].sin();
    let mut d0 = Coeffs::zeros(2);
    d0.set(0, 1, 1, -(2.0 * x[0]).cos());
    d0.set(1, 0, 1, -1.0 / (s * s));
    d0.set(1, 1, 0, -1.0 / (s * s));
    vec![d0, Coeffs::zeros(2)]
}

/// Unit-sphere Levi-Civita connection in the chart `(θ, φ)`.
pub fn sphere_connection() -> ConnectionField {
    ConnectionField::new(2, sphere_gamma).with_partials(sphere_gamma_partials)
}

/// Sphere connection plus a constant coefficient `c` at `Γ^1_{21}`.
fn sphere_torsion_connection(c: f64) -> ConnectionField {
    let extra = single(2, 0, 1, 0, c);
    ConnectionField::new(2, move |x| sphere_gamma(x).plus(&extra)).with_partials(sphere_gamma_partials)
}

/// Round metric `diag(1, sin²θ)`.
pub fn sphere_metric() -> MetricField {
    MetricField::new(2, |x| {
        let s = x[0].sin();
        vec![1.0, 0.0, 0.0, s * s]
    })
    .with_partials(|x| {
        let s2 = (2.0 * x[0]).sin();
        vec![vec![0.0, 0.0, 0.0, s2], vec![0.0; 4]]
    })
}

fn single(d: usize, i: usize, j: usize, k: usize, c: f64) -> Coeffs {
    let mut g = Coeffs::zeros(d);
    g.set(i, j, k, c);
    g
}

/// Coefficients of `γ = P0 + s u + r v + ½s²A + s r B + ½r²C + ½s²r D`.
#[derive(Clone, Debug)]
pub struct Polynomial {
    pub p0: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl Polynomial {
    fn eval(&self, s: Jet2, r: Jet2) -> Vec<Jet2> {
        (0..self.p0.len())
            .map(|i| {
                s * self.u[i]
                    + r * self.v[i]
                    + s * s * (0.5 * self.a[i])
                    + s * r * self.b[i]
                    + r * r * (0.5 * self.c[i])
                    + s * s * r * (0.5 * self.d[i])
                    + self.p0[i]
            })
            .collect()
    }

    fn ruled(dim: usize) -> Self {
        let q = Polynomial::quadratic(dim);
        Polynomial {
            a: vec![0.0; dim],
            b: vec![0.0; dim],
            c: vec![0.0; dim],
            d: vec![0.0; dim],
            ..q
        }
    }

    fn quadratic(dim: usize) -> Self {
        let take = |xs: [f64; 4]| xs[..dim].to_vec();
        Polynomial {
            p0: take([0.1, -0.2, 0.05, 0.3]),
            u: take([1.0, 0.2, -0.1, 0.15]),
            v: take([0.3, 1.0, 0.25, -0.2]),
            a: take([0.2, 0.5, -0.3, 0.1]),
            b: take([0.4, -0.3, 0.2, 0.25]),
            c: take([-0.6, 0.35, 0.5, -0.2]),
            d: take([0.3, 0.2, -0.25, 0.15]),
        }
    }

    fn timelike() -> Self {
        Polynomial {
            p0: vec![0.0, 0.1, -0.2, 0.05],
            u: vec![1.0, 0.2, -0.1, 0.15],
            v: vec![0.1, 1.0, 0.3, -0.2],
            a: vec![0.1, 0.15, -0.1, 0.05],
            b: vec![0.2, -0.1, 0.1, 0.1],
            c: vec![-0.3, 0.2, 0.25, -0.1],
            d: vec![0.1, 0.05, -0.1, 0.05],
        }
    }
}

/// Great-circle family: node angle `k_psi r`, inclination `i0 + k_i r`; each `s`-curve is a unit-speed geodesic.
fn great_circles(i0: f64, k_i: f64, k_psi: f64) -> impl Fn(Jet2, Jet2) -> Vec<Jet2> + Send + Sync + Clone {
    move |s, r| {
        let psi = r * k_psi;
        let inc = r * k_i + i0;
        let (cp, sp) = (psi.cos(), psi.sin());
        let (ci, si) = (inc.cos(), inc.sin());
        let (cs, ss) = (s.cos(), s.sin());
        let x = cs * cp - ss * ci * sp;
        let y = cs * sp + ss * ci * cp;
        let z = ss * si;
        vec![z.acos(), y.atan2(x)]
    }
}

fn probe_field(dim: usize) -> ProbeField {
    ProbeField::new(move |x| {
        let mut b = vec![0.0; dim];
        let mut jac = vec![0.0; dim * dim];
        for i in 0..dim {
            let l = (i + 1) % dim;
            let arg = x[l] + 0.3 * i as f64;
            b[i] = 1.0 + 0.25 * i as f64 + 0.5 * arg.sin();
            jac[i * dim + l] = 0.5 * arg.cos();
        }
        (b, jac)
    })
}

/// Builds a fully wired scenario.
pub fn build(spec: &ScenarioSpec) -> Result<Scenario> {
    let parsed = parse_name(&spec.name)?;
    let infos = list_scenarios();
    let info = infos
        .iter()
        .find(|i| i.name == parsed.family)
        .ok_or_else(|| Error::UnknownScenario(spec.name.clone()))?;
    if let Some(v) = parsed.variant {
        if !info.variants.iter().any(|x| x == v) {
            return Err(Error::UnknownScenario(spec.name.clone()));
        }
    }
    let p = Params::resolve(info, &spec.params, parsed.drift)?;
    let r_base = spec.overrides.r_base.unwrap_or(0.0);
    let s_eval = spec.overrides.s_eval.unwrap_or(DEFAULT_S_EVAL);
    if !(r_base > R_DOMAIN.0 && r_base < R_DOMAIN.1) {
        return Err(Error::ParamOutOfRange {
            key: "r_base".into(),
            value: r_base,
            reason: format!("must lie inside ({}, {})", R_DOMAIN.0, R_DOMAIN.1),
        });
    }
    if !(s_eval > S_DOMAIN.0 + 0.01 && s_eval < S_DOMAIN.1 - 0.01) {
        return Err(Error::ParamOutOfRange {
            key: "s_eval".into(),
            value: s_eval,
            reason: format!("must lie inside ({}, {})", S_DOMAIN.0 + 0.01, S_DOMAIN.1 - 0.01),
        });
    }

    let (ma, mb) = (p.get("mass_a"), p.get("mass_b"));
    if ma.abs() + mb.abs() * R_DOMAIN.1.max(-R_DOMAIN.0) >= 0.99 {
        return Err(Error::ParamOutOfRange {
            key: "mass_b".into(),
            value: mb,
            reason: "mass would vanish inside the domain".into(),
        });
    }
    let mass = if ma == 0.0 && mb == 0.0 {
        MassSurface::constant(1.0)
    } else {
        MassSurface::linear(ma, mb)
    };

    let sigma = p.values.get("sigma").copied().unwrap_or(0.0);
    let surface_of = |dim: usize, poly: Polynomial| {
        WorldSurface::new(dim, S_DOMAIN, R_DOMAIN, r_base, move |s, r| poly.eval(s, r))
    };

    let (dim, conn, metric, surface) = match parsed.family {
        "flat-euclidean" => {
            let dv = p.get("dim");
            if dv.fract() != 0.0 {
                return Err(Error::ParamOutOfRange {
                    key: "dim".into(),
                    value: dv,
                    reason: "must be an integer".into(),
                });
            }
            let d = dv as usize;
            let poly = match parsed.variant {
                Some("quadratic") => Polynomial::quadratic(d),
                _ => Polynomial::ruled(d),
            };
            (d, ConnectionField::flat(d), Some(MetricField::euclidean(d)), surface_of(d, poly)?)
        }
        "flat-torsion" => {
            let c = ConnectionField::constant(single(2, 0, 1, 0, p.get("c")));
            (2, c, Some(MetricField::euclidean(2)), surface_of(2, Polynomial::quadratic(2))?)
        }
        "offset-transport" | "exp-transport" => (
            2,
            ConnectionField::flat(2),
            Some(MetricField::euclidean(2)),
            surface_of(2, Polynomial::quadratic(2))?,
        ),
        "minkowski" => (
            4,
            ConnectionField::flat(4),
            Some(MetricField::constant_diagonal(vec![1.0, -1.0, -1.0, -1.0])),
            surface_of(4, Polynomial::timelike())?,
        ),
        "sphere" | "sphere-torsion" => {
            let f = great_circles(p.get("i0"), p.get("k_i"), p.get("k_psi"));
            check_sphere_band(&f)?;
            let conn = if parsed.family == "sphere" {
                sphere_connection()
            } else {
                sphere_torsion_connection(p.get("c"))
            };
            let surface = WorldSurface::new(2, S_DOMAIN, R_DOMAIN, r_base, f)?;
            (2, conn, Some(sphere_metric()), surface)
        }
        other => return Err(Error::UnknownScenario(other.into())),
    };

    let law = if parsed.family == "exp-transport" {
        let a = DMatrix::from_row_slice(2, 2, &[p.get("a11"), p.get("a12"), p.get("a21"), p.get("a22")]);
        exp_law(a)
    } else if sigma != 0.0 {
        let sig = single(dim, 0, 1, 1, sigma);
        law_with_offset(&conn, move |_| sig.clone())
    } else {
        law_from_connection(&conn)
    };

    Ok(Scenario {
        label: spec.name.clone(),
        dim,
        conn,
        metric,
        law,
        surface,
        mass,
        probe: probe_field(dim),
        s_eval,
    })
}

fn check_sphere_band(f: &impl Fn(Jet2, Jet2) -> Vec<Jet2>) -> Result<()> {
    const N: usize = 40;
    for a in 0..=N {
        for b in 0..=N {
            let s = S_DOMAIN.0 + (S_DOMAIN.1 - S_DOMAIN.0) * a as f64 / N as f64;
            let r = R_DOMAIN.0 + (R_DOMAIN.1 - R_DOMAIN.0) * b as f64 / N as f64;
            let th = f(Jet2::constant(s), Jet2::constant(r))[0].v;
            if !(THETA_MIN..=PI - THETA_MIN).contains(&th) {
                return Err(Error::ParamOutOfRange {
                    key: "i0".into(),
                    value: th,
                    reason: format!(
                        "surface reaches polar angle {th:.3} outside [{THETA_MIN}, {:.3}]",
                        PI - THETA_MIN
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Default spec of every family, in registry order.
pub fn default_specs() -> Vec<ScenarioSpec> {
    list_scenarios().into_iter().map(|i| ScenarioSpec::new(i.name)).collect()
}
