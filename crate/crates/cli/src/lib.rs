//! Command implementations behind the `transdev` binary.
//!
//! Every command returns its process exit code: 0 success, 1 an order
//! threshold was missed, 2 bad configuration or arguments, 3 numerical failure.

use std::f64::consts::PI;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use transdev::deviation::{convergence_study, ConvergenceReport, EquationId, FLOOR_MARGIN, NUMERICAL_FLOOR};
use transdev::geometry::{curvature_at, torsion_at, ChartPoint, PathCurve, Tensor};
use transdev::kinematics::{EvalConfig, Scenario};
use transdev::scenarios::{build, list_scenarios, ScenarioSpec, DEFAULT_LADDER, THETA_MIN};
use transdev::transport::{s_tensor, transport_matrix};
use transdev::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const DEFAULT_ORDER_THRESHOLD: f64 = 1.9;

/// Pretty JSON with every float written as `{:.16e}` (17 significant digits).
struct FixedFloat(PrettyFormatter<'static>);

impl Formatter for FixedFloat {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{}", fmt_f64(v))
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Fixed 17-significant-digit representation; non-finite values are spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // JSON has no encoding for these; a string keeps the document valid
        format!("\"{v}\"")
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, FixedFloat(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

fn exit_for(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERIC
    }
}

fn read_spec(path: &Path) -> Result<ScenarioSpec, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ScenarioSpec::from_json(&text).map_err(|e| e.to_string())
}

/// Numerical settings of a run: defaults overlaid with the config's `run` block.
pub fn eval_config(spec: &ScenarioSpec) -> Result<EvalConfig, Error> {
    let o = &spec.overrides;
    let mut cfg = EvalConfig::default();
    if let Some(v) = o.rel_tol {
        cfg.ode.rel_tol = v;
    }
    if let Some(v) = o.abs_tol {
        cfg.ode.abs_tol = v;
    }
    if let Some(v) = o.max_steps {
        cfg.ode.max_steps = v;
    }
    if let Some(v) = o.quad_tol {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!("quad_tol must be positive, got {v}")));
        }
        cfg.quad_tol = v;
    }
    cfg.ode.validate()?;
    Ok(cfg)
}

#[derive(Clone, Debug)]
pub struct ConvergeArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub order_threshold: f64,
    pub quiet: bool,
}

#[derive(Serialize)]
struct Versions {
    transdev: &'static str,
    transdev_cli: &'static str,
}

#[derive(Serialize)]
struct Tolerances {
    rel_tol: f64,
    abs_tol: f64,
    max_steps: usize,
    quad_tol: f64,
    h_s: f64,
    h_ss: f64,
    null_tol: f64,
    numerical_floor: f64,
    floor_margin: f64,
}

#[derive(Serialize)]
struct Resolved<'a> {
    scenario: &'a str,
    s_eval: f64,
    r_base: f64,
    epsilon_ladder: &'a [f64],
    equations: &'a [EquationId],
    order_threshold: f64,
}

#[derive(Serialize)]
struct Entry<'a> {
    #[serde(flatten)]
    report: &'a ConvergenceReport,
    passed: bool,
}

/// Everything a converge run produces; `total_wall_time_ms` and the per-sample
/// `wall_time_ms` are the only fields that vary between identical runs.
#[derive(Serialize)]
struct RunResult<'a> {
    config: &'a ScenarioSpec,
    resolved: Resolved<'a>,
    tolerances: Tolerances,
    versions: Versions,
    reports: Vec<Entry<'a>>,
    all_passed: bool,
    total_wall_time_ms: f64,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    equation: &'a str,
    scenario: &'a str,
    s: String,
    epsilon: String,
    residual_norm: String,
    wall_time_ms: String,
}

fn write_csv(path: &Path, reports: &[ConvergenceReport]) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    for r in reports {
        for x in &r.samples {
            w.serialize(CsvRow {
                equation: x.eq.as_str(),
                scenario: &r.scenario,
                s: fmt_f64(x.s),
                epsilon: fmt_f64(x.epsilon),
                residual_norm: fmt_f64(x.residual_norm),
                wall_time_ms: fmt_f64(x.wall_time_ms),
            })
            .map_err(|e| e.to_string())?;
        }
    }
    w.flush().map_err(|e| e.to_string())
}

pub fn cmd_converge(args: &ConvergeArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let start = Instant::now();
    if !(args.order_threshold.is_finite() && args.order_threshold > 0.0) {
        let _ = writeln!(err, "error: --order-threshold must be positive, got {}", args.order_threshold);
        return EXIT_CONFIG;
    }
    let spec = match read_spec(&args.config) {
        Ok(s) => s,
        Err(m) => {
            let _ = writeln!(err, "error: {m}");
            return EXIT_CONFIG;
        }
    };
    let prepared = build(&spec).and_then(|sc| Ok((eval_config(&spec)?, sc)));
    let (cfg, sc) = match prepared {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    let ladder = spec.overrides.epsilon_ladder.clone().unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    let equations = spec.overrides.equations.clone().unwrap_or_else(|| EquationId::ALL.to_vec());
    if equations.is_empty() {
        let _ = writeln!(err, "error: the equation list is empty");
        return EXIT_CONFIG;
    }

    let mut reports = Vec::with_capacity(equations.len());
    for &eq in &equations {
        match convergence_study(eq, &sc, sc.s_eval, &ladder, &cfg) {
            Ok(r) => reports.push(r),
            Err(e) => {
                let _ = writeln!(err, "error: {} on {}: {e}", eq.as_str(), sc.label);
                return exit_for(&e);
            }
        }
    }

    let entries: Vec<Entry> = reports
        .iter()
        .map(|r| Entry {
            report: r,
            passed: r.meets(args.order_threshold),
        })
        .collect();
    let all_passed = entries.iter().all(|e| e.passed);
    if !args.quiet {
        for e in &entries {
            let r = e.report;
            let order = match (r.exact, r.fitted_order) {
                (true, _) => "exact".to_string(),
                (false, Some(p)) => format!("order {p:.3}"),
                (false, None) => "at floor".to_string(),
            };
            let _ = writeln!(
                out,
                "{} {:<6} {:<13} max residual {:.3e}{}",
                if e.passed { "ok  " } else { "FAIL" },
                r.eq.as_str(),
                order,
                r.max_residual(),
                if r.floor_detected && !r.exact { ", floor reached" } else { "" },
            );
        }
    }

    let result = RunResult {
        config: &spec,
        resolved: Resolved {
            scenario: &sc.label,
            s_eval: sc.s_eval,
            r_base: sc.surface.r_base(),
            epsilon_ladder: &ladder,
            equations: &equations,
            order_threshold: args.order_threshold,
        },
        tolerances: Tolerances {
            rel_tol: cfg.ode.rel_tol,
            abs_tol: cfg.ode.abs_tol,
            max_steps: cfg.ode.max_steps,
            quad_tol: cfg.quad_tol,
            h_s: cfg.h_s,
            h_ss: cfg.h_ss,
            null_tol: cfg.null_tol,
            numerical_floor: NUMERICAL_FLOOR,
            floor_margin: FLOOR_MARGIN,
        },
        versions: Versions {
            transdev: transdev::VERSION,
            transdev_cli: env!("CARGO_PKG_VERSION"),
        },
        reports: entries,
        all_passed,
        total_wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };

    let written = fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create {}: {e}", args.out.display()))
        .and_then(|_| write_csv(&args.out.join("samples.csv"), &reports))
        .and_then(|_| fs::write(args.out.join("report.json"), to_json(&result)).map_err(|e| e.to_string()));
    if let Err(m) = written {
        let _ = writeln!(err, "error: writing results: {m}");
        return EXIT_CONFIG;
    }
    if all_passed {
        EXIT_OK
    } else {
        EXIT_THRESHOLD
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Torsion,
    Curvature,
    STensor,
    Transport,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Torsion => "torsion",
            Target::Curvature => "curvature",
            Target::STensor => "s-tensor",
            Target::Transport => "transport",
        }
    }
}

/// Where the scenario comes from: a config document or a bare family name.
#[derive(Clone, Debug)]
pub enum Source {
    Config(PathBuf),
    Name(String),
}

#[derive(Clone, Debug)]
pub struct InspectArgs {
    pub source: Source,
    pub what: Target,
    /// Surface coordinates of the evaluation point.
    pub s: f64,
    pub r: f64,
    /// Explicit chart point, overriding `(s, r)` for torsion and curvature.
    pub point: Option<Vec<f64>>,
    /// Transport interval along the connecting curve at `s`.
    pub from: f64,
    pub to: f64,
    /// Polar angle of a closed latitude loop on the sphere families.
    pub loop_latitude: Option<f64>,
}

#[derive(Serialize)]
struct Inspection<'a> {
    what: &'a str,
    scenario: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    surface: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loop_latitude: Option<f64>,
    point: Vec<f64>,
    /// Row-major, upper index first, then lower indices in order.
    shape: Vec<usize>,
    components: Vec<f64>,
}

fn from_tensor(t: &Tensor, rank: usize) -> (Vec<usize>, Vec<f64>) {
    (vec![t.dim(); rank], t.entries().to_vec())
}

fn inspect(args: &InspectArgs, sc: &Scenario) -> Result<String, Error> {
    let cfg = EvalConfig::default();
    let label = sc.label.as_str();
    let at_surface = || -> Result<ChartPoint, Error> {
        match &args.point {
            Some(p) => {
                if p.len() != sc.dim {
                    return Err(Error::InvalidArgument(format!(
                        "--point needs {} coordinates, got {}",
                        sc.dim,
                        p.len()
                    )));
                }
                ChartPoint::new(p.clone())
            }
            None => sc.surface.map(args.s, args.r),
        }
    };
    let mut view = Inspection {
        what: args.what.as_str(),
        scenario: label,
        surface: None,
        interval: None,
        loop_latitude: None,
        point: vec![],
        shape: vec![],
        components: vec![],
    };
    let surface = if args.point.is_none() { Some([args.s, args.r]) } else { None };
    match args.what {
        Target::Torsion | Target::Curvature => {
            let x = at_surface()?;
            let (shape, comps) = if args.what == Target::Torsion {
                from_tensor(&torsion_at(&sc.conn, &x)?, 3)
            } else {
                from_tensor(&curvature_at(&sc.conn, &x)?, 4)
            };
            view.surface = surface;
            view.point = x.coords().to_vec();
            view.shape = shape;
            view.components = comps;
        }
        Target::STensor => {
            let path = sc.surface.r_curve(args.s)?;
            let t = s_tensor(&sc.law, &sc.conn, &path, args.r)?;
            view.surface = Some([args.s, args.r]);
            view.point = t.base().coords().to_vec();
            let (shape, comps) = from_tensor(&t, 3);
            view.shape = shape;
            view.components = comps;
        }
        Target::Transport => {
            let (path, from, to) = match args.loop_latitude {
                Some(theta0) => {
                    if !label.starts_with("sphere") {
                        return Err(Error::InvalidArgument(
                            "--loop-latitude needs a sphere scenario".into(),
                        ));
                    }
                    if !(THETA_MIN..=PI - THETA_MIN).contains(&theta0) {
                        return Err(Error::InvalidArgument(format!(
                            "--loop-latitude must lie in [{THETA_MIN}, {:.4}], got {theta0}",
                            PI - THETA_MIN
                        )));
                    }
                    let path = PathCurve::new(2, (0.0, 2.0 * PI), move |u| vec![theta0, u], |_| vec![0.0, 1.0])
                        .with_accel(|_| vec![0.0, 0.0]);
                    view.loop_latitude = Some(theta0);
                    (path, 0.0, 2.0 * PI)
                }
                None => {
                    view.surface = Some([args.s, args.from]);
                    (sc.surface.r_curve(args.s)?, args.from, args.to)
                }
            };
            let m = transport_matrix(&sc.law, &path, from, to, &cfg.ode)?;
            view.interval = Some([from, to]);
            view.point = path.point(from)?.coords().to_vec();
            view.shape = vec![m.dim(), m.dim()];
            view.components = m.entries().to_vec();
        }
    }
    Ok(to_json(&view))
}

pub fn cmd_inspect(args: &InspectArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let spec = match &args.source {
        Source::Config(p) => match read_spec(p) {
            Ok(s) => s,
            Err(m) => {
                let _ = writeln!(err, "error: {m}");
                return EXIT_CONFIG;
            }
        },
        Source::Name(n) => ScenarioSpec::new(n.clone()),
    };
    let result = build(&spec).and_then(|sc| inspect(args, &sc));
    match result {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            // geometry failures on user-chosen points are bad arguments too
            match e {
                Error::OutOfDomain { .. } | Error::NonFinite { .. } => EXIT_CONFIG,
                _ => exit_for(&e),
            }
        }
    }
}

pub fn cmd_list(out: &mut dyn Write) -> i32 {
    let _ = out.write_all(to_json(&list_scenarios()).as_bytes());
    EXIT_OK
}
