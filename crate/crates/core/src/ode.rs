//! Dormand–Prince 5(4) integration for small linear systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the integrator chooses its steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum Stepping {
    /// Embedded error control with tolerances from [`OdeConfig`].
    #[default]
    Adaptive,
    /// Equal steps no longer than `max_step`. The step count depends only on
    /// the interval length, so results vary smoothly with the right-hand side.
    Uniform { max_step: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    #[serde(default)]
    pub stepping: Stepping,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 1_000_000,
            stepping: Stepping::Adaptive,
        }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.rel_tol) || !ok(self.abs_tol) {
            return Err(Error::InvalidArgument(format!(
                "ODE tolerances must be positive (rel_tol = {}, abs_tol = {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        if let Stepping::Uniform { max_step } = self.stepping {
            if !ok(max_step) {
                return Err(Error::InvalidArgument(format!(
                    "uniform max_step must be positive, got {max_step}"
                )));
            }
        }
        Ok(())
    }

    pub fn uniform(self, max_step: f64) -> Self {
        OdeConfig {
            stepping: Stepping::Uniform { max_step },
            ..self
        }
    }
}

/// Outcome of an integration.
#[derive(Clone, Debug)]
pub struct OdeSolution {
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    /// Smallest accepted step magnitude, not counting a final step shortened to hit the endpoint.
    pub min_step: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

type Rhs<'a> = dyn Fn(f64, &[f64], &mut [f64]) -> Result<()> + 'a;

struct Stage {
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Stage {
    fn new(n: usize) -> Self {
        Stage {
            k: vec![vec![0.0; n]; 7],
            tmp: vec![0.0; n],
        }
    }

    /// One DP step from `(t, y)` of size `h`; writes the 5th-order result to
    /// `y_out` and returns the embedded error vector in `err`.
    fn step(
        &mut self,
        f: &Rhs<'_>,
        t: f64,
        y: &[f64],
        h: f64,
        y_out: &mut [f64],
        err: Option<&mut [f64]>,
    ) -> Result<()> {
        let n = y.len();
        f(t, y, &mut self.k[0])?;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += h * a * self.k[j][i];
                }
                self.tmp[i] = acc;
            }
            f(t + C[s] * h, &self.tmp, &mut self.k[s])?;
        }
        for i in 0..n {
            let mut acc = y[i];
            for s in 0..7 {
                acc += h * B5[s] * self.k[s][i];
            }
            y_out[i] = acc;
        }
        if let Some(e) = err {
            for i in 0..n {
                let mut acc = 0.0;
                for s in 0..7 {
                    acc += (B5[s] - B4[s]) * self.k[s][i];
                }
                e[i] = h * acc;
            }
        }
        Ok(())
    }
}

fn check_finite(y: &[f64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "ODE state",
            point: vec![t],
        })
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
pub fn integrate(f: &Rhs<'_>, t0: f64, y0: &[f64], t1: f64, cfg: &OdeConfig) -> Result<OdeSolution> {
    cfg.validate()?;
    if t0 == t1 {
        return Ok(OdeSolution {
            y: y0.to_vec(),
            accepted: 0,
            rejected: 0,
            min_step: 0.0,
        });
    }
    match cfg.stepping {
        Stepping::Adaptive => integrate_adaptive(f, t0, y0, t1, cfg),
        Stepping::Uniform { max_step } => integrate_uniform(f, t0, y0, t1, max_step, cfg.max_steps),
    }
}

fn integrate_uniform(
    f: &Rhs<'_>,
    t0: f64,
    y0: &[f64],
    t1: f64,
    max_step: f64,
    max_steps: usize,
) -> Result<OdeSolution> {
    let span = t1 - t0;
    let n = (span.abs() / max_step).ceil().max(1.0) as usize;
    if n > max_steps {
        return Err(Error::StepLimit { max_steps });
    }
    let h = span / n as f64;
    let mut stage = Stage::new(y0.len());
    let mut y = y0.to_vec();
    let mut next = vec![0.0; y0.len()];
    for i in 0..n {
        let t = t0 + i as f64 * h;
        stage.step(f, t, &y, h, &mut next, None)?;
        std::mem::swap(&mut y, &mut next);
        check_finite(&y, t + h)?;
    }
    Ok(OdeSolution {
        y,
        accepted: n,
        rejected: 0,
        min_step: h.abs(),
    })
}

fn error_norm(err: &[f64], y: &[f64], ynew: &[f64], cfg: &OdeConfig) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(ynew))
        .map(|(e, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step(f: &Rhs<'_>, t0: f64, y0: &[f64], span: f64, cfg: &OdeConfig) -> Result<f64> {
    // Starting step heuristic from Hairer, Nørsett & Wanner, simplified.
    let n = y0.len();
    let mut f0 = vec![0.0; n];
    f(t0, y0, &mut f0)?;
    let sc: Vec<f64> = y0.iter().map(|y| cfg.abs_tol + cfg.rel_tol * y.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(&f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span.abs());
    let y1: Vec<f64> = y0.iter().zip(&f0).map(|(y, d)| y + h0 * span.signum() * d).collect();
    let mut f1 = vec![0.0; n];
    f(t0 + h0 * span.signum(), &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span.abs()))
}

fn integrate_adaptive(
    f: &Rhs<'_>,
    t0: f64,
    y0: &[f64],
    t1: f64,
    cfg: &OdeConfig,
) -> Result<OdeSolution> {
    let span = t1 - t0;
    let dir = span.signum();
    let n = y0.len();
    let mut h = initial_step(f, t0, y0, span, cfg)?;
    let mut stage = Stage::new(n);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut min_step = f64::INFINITY;
    loop {
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        let hs = if last { remaining } else { h };
        if hs <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        if accepted + rejected >= cfg.max_steps {
            return Err(Error::StepLimit {
                max_steps: cfg.max_steps,
            });
        }
        stage.step(f, t, &y, dir * hs, &mut ynew, Some(&mut err))?;
        let en = error_norm(&err, &y, &ynew, cfg);
        if !en.is_finite() {
            return Err(Error::NonFinite {
                what: "ODE state",
                point: vec![t],
            });
        }
        let fac = if en == 0.0 {
            FAC_MAX
        } else {
            (SAFETY * en.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
        };
        if en <= 1.0 {
            t = if last { t1 } else { t + dir * hs };
            std::mem::swap(&mut y, &mut ynew);
            accepted += 1;
            if !last || accepted == 1 {
                min_step = min_step.min(hs);
            }
            if last {
                break;
            }
            h = hs * fac;
        } else {
            rejected += 1;
            h = hs * fac.min(1.0);
        }
    }
    Ok(OdeSolution {
        y,
        accepted,
        rejected,
        min_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_rhs(t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let _ = t;
        dy[0] = y[0];
        Ok(())
    }

    #[test]
    fn exponential_growth() {
        let cfg = OdeConfig::default();
        let sol = integrate(&exp_rhs, 0.0, &[1.0], 1.0, &cfg).unwrap();
        assert!((sol.y[0] - 1f64.exp()).abs() < 1e-9);
        let back = integrate(&exp_rhs, 1.0, &[1f64.exp()], 0.0, &cfg).unwrap();
        assert!((back.y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_and_uniform_replay() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[1];
            dy[1] = y[0];
            Ok(())
        };
        let cfg = OdeConfig::default();
        let sol = integrate(&rhs, 0.0, &[1.0, 0.0], 2.0, &cfg).unwrap();
        assert!((sol.y[0] - 2f64.cos()).abs() < 1e-9);
        assert!((sol.y[1] - 2f64.sin()).abs() < 1e-9);
        let uni = integrate(&rhs, 0.0, &[1.0, 0.0], 2.0, &cfg.uniform(sol.min_step)).unwrap();
        assert!((uni.y[0] - 2f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = 2t y, y(0) = 1 -> exp(t²)
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = 2.0 * t * y[0];
            Ok(())
        };
        let sol = integrate(&rhs, 0.0, &[1.0], 1.5, &OdeConfig::default()).unwrap();
        assert!((sol.y[0] - 2.25f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn step_limit_is_reported() {
        let cfg = OdeConfig {
            max_steps: 3,
            ..OdeConfig::default()
        };
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[1] * 50.0;
            dy[1] = y[0] * 50.0;
            Ok(())
        };
        assert!(matches!(
            integrate(&rhs, 0.0, &[1.0, 0.0], 10.0, &cfg),
            Err(Error::StepLimit { .. })
        ));
    }

    #[test]
    fn nonfinite_state_is_reported() {
        let rhs = |_t: f64, _y: &[f64], dy: &mut [f64]| {
            dy[0] = f64::NAN;
            Ok(())
        };
        assert!(integrate(&rhs, 0.0, &[1.0], 1.0, &OdeConfig::default()).is_err());
    }

    #[test]
    fn bad_tolerances_rejected() {
        let cfg = OdeConfig {
            rel_tol: 0.0,
            ..OdeConfig::default()
        };
        assert!(integrate(&exp_rhs, 0.0, &[1.0], 1.0, &cfg).is_err());
    }
}
