//! Adaptive Gauss–Kronrod (7, 15) quadrature of vector-valued integrands.

use crate::error::{Error, Result};

/// Default absolute tolerance for adaptive quadrature.
pub const DEFAULT_QUAD_TOL: f64 = 1e-11;
const MAX_INTERVALS: usize = 2000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive quadrature.
#[derive(Clone, Debug)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: f64,
    /// Interval breakpoints as fractions of `[a, b]`, sorted, starting at 0 and ending at 1.
    pub partition: Vec<f64>,
}

type Integrand<'a> = dyn Fn(f64) -> Result<Vec<f64>> + 'a;

fn gk15(f: &Integrand<'_>, a: f64, b: f64) -> Result<(Vec<f64>, f64)> {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c)?;
    let n = fc.len();
    let mut k: Vec<f64> = fc.iter().map(|v| v * WGK[7]).collect();
    let mut g: Vec<f64> = fc.iter().map(|v| v * WG[3]).collect();
    for j in 0..7 {
        let dx = hw * XGK[j];
        let f1 = f(c - dx)?;
        let f2 = f(c + dx)?;
        if f1.len() != n || f2.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f1.len().min(f2.len()),
            });
        }
        for i in 0..n {
            let s = f1[i] + f2[i];
            k[i] += WGK[j] * s;
            if j % 2 == 1 {
                g[i] += WG[j / 2] * s;
            }
        }
    }
    let mut err = 0.0_f64;
    for i in 0..n {
        k[i] *= hw;
        g[i] *= hw;
        err = err.max((k[i] - g[i]).abs());
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "quadrature integrand",
            point: vec![a, b],
        });
    }
    Ok((k, err))
}

/// Adaptive bisection until the summed error estimate is below `abs_tol`.
pub fn integrate(f: &Integrand<'_>, a: f64, b: f64, abs_tol: f64) -> Result<QuadResult> {
    if a == b {
        let n = f(a)?.len();
        return Ok(QuadResult {
            value: vec![0.0; n],
            error: 0.0,
            partition: vec![0.0, 1.0],
        });
    }
    let span = b - a;
    // (lo fraction, hi fraction, value, error)
    let (v0, e0) = gk15(f, a, b)?;
    let mut pieces = vec![(0.0_f64, 1.0_f64, v0, e0)];
    loop {
        let total_err: f64 = pieces.iter().map(|p| p.3).sum();
        if total_err <= abs_tol {
            break;
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature {
                estimate: total_err,
                intervals: pieces.len(),
            });
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        if hi - lo < 1e-12 {
            return Err(Error::Quadrature {
                estimate: total_err,
                intervals: pieces.len() + 1,
            });
        }
        let mid = 0.5 * (lo + hi);
        let (vl, el) = gk15(f, a + lo * span, a + mid * span)?;
        let (vr, er) = gk15(f, a + mid * span, a + hi * span)?;
        pieces.push((lo, mid, vl, el));
        pieces.push((mid, hi, vr, er));
    }
    pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = pieces[0].2.len();
    let mut value = vec![0.0; n];
    for p in &pieces {
        for i in 0..n {
            value[i] += p.2[i];
        }
    }
    let mut partition: Vec<f64> = pieces.iter().map(|p| p.0).collect();
    partition.push(1.0);
    Ok(QuadResult {
        value,
        error: pieces.iter().map(|p| p.3).sum(),
        partition,
    })
}

/// Applies GK15 on a fixed partition (fractions of `[a, b]`) without adaptation.
pub fn integrate_on(f: &Integrand<'_>, a: f64, b: f64, partition: &[f64]) -> Result<Vec<f64>> {
    if partition.len() < 2 {
        return Err(Error::InvalidArgument("partition needs at least two breakpoints".into()));
    }
    let span = b - a;
    let mut value: Option<Vec<f64>> = None;
    for w in partition.windows(2) {
        let (v, _) = gk15(f, a + w[0] * span, a + w[1] * span)?;
        match &mut value {
            None => value = Some(v),
            Some(acc) => acc.iter_mut().zip(&v).for_each(|(x, y)| *x += y),
        }
    }
    Ok(value.unwrap_or_default())
}
