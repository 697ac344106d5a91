//! Second-order forward-mode jets in two variables.
//!
//! A [`Jet2`] carries a value together with its first and second partial
//! derivatives with respect to two independent parameters `(s, r)`. The
//! built-in surfaces and mass functions are written once over jets, which
//! delivers exact analytic partials up to second order.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub ds: f64,
    pub dr: f64,
    pub dss: f64,
    pub dsr: f64,
    pub drr: f64,
}

impl Jet2 {
    pub const fn constant(v: f64) -> Self {
        Jet2 {
            v,
            ds: 0.0,
            dr: 0.0,
            dss: 0.0,
            dsr: 0.0,
            drr: 0.0,
        }
    }

    /// The independent variable `s` evaluated at `v`.
    pub const fn var_s(v: f64) -> Self {
        Jet2 {
            ds: 1.0,
            ..Jet2::constant(v)
        }
    }

    /// The independent variable `r` evaluated at `v`.
    pub const fn var_r(v: f64) -> Self {
        Jet2 {
            dr: 1.0,
            ..Jet2::constant(v)
        }
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        Jet2 {
            v: f0,
            ds: f1 * self.ds,
            dr: f1 * self.dr,
            dss: f2 * self.ds * self.ds + f1 * self.dss,
            dsr: f2 * self.ds * self.dr + f1 * self.dsr,
            drr: f2 * self.dr * self.dr + f1 * self.drr,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn sqrt(self) -> Self {
        let q = self.v.sqrt();
        self.chain(q, 0.5 / q, -0.25 / (q * self.v))
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }

    pub fn acos(self) -> Self {
        let w = 1.0 - self.v * self.v;
        let d1 = -1.0 / w.sqrt();
        let d2 = -self.v / (w * w.sqrt());
        self.chain(self.v.acos(), d1, d2)
    }

    pub fn atan(self) -> Self {
        let w = 1.0 + self.v * self.v;
        self.chain(self.v.atan(), 1.0 / w, -2.0 * self.v / (w * w))
    }

    /// Four-quadrant arctangent of `self / x`.
    pub fn atan2(self, x: Jet2) -> Self {
        let y = self;
        let r2 = x.v * x.v + y.v * y.v;
        let ax = -y.v / r2; // d angle / dx
        let ay = x.v / r2; // d angle / dy
        // Second partials of atan2 w.r.t. (x, y).
        let r4 = r2 * r2;
        let axx = 2.0 * x.v * y.v / r4;
        let ayy = -2.0 * x.v * y.v / r4;
        let axy = (y.v * y.v - x.v * x.v) / r4;
        let d1 = |dx: f64, dy: f64| ax * dx + ay * dy;
        let d2 = |dxa: f64, dya: f64, dxb: f64, dyb: f64, dxab: f64, dyab: f64| {
            axx * dxa * dxb + axy * (dxa * dyb + dya * dxb) + ayy * dya * dyb + ax * dxab + ay * dyab
        };
        Jet2 {
            v: y.v.atan2(x.v),
            ds: d1(x.ds, y.ds),
            dr: d1(x.dr, y.dr),
            dss: d2(x.ds, y.ds, x.ds, y.ds, x.dss, y.dss),
            dsr: d2(x.ds, y.ds, x.dr, y.dr, x.dsr, y.dsr),
            drr: d2(x.dr, y.dr, x.dr, y.dr, x.drr, y.drr),
        }
    }
}

impl From<f64> for Jet2 {
    fn from(v: f64) -> Self {
        Jet2::constant(v)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            ds: self.ds + o.ds,
            dr: self.dr + o.dr,
            dss: self.dss + o.dss,
            dsr: self.dsr + o.dsr,
            drr: self.drr + o.drr,
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2 {
            v: -self.v,
            ds: -self.ds,
            dr: -self.dr,
            dss: -self.dss,
            dsr: -self.dsr,
            drr: -self.drr,
        }
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            ds: self.ds * o.v + self.v * o.ds,
            dr: self.dr * o.v + self.v * o.dr,
            dss: self.dss * o.v + 2.0 * self.ds * o.ds + self.v * o.dss,
            dsr: self.dsr * o.v + self.ds * o.dr + self.dr * o.ds + self.v * o.dsr,
            drr: self.drr * o.v + 2.0 * self.dr * o.dr + self.v * o.drr,
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(self, o: f64) -> Jet2 {
        Jet2 {
            v: self.v + o,
            ..self
        }
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(self, o: f64) -> Jet2 {
        self + (-o)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, k: f64) -> Jet2 {
        Jet2 {
            v: self.v * k,
            ds: self.ds * k,
            dr: self.dr * k,
            dss: self.dss * k,
            dsr: self.dsr * k,
            drr: self.drr * k,
        }
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, j: Jet2) -> Jet2 {
        j * self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Central-difference reference for all partials of f at (s, r).
    fn fd_partials(f: impl Fn(f64, f64) -> f64, s: f64, r: f64) -> [f64; 5] {
        let h = 1e-4;
        let ds = (f(s + h, r) - f(s - h, r)) / (2.0 * h);
        let dr = (f(s, r + h) - f(s, r - h)) / (2.0 * h);
        let dss = (f(s + h, r) - 2.0 * f(s, r) + f(s - h, r)) / (h * h);
        let drr = (f(s, r + h) - 2.0 * f(s, r) + f(s, r - h)) / (h * h);
        let dsr = (f(s + h, r + h) - f(s + h, r - h) - f(s - h, r + h) + f(s - h, r - h))
            / (4.0 * h * h);
        [ds, dr, dss, dsr, drr]
    }

    fn check(jf: impl Fn(Jet2, Jet2) -> Jet2, f: impl Fn(f64, f64) -> f64, s: f64, r: f64) {
        let j = jf(Jet2::var_s(s), Jet2::var_r(r));
        let fd = fd_partials(&f, s, r);
        assert!((j.v - f(s, r)).abs() < 1e-14);
        let got = [j.ds, j.dr, j.dss, j.dsr, j.drr];
        for (g, e) in got.iter().zip(fd.iter()) {
            assert!((g - e).abs() < 1e-5, "got {got:?} expected {fd:?}");
        }
    }

    #[test]
    fn products_and_trig() {
        check(
            |s, r| s.sin() * r.cos() + s * s * r,
            |s, r| s.sin() * r.cos() + s * s * r,
            0.3,
            -0.7,
        );
    }

    #[test]
    fn acos_sqrt_div() {
        check(
            |s, r| (s * r * 0.5).acos() + (s * s + 1.0).sqrt() / (r + 2.0),
            |s, r| (s * r * 0.5).acos() + (s * s + 1.0).sqrt() / (r + 2.0),
            0.4,
            0.9,
        );
    }

    #[test]
    fn atan2_all_quadrants() {
        for &(s, r) in &[(0.4, 0.9), (-0.8, 0.3), (-0.5, -0.6), (0.7, -0.2)] {
            check(
                |s, r| (s + r * 0.3).atan2(r - s * s),
                |s, r| (s + r * 0.3).atan2(r - s * s),
                s,
                r,
            );
        }
    }

    #[test]
    fn atan_matches() {
        check(|s, r| (s * r).atan(), |s, r| (s * r).atan(), 0.6, 1.3);
    }
}
