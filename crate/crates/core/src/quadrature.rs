//! Gauss–Kronrod quadrature.
//!
//! Two entry points: [`integrate`] is a globally adaptive G7/K15 scheme on a
//! finite interval (with [`integrate_to_infinity`] mapping `[a, ∞)` onto
//! `[0, 1)`), and [`composite`] applies the same rule on a fixed uniform
//! partition. The fixed rule is what the log-normal transforms use: its node
//! set does not move with the integrand's parameter, so the result is a smooth
//! function of that parameter and can be differentiated numerically.

use crate::error::{AoiError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Absolute and relative error targets for a quadrature.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    fn accepts(&self, value: f64, err: f64) -> bool {
        err <= self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-12, 1e-10)
    }
}

/// Value and estimated absolute error of an integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Estimate {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

const MAX_INTERVALS: usize = 2000;

/// Adaptive integration of `f` over `[a, b]`.
///
/// The interval with the largest error estimate is bisected until the summed
/// estimate satisfies `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let mut pieces = vec![(a, b, gk15(&f, a, b))];
    loop {
        let value: f64 = pieces.iter().map(|p| p.2.value).sum();
        let error: f64 = pieces.iter().map(|p| p.2.error).sum();
        if !value.is_finite() {
            return Err(AoiError::Quadrature {
                what: "non-finite integrand".into(),
                error: f64::INFINITY,
            });
        }
        if tol.accepts(value, error) {
            return Ok(Estimate { value, error });
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(AoiError::Quadrature {
                what: format!("tolerance {:e}/{:e} not reached", tol.abs, tol.rel),
                error,
            });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .expect("non-empty");
        let (lo, hi, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval collapsed to adjacent floats; nothing more to gain.
            return Err(AoiError::Quadrature {
                what: "interval underflow".into(),
                error,
            });
        }
        pieces.push((lo, mid, gk15(&f, lo, mid)));
        pieces.push((mid, hi, gk15(&f, mid, hi)));
    }
}

/// Adaptive integration over `[a, ∞)` via `t = a + x / (1 - x)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<Estimate> {
    integrate(
        |x: f64| {
            if x >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - x;
            let t = a + x / one_minus;
            let v = f(t);
            if v == 0.0 {
                0.0
            } else {
                v / (one_minus * one_minus)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Fixed composite G7/K15 over `panels` equal subintervals of `[a, b]`.
pub fn composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> Estimate {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total = Estimate { value: 0.0, error: 0.0 };
    for k in 0..panels {
        let lo = a + width * k as f64;
        let e = gk15(&f, lo, lo + width);
        total.value += e.value;
        total.error += e.error;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let e = integrate(|x| x.powi(6) - 3.0 * x * x, -1.0, 2.0, Tolerance::default()).unwrap();
        let exact = (2f64.powi(7) + 1.0) / 7.0 - (8.0 + 1.0);
        assert!((e.value - exact).abs() < 1e-13);
    }

    #[test]
    fn gaussian_on_half_line() {
        let e = integrate_to_infinity(|t| (-t * t).exp(), 0.0, Tolerance::new(1e-14, 1e-12)).unwrap();
        assert!((e.value - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn kink_is_resolved() {
        let e = integrate(|x: f64| x.abs(), -1.0, 3.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert!((e.value - 5.0).abs() < 1e-11);
    }

    #[test]
    fn composite_matches_adaptive() {
        let f = |x: f64| (x.sin() * x).exp();
        let a = integrate(f, 0.0, 4.0, Tolerance::new(1e-14, 1e-14)).unwrap();
        let c = composite(f, 0.0, 4.0, 32);
        assert!((a.value - c.value).abs() < 1e-12);
        assert!(c.error < 1e-10);
    }

    #[test]
    fn unreachable_tolerance_is_an_error() {
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, Tolerance::new(0.0, 0.0));
        assert!(matches!(r, Err(AoiError::Quadrature { .. })));
    }
}
