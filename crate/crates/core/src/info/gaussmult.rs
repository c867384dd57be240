//! Information in the weights under Gaussian multiplicative noise
//! `eps ~ N(1, alpha)`, where no closed form exists.
//!
//! Relative to a log-uniform prior the KL is, up to the same additive
//! constant as for log-normal noise,
//! `-1/2 ln alpha + E[ln |eps|]`.
//! The expectation is computed by adaptive Gauss-Kronrod quadrature.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const TABLE_KNOTS: usize = 1024;
const QUAD_TOL: f64 = 1e-13;

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss weights.
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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) on `[a, b]` to absolute tolerance `tol`.
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> f64 {
        let (val, err) = whole;
        if err <= tol || depth >= 50 {
            return val;
        }
        let m = 0.5 * (a + b);
        let l = gk15(f, a, m);
        let r = gk15(f, m, b);
        rec(f, a, m, 0.5 * tol, l, depth + 1) + rec(f, m, b, 0.5 * tol, r, depth + 1)
    }
    let whole = gk15(&f, a, b);
    rec(&f, a, b, tol, whole, 0)
}

/// `E[ln |eps|]` for `eps ~ N(1, alpha)`.
///
/// The log singularity at `eps = 0` is removed by writing `eps = +-e^s` on
/// each half-line, which gives smooth, exponentially decaying integrands in
/// `s`.
pub fn expected_log_abs_eps(alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let sigma = alpha.sqrt();
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let density = |e: f64| norm * (-0.5 * ((e - 1.0) / sigma).powi(2)).exp();
    let pos = |s: f64| {
        let e = s.exp();
        s * density(e) * e
    };
    let neg = |s: f64| {
        let e = s.exp();
        s * density(-e) * e
    };
    let lo = -60.0;
    let hi = (1.0 + 40.0 * sigma).ln();
    let mut total = 0.0;
    // split the positive side at the mode so the peak sits on a panel edge
    for (a, b) in [(lo, -1.0), (-1.0, 0.0), (0.0, hi)] {
        total += integrate(pos, a, b, QUAD_TOL);
    }
    let hi_neg = (40.0 * sigma).ln().max(lo + 1.0);
    let mid = hi_neg.min(-1.0).max(lo + 0.5);
    total += integrate(neg, lo, mid, QUAD_TOL);
    if hi_neg > mid {
        total += integrate(neg, mid, hi_neg, QUAD_TOL);
    }
    total
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// KL of `N(1, alpha) w` from the log-uniform prior by direct quadrature,
/// modulo an additive constant.
pub fn kl_gaussmult_direct(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(-0.5 * alpha.ln() + expected_log_abs_eps(alpha))
}

struct Table {
    step: f64,
    // knots at alpha = -step, 0, step, ..., 1, 1 + step
    values: Vec<f64>,
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let step = 1.0 / (TABLE_KNOTS - 1) as f64;
        let mut values = Vec::with_capacity(TABLE_KNOTS + 2);
        // below zero the integral is continued by its series
        // E ln(1 + sigma u) ~ -a/2 - 3a^2/4 - 5a^3/2
        let a = -step;
        values.push(-a / 2.0 - 0.75 * a * a - 2.5 * a * a * a);
        for i in 0..=TABLE_KNOTS {
            values.push(expected_log_abs_eps(i as f64 * step));
        }
        Table { step, values }
    })
}

/// As [`kl_gaussmult_direct`], with `E[ln |eps|]` read from a cached
/// 1024-knot cubic (Catmull-Rom) table over `alpha in [0, 1]`.
pub fn kl_gaussmult_numeric(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let t = table();
    let pos = alpha / t.step;
    let i = (pos.floor() as usize).min(TABLE_KNOTS - 2);
    let u = pos - i as f64;
    // values[j + 1] holds knot j
    let p0 = t.values[i];
    let p1 = t.values[i + 1];
    let p2 = t.values[i + 2];
    let p3 = t.values[i + 3];
    let interp = p1
        + 0.5
            * u
            * (p2 - p0 + u * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + u * (3.0 * (p1 - p2) + p3 - p0)));
    Ok(-0.5 * alpha.ln() + interp)
}
