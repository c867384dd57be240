use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Diagonal of the Hessian by central differences of an analytic gradient:
/// `H_ii = (g_i(w + delta e_i) - g_i(w - delta e_i)) / (2 delta)`.
pub fn hessian_diagonal<G>(mut grad: G, params: &[f64], delta: f64) -> Result<Tensor>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(delta > 0.0) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    let mut w = params.to_vec();
    let mut out = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = w[i];
        w[i] = orig + delta;
        let gp = grad(&w)?;
        w[i] = orig - delta;
        let gm = grad(&w)?;
        w[i] = orig;
        if gp.len() != w.len() || gm.len() != w.len() {
            return Err(Error::dim("gradient length does not match parameter count"));
        }
        out.push((gp[i] - gm[i]) / (2.0 * delta));
    }
    Ok(Tensor::vector(out))
}

fn check_lengths(w: &[f64], h_diag: &[f64]) -> Result<()> {
    if w.len() != h_diag.len() {
        return Err(Error::dim(format!("{} weights but {} curvatures", w.len(), h_diag.len())));
    }
    Ok(())
}

/// Minimizer over `alpha_i` of `alpha_i w_i^2 H_ii - (beta/2) ln alpha_i`,
/// i.e. `beta / (2 w_i^2 H_ii)`. Entries with `w_i = 0` or `H_ii <= 0`
/// have no finite optimum and are `None`.
pub fn optimal_alpha_quadratic(w: &[f64], h_diag: &[f64], beta: f64) -> Result<Vec<Option<f64>>> {
    check_lengths(w, h_diag)?;
    if !(beta > 0.0) {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    Ok(w
        .iter()
        .zip(h_diag)
        .map(|(&wi, &hi)| {
            let c = wi * wi * hi;
            (c > 0.0 && c.is_finite()).then(|| beta / (2.0 * c))
        })
        .collect())
}

/// `1/2 K [ln sum w_i^2 + ln sum H_ii - ln(K^2 beta / 2)]`.
///
/// An upper bound on `-1/2 sum ln alpha_i` at the optima of
/// [`optimal_alpha_quadratic`]; the trace stands in for the nuclear norm of
/// the (diagonal, PSD) Hessian. Exact when `K = 1`.
pub fn flat_minima_bound(w: &[f64], h_diag: &[f64], beta: f64) -> Result<f64> {
    check_lengths(w, h_diag)?;
    if !(beta > 0.0) {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    let k = w.len();
    if k == 0 {
        return Err(Error::domain("no weights"));
    }
    if h_diag.iter().any(|&h| h < 0.0) {
        return Err(Error::domain("curvatures must be nonnegative"));
    }
    let sw: f64 = w.iter().map(|v| v * v).sum();
    let sh: f64 = h_diag.iter().sum();
    if !(sw > 0.0 && sh > 0.0) {
        return Err(Error::domain("sum of squared weights and trace must be positive"));
    }
    let k = k as f64;
    Ok(0.5 * k * (sw.ln() + sh.ln() - (k * k * beta / 2.0).ln()))
}

/// Exact `-1/2 sum ln alpha_i` at the per-coordinate optima.
pub fn flat_minima_exact(w: &[f64], h_diag: &[f64], beta: f64) -> Result<f64> {
    let alphas = optimal_alpha_quadratic(w, h_diag, beta)?;
    let mut total = 0.0;
    for (i, a) in alphas.into_iter().enumerate() {
        let a = a.ok_or_else(|| Error::domain(format!("coordinate {i} has no finite optimum")))?;
        total -= 0.5 * a.ln();
    }
    Ok(total)
}

/// Brute-force minimizer of `alpha w^2 H - (beta/2) ln alpha` for one
/// coordinate: a log-spaced scan followed by golden-section refinement in
/// `ln alpha`. Independent of the closed form, for cross-checking it.
pub fn grid_search_alpha(w: f64, h: f64, beta: f64, rel_tol: f64) -> Result<f64> {
    let c = w * w * h;
    if !(c > 0.0) || !(beta > 0.0) {
        return Err(Error::domain("grid search needs w^2 H > 0 and beta > 0"));
    }
    let f = |s: f64| c * s.exp() - 0.5 * beta * s;
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    let steps = 2400;
    let mut best = lo;
    let mut best_val = f64::INFINITY;
    for i in 0..=steps {
        let s = lo + (hi - lo) * i as f64 / steps as f64;
        let v = f(s);
        if v < best_val {
            best_val = v;
            best = s;
        }
    }
    let h_step = (hi - lo) / steps as f64;
    lo = best - h_step;
    hi = best + h_step;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    // golden section; compare values relative to the bracket centre so the
    // tiny differences near the optimum are not lost to rounding
    let center = best;
    let fr = |s: f64| {
        let d = s - center;
        c * center.exp() * d.exp_m1() - 0.5 * beta * d
    };
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (fr(x1), fr(x2));
    while (b - a) > rel_tol.max(1e-15) * 0.5 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = fr(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = fr(x2);
        }
    }
    Ok((0.5 * (a + b)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::info_in_weights;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hessian_of_quadratic_and_linear() {
        let c = [0.5, 2.0, 3.5];
        let grad = |w: &[f64]| Ok(w.iter().zip(&c).map(|(a, b)| a * b).collect());
        let h = hessian_diagonal(grad, &[1.0, -2.0, 0.3], 1e-3).unwrap();
        for (a, b) in h.data().iter().zip(&c) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        let lin = |w: &[f64]| Ok(vec![2.0; w.len()]);
        assert!(hessian_diagonal(lin, &[1.0, 1.0], 1e-3).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(hessian_diagonal(lin, &[1.0], 0.0).is_err());
    }

    #[test]
    fn hessian_richardson() {
        // g = w^3, H = 3 w^2, central difference error is exactly delta^2
        let grad = |w: &[f64]| Ok(w.iter().map(|v| v.powi(3)).collect());
        let w = [0.7];
        let h1 = hessian_diagonal(grad, &w, 1e-2).unwrap().data()[0];
        let h2 = hessian_diagonal(grad, &w, 5e-3).unwrap().data()[0];
        let exact = 3.0 * 0.49;
        let e1 = h1 - exact;
        let e2 = h2 - exact;
        assert_abs_diff_eq!(e1 / e2, 4.0, epsilon = 1e-3);
        assert_abs_diff_eq!((4.0 * h2 - h1) / 3.0, exact, epsilon = 1e-10);
    }

    #[test]
    fn optimal_alpha_examples() {
        let a = optimal_alpha_quadratic(&[2.0], &[0.5], 0.1).unwrap();
        assert_abs_diff_eq!(a[0].unwrap(), 0.025, epsilon = 1e-15);
        let a = optimal_alpha_quadratic(&[2.0], &[0.5], 0.2).unwrap();
        let la = Tensor::vector(vec![a[0].unwrap().ln()]);
        assert_abs_diff_eq!(info_in_weights(&la), 1.497866, epsilon = 1e-6);
        let flagged = optimal_alpha_quadratic(&[0.0, 1.0, 1.0], &[1.0, -1.0, 1.0], 1.0).unwrap();
        assert_eq!(flagged[0], None);
        assert_eq!(flagged[1], None);
        assert!(flagged[2].is_some());
    }

    #[test]
    fn flat_bound_examples() {
        assert_abs_diff_eq!(flat_minima_bound(&[1.0, 1.0], &[1.0, 1.0], 2.0).unwrap(), 0.0, epsilon = 1e-15);
        let b = flat_minima_bound(&[2.0], &[0.5], 0.2).unwrap();
        assert_abs_diff_eq!(b, 1.497866, epsilon = 1e-6);
        assert_abs_diff_eq!(b, flat_minima_exact(&[2.0], &[0.5], 0.2).unwrap(), epsilon = 1e-12);
        assert!(flat_minima_bound(&[0.0], &[1.0], 1.0).is_err());
        assert!(flat_minima_bound(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn grid_search_matches_closed_form() {
        for &(w, h, beta) in &[(2.0, 0.5, 0.1), (0.3, 7.0, 1.0), (-1.5, 0.01, 0.02)] {
            let a = grid_search_alpha(w, h, beta, 1e-12).unwrap();
            let exact = beta / (2.0 * w * w * h);
            assert!(((a - exact) / exact).abs() < 1e-6, "{a} vs {exact}");
        }
    }

    proptest! {
        #[test]
        fn bound_dominates_exact(
            pairs in proptest::collection::vec((0.01f64..3.0, 0.01f64..10.0), 1..12),
            beta in 0.01f64..5.0,
        ) {
            let (w, h): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let b = flat_minima_bound(&w, &h, beta).unwrap();
            let e = flat_minima_exact(&w, &h, beta).unwrap();
            prop_assert!(b >= e - 1e-9 * e.abs().max(1.0));
        }

        #[test]
        fn alpha_linear_in_beta(w in 0.1f64..3.0, h in 0.1f64..3.0, beta in 0.01f64..1.0) {
            let a = optimal_alpha_quadratic(&[w], &[h], beta).unwrap()[0].unwrap();
            let b = optimal_alpha_quadratic(&[w], &[h], 10.0 * beta).unwrap()[0].unwrap();
            prop_assert!((b / a - 10.0).abs() < 1e-12);
        }
    }
}
