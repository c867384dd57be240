use serde::{Deserialize, Serialize};

use super::MIEstimate;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemm, Tensor, Transpose};
use crate::vnn::NoiseModel;

/// Sample moments of a batch of input vectors, using unbiased estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    /// `[d x d]`
    pub cov: Tensor,
    /// `E[x_j^2] = Cov_jj + E[x_j]^2`
    pub second_moment: Vec<f64>,
    pub n_samples: usize,
}

impl GaussianStats {
    pub fn from_samples(x: &Tensor) -> Result<Self> {
        let (n, d) = check_samples(x)?;
        let mut mean = vec![0.0; d];
        for i in 0..n {
            mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut centered = x.clone();
        for i in 0..n {
            centered.row_mut(i).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
        let cov = gemm(&centered, &centered, Transpose::Left)?.map_with(|v| v / (n - 1) as f64);
        let second_moment = (0..d).map(|j| cov.data()[j * d + j] + mean[j] * mean[j]).collect();
        Ok(GaussianStats {
            mean,
            cov,
            second_moment,
            n_samples: n,
        })
    }
}

fn check_samples(x: &Tensor) -> Result<(usize, usize)> {
    if x.rank() != 2 {
        return Err(Error::dim(format!("samples must be [n x d], got {:?}", x.shape())));
    }
    if x.rows() < 2 {
        return Err(Error::input("at least 2 samples are required"));
    }
    Ok((x.rows(), x.cols()))
}

/// `KL(N(mu0, v0) || N(mu1, v1))` in nats.
pub fn gaussian_kl(mu0: f64, v0: f64, mu1: f64, v1: f64) -> Result<f64> {
    if !(v0 > 0.0 && v1 > 0.0) {
        return Err(Error::domain(format!("variances must be positive, got {v0} and {v1}")));
    }
    Ok(0.5 * (v0 / v1 + (mu0 - mu1).powi(2) / v1 - 1.0 + (v1 / v0).ln()))
}

fn check_weights(w_mean: &Tensor, alpha: &[f64], x: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, d) = check_samples(x)?;
    let [k, dw] = *w_mean.shape() else {
        return Err(Error::dim(format!("weights must be [k x d], got {:?}", w_mean.shape())));
    };
    if dw != d {
        return Err(Error::dim(format!("weights have {dw} columns, samples have {d}")));
    }
    if alpha.len() != k {
        return Err(Error::dim(format!("{} alphas for {k} rows", alpha.len())));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::domain(format!("alpha must be positive, got {a}")));
    }
    Ok((n, d, k))
}

/// Per-sample `sum_j W_ij^2 x_j^2` for every row `i`: `[n x k]`.
fn weighted_square_norms(w_mean: &Tensor, x: &Tensor) -> Result<Tensor> {
    let x2 = x.map_with(|v| v * v);
    let w2 = w_mean.map_with(|v| v * v);
    gemm(&x2, &w2, Transpose::Right)
}

/// Closed-form `I(z;x) + TC(z)` for `z_i = (eps_i . W_i) x` with log-normal
/// weight noise of parameter `alpha_i` on row `i`:
///
/// `-1/2 sum_i E_x ln[ a_i W_i^2.x^2 / (W_i Cov(x) W_i + a_i W_i^2.E[x^2]) ]`
///
/// with `a_i = e^alpha_i - 1`. Moments come from `x` and the outer
/// expectation is the sample mean; `std_error` is that of the mean.
pub fn duality_closed_form(w_mean: &Tensor, alpha: &[f64], x: &Tensor) -> Result<MIEstimate> {
    let (n, d, k) = check_weights(w_mean, alpha, x)?;
    let stats = GaussianStats::from_samples(x)?;
    let wcw = gemm(w_mean, &stats.cov, Transpose::None)?;
    let mut denom = vec![0.0; k];
    for i in 0..k {
        let wi = w_mean.row(i);
        let at = NoiseModel::LogNormal.alpha_tilde(alpha[i].ln());
        let proj: f64 = wcw.row(i).iter().zip(wi).map(|(a, b)| a * b).sum();
        let ex2: f64 = (0..d).map(|j| wi[j] * wi[j] * stats.second_moment[j]).sum();
        denom[i] = proj + at * ex2;
    }
    let num = weighted_square_norms(w_mean, x)?;
    let mut per_sample = Vec::with_capacity(n);
    for s in 0..n {
        let mut total = 0.0;
        for i in 0..k {
            let at = NoiseModel::LogNormal.alpha_tilde(alpha[i].ln());
            let ratio = at * num.row(s)[i] / denom[i];
            if !(ratio > 0.0) {
                return Err(Error::domain(format!(
                    "sample {s} gives zero conditional variance on unit {i}"
                )));
            }
            total -= 0.5 * ratio.ln();
        }
        per_sample.push(total);
    }
    Ok(MIEstimate::from_samples(&per_sample))
}

/// Monte Carlo counterpart of [`duality_closed_form`].
///
/// For each input sample the noise `eps` is drawn explicitly per weight, so
/// the marginal moments of every `z_i` are estimated from actual draws
/// `z_i = sum_j eps_ij W_ij x_j`. The conditional `q(z_i | x)` is the
/// Gaussian with the exact mean and variance given `x`. The value is the
/// sample mean over `x` of `sum_i KL(q(z_i|x) || q(z_i))`, and the standard
/// error also carries the uncertainty of the estimated marginal variance.
pub fn mc_mi_gaussian(w_mean: &Tensor, alpha: &[f64], x: &Tensor, rng: &mut Rng) -> Result<MIEstimate> {
    let (n, d, k) = check_weights(w_mean, alpha, x)?;
    let noise = NoiseModel::LogNormal;
    let mu0 = gemm(x, w_mean, Transpose::Right)?;
    let sq = weighted_square_norms(w_mean, x)?;
    let mut z = vec![0.0; n * k];
    for s in 0..n {
        let xs = x.row(s);
        for i in 0..k {
            let wi = w_mean.row(i);
            let mut acc = 0.0;
            for j in 0..d {
                acc += noise.eps_from_normal(alpha[i], rng.standard_normal()) * wi[j] * xs[j];
            }
            z[s * k + i] = acc;
        }
    }
    let mut m1 = vec![0.0; k];
    let mut v1 = vec![0.0; k];
    let mut m4 = vec![0.0; k];
    for s in 0..n {
        for i in 0..k {
            m1[i] += z[s * k + i];
        }
    }
    m1.iter_mut().for_each(|m| *m /= n as f64);
    for s in 0..n {
        for i in 0..k {
            let c = z[s * k + i] - m1[i];
            v1[i] += c * c;
            m4[i] += c.powi(4);
        }
    }
    let v1: Vec<f64> = v1.iter().map(|v| v / (n - 1) as f64).collect();
    let m4: Vec<f64> = m4.iter().map(|v| v / n as f64).collect();

    let mut per_sample = Vec::with_capacity(n);
    for s in 0..n {
        let mut total = 0.0;
        for i in 0..k {
            let at = noise.alpha_tilde(alpha[i].ln());
            let v0 = at * sq.row(s)[i];
            total += gaussian_kl(mu0.row(s)[i], v0, m1[i], v1[i])?;
        }
        per_sample.push(total);
    }
    let mut est = MIEstimate::from_samples(&per_sample);
    // d value / d ln v1 is 1/2 per unit
    let extra: f64 = (0..k).map(|i| 0.25 * (m4[i] - v1[i] * v1[i]).max(0.0) / (n as f64 * v1[i] * v1[i])).sum();
    est.std_error = (est.std_error.powi(2) + extra).sqrt();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::bound_fn;
    use crate::rng::sample_standard_normal;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kl_examples() {
        assert_eq!(gaussian_kl(0.3, 2.0, 0.3, 2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(gaussian_kl(0.0, 1.0, 0.0, 4.0).unwrap(), 0.318147, epsilon = 1e-6);
        assert_abs_diff_eq!(gaussian_kl(1.0, 1.0, 0.0, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(gaussian_kl(0.0, 0.0, 0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn stats_are_consistent() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0], vec![2.0, 4.0]]).unwrap();
        let s = GaussianStats::from_samples(&x).unwrap();
        assert_abs_diff_eq!(s.mean[0], 2.0);
        assert_abs_diff_eq!(s.cov.data()[0], 1.0);
        assert_abs_diff_eq!(s.cov.data()[1], s.cov.data()[2]);
        assert_abs_diff_eq!(s.second_moment[0], 5.0);
        assert!(GaussianStats::from_samples(&Tensor::zeros(&[1, 2])).is_err());
    }

    #[test]
    fn closed_form_two_weight_example() {
        // -1/2 (E ln chi2_2 - ln 4) with E ln chi2_2 = ln 2 - gamma
        let euler_gamma = 0.577_215_664_901_532_9;
        let expected = 0.5 * (2f64.ln() + euler_gamma);
        assert_abs_diff_eq!(expected, 0.635182, epsilon = 1e-6);
        let mut rng = Rng::new(17);
        let x = sample_standard_normal(&mut rng, &[1_000_000, 2]);
        let w = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let est = duality_closed_form(&w, &[2f64.ln()], &x).unwrap();
        assert!((est.value - expected).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn closed_form_decreases_with_alpha() {
        let mut rng = Rng::new(3);
        let x = sample_standard_normal(&mut rng, &[2000, 5]);
        let w = sample_standard_normal(&mut rng, &[2, 5]);
        let vals: Vec<f64> = [0.1, 0.5, 1.0]
            .iter()
            .map(|&a| duality_closed_form(&w, &[a, a], &x).unwrap().value)
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
        // pure-noise limit: only the Jensen gap of the input norm remains,
        // which vanishes with the input dimension
        let x = sample_standard_normal(&mut rng, &[2000, 512]);
        let w = sample_standard_normal(&mut rng, &[1, 512]);
        let far = duality_closed_form(&w, &[60.0], &x).unwrap().value;
        assert!(far.abs() < 0.02, "{far}");
    }

    #[test]
    fn closed_form_rejects_zero_inputs() {
        let x = Tensor::zeros(&[4, 3]);
        let w = Tensor::full(&[1, 3], 1.0);
        assert!(matches!(duality_closed_form(&w, &[0.5], &x), Err(Error::Domain(_))));
    }

    #[test]
    fn oracle_agrees_with_closed_form() {
        let mut rng = Rng::new(5);
        let x = sample_standard_normal(&mut rng, &[20_000, 2]);
        let w = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let a = duality_closed_form(&w, &[2f64.ln()], &x).unwrap();
        let b = mc_mi_gaussian(&w, &[2f64.ln()], &x, &mut rng).unwrap();
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 3.0 * se, "{a:?} vs {b:?}");
        assert!(b.value >= 0.0);
    }

    #[test]
    fn oracle_grows_as_noise_vanishes() {
        let mut rng = Rng::new(6);
        let x = sample_standard_normal(&mut rng, &[2000, 3]);
        let w = Tensor::from_rows(&[vec![1.0, -0.5, 2.0]]).unwrap();
        let lo = mc_mi_gaussian(&w, &[1e-2], &x, &mut rng).unwrap().value;
        let hi = mc_mi_gaussian(&w, &[1e-6], &x, &mut rng).unwrap().value;
        assert!(hi > lo + 4.0, "{lo} {hi}");
    }

    #[test]
    fn tightness_small_scale() {
        let mut rng = Rng::new(8);
        let x = sample_standard_normal(&mut rng, &[5000, 128]);
        let w = sample_standard_normal(&mut rng, &[2, 128]);
        let alpha = 0.5;
        let est = duality_closed_form(&w, &[alpha, alpha], &x).unwrap();
        let per = est.value / 2.0;
        let b = bound_fn(alpha).unwrap();
        assert!(per >= b - 3.0 * est.std_error / 2.0);
        assert!(per <= b + 0.05);
    }
}
