use std::collections::BTreeMap;
use std::path::Path;

use ibw_core::info::{
    bound_fn, duality_closed_form, flat_minima_bound, flat_minima_exact, grid_search_alpha, hessian_diagonal,
    mc_mi_gaussian, multilayer_bound, optimal_alpha_quadratic, pac_bayes_bound,
};
use ibw_core::rng::sample_standard_normal;
use ibw_core::vnn::{init_network, Activation, NetworkSpec, NoiseModel};
use ibw_core::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BoundsConfig, ExperimentConfig};
use crate::CliResult;

const STREAM_BOUNDS: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub values: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, tolerance: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            values: BTreeMap::new(),
            tolerance,
            detail: detail.into(),
        }
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.to_string(), v);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub schema_version: u32,
    pub seed: u64,
    pub all_passed: bool,
    pub checks: Vec<Check>,
}

/// Direct `-1/2 ln(1 - e^-alpha)`, fine away from the extremes.
fn bound_naive(alpha: f64) -> f64 {
    -0.5 * (1.0 - (-alpha).exp()).ln()
}

fn duality_checks(b: &BoundsConfig, rng: &mut Rng, out: &mut Vec<Check>) -> CliResult<()> {
    let x = sample_standard_normal(rng, &[b.mc_samples, b.dim_x]);
    let w = sample_standard_normal(rng, &[b.dim_z, b.dim_x]);
    for &alpha in &b.alphas {
        let alphas = vec![alpha; b.dim_z];
        let closed = duality_closed_form(&w, &alphas, &x)?;
        let mc = mc_mi_gaussian(&w, &alphas, &x, rng)?;
        let se = closed.combined_se(&mc);
        let diff = (closed.value - mc.value).abs();
        out.push(
            Check::new(
                format!("duality_vs_mc[alpha={alpha}]"),
                diff <= 3.0 * se,
                3.0,
                "|closed form - Monte Carlo| <= tolerance x combined SE",
            )
            .with("closed_form", closed.value)
            .with("closed_form_se", closed.std_error)
            .with("monte_carlo", mc.value)
            .with("monte_carlo_se", mc.std_error)
            .with("abs_diff", diff)
            .with("combined_se", se),
        );
        let per_unit = closed.value / b.dim_z as f64;
        let per_unit_se = closed.std_error / b.dim_z as f64;
        let lower = bound_fn(alpha)?;
        let upper = lower + b.tightness_slack + 3.0 * per_unit_se;
        out.push(
            Check::new(
                format!("single_layer_tightness[alpha={alpha}]"),
                lower <= per_unit && per_unit <= upper,
                b.tightness_slack,
                "B(alpha) <= estimate/dim_z <= B(alpha) + tolerance + 3 SE",
            )
            .with("per_unit", per_unit)
            .with("per_unit_se", per_unit_se)
            .with("bound", lower)
            .with("upper", upper),
        );
    }
    Ok(())
}

fn multilayer_check(rng: &mut Rng) -> CliResult<Check> {
    let spec = NetworkSpec::mlp(&[16, 8, 4], Activation::Relu, NoiseModel::LogNormal, 0.0);
    let mut net = init_network(&spec, rng)?;
    let las = [-1.0, -3.0];
    for (d, la) in net.dense_layers_mut().zip(las) {
        d.log_alpha.data_mut().iter_mut().for_each(|v| *v = la);
    }
    let got = multilayer_bound(&net)?;
    // uniform log alpha `la` has effective alpha exp(la / 2)
    let t0 = 8.0 * (bound_naive((las[0] / 2.0f64).exp()) + 1.0);
    let t1 = 4.0 * (bound_naive((las[1] / 2.0f64).exp()) + 1.0);
    let want = t0.min(t1);
    let first_only = {
        let spec = NetworkSpec::mlp(&[16, 8], Activation::Relu, NoiseModel::LogNormal, las[0]);
        multilayer_bound(&init_network(&spec, rng)?)?
    };
    let tol = 1e-12;
    Ok(Check::new(
        "multilayer_bound",
        (got - want).abs() <= tol * want && got <= first_only + tol,
        tol,
        "min over layers of dim_z (B + 1); adding a layer never raises it",
    )
    .with("bound", got)
    .with("expected", want)
    .with("first_layer_alone", first_only))
}

fn flat_checks(b: &BoundsConfig, rng: &mut Rng, out: &mut Vec<Check>) -> CliResult<()> {
    let k = b.flat_k;
    let beta = b.flat_beta;
    let w: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
    let h_true: Vec<f64> = (0..k).map(|_| rng.standard_normal().exp()).collect();
    let centre: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
    // loss 1/2 sum H_i (w_i - c_i)^2, curvature recovered from its gradient
    let grad = |p: &[f64]| -> ibw_core::Result<Vec<f64>> {
        Ok(p.iter().zip(&h_true).zip(&centre).map(|((p, h), c)| h * (p - c)).collect())
    };
    let h = hessian_diagonal(grad, &w, 1e-3)?.into_data();
    let h_err = h.iter().zip(&h_true).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
    out.push(
        Check::new("flat_hessian_diagonal", h_err <= 1e-8, 1e-8, "finite-difference curvature of the quadratic")
            .with("max_rel_err", h_err),
    );

    let closed = optimal_alpha_quadratic(&w, &h, beta)?;
    let mut worst: f64 = 0.0;
    for i in 0..k {
        let a = closed[i].ok_or_else(|| crate::CliError::failure("degenerate flat-minima fixture"))?;
        let g = grid_search_alpha(w[i], h[i], beta, b.flat_rel_tol * 1e-2)?;
        worst = worst.max(((g - a) / a).abs());
    }
    out.push(
        Check::new(
            "flat_alpha_optima",
            worst <= b.flat_rel_tol,
            b.flat_rel_tol,
            "grid-searched alpha vs beta / (2 w^2 H), relative",
        )
        .with("max_rel_err", worst)
        .with("k", k as f64),
    );

    let bound = flat_minima_bound(&w, &h, beta)?;
    let exact = flat_minima_exact(&w, &h, beta)?;
    out.push(
        Check::new("flat_bound_dominates", bound >= exact, 0.0, "bound >= exact information at the optima")
            .with("bound", bound)
            .with("exact", exact),
    );

    let (w1, h1) = ([w[0]], [h[0]]);
    let b1 = flat_minima_bound(&w1, &h1, beta)?;
    let e1 = flat_minima_exact(&w1, &h1, beta)?;
    let tol1 = 1e-9;
    out.push(
        Check::new("flat_bound_tight_k1", (b1 - e1).abs() <= tol1, tol1, "bound equals exact for K = 1")
            .with("bound", b1)
            .with("exact", e1),
    );

    // Jensen step of the bound: -1/2 sum ln a_i <= K/2 ln(mean 1/a_i)
    let perturbed: Vec<f64> = closed
        .iter()
        .map(|a| a.unwrap_or(1.0) * (b.alpha_perturbation * rng.standard_normal()).exp())
        .collect();
    let lhs: f64 = perturbed.iter().map(|a| -0.5 * a.ln()).sum();
    let rhs = 0.5 * k as f64 * (perturbed.iter().map(|a| 1.0 / a).sum::<f64>() / k as f64).ln();
    out.push(
        Check::new(
            "flat_jensen",
            lhs <= rhs + 1e-12 * rhs.abs().max(1.0),
            1e-12,
            "sum of per-coordinate information <= K/2 ln mean(1/alpha)",
        )
        .with("information", lhs)
        .with("jensen_bound", rhs)
        .with("perturbation", b.alpha_perturbation),
    );
    Ok(())
}

fn bound_grid_check() -> CliResult<Check> {
    let grid: Vec<f64> = (0..=50).map(|i| 10f64.powf(-4.0 + 6.0 * i as f64 / 50.0)).collect();
    let vals = grid.iter().map(|&a| bound_fn(a)).collect::<Result<Vec<_>, _>>()?;
    let positive = vals.iter().all(|&v| v > 0.0);
    let decreasing = vals.windows(2).all(|p| p[1] < p[0]);
    let small = bound_fn(1e-8)?;
    let large = bound_fn(40.0)?;
    let matches = grid
        .iter()
        .zip(&vals)
        .filter(|(a, _)| (0.01..=5.0).contains(*a))
        .map(|(&a, &v)| ((v - bound_naive(a)) / v).abs())
        .fold(0.0, f64::max);
    Ok(Check::new(
        "bound_function_grid",
        positive && decreasing && small > 9.0 && large < 1e-17 && matches < 1e-10,
        1e-10,
        "B > 0, strictly decreasing, large near 0, vanishing at large alpha, agrees with the direct formula",
    )
    .with("b_at_1e-8", small)
    .with("b_at_40", large)
    .with("max_rel_vs_direct", matches)
    .with("positive", positive as u8 as f64)
    .with("decreasing", decreasing as u8 as f64))
}

fn pac_bayes_check() -> CliResult<Check> {
    let (ce, kl, n, lambda, l_max) = (50.0, 10.0, 100, 1.0, 10f64.ln());
    let got = pac_bayes_bound(ce, kl, n, lambda, l_max)?;
    // by hand: (50 + 10 ln 10) / (100 (1 - 1/2)) = 1 + ln(10) / 5
    let hand = 1.0 + 10f64.ln() / 5.0;
    let grid = [0.0, 1.0, 5.0, 10.0, 50.0];
    let vals = grid
        .iter()
        .map(|&k| pac_bayes_bound(ce, k, n, lambda, l_max))
        .collect::<Result<Vec<_>, _>>()?;
    let increasing = vals.windows(2).all(|p| p[1] > p[0]);
    let tol = 1e-9;
    Ok(Check::new(
        "pac_bayes_example",
        (got - hand).abs() <= tol && (got - 1.460517).abs() <= 5e-7 && increasing,
        tol,
        "lambda=1, N=100, ce=50, L=ln 10, kl=10; strictly increasing in kl",
    )
    .with("bound", got)
    .with("hand_computed", hand)
    .with("increasing_in_kl", increasing as u8 as f64))
}

pub fn verify(cfg: &ExperimentConfig) -> CliResult<BoundsReport> {
    let b = &cfg.bounds;
    let mut rng = Rng::new(cfg.seed).derive(STREAM_BOUNDS);
    let mut checks = Vec::new();
    checks.push(bound_grid_check()?);
    checks.push(pac_bayes_check()?);
    checks.push(multilayer_check(&mut rng)?);
    flat_checks(b, &mut rng, &mut checks)?;
    duality_checks(b, &mut rng, &mut checks)?;
    Ok(BoundsReport {
        schema_version: crate::SCHEMA_VERSION,
        seed: cfg.seed,
        all_passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

/// Writes `bounds.json`; exit 1 if any check failed.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<i32> {
    cfg.validate()?;
    crate::prepare_out_dir(out)?;
    let report = verify(cfg)?;
    crate::write_json(&out.join("bounds.json"), &report)?;
    for c in &report.checks {
        println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    Ok(if report.all_passed { 0 } else { crate::EXIT_FAILURE })
}
