//! Independent numerical oracles for the tabulated densities.
//!
//! For the Brownian bridge the truncated solution is conditionally Gaussian
//! given alpha^2, so its density collapses to a one-dimensional mixture
//! integral. That collapse is computed here with its own quadrature, fully
//! independent of the tensor-product engine, and used as ground truth.

use heatdens::density::{
    auto_grid, density_grid, mc_integrate_density, GridSpec, Method, ModelBundle, QuadConfig,
};
use heatdens::diagnostics::l1_distance;
use heatdens::models::{make_brownian_bridge_process, DiffusionSpec};
use heatdens::quad;
use heatdens::series::{sin_pi, EvalPoint};

const PI: f64 = std::f64::consts::PI;

fn bb_bundle() -> ModelBundle {
    ModelBundle::new(
        make_brownian_bridge_process(),
        DiffusionSpec::uniform(1.0, 2.0).unwrap(),
    )
}

/// Conditional variance of the truncated bridge solution given alpha^2 = a.
fn bb_conditional_var(a: f64, x: f64, t: f64, n_order: usize) -> f64 {
    (1..=n_order)
        .map(|n| {
            let nf = n as f64;
            let s = sin_pi(nf * x);
            2.0 / (nf * nf * PI * PI) * (-2.0 * nf * nf * PI * PI * t * a).exp() * s * s
        })
        .sum()
}

/// One-dimensional collapse of the bridge density: a scale mixture of
/// centered Gaussians over alpha^2 ~ Uniform(1,2).
fn bb_density_oracle(u: f64, x: f64, t: f64, n_order: usize, order: usize) -> f64 {
    quad::integrate_legendre(order, 1.0, 2.0, |a| {
        let v = bb_conditional_var(a, x, t, n_order);
        (-0.5 * u * u / v).exp() / (2.0 * PI * v).sqrt()
    })
    .unwrap()
}

fn oracle_grid(us: &[f64], x: f64, t: f64, n_order: usize) -> Vec<f64> {
    let coarse: Vec<f64> = us
        .iter()
        .map(|&u| bb_density_oracle(u, x, t, n_order, 256))
        .collect();
    let fine: Vec<f64> = us
        .iter()
        .map(|&u| bb_density_oracle(u, x, t, n_order, 512))
        .collect();
    // the mixture integrand is analytic in alpha^2: the two orders must agree
    let max_rel = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
        .fold(0.0f64, f64::max);
    assert!(max_rel < 1e-12, "oracle quadrature not converged: {max_rel}");
    fine
}

fn l1_on(us: &[f64], f1: &[f64], f2: &[f64]) -> f64 {
    us.windows(2)
        .zip(f1.windows(2).zip(f2.windows(2)))
        .map(|(uw, (a, b))| 0.5 * ((a[0] - b[0]).abs() + (a[1] - b[1]).abs()) * (uw[1] - uw[0]))
        .sum()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}

#[test]
fn engine_matches_collapse_oracle_pointwise() {
    let bundle = bb_bundle();
    let q = QuadConfig {
        refine_tol: 1e-10,
        ..QuadConfig::default()
    };
    for &(x, t) in &[(0.5, 0.1), (0.7, 0.3)] {
        let p = EvalPoint::new(x, t).unwrap();
        for n in [2usize, 3] {
            let (lo, hi, count) = auto_grid(&bundle, &p, n, Method::BbFast).unwrap();
            let g = density_grid(
                &p,
                n,
                Method::BbFast,
                &bundle,
                &q,
                GridSpec::Explicit { lo, hi, count },
            )
            .unwrap();
            let oracle = oracle_grid(&g.u, x, t, n);
            let max_rel = g
                .f
                .iter()
                .zip(&oracle)
                .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
                .fold(0.0f64, f64::max);
            assert!(
                max_rel < 1e-9,
                "engine deviates from oracle at (x={x}, t={t}, N={n}): {max_rel}"
            );
        }
    }
}

/// The true successive L1 distances of the bridge densities. The first one is
/// frozen from the collapse oracle (two independent quadrature stacks agree);
/// the others are below double-precision resolution because the added series
/// terms are exponentially negligible at those points.
#[test]
fn true_table_distances_for_bridge() {
    let bundle = bb_bundle();
    let q = QuadConfig {
        refine_tol: 1e-10,
        ..QuadConfig::default()
    };

    // (0.5, 0.1): the N=2 -> 3 change is a genuine 4.7e-10-scale quantity
    let p = EvalPoint::new(0.5, 0.1).unwrap();
    let (lo, hi, count) = auto_grid(&bundle, &p, 3, Method::BbFast).unwrap();
    let us = linspace(lo, hi, count);
    let o2 = oracle_grid(&us, 0.5, 0.1, 2);
    let o3 = oracle_grid(&us, 0.5, 0.1, 3);
    let oracle_d = l1_on(&us, &o2, &o3);
    // frozen: 4.70e-10 (cross-checked against an external adaptive integrator)
    assert!(
        (oracle_d - 4.70e-10).abs() < 0.05e-10,
        "oracle distance moved: {oracle_d:.4e}"
    );
    let spec = GridSpec::Explicit { lo, hi, count };
    let g2 = density_grid(&p, 2, Method::BbFast, &bundle, &q, spec).unwrap();
    let g3 = density_grid(&p, 3, Method::BbFast, &bundle, &q, spec).unwrap();
    let engine_d = l1_distance(&g2, &g3);
    assert!(
        (engine_d - oracle_d).abs() < 0.02 * oracle_d,
        "engine {engine_d:.4e} vs oracle {oracle_d:.4e}"
    );

    // (0.7, 0.3): the added n=3 term is ~1e-23 relative; the distance is
    // numerically zero
    let p = EvalPoint::new(0.7, 0.3).unwrap();
    let (lo, hi, count) = auto_grid(&bundle, &p, 3, Method::BbFast).unwrap();
    let spec = GridSpec::Explicit { lo, hi, count };
    let g2 = density_grid(&p, 2, Method::BbFast, &bundle, &q, spec).unwrap();
    let g3 = density_grid(&p, 3, Method::BbFast, &bundle, &q, spec).unwrap();
    let d = l1_distance(&g2, &g3);
    assert!(d < 1e-10, "distance at (0.7,0.3) should be ~0, got {d:.3e}");
}

#[test]
fn mc_integrator_agrees_with_quadrature() {
    let bundle = bb_bundle();
    let p = EvalPoint::new(0.5, 0.1).unwrap();
    let q = QuadConfig::default();
    let g = density_grid(&p, 3, Method::BbFast, &bundle, &q, GridSpec::Auto).unwrap();
    let qmc = QuadConfig {
        mc_samples: 1_000_000,
        mc_seed: 17,
        ..QuadConfig::default()
    };
    let mc = mc_integrate_density(&g.u, &p, 3, Method::BbFast, &bundle, &qmc).unwrap();
    let d = l1_distance(&g, &mc);
    assert!(d <= 5e-3, "MC vs quadrature L1 = {d}");
}

#[test]
fn mc_integrator_point_mass_matches_single_node_rule() {
    let bundle = ModelBundle::new(
        make_brownian_bridge_process(),
        DiffusionSpec::uniform(1.4, 1.4).unwrap(),
    );
    let p = EvalPoint::new(0.3, 0.15).unwrap();
    let q = QuadConfig::default();
    let g = density_grid(&p, 2, Method::BbFast, &bundle, &q, GridSpec::Auto).unwrap();
    let qmc = QuadConfig {
        mc_samples: 400_000,
        mc_seed: 3,
        ..QuadConfig::default()
    };
    let mc = mc_integrate_density(&g.u, &p, 2, Method::BbFast, &bundle, &qmc).unwrap();
    let d = l1_distance(&g, &mc);
    assert!(d <= 6e-3, "degenerate-diffusion MC vs quadrature L1 = {d}");
}

#[test]
fn mc_error_shrinks_at_the_root_n_rate() {
    let bundle = bb_bundle();
    let p = EvalPoint::new(0.5, 0.1).unwrap();
    let q = QuadConfig::default();
    let (lo, hi, _) = auto_grid(&bundle, &p, 3, Method::BbFast).unwrap();
    let spec = GridSpec::Explicit {
        lo,
        hi,
        count: 201,
    };
    let g = density_grid(&p, 3, Method::BbFast, &bundle, &q, spec).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..6u64 {
        let d_small = {
            let qmc = QuadConfig {
                mc_samples: 100_000,
                mc_seed: 100 + seed,
                ..QuadConfig::default()
            };
            let mc = mc_integrate_density(&g.u, &p, 3, Method::BbFast, &bundle, &qmc).unwrap();
            l1_distance(&g, &mc)
        };
        let d_big = {
            let qmc = QuadConfig {
                mc_samples: 200_000,
                mc_seed: 100 + seed,
                ..QuadConfig::default()
            };
            let mc = mc_integrate_density(&g.u, &p, 3, Method::BbFast, &bundle, &qmc).unwrap();
            l1_distance(&g, &mc)
        };
        ratios.push(d_big / d_small);
    }
    let mean: f64 = ratios.iter().sum::<f64>() / ratios.len() as f64;
    // doubling the sample count should shrink the error by about 1/sqrt(2)
    assert!(
        mean > 0.5 && mean < 0.95,
        "mean ratio {mean} outside the Monte Carlo band ({ratios:?})"
    );
}
