//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Failures are reported, not fatal, so that `cargo test --workspace` still
//! runs the remaining targets; set `HDLR_ACCEPTANCE_STRICT=1` to exit nonzero
//! on any FAIL. `cargo test --test acceptance -- A3 A5` runs a subset.

use std::time::Instant;

use hdlr::edge::{estimate_edge_table, estimate_rho, oracle_edge_params, EstimateOptions, DEFAULT_ODE_STEPS};
use hdlr::measure::{fit_measure, DiscreteMeasure, FitOptions};
use hdlr::model::{build_sscp, largest_root, SscpPair};
use hdlr::power::{select_lambda_many, upsilon, AlternativePrior, SelectOptions};
use hdlr::sim::{self, ExperimentSpec};
use hdlr::spectral::{build_zgrid, SpectrumView, DEFAULT_GRID_I};
use hdlr::tw::ks_distance_tw1;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spec(v: serde_json::Value) -> ExperimentSpec {
    let s: ExperimentSpec = serde_json::from_value(v).expect("valid spec");
    s.validate().expect("valid spec");
    s
}

/// `Sigma^1/2 Z Z^T Sigma^1/2 / n` for diagonal `Sigma`.
fn wishart(sigma: &[f64], n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let z = DMatrix::<f64>::from_fn(sigma.len(), n, |i, _| {
        let g: f64 = StandardNormal.sample(rng);
        sigma[i].sqrt() * g
    });
    (&z * z.transpose()) / n as f64
}

fn three_mass(p: usize) -> Vec<f64> {
    sim::model_eigenvalues(&sim::CovKind::ThreeMass { a: 0.5 }, p).unwrap()
}

fn a1_a2() -> (Outcome, Outcome) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../specs/table4_desk.json");
    let spec = hdlr::io::read_spec(std::path::Path::new(path)).expect("shipped spec");
    let res = sim::run_null_size(&spec).expect("size run");
    let mut size_ok = true;
    let mut size_txt = Vec::new();
    for row in res.rates.iter().filter(|r| r.alpha == 0.05) {
        size_ok &= (0.025..=0.080).contains(&row.rate);
        size_txt.push(format!("lambda={} size={:.3} (n={})", row.label, row.rate, row.n));
    }
    size_txt.push(format!("failed={}", res.failed.len()));
    let mut ks_ok = true;
    let mut ks_txt = Vec::new();
    for (label, _) in &res.oracle {
        let stats: Vec<f64> = res
            .records
            .iter()
            .flat_map(|r| r.lambdas.iter())
            .filter(|l| &l.label == label)
            .filter_map(|l| l.statistic_oracle)
            .collect();
        let ks = ks_distance_tw1(&stats);
        ks_ok &= ks <= 0.08 && stats.len() == spec.replicates;
        ks_txt.push(format!("lambda={label} ks={ks:.4} (n={})", stats.len()));
    }
    (outcome(size_ok, size_txt.join(", ")), outcome(ks_ok, ks_txt.join(", ")))
}

struct EstStats {
    err1: f64,
    err2: f64,
    n: usize,
    failed: usize,
    fd_worst: f64,
    beta_worst: f64,
    fd_below_beta: f64,
}

fn a3_a5() -> (Outcome, Outcome) {
    let (p, n1, n2, lambda) = (250usize, 500usize, 500usize, 0.5);
    let spec = spec(serde_json::json!({
        "cov": { "kind": "poly_decay", "p": p },
        "n1": n1, "n2": n2, "lambdas": [lambda], "replicates": 200, "seed": 31
    }));
    let cov = sim::spec_covariance(&spec).unwrap();
    let oracle = sim::oracle_params(&cov.eigs, lambda, p as f64 / n1 as f64, p as f64 / n2 as f64, DEFAULT_ODE_STEPS).unwrap();
    let scale = (p as f64).powf(2.0 / 3.0) / oracle.theta2;
    let opts = EstimateOptions::default();
    let per: Vec<Option<(f64, f64, f64, f64, f64)>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let model = sim::draw_dataset(&spec, &cov, 0.0, 1 + r as u64).ok()?;
            let sscp = build_sscp(&model).ok()?;
            let view = SpectrumView::from_sscp(&sscp).ok()?;
            let (_, table, est) = estimate_edge_table(&view, lambda, &opts).ok()?;
            let (mut fd_worst, mut fd_below_beta) = (0.0f64, 0.0f64);
            for i in 1..table.len() - 1 {
                let fd = (table.s[i + 1] - table.s[i - 1]) / (table.xs[i + 1] - table.xs[i - 1]);
                let rel = (fd - table.s1[i]).abs() / table.s1[i].abs();
                fd_worst = fd_worst.max(rel);
                if table.xs[i + 1] <= est.beta {
                    fd_below_beta = fd_below_beta.max(rel);
                }
            }
            let beta_res = (est.beta * est.beta * est.s1_at_beta * view.gamma1_hat - 1.0).abs();
            Some((
                scale * (est.theta1 - oracle.theta1).abs(),
                scale * (est.theta2 - oracle.theta2).abs(),
                fd_worst,
                beta_res,
                fd_below_beta,
            ))
        })
        .collect();
    let ok: Vec<_> = per.iter().flatten().collect();
    let n = ok.len();
    let st = EstStats {
        err1: ok.iter().map(|t| t.0).sum::<f64>() / n as f64,
        err2: ok.iter().map(|t| t.1).sum::<f64>() / n as f64,
        n,
        failed: per.len() - n,
        fd_worst: ok.iter().map(|t| t.2).fold(0.0, f64::max),
        beta_worst: ok.iter().map(|t| t.3).fold(0.0, f64::max),
        fd_below_beta: ok.iter().map(|t| t.4).fold(0.0, f64::max),
    };
    let a3 = outcome(
        st.err1 <= 0.12 && st.err2 <= 0.28 && st.failed == 0,
        format!(
            "mean scaled |dtheta1|={:.4} (<=0.12), |dtheta2|={:.4} (<=0.28), n={}, failed={}",
            st.err1, st.err2, st.n, st.failed
        ),
    );
    let a5 = outcome(
        st.fd_worst <= 1e-3 && st.beta_worst <= 1e-8 && st.n > 0,
        format!(
            "worst interior |s' - fd|/s'={:.2e} (<=1e-3; {:.2e} on nodes below beta), worst |beta^2 s'(beta) g1 - 1|={:.2e} (<=1e-8) over {} tables",
            st.fd_worst, st.fd_below_beta, st.beta_worst, st.n
        ),
    );
    (a3, a5)
}

fn a4() -> Outcome {
    let (g1, g2) = (0.5f64, 0.25f64);
    let at_one: f64 = oracle_edge_params(&[1.0], 1.0, g1, g2).unwrap().rho;
    let tiny = 1e-8;
    let mp_edge = (1.0 - g2.sqrt()).powi(2);
    let (at_tiny, via) = match oracle_edge_params(&[1.0], tiny, g1, g2) {
        Ok(e) => (e.rho, "oracle_edge_params"),
        Err(_) => {
            let m = DiscreteMeasure::new(vec![1.0], vec![1.0]).unwrap();
            (estimate_rho(&m, tiny, g2).unwrap().0, "estimate_rho")
        }
    };
    outcome(
        (at_one - 1.25).abs() <= 1e-6 && (at_tiny - mp_edge).abs() <= 1e-4,
        format!("rho(lambda=1)={at_one:.9} (1.25), rho(lambda=1e-8)={at_tiny:.9} ({mp_edge}) via {via}"),
    )
}

fn a6() -> Outcome {
    let (p, lambda) = (600usize, 1.0);
    let eigs = three_mass(p);
    let w2 = wishart(&eigs, p, &mut ChaCha8Rng::seed_from_u64(61));
    let w2_eigs: Vec<f64> = w2.symmetric_eigenvalues().iter().copied().collect();
    let view = SpectrumView::new(&w2_eigs, p, p / 2, p).unwrap();
    let grid = build_zgrid(&view, lambda, DEFAULT_GRID_I).unwrap();
    let fit = fit_measure(&view, lambda, &grid, &FitOptions::default()).unwrap();
    let truth = DiscreteMeasure::from_eigenvalues(&eigs).unwrap();
    let hi = 0.9 * lambda / truth.sigma_max();
    let mut worst = [0.0f64; 2];
    let mut unavailable = 0;
    for i in 0..=100 {
        let h = -5.0 + (hi + 5.0) * i as f64 / 100.0;
        for j in 1..=2u8 {
            let t = truth.h_func(lambda, h, j).unwrap();
            match fit.measure.h_func(lambda, h, j) {
                Ok(f) => worst[j as usize - 1] = worst[j as usize - 1].max((f - t).abs() / t.abs()),
                Err(_) => unavailable += 1,
            }
        }
    }
    outcome(
        worst[0] <= 1e-2 && worst[1] <= 1e-2 && unavailable == 0,
        format!(
            "max rel err H1={:.2e}, H2={:.2e} (<=1e-2) on [-5, {hi:.4}], fitted sigma_max={:.3} vs {:.3}, off-domain probes={unavailable}",
            worst[0],
            worst[1],
            fit.measure.sigma_max(),
            truth.sigma_max()
        ),
    )
}

fn a7() -> Outcome {
    let zetas = [0.0, 0.025, 0.03, 0.035, 0.04, 0.045, 0.05, 0.06];
    let spec = spec(serde_json::json!({
        "cov": { "kind": "poly_decay", "p": 250 },
        "n1": 100, "n2": 500, "lambdas": [1.0], "replicates": 100, "null_replicates": 400,
        "seed": 71, "alphas": [0.05], "zetas": zetas, "oracle": false
    }));
    let res = sim::run_power_curve(&spec).expect("power run");
    let power: Vec<(f64, f64, usize)> = res
        .rates
        .iter()
        .map(|r| (r.zeta, r.rate_adjusted.expect("adjusted"), r.n))
        .collect();
    let se = |q: f64, n: usize| (q * (1.0 - q) / n as f64).sqrt();
    let monotone = power.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        b.1 >= a.1 - 2.0 * (se(a.1, a.2).powi(2) + se(b.1, b.2).powi(2)).sqrt()
    });
    let top = power.last().unwrap().1;
    let curve: Vec<String> = power.iter().map(|(z, q, _)| format!("{z}:{q:.2}")).collect();
    outcome(
        monotone && top >= 0.9,
        format!("adjusted power {} (failed={})", curve.join(" "), res.failed.len()),
    )
}

fn a8() -> Outcome {
    let p = 200;
    let spec = spec(serde_json::json!({
        "cov": { "kind": "three_mass", "a": 0.5, "p": p },
        "n1": 400, "n2": 400, "lambdas": [1.0], "replicates": 50, "seed": 81
    }));
    let cov = sim::spec_covariance(&spec).unwrap();
    let priors = [AlternativePrior::identity(p), AlternativePrior::sigma()];
    let opts = SelectOptions::default();
    let picks: Vec<Option<(f64, f64)>> = (0..spec.replicates)
        .map(|r| {
            let model = sim::draw_dataset(&spec, &cov, 0.0, 1 + r as u64).ok()?;
            let sscp = build_sscp(&model).ok()?;
            let view = SpectrumView::from_sscp(&sscp).ok()?;
            let sel = select_lambda_many(&view, &sscp, &priors, &opts).ok()?;
            Some((sel[0].lambda_opt, sel[1].lambda_opt))
        })
        .collect();
    let agree = picks.iter().flatten().filter(|(i, s)| s >= i).count();
    let failed = picks.iter().filter(|x| x.is_none()).count();
    let frac = agree as f64 / spec.replicates as f64;
    outcome(
        frac >= 0.8,
        format!("lambda(Sigma) >= lambda(I) in {agree}/{} replicates ({frac:.2}, >=0.80), failed={failed}", spec.replicates),
    )
}

/// Root of the population equation `-lambda = -1/phi + g2 E[t / (t phi + 1)]`.
fn population_phi(eigs: &[f64], lambda: f64, g2: f64) -> f64 {
    let f = |phi: f64| {
        let int = eigs.iter().map(|&t| t / (t * phi + 1.0)).sum::<f64>() / eigs.len() as f64;
        1.0 / phi - g2 * int - lambda
    };
    let (mut lo, mut hi) = (1e-12, 1.0 / lambda);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn a9() -> Outcome {
    let (p, n1, n2, lambda) = (600usize, 300usize, 1200usize, 1.0);
    let eigs = three_mass(p);
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let w1 = wishart(&eigs, n1, &mut rng);
    let w2 = wishart(&eigs, n2, &mut rng);
    let sscp = SscpPair::from_matrices(w1, w2, n1, n2).unwrap();
    let view = SpectrumView::from_sscp(&sscp).unwrap();
    let u = upsilon(&view, &sscp, lambda).unwrap();
    let phi = population_phi(&eigs, lambda, p as f64 / n2 as f64);
    let mut worst = 0.0f64;
    let mut txt = Vec::new();
    for (i, &ui) in u.iter().enumerate() {
        let det = eigs.iter().map(|&t| t.powi(i as i32) / (lambda * phi * t + lambda)).sum::<f64>() / p as f64;
        let rel = (ui - det).abs() / det.abs();
        worst = worst.max(rel);
        txt.push(format!("U{i}={ui:.5} vs {det:.5}"));
    }
    outcome(worst <= 5e-2, format!("{}, worst rel={worst:.2e} (<=5e-2)", txt.join(", ")))
}

fn a10() -> Outcome {
    let p = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n1 = rng.random_range(1..=40);
        let n2 = rng.random_range(5..=60);
        let lambda = 10f64.powf(rng.random_range(-2.0..1.0));
        let draw = |n: usize, rng: &mut ChaCha8Rng| {
            let g = DMatrix::<f64>::from_fn(p, n, |_, _| StandardNormal.sample(rng));
            (&g * g.transpose()) / n as f64
        };
        let w1 = draw(n1, &mut rng);
        let w2 = draw(n2, &mut rng);
        let general = &w1 * (&w2 + DMatrix::identity(p, p) * lambda).try_inverse().unwrap();
        let mut direct: Vec<f64> = general.complex_eigenvalues().iter().map(|z| z.re).collect();
        direct.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let sscp = SscpPair::from_matrices(w1, w2, n1, n2).unwrap();
        // Only min(n1, p) eigenvalues are nonzero; the rest must vanish in the direct form.
        let sym = largest_root(&sscp, lambda, n1.min(p)).unwrap().top_k;
        let scale = direct[0].abs().max(1.0);
        for (i, b) in direct.iter().enumerate() {
            let a = sym.get(i).copied().unwrap_or(0.0);
            worst = worst.max((a - b).abs() / scale);
        }
    }
    outcome(worst <= 1e-8, format!("worst |eig diff| / max(1, ell_max) = {worst:.2e} (<=1e-8) over 100 pairs"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let wanted = |ids: &[&str]| filter.is_empty() || ids.iter().any(|id| filter.iter().any(|f| f == id));
    let mut results: Vec<(&str, Outcome, f64)> = Vec::new();
    let mut run = |ids: &[&'static str], f: &dyn Fn() -> Vec<Outcome>| {
        if !wanted(ids) {
            return;
        }
        let t = Instant::now();
        let outs = f();
        let secs = t.elapsed().as_secs_f64();
        for (&id, o) in ids.iter().zip(outs) {
            println!("{id} {} {} [{secs:.0}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((id, o, secs));
        }
    };
    run(&["A1", "A2"], &|| {
        let (a, b) = a1_a2();
        vec![a, b]
    });
    run(&["A3", "A5"], &|| {
        let (a, b) = a3_a5();
        vec![a, b]
    });
    run(&["A4"], &|| vec![a4()]);
    run(&["A6"], &|| vec![a6()]);
    run(&["A7"], &|| vec![a7()]);
    run(&["A8"], &|| vec![a8()]);
    run(&["A9"], &|| vec![a9()]);
    run(&["A10"], &|| vec![a10()]);
    let failed: Vec<&str> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        println!("acceptance: FAIL {}", failed.join(" "));
        if std::env::var_os("HDLR_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
