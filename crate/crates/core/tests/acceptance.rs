//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! Built with `harness = false` so every line is printed. Run alone with
//! `cargo test -p quantlap-core --test acceptance`.

mod common;

use common::{random_hermitian, rng};
use quantlap_core::balance::{balance_residual, t_iterate, BalanceOptions};
use quantlap_core::bundles::{
    bergman_kernel_diag, toeplitz_kernel_diag, InnerProductMatrix, VolumeForm, WeightedMetric,
};
use quantlap_core::field::{HarmonicField, ScalarEndomorphism, ScalarField};
use quantlap_core::geometry::{fs_tangent_inner, hamiltonian, moment_map, xi_field, ChartPoint};
use quantlap_core::linalg::{frobenius, op_norm_hermitian, trace_product, CMatrix, C64};
use quantlap_core::oracle::{bergman_a1, hessian_a2_round, sturm_liouville_spectrum, DEFAULT_SL_RESOLUTION};
use quantlap_core::quantization::{BundleSpec, Embedding, QuadraturePolicy, QuantizationContext};
use quantlap_core::spectral::{
    eigendecompose, eigenspace_distance, fit_inverse_powers, hessian_asymptotics, log_log_slope,
    pooled_log_log_slope, trace_pairing_deviation, SpectrumReport,
};
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

// Pinned tolerances.
const C1_ABS: f64 = 1e-9;
const C1_GATE: f64 = 1e-12;
const C1_TIME: Duration = Duration::from_secs(120);
const C2_SLOPE: (f64, f64) = (-1.0, 0.3);
const C2_TIME: Duration = Duration::from_secs(600);
const C3_A1_REL: f64 = 0.02;
const C3_A2_REL: f64 = 0.05;
const C3_TIME: Duration = Duration::from_secs(600);
const C4_SLOPE: (f64, f64) = (-2.0, 0.3);
const C5_REL: f64 = 0.05;
const C6_IDENTITY: f64 = 1e-10;
const C6_KERNEL: f64 = 1e-12;
const C6_L2_C: f64 = 10.0;
const C7_RESIDUAL: f64 = 1e-10;
const C7_REL: f64 = 0.05;
const C7_TIME: Duration = Duration::from_secs(900);
const C8_SLOPE: (f64, f64) = (-1.0, 0.3);
/// Calibrated on round data: `k · deviation` tends to `i² + i + 1` from below.
const C8_TRACE_C: f64 = 7.0;
const C9_C: f64 = 20.0;

const DEGREES: [usize; 5] = [8, 12, 16, 24, 32];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(x: f64, (centre, slack): (f64, f64)) -> bool {
    (x - centre).abs() <= slack
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|j| j as f64).product()
}

fn binom(n: usize, r: usize) -> f64 {
    fact(n) / (fact(r) * fact(n - r))
}

/// `1/(k+1) - α/tr(A²)` with the trace from the factorial formula.
fn factorial_eigenvalue(i: usize, k: usize) -> f64 {
    let trace = 4.0 * fact(k + i + 1) * fact(i + 1) * fact(k - i) * fact(i) / (fact(k) * fact(k) * fact(2 * i + 2));
    let alpha = 2.0 / ((2 * i + 1) as f64 * binom(2 * i, i));
    1.0 / (k + 1) as f64 - alpha / trace
}

fn rational_eigenvalue(i: usize, k: usize) -> f64 {
    (i * (i + 1)) as f64 / ((k + i) * (k + i + 1)) as f64
}

fn round_spectrum(k: usize) -> (QuantizationContext, SpectrumReport) {
    let ctx = BundleSpec::round_line().context(k).unwrap();
    let report = eigendecompose(&ctx.assemble_pstarp().unwrap(), k).unwrap();
    (ctx, report)
}

fn perturbed_weight() -> HarmonicField {
    // 0.3 t + 0.1 (3t² - 1)/2
    HarmonicField::zonal_polynomial(&[-0.05, 0.3, 0.15]).unwrap()
}

fn perturbed_spec() -> BundleSpec {
    BundleSpec {
        twists: vec![0],
        metric: WeightedMetric::scalar(perturbed_weight(), 1).unwrap(),
        volume: VolumeForm::round(),
        quadrature: QuadraturePolicy::Fixed(2),
    }
}

fn unit_harmonic(i: usize) -> HarmonicField {
    HarmonicField::from_terms(&[(i, i as i64, 1.0)]).unwrap()
}

fn cluster_range(i: usize) -> std::ops::Range<usize> {
    i * i..(i + 1) * (i + 1)
}

fn exact_spectrum() -> Vec<Outcome> {
    let start = Instant::now();
    let mut gate_worst: f64 = 0.0;
    for k in 1..=32 {
        for i in 1..=k {
            gate_worst = gate_worst.max((factorial_eigenvalue(i, k) - rational_eigenvalue(i, k)).abs());
        }
    }
    let mut rational_worst: f64 = 0.0;
    let mut factorial_worst: f64 = 0.0;
    let mut multiplicities = true;
    for k in [2, 4, 8, 16] {
        let (_, r) = round_spectrum(k);
        let ev = r.eigenvalues();
        multiplicities &= ev.len() == (k + 1) * (k + 1) && ev[0].abs() < C1_ABS;
        for i in 0..=k {
            for &nu in &ev[cluster_range(i)] {
                let (rat, fac) = if i == 0 { (0.0, 0.0) } else { (rational_eigenvalue(i, k), factorial_eigenvalue(i, k)) };
                rational_worst = rational_worst.max((nu - rat).abs());
                factorial_worst = factorial_worst.max((nu - fac).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    vec![
        outcome(
            gate_worst < C1_GATE && rational_worst < C1_ABS && multiplicities && elapsed < C1_TIME,
            format!(
                "rational closed form: gate max |Δ| = {gate_worst:.3e} (tol {C1_GATE:e}), spectrum max |Δ| = {rational_worst:.3e} (tol {C1_ABS:e}), {:.1}s",
                elapsed.as_secs_f64()
            ),
        ),
        outcome(
            factorial_worst < C1_ABS && multiplicities,
            format!("factorial closed form with multiplicities 2i+1: max |Δ| = {factorial_worst:.3e} (tol {C1_ABS:e})"),
        ),
    ]
}

fn spectral_rate() -> Outcome {
    let start = Instant::now();
    let spectra: Vec<_> = DEGREES.iter().map(|&k| round_spectrum(k).1).collect();
    let xs: Vec<f64> = DEGREES.iter().map(|&k| k as f64).collect();
    let mut series = Vec::new();
    let mut per_degree = Vec::new();
    for i in 1..=4 {
        let lambda = 4.0 * PI * (i * (i + 1)) as f64;
        let errs: Vec<f64> = spectra
            .iter()
            .map(|r| r.rescaled()[cluster_range(i)].iter().map(|v| (v - lambda).abs()).fold(0.0, f64::max) / lambda)
            .collect();
        per_degree.push(format!("i={i}: {:.2}", log_log_slope(&xs, &errs).unwrap()));
        series.push((xs.clone(), errs));
    }
    let slope = pooled_log_log_slope(&series).unwrap();
    let elapsed = start.elapsed();
    outcome(
        within(slope, C2_SLOPE) && elapsed < C2_TIME,
        format!(
            "pooled slope {slope:.3} (want {} ± {}); per degree {}; {:.1}s",
            C2_SLOPE.0,
            C2_SLOPE.1,
            per_degree.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn hessian_coefficients() -> Outcome {
    let start = Instant::now();
    let degrees = [16, 24, 32, 48, 64];
    let mut pass = true;
    let mut parts = Vec::new();
    for i in 1..=2 {
        let phi = unit_harmonic(i);
        let e = ScalarEndomorphism { field: &phi, rank: 1 };
        let fit = hessian_asymptotics(&BundleSpec::round_line(), &e, &degrees, 4).unwrap();
        let a1 = fit.coefficient(1).unwrap();
        let a2 = fit.coefficient(2).unwrap();
        let want1 = (i * (i + 1)) as f64;
        let want2 = hessian_a2_round(&phi);
        let (r1, r2) = ((a1 - want1).abs() / want1, (a2 - want2).abs() / want2.abs());
        pass &= r1 < C3_A1_REL && r2 < C3_A2_REL;
        parts.push(format!("i={i}: a1 {a1:.4} vs {want1} ({:.2}%), a2 {a2:.3} vs {want2:.3} ({:.2}%)", 100.0 * r1, 100.0 * r2));
    }
    let elapsed = start.elapsed();
    outcome(pass && elapsed < C3_TIME, format!("{}; {:.1}s", parts.join("; "), elapsed.as_secs_f64()))
}

fn residual_rate() -> Outcome {
    let spec = perturbed_spec();
    let residual = |k: usize| {
        let b = spec.bundle(k).unwrap();
        balance_residual(&b, &b.hilb().unwrap()).unwrap()
    };
    let xs: Vec<f64> = DEGREES.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = DEGREES.iter().map(|&k| residual(k)).collect();
    let slope = log_log_slope(&xs, &ys).unwrap();
    let tail = log_log_slope(&[64.0, 96.0], &[residual(64), residual(96)]).unwrap();
    outcome(
        within(slope, C4_SLOPE),
        format!(
            "slope {slope:.3} over k = 8..32 (want {} ± {}); residual {:.3e} at k = 8, {:.3e} at k = 32; local slope {tail:.3} on k = 64..96",
            C4_SLOPE.0, C4_SLOPE.1, ys[0], ys[4]
        ),
    )
}

fn kernel_expansions() -> Outcome {
    let spec = perturbed_spec();
    let degrees = [8, 12, 16, 24];
    let psi = perturbed_weight();
    let f = HarmonicField::from_terms(&[(1, 1, 1.0), (2, 0, 0.5), (2, -2, 0.3)]).unwrap();
    let lap = f.laplacian();
    let ef = ScalarEndomorphism { field: &f, rank: 1 };
    let points: Vec<ChartPoint> =
        [(-0.6, 0.4), (0.2, 1.3), (0.7, 3.9)].iter().map(|&(t, a)| ChartPoint::new(t, a).unwrap()).collect();
    let mut bergman = vec![Vec::new(); points.len()];
    let mut toeplitz = vec![Vec::new(); points.len()];
    for &k in &degrees {
        let b = spec.bundle(k).unwrap();
        let kf = k as f64;
        for (j, m) in bergman_kernel_diag(&b, &spec.metric, &points).unwrap().iter().enumerate() {
            bergman[j].push(m[(0, 0)].re - kf);
        }
        let kern = toeplitz_kernel_diag(&b, &spec.metric, &ef, None, &points).unwrap();
        for (j, m) in kern.iter().enumerate() {
            toeplitz[j].push(m[(0, 0)].re - kf * f.value(&points[j]));
        }
    }
    let mut worst_b: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    for (j, p) in points.iter().enumerate() {
        let a1 = fit_inverse_powers(&degrees, &bergman[j], 0, 3).unwrap().coefficient(0).unwrap();
        let want = bergman_a1(&psi).value(p);
        worst_b = worst_b.max((a1 - want).abs() / want.abs());
        let b1 = fit_inverse_powers(&degrees, &toeplitz[j], 0, 3).unwrap().coefficient(0).unwrap();
        let lap_term = b1 - want * f.value(p);
        let want_lap = -lap.value(p) / (4.0 * PI);
        worst_t = worst_t.max((lap_term - want_lap).abs() / want_lap.abs());
    }
    outcome(
        worst_b < C5_REL && worst_t < C5_REL,
        format!(
            "Bergman subleading coefficient max rel err {:.3}%, Toeplitz Laplacian term max rel err {:.3}% (tol {}%)",
            100.0 * worst_b,
            100.0 * worst_t,
            100.0 * C5_REL
        ),
    )
}

fn c2_bound(psi: &HarmonicField) -> f64 {
    psi.terms()
        .map(|(i, c)| c.abs() * (2.0 * (2 * i.l + 1) as f64).sqrt() * (1.0 + (i.l * (i.l + 1)) as f64))
        .sum()
}

fn structural_identities() -> Outcome {
    let mut g = rng(2024);
    let split = BundleSpec {
        twists: vec![1, 0],
        metric: WeightedMetric::new(vec![HarmonicField::zero(), HarmonicField::zonal_polynomial(&[0.0, 0.2]).unwrap()])
            .unwrap(),
        volume: VolumeForm::round(),
        quadrature: QuadraturePolicy::Fixed(2),
    };
    let mut pointwise: f64 = 0.0;
    for spec in [perturbed_spec(), split] {
        let ctx = spec.context(3).unwrap();
        let emb = ctx.embedding();
        let frames: Vec<_> = (0..emb.node_count()).map(|i| emb.frame(i).unwrap()).collect();
        for _ in 0..100 {
            let a = random_hermitian(ctx.dim(), &mut g);
            let b = random_hermitian(ctx.dim(), &mut g);
            let scale = frobenius(&a) * frobenius(&b);
            for z in &frames {
                let lhs = trace_product(&hamiltonian(z, &a).unwrap(), &hamiltonian(z, &b).unwrap())
                    + fs_tangent_inner(z, &xi_field(z, &a).unwrap(), &xi_field(z, &b).unwrap()).unwrap();
                let rhs = trace_product(&(&a * &b), &moment_map(z));
                pointwise = pointwise.max((lhs - rhs).norm() / scale);
            }
        }
    }
    let mut dmu_ok = true;
    let mut l2_worst: f64 = 0.0;
    let mut kernel: f64 = 0.0;
    let c = C6_L2_C * (1.0 + c2_bound(&perturbed_weight()));
    for k in [4, 8, 12] {
        for (spec, cc) in [(BundleSpec::round_line(), C6_L2_C), (perturbed_spec(), c)] {
            let ctx = spec.context(k).unwrap();
            let mu = op_norm_hermitian(ctx.mu_bar().matrix());
            let w = ctx.bundle().weights().to_vec();
            for _ in 0..100 {
                let a = random_hermitian(ctx.dim(), &mut g);
                let d = ctx.dmu_bar(&a).unwrap();
                dmu_ok &= frobenius(&d) <= 2.0 * frobenius(&a) * mu * (1.0 + 1e-12);
                let h = ctx.h_of(&a).unwrap();
                let l2: f64 = h.iter().zip(&w).map(|(x, w)| w * x * x).sum();
                let bound = (1.0 + cc / k as f64) * trace_product(&a, &a).re / k as f64;
                l2_worst = l2_worst.max(l2 / bound);
            }
            let n = ctx.dim();
            kernel = kernel.max(frobenius(&ctx.dmu_bar(&CMatrix::identity(n, n)).unwrap()));
        }
    }
    outcome(
        pointwise < C6_IDENTITY && dmu_ok && l2_worst <= 1.0 && kernel < C6_KERNEL,
        format!(
            "pointwise identity max rel residual {pointwise:.3e} (tol {C6_IDENTITY:e}); dμ̄ bound {}; ‖H_A‖² bound ratio max {l2_worst:.3}; ‖P*P(Id)‖ {kernel:.3e}",
            if dmu_ok { "holds" } else { "violated" }
        ),
    )
}

fn volume_balanced() -> Outcome {
    let start = Instant::now();
    let k = 24;
    let volume = VolumeForm::exp_of(HarmonicField::zonal_polynomial(&[0.0, 0.5]).unwrap()).unwrap();
    let spec = BundleSpec {
        twists: vec![0],
        metric: WeightedMetric::scalar(HarmonicField::zero(), 1).unwrap(),
        volume: volume.clone(),
        quadrature: QuadraturePolicy::Fixed(2),
    };
    let b = spec.bundle(k).unwrap();
    let state = t_iterate(&b, &InnerProductMatrix::identity(k + 1), BalanceOptions { tol: 1e-11, max_iter: 10_000 }, &mut |_| {})
        .unwrap();
    let emb = Embedding::new(&b, &state.h).unwrap();
    let report = eigendecompose(&emb.assemble_pstarp().unwrap(), k).unwrap();
    let oracle = sturm_liouville_spectrum(&volume, 9, DEFAULT_SL_RESOLUTION).unwrap();
    let rescaled = report.rescaled();
    let errs: Vec<f64> = (1..=8).map(|j| (rescaled[j] - oracle[j]).abs() / oracle[j]).collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    // Same degree on the round metric, for scale.
    let round_err = 1.0 - (k * k) as f64 / ((k + 1) * (k + 2)) as f64;
    let elapsed = start.elapsed();
    outcome(
        state.converged && state.residual < C7_RESIDUAL && worst < C7_REL && elapsed < C7_TIME,
        format!(
            "balance residual {:.2e} after {} iterations; first 8 rel errors {:.1}%..{:.1}% (tol {}%); round k = {k} first-cluster error {:.1}%; {:.1}s",
            state.residual,
            state.iterations,
            100.0 * errs.iter().copied().fold(f64::INFINITY, f64::min),
            100.0 * worst,
            100.0 * C7_REL,
            100.0 * round_err,
            elapsed.as_secs_f64()
        ),
    )
}

fn eigenspaces() -> Outcome {
    let xs: Vec<f64> = DEGREES.iter().map(|&k| k as f64).collect();
    let mut series = Vec::new();
    let mut max_dk: f64 = 0.0;
    let mut trace_c: f64 = 0.0;
    for i in 1..=2 {
        let phi = unit_harmonic(i);
        let mut ds = Vec::new();
        for &k in &DEGREES {
            let (ctx, r) = round_spectrum(k);
            let d = eigenspace_distance(&ctx, &phi, &r, cluster_range(i)).unwrap();
            max_dk = max_dk.max(d * k as f64);
            ds.push(d);
            trace_c = trace_c.max(k as f64 * trace_pairing_deviation(&ctx, &r, cluster_range(i)).unwrap());
        }
        series.push((xs.clone(), ds));
    }
    let slope = pooled_log_log_slope(&series);
    let slope_text = match &slope {
        Ok(s) => format!("{s:.3}"),
        Err(e) => format!("undefined ({e})"),
    };
    let slope_ok = slope.as_ref().is_ok_and(|s| within(*s, C8_SLOPE));
    outcome(
        slope_ok && trace_c <= C8_TRACE_C,
        format!(
            "max distance·k {max_dk:.3e} (roundoff: harmonics lie in their clusters); log slope {slope_text} (want {} ± {}); k·trace deviation max {trace_c:.3} (C = {C8_TRACE_C})",
            C8_SLOPE.0, C8_SLOPE.1
        ),
    )
}

fn gradient_bound() -> Outcome {
    let mut g = rng(77);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for k in [8, 16, 32] {
        let ctx = BundleSpec::round_line().context(k).unwrap();
        let n = ctx.dim();
        let mut ratio: f64 = 0.0;
        for _ in 0..200 {
            let mut a = random_hermitian(n, &mut g);
            let mean = a.trace().re / n as f64;
            a -= CMatrix::identity(n, n) * C64::new(mean, 0.0);
            ratio = ratio.max(ctx.grad_l2_norm_sq(&a).unwrap() / ctx.form_value(&a, &a).unwrap());
        }
        let bound = 4.0 * PI * k as f64 * (1.0 + C9_C / k as f64);
        worst = worst.max(ratio / bound);
        parts.push(format!("k={k}: {:.4}·4πk", ratio / (4.0 * PI * k as f64)));
    }
    outcome(worst <= 1.0, format!("max ratio {} (bound 4πk(1 + {C9_C}/k))", parts.join(", ")))
}

fn main() -> ExitCode {
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    type Criterion = (usize, &'static str, fn() -> Vec<Outcome>);
    let criteria: [Criterion; 9] = [
        (1, "exact balanced spectrum", exact_spectrum),
        (2, "rescaled eigenvalue rate", || vec![spectral_rate()]),
        (3, "Hessian coefficients", || vec![hessian_coefficients()]),
        (4, "balancing residual rate", || vec![residual_rate()]),
        (5, "Bergman/Toeplitz expansions", || vec![kernel_expansions()]),
        (6, "structural identities", || vec![structural_identities()]),
        (7, "volume-balanced spectrum", || vec![volume_balanced()]),
        (8, "eigenspace convergence", || vec![eigenspaces()]),
        (9, "gradient bound", || vec![gradient_bound()]),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let outcomes = run();
        let pass = outcomes.iter().all(|o| o.pass);
        println!("criterion {id} [{name}]: {}", if pass { "PASS" } else { "FAIL" });
        for o in outcomes {
            println!("    {} {}", if o.pass { "ok  " } else { "fail" }, o.detail);
        }
        failed += usize::from(!pass);
    }
    println!("acceptance: {failed} criterion(s) failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
