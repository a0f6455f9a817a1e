mod common;

use quantlap_core::field::{laplace_eigenvalue, HarmonicField, ScalarEndomorphism};
use quantlap_core::linalg::{trace_product, CMatrix, C64};
use quantlap_core::oracle::{cpn_spectrum, exact_balanced_eigenvalue};
use quantlap_core::quantization::BundleSpec;
use quantlap_core::spectral::*;
use quantlap_core::Error;

fn round_report(k: usize) -> (quantlap_core::quantization::QuantizationContext, SpectrumReport) {
    let ctx = BundleSpec::round_line().context(k).unwrap();
    let form = ctx.assemble_pstarp().unwrap();
    let report = eigendecompose(&form, k).unwrap();
    (ctx, report)
}

#[test]
fn degree_two_spectrum() {
    let (_, r) = round_report(2);
    let ev = r.eigenvalues();
    assert_eq!(ev.len(), 9);
    assert!(ev[0].abs() < 1e-9);
    for v in &ev[1..4] {
        assert!((v - 1.0 / 6.0).abs() < 1e-12);
    }
    for v in &ev[4..] {
        assert!((v - 3.0 / 10.0).abs() < 1e-12);
    }
    let sizes: Vec<usize> = r.clusters().iter().map(|c| c.range.len()).collect();
    assert_eq!(sizes, [1, 3, 5]);
}

#[test]
fn kernel_eigenmatrix_is_proportional_to_identity() {
    for k in [1, 3, 6] {
        let (_, r) = round_report(k);
        let a = r.eigenmatrix(0).unwrap();
        let n = k + 1;
        assert!((trace_product(&a, &a).re - 1.0).abs() < 1e-12);
        // tr A² = 1 and A ∝ Id force A = Id/√N, with the sign fixed positive.
        let want = CMatrix::identity(n, n) * C64::new(1.0 / (n as f64).sqrt(), 0.0);
        assert!(common::max_abs(&(a - want)) < 1e-10);
    }
}

#[test]
fn relative_gap_clustering_finds_the_round_multiplicities() {
    let k = 6;
    let (_, mut r) = round_report(k);
    // Top clusters sit close together; the exact spectrum allows a tight threshold.
    r.cluster(ClusterRule::RelativeGap(1e-8));
    let sizes: Vec<usize> = r.clusters().iter().map(|c| c.range.len()).collect();
    assert_eq!(sizes, (0..=k).map(|i| 2 * i + 1).collect::<Vec<_>>());
}

#[test]
fn rows_carry_oracle_matches() {
    let k = 4;
    let (_, mut r) = round_report(k);
    let lambdas: Vec<f64> = cpn_spectrum(1, k).unwrap().entries.iter().map(|e| e.lambda).collect();
    r.match_oracle(&lambdas);
    let rows = r.rows();
    assert_eq!(rows.len(), 25);
    for row in &rows {
        let i = row.cluster.unwrap();
        assert!((row.nu - exact_balanced_eigenvalue(i, k).unwrap()).abs() < 1e-12);
        assert_eq!(row.oracle_lambda, Some(laplace_eigenvalue(i)));
        assert!((row.abs_err.unwrap() - (row.rescaled - laplace_eigenvalue(i)).abs()).abs() < 1e-12);
        assert!((row.rescaled - rescale(row.nu, k)).abs() == 0.0);
    }
}

#[test]
fn constant_lies_in_the_kernel_eigenspace() {
    let (ctx, r) = round_report(5);
    let one = HarmonicField::constant(1.0);
    assert!(eigenspace_distance(&ctx, &one, &r, 0..1).unwrap() < 1e-24);
    assert!(matches!(eigenspace_distance(&ctx, &one, &r, 3..3), Err(Error::Domain(_))));
    assert!(matches!(eigenspace_distance(&ctx, &one, &r, 30..40), Err(Error::Domain(_))));
}

#[test]
fn harmonic_lies_in_its_round_cluster() {
    // On the round metric degree-1 harmonics are exactly Hamiltonians of U_1.
    let phi = HarmonicField::from_terms(&[(1, 0, 1.0)]).unwrap();
    for k in [4, 8, 16] {
        let (ctx, r) = round_report(k);
        let d = eigenspace_distance(&ctx, &phi, &r, 1..4).unwrap();
        assert!(d < 1e-20, "k = {k}: {d}");
        let far = eigenspace_distance(&ctx, &phi, &r, 4..9).unwrap();
        assert!((far - 1.0).abs() < 1e-10);
    }
}

#[test]
fn trace_pairing_deviation_on_the_first_cluster() {
    let k = 8;
    let (ctx, r) = round_report(k);
    let dev = trace_pairing_deviation(&ctx, &r, 1..4).unwrap();
    // tr A² = 1 and k‖H_A‖² = k C_{1,k} = k²/((k+1)(k+2)).
    let kf = k as f64;
    let want = 1.0 - kf * kf / ((kf + 1.0) * (kf + 2.0));
    assert!((dev - want).abs() < 1e-12, "{dev}");
}

#[test]
fn constant_field_has_vanishing_hessian() {
    let one = HarmonicField::constant(1.0);
    let phi = ScalarEndomorphism { field: &one, rank: 1 };
    let fit = hessian_asymptotics(&BundleSpec::round_line(), &phi, &[4, 6, 8, 12], 2).unwrap();
    for c in &fit.coefficients {
        assert!(c.abs() < 1e-9);
    }
}

#[test]
fn polarized_hessian_is_symmetric() {
    let f = HarmonicField::from_terms(&[(1, 1, 1.0), (2, 0, 0.4)]).unwrap();
    let g = HarmonicField::from_terms(&[(1, 1, 0.5), (2, -1, 0.7)]).unwrap();
    let (ef, eg) = (ScalarEndomorphism { field: &f, rank: 1 }, ScalarEndomorphism { field: &g, rank: 1 });
    let ctx = BundleSpec::round_line().context(6).unwrap();
    let a = polarized_hessian_value(&ctx, &ef, &eg).unwrap();
    let b = polarized_hessian_value(&ctx, &eg, &ef).unwrap();
    assert!((a - b).abs() < 1e-13);
    let fg = f.add(&g);
    let efg = ScalarEndomorphism { field: &fg, rank: 1 };
    let full = hessian_value(&ctx, &efg).unwrap();
    let parts = hessian_value(&ctx, &ef).unwrap() + hessian_value(&ctx, &eg).unwrap() + 2.0 * a;
    assert!((full - parts).abs() < 1e-12);
}

#[test]
fn fit_reports_conditioning_and_rejects_short_series() {
    let ks = [8, 12, 16, 24, 32];
    let vals: Vec<f64> = ks.iter().map(|&k| 1.0 / k as f64).collect();
    let fit = fit_inverse_powers(&ks, &vals, 1, 2).unwrap();
    assert!(fit.condition.is_finite() && fit.condition > 1.0);
    assert!((fit.coefficient(1).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(fit.coefficient(0), None);
    assert_eq!(fit.coefficient(3), None);
    assert!(matches!(fit_inverse_powers(&ks, &vals[..3], 1, 2), Err(Error::DimensionMismatch { .. })));
    assert!(fit_inverse_powers(&ks, &vals, 1, 6).is_err());
}

#[test]
fn pooled_slope_ignores_intercepts() {
    let xs = vec![8.0, 16.0, 32.0];
    let a: Vec<f64> = xs.iter().map(|x: &f64| 5.0 * x.powi(-2)).collect();
    let b: Vec<f64> = xs.iter().map(|x: &f64| 0.01 * x.powi(-2)).collect();
    let s = pooled_log_log_slope(&[(xs.clone(), a), (xs.clone(), b)]).unwrap();
    assert!((s + 2.0).abs() < 1e-12);
    assert!(pooled_log_log_slope(&[(xs.clone(), vec![1.0, 0.0, 1.0])]).is_err());
}
