//! Reference values: the Laplace spectrum of the round sphere, the exact
//! spectrum of `P*P` at the round balanced embedding, matrices realizing
//! spherical harmonics, coefficient formulas for the Bergman, Toeplitz and
//! Hessian expansions, and an independent finite-volume discretization of
//! the Laplacian of an axisymmetric conformal metric.
//!
//! Scalar curvature is pinned once, as the Riemannian value
//! [`ROUND_SCALAR_CURVATURE`] of the round sphere of area one. The
//! Kähler-normalized value entering the Bergman and Toeplitz coefficients
//! is derived from it in [`kahler_scalar_curvature`].

use crate::bundles::{toeplitz_matrix, RoundMetric, SampledBundle, SectionBasis, VolumeForm};
use crate::field::{laplace_eigenvalue, numeric_laplacian, HarmonicField, ScalarEndomorphism, ScalarField};
use crate::geometry::{build_quadrature, ChartPoint};
use crate::linalg::{tridiagonal_lowest, CMatrix, C64, ZERO};
use crate::prelude::*;
use crate::{Error, Result};
use core::f64::consts::PI;

/// Riemannian scalar curvature `2K` of the round sphere of area one
/// (Gauss–Bonnet: `∫K dA = 4π`).
pub const ROUND_SCALAR_CURVATURE: f64 = 8.0 * PI;

/// Scalar curvature measured against the Kähler form `ω` with
/// `[ω] = c_1(O(1))`, as in the Bergman expansion: `S_R / 4π = 2`.
pub fn kahler_scalar_curvature() -> f64 {
    ROUND_SCALAR_CURVATURE / (4.0 * PI)
}

/// One eigenspace of the Laplacian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub index: usize,
    pub lambda: f64,
    pub multiplicity: usize,
}

/// Laplace spectrum of `CP^n` with the Fubini–Study metric of `[ω] = c_1(O(1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSpectrum {
    pub n: usize,
    pub entries: Vec<SpectrumEntry>,
}

impl ExactSpectrum {
    /// `λ_i` repeated by multiplicity, ascending, truncated to `count`.
    pub fn expanded(&self, count: usize) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| core::iter::repeat_n(e.lambda, e.multiplicity))
            .take(count)
            .collect()
    }
}

/// `λ_i = 4π i(i+n)` with multiplicity `dim W_i`.
pub fn cpn_spectrum(n: usize, i_max: usize) -> Result<ExactSpectrum> {
    if n == 0 {
        return Err(Error::Domain("complex dimension must be positive".into()));
    }
    let entries = (0..=i_max)
        .map(|i| {
            // Harmonic polynomials of bidegree (i, i) on C^{n+1}.
            let a = binomial(n + i, i);
            let b = if i == 0 { 0.0 } else { binomial(n + i - 1, i - 1) };
            SpectrumEntry {
                index: i,
                lambda: 4.0 * PI * (i * (i + n)) as f64,
                multiplicity: (a * a - b * b).round() as usize,
            }
        })
        .collect();
    Ok(ExactSpectrum { n, entries })
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `α_i = ∫ H² ω` for `H = 2^{1-i}(1-t²)^{i/2} cos(iθ)`, the function
/// `(Z^i W̄^i + Z̄^i W^i)/(|Z|²+|W|²)^i`: `2 / ((2i+1) C(2i, i))`.
pub fn harmonic_sq_integral(i: usize) -> f64 {
    2.0 / ((2 * i + 1) as f64 * binomial(2 * i, i))
}

/// `tr A²` for the matrix `A` with `H_A = (Z^i W̄^i + Z̄^i W^i)/(|Z|²+|W|²)^i`,
/// by the factorial formula `4(k+i+1)!(i+1)!(k-i)! i! / ((k!)² (2i+2)!)`.
pub fn harmonic_trace_closed(i: usize, k: usize) -> Result<f64> {
    check_degree(i, k)?;
    if i == 0 {
        // A is the identity, not the off-diagonal pattern of the formula.
        return Ok((k + 1) as f64);
    }
    // (k+i+1)!/k!, k!/(k-i)! and (i+1)! i!/(2i+2)! as short products.
    let up: f64 = ((k + 1)..=(k + i + 1)).map(|j| j as f64).product();
    let down: f64 = ((k - i + 1)..=k).map(|j| j as f64).product();
    let small: f64 = (1..=(i + 1)).map(|j| j as f64).product::<f64>()
        * (1..=i).map(|j| j as f64).product::<f64>()
        / (1..=(2 * i + 2)).map(|j| j as f64).product::<f64>();
    Ok(4.0 * up / down * small)
}

/// The same trace as the series `2 Σ_j C(k-i, j)² / (C(k, i+j) C(k, j))`.
pub fn harmonic_trace_series(i: usize, k: usize) -> Result<f64> {
    check_degree(i, k)?;
    if i == 0 {
        return Ok((k + 1) as f64);
    }
    Ok(2.0
        * (0..=(k - i))
            .map(|j| binomial(k - i, j).powi(2) / (binomial(k, i + j) * binomial(k, j)))
            .sum::<f64>())
}

/// `C_{i,k} = ∫ H_A² ω / tr A²` on `W_i`, equal to `(k!)² / ((k+i+1)! (k-i)!)`.
pub fn balanced_constant(i: usize, k: usize) -> Result<f64> {
    check_degree(i, k)?;
    if i == 0 {
        return Ok(1.0 / (k + 1) as f64);
    }
    Ok(harmonic_sq_integral(i) / harmonic_trace_closed(i, k)?)
}

/// Eigenvalue of `P*P` on `W_i` at the round balanced embedding of degree `k`:
/// `1/(k+1) - C_{i,k}`.
pub fn exact_balanced_eigenvalue(i: usize, k: usize) -> Result<f64> {
    check_degree(i, k)?;
    if i == 0 {
        return Ok(0.0);
    }
    Ok(1.0 / (k + 1) as f64 - balanced_constant(i, k)?)
}

/// The rational `i(i+1) / ((k+i)(k+i+1))`. It agrees with
/// [`exact_balanced_eigenvalue`] for `i ≤ 2` only.
pub fn simplified_balanced_eigenvalue(i: usize, k: usize) -> f64 {
    (i * (i + 1)) as f64 / ((k + i) * (k + i + 1)) as f64
}

/// Pairs `(i, k)` with `1 ≤ i ≤ k ≤ k_max` where the rational form differs
/// from the factorial formula by more than `tol`, with the difference.
pub fn simplified_form_discrepancies(k_max: usize, tol: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for k in 1..=k_max {
        for i in 1..=k {
            let exact = exact_balanced_eigenvalue(i, k).expect("i ≤ k");
            let d = (exact - simplified_balanced_eigenvalue(i, k)).abs();
            if d > tol {
                out.push((i, k, d));
            }
        }
    }
    out
}

/// Exact `P*P` spectrum at the round balanced embedding: `(i, ν_{i,k}, 2i+1)`.
pub fn balanced_spectrum(k: usize) -> Vec<(usize, f64, usize)> {
    (0..=k)
        .map(|i| (i, exact_balanced_eigenvalue(i, k).expect("i ≤ k"), 2 * i + 1))
        .collect()
}

fn check_degree(i: usize, k: usize) -> Result<()> {
    if i > k {
        return Err(Error::Domain(format!("no degree-{i} harmonics among matrices of degree {k}")));
    }
    Ok(())
}

/// The function `(Z^i W̄^i + Z̄^i W^i)/(|Z|²+|W|²)^i = 2^{1-i}(1-t²)^{i/2} cos(iθ)`.
pub fn standard_harmonic(i: usize) -> HarmonicField {
    // Y_{ii} = N (2i-1)!! (1-t²)^{i/2} cos(iθ) with N from the orthonormal convention.
    let unit = HarmonicField::from_terms(&[(i, i as i64, 1.0)]).expect("valid index");
    let p = ChartPoint { t: 0.0, azimuth: 0.0 };
    let at_equator = unit.value(&p);
    unit.scaled(2f64.powi(1 - i as i32) / at_equator)
}

/// Inverts the map `A ↦ H_A` on band-limited functions for the round
/// balanced embedding of degree `k` (monomial basis, `H_A = u* A u` with
/// `u` the unit evaluation vector).
#[derive(Debug, Clone, Copy)]
pub struct HarmonicBuilder {
    k: usize,
}

impl HarmonicBuilder {
    pub fn new(k: usize) -> Self {
        Self { k }
    }

    /// The hermitian `A` with `H_A = f`; needs `deg f ≤ k`.
    ///
    /// By rotational equivariance the Toeplitz matrix `T_g` of a degree-`l`
    /// harmonic satisfies `H_{T_g} = (k+1) C_{l,k} g`, so each degree is
    /// inverted by one exact quadrature and a division. The absolute error
    /// of `H_A` is about `ε / ((k+1) C_{l,k})`, so it degrades for `l`
    /// close to `k`.
    pub fn matrix(&self, f: &HarmonicField) -> Result<CMatrix> {
        let k = self.k;
        if f.degree() > k {
            return Err(Error::Domain(format!(
                "degree {} exceeds the section degree {k}",
                f.degree()
            )));
        }
        let basis = SectionBasis::line(k)?;
        let bundle = SampledBundle::new(&basis, &RoundMetric { rank: 1 }, &VolumeForm::round(), build_quadrature(k, 1)?)?;
        let mut a = CMatrix::from_element(k + 1, k + 1, ZERO);
        for l in 0..=f.degree() {
            let terms: Vec<_> = f.terms().filter(|(i, c)| i.l == l && *c != 0.0).map(|(i, c)| (i.l, i.m, c)).collect();
            if terms.is_empty() {
                continue;
            }
            let g = HarmonicField::from_terms(&terms)?;
            let t = toeplitz_matrix(&bundle, &ScalarEndomorphism { field: &g, rank: 1 })?;
            let eigen = (k + 1) as f64 * balanced_constant(l, k)?;
            a += t * C64::new(1.0 / eigen, 0.0);
        }
        Ok(a)
    }

    /// `A` with `H_A = (Z^i W̄^i + Z̄^i W^i)/(|Z|²+|W|²)^i`.
    pub fn standard(&self, i: usize) -> Result<CMatrix> {
        check_degree(i, self.k)?;
        self.matrix(&standard_harmonic(i))
    }

    /// Three mutually orthogonal elements of `W_i`: the standard harmonic,
    /// its rotation by `π/(2i)` about the polar axis, and the zonal
    /// harmonic (polar axis rotated onto the equator plane's normal).
    pub fn rotations(&self, i: usize) -> Result<[CMatrix; 3]> {
        check_degree(i, self.k)?;
        if i == 0 {
            let id = CMatrix::identity(self.k + 1, self.k + 1);
            return Ok([id.clone(), id.clone(), id]);
        }
        let s = standard_harmonic(i);
        let scale = s.l2_norm();
        let sin = HarmonicField::from_terms(&[(i, -(i as i64), scale)])?;
        let zonal = HarmonicField::from_terms(&[(i, 0, scale)])?;
        Ok([self.matrix(&s)?, self.matrix(&sin)?, self.matrix(&zonal)?])
    }
}

/// `𝒟*𝒟 f = ½(Δ²f - S Δf)` on the round sphere, exactly on harmonics.
pub fn lichnerowicz_round(f: &HarmonicField) -> HarmonicField {
    let lf = f.laplacian();
    lf.laplacian().add(&lf.scaled(-ROUND_SCALAR_CURVATURE)).scaled(0.5)
}

/// Finite-difference evaluation of `(Ric, 2i∂̄∂f)` on the round sphere,
/// built from the conformal factor `ρ = 1/(π(1+|z|²)²)` in the flat chart:
/// Gaussian curvature `K = -Δ_0 log ρ / 2ρ` times `Δf = -Δ_0 f / ρ`.
pub fn ricci_pairing_fd(f: &dyn ScalarField, p: &ChartPoint, h: f64) -> Result<f64> {
    let z0 = p.affine();
    let log_rho = |z: C64| -(PI.ln()) - 2.0 * (1.0 + z.norm_sqr()).ln();
    let value = |z: C64| -> Result<f64> { Ok(f.value(&ChartPoint::from_affine(z)?)) };
    let flat_laplacian = |g: &dyn Fn(C64) -> Result<f64>| -> Result<f64> {
        let mut acc = -60.0 * g(z0)?;
        for d in [C64::new(h, 0.0), C64::new(0.0, h)] {
            acc += 16.0 * (g(z0 + d)? + g(z0 - d)?) - (g(z0 + d * 2.0)? + g(z0 - d * 2.0)?);
        }
        Ok(acc / (12.0 * h * h))
    };
    let rho = log_rho(z0).exp();
    let curvature = -flat_laplacian(&|z| Ok(log_rho(z)))? / (2.0 * rho);
    let lap_f = -flat_laplacian(&value)? / rho;
    Ok(curvature * lap_f)
}

/// Leading Bergman coefficient `A_1 = S/2 - Δψ/4π` for the metric
/// `e^{-ψ}` on the trivial factor, round polarization (Kähler-normalized `S`).
pub fn bergman_a1(psi: &HarmonicField) -> HarmonicField {
    HarmonicField::constant(kahler_scalar_curvature() / 2.0).add(&psi.laplacian().scaled(-1.0 / (4.0 * PI)))
}

/// `b_{f,1} = A_1 f - Δf / 4π` for a line bundle.
pub fn toeplitz_b1(f: &dyn ScalarField, psi: &HarmonicField, lap_f: f64, p: &ChartPoint) -> f64 {
    bergman_a1(psi).value(p) * f.value(p) - lap_f / (4.0 * PI)
}

/// `b_{f,2}` on the round sphere, where the curvature terms cancel:
/// `Δ²f / 32π²`.
pub fn toeplitz_b2_round(f: &HarmonicField) -> HarmonicField {
    f.laplacian().laplacian().scaled(1.0 / (32.0 * PI * PI))
}

/// `a_1 = (1/4π) ∫ φ Δφ`.
pub fn hessian_a1(phi: &HarmonicField) -> f64 {
    inner(phi, &phi.laplacian()) / (4.0 * PI)
}

/// `a_2 = (1/16π²) ∫ (φ 𝒟*𝒟φ - 2 φ Δ²φ)` on the round sphere.
pub fn hessian_a2_round(phi: &HarmonicField) -> f64 {
    let d = lichnerowicz_round(phi);
    let bi = phi.laplacian().laplacian();
    (inner(phi, &d) - 2.0 * inner(phi, &bi)) / (16.0 * PI * PI)
}

/// Leading coefficient of the polarized Hessian, `(1/8π) ∫ (φΔψ + ψΔφ)`.
pub fn polarized_a1(phi: &HarmonicField, psi: &HarmonicField) -> f64 {
    (inner(phi, &psi.laplacian()) + inner(psi, &phi.laplacian())) / (8.0 * PI)
}

fn inner(a: &HarmonicField, b: &HarmonicField) -> f64 {
    a.terms()
        .map(|(ia, ca)| b.terms().filter(|(ib, _)| *ib == ia).map(|(_, cb)| ca * cb).sum::<f64>())
        .sum()
}

/// Eigenvalue of the round Laplacian on degree `i` (re-exported for tables).
pub fn round_eigenvalue(i: usize) -> f64 {
    laplace_eigenvalue(i)
}

/// One eigenvalue of the Sturm–Liouville discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEigenvalue {
    pub lambda: f64,
    /// Azimuthal wave number `|m|`.
    pub mode: usize,
}

/// Finite-volume discretization of the Laplacian of `g = ρ g_FS` for an
/// axisymmetric density `ρ(t)`, separated in Fourier modes `e^{imθ}`.
///
/// In the polar angle `ϑ` (with `t = cos ϑ`) each mode solves
/// `4π[-(sin ϑ u')' + m² u / sin ϑ] = λ ρ sin ϑ u`, discretized on a
/// uniform cell-centred grid with fluxes at the faces.
#[derive(Debug, Clone)]
pub struct SturmLiouvilleLaplacian {
    density: Vec<f64>,
    resolution: usize,
}

pub const DEFAULT_SL_RESOLUTION: usize = 4096;

impl SturmLiouvilleLaplacian {
    pub fn new(volume: &VolumeForm, resolution: usize) -> Result<Self> {
        if let Some(f) = volume.log_density() {
            if !f.is_axisymmetric() {
                return Err(Error::Domain("Sturm–Liouville oracle needs an axisymmetric metric".into()));
            }
        }
        if resolution < 8 {
            return Err(Error::Domain("resolution must be at least 8 cells".into()));
        }
        let h = PI / resolution as f64;
        let density = (0..resolution)
            .map(|c| {
                let theta = (c as f64 + 0.5) * h;
                volume.density(&ChartPoint { t: theta.cos(), azimuth: 0.0 })
            })
            .collect();
        Ok(Self { density, resolution })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Lowest `count` eigenvalues of mode `m`.
    pub fn mode_eigenvalues(&self, m: usize, count: usize) -> Result<Vec<f64>> {
        let n = self.resolution;
        let h = PI / n as f64;
        let face = |f: usize| (f as f64 * h).sin();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n - 1];
        let mut w = vec![0.0; n];
        for c in 0..n {
            let centre = ((c as f64 + 0.5) * h).sin();
            d[c] = (face(c) + face(c + 1)) / (h * h) + (m * m) as f64 / centre;
            w[c] = centre * self.density[c];
            if c + 1 < n {
                e[c] = -face(c + 1) / (h * h);
            }
        }
        // Symmetric form W^{-1/2} A W^{-1/2}.
        for c in 0..n {
            d[c] /= w[c];
        }
        for c in 0..(n - 1) {
            e[c] /= (w[c] * w[c + 1]).sqrt();
        }
        let vals = tridiagonal_lowest(&d, &e, count)?;
        Ok(vals.into_iter().map(|v| 4.0 * PI * v).collect())
    }

    /// Lowest `count` eigenvalues over all modes, repeated by multiplicity
    /// (modes `m > 0` carry `cos` and `sin` copies).
    pub fn spectrum(&self, count: usize) -> Result<Vec<ModeEigenvalue>> {
        let mut all: Vec<ModeEigenvalue> = Vec::new();
        let mut m = 0;
        loop {
            let vals = self.mode_eigenvalues(m, count)?;
            let copies = if m == 0 { 1 } else { 2 };
            if all.len() >= count {
                all.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
                if vals[0] > all[count - 1].lambda {
                    break;
                }
            }
            for v in vals {
                for _ in 0..copies {
                    all.push(ModeEigenvalue { lambda: v, mode: m });
                }
            }
            m += 1;
        }
        all.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.mode.cmp(&b.mode)));
        all.truncate(count);
        Ok(all)
    }
}

/// Eigenvalues of the Laplacian of `Ω` (viewed as a conformal metric),
/// ascending with multiplicity, lowest `count`.
pub fn sturm_liouville_spectrum(volume: &VolumeForm, count: usize, resolution: usize) -> Result<Vec<f64>> {
    Ok(SturmLiouvilleLaplacian::new(volume, resolution)?
        .spectrum(count)?
        .into_iter()
        .map(|e| e.lambda)
        .collect())
}

/// Checks numerically that `H_A` built by [`HarmonicBuilder`] is an
/// eigenfunction: maximum of `|ΔH_A - λ_i H_A|` over `points`.
pub fn builder_eigen_residual(k: usize, a: &CMatrix, i: usize, points: &[ChartPoint]) -> Result<f64> {
    let basis = crate::bundles::SectionBasis::line(k)?;
    let h = |p: &ChartPoint| {
        let s = basis.evaluate(p);
        let num = (&s * a * s.adjoint())[(0, 0)].re;
        let den = (&s * s.adjoint())[(0, 0)].re;
        num / den
    };
    let lambda = laplace_eigenvalue(i);
    let mut worst: f64 = 0.0;
    for p in points {
        let lap = numeric_laplacian(&h, p, 3e-3)?;
        worst = worst.max((lap - lambda * h(p)).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_series() {
        for k in 1..=32 {
            for i in 1..=k {
                let a = harmonic_trace_closed(i, k).unwrap();
                let b = harmonic_trace_series(i, k).unwrap();
                assert!((a - b).abs() < 1e-12 * a, "i={i} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn low_degree_closed_forms() {
        for k in 1..=40 {
            let kf = k as f64;
            let e1 = exact_balanced_eigenvalue(1, k).unwrap();
            assert!((e1 - 2.0 / ((kf + 1.0) * (kf + 2.0))).abs() < 1e-15);
            if k >= 2 {
                let e2 = exact_balanced_eigenvalue(2, k).unwrap();
                assert!((e2 - 6.0 / ((kf + 2.0) * (kf + 3.0))).abs() < 1e-15);
            }
        }
        assert_eq!(exact_balanced_eigenvalue(0, 5).unwrap(), 0.0);
        assert!(exact_balanced_eigenvalue(4, 3).is_err());
    }

    #[test]
    fn third_degree_has_a_different_rational_form() {
        // 12(k²+2k+2)/((k+1)(k+2)(k+3)(k+4)), not 12/((k+3)(k+4)).
        for k in 3..=20 {
            let kf = k as f64;
            let e = exact_balanced_eigenvalue(3, k).unwrap();
            let r = 12.0 * (kf * kf + 2.0 * kf + 2.0) / ((kf + 1.0) * (kf + 2.0) * (kf + 3.0) * (kf + 4.0));
            assert!((e - r).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_values() {
        assert!((harmonic_sq_integral(0) - 2.0).abs() < 1e-15);
        assert!((harmonic_sq_integral(1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn multiplicities() {
        let s = cpn_spectrum(1, 6).unwrap();
        for e in &s.entries {
            assert_eq!(e.multiplicity, 2 * e.index + 1);
        }
        let s2 = cpn_spectrum(2, 2).unwrap();
        assert_eq!(s2.entries[1].multiplicity, 8);
    }
}
