//! Sections of `O(k) ⊗ E` on `CP^1`, hermitian metrics, volume forms and
//! the maps between metrics on the bundle and inner products on sections.
//!
//! `E` is a sum of line bundles `O(a_1) ⊕ ... ⊕ O(a_r)`. Sections are
//! represented in the unitary frame of the round reference metric: the
//! monomial `sqrt(C(m, j)) z^j` of `O(m)` becomes
//! `sqrt((m+1) C(m, j)) sin^j(ϑ/2) cos^{m-j}(ϑ/2) e^{ijθ}`: bounded, and
//! orthonormal in `L²` for the round metric with total area one. A hermitian
//! metric on the bundle is a field `R(p)` of positive matrices relative to
//! that frame.

use crate::field::{EndomorphismField, HarmonicField, ScalarField};
use crate::geometry::{ChartPoint, QuadratureGrid};
use crate::linalg::{cholesky, hpd_inverse, lower_inverse, modulus, polar, CMatrix, C64, ZERO};
use crate::prelude::*;
use crate::{Error, Result};

/// Basis of `H^0(O(k) ⊗ E)` by monomials in each summand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionBasis {
    k: usize,
    twists: Vec<i64>,
}

impl SectionBasis {
    /// `H^0(O(k))`.
    pub fn line(k: usize) -> Result<Self> {
        Self::split(k, &[0])
    }

    /// `H^0(O(k) ⊗ (O(a_1) ⊕ ... ⊕ O(a_r)))`.
    pub fn split(k: usize, twists: &[i64]) -> Result<Self> {
        if twists.is_empty() {
            return Err(Error::Domain("bundle needs at least one summand".into()));
        }
        for a in twists {
            if (k as i64) + a < 0 {
                return Err(Error::Domain(format!(
                    "O({}) has no sections; raise k above {}",
                    k as i64 + a,
                    -a
                )));
            }
        }
        Ok(Self { k, twists: twists.to_vec() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        self.twists.len()
    }

    pub fn twists(&self) -> &[i64] {
        &self.twists
    }

    /// Degree of summand `i` of `O(k) ⊗ E`.
    pub fn summand_degree(&self, i: usize) -> usize {
        (self.k as i64 + self.twists[i]) as usize
    }

    /// `N = dim H^0`.
    pub fn dim(&self) -> usize {
        (0..self.rank()).map(|i| self.summand_degree(i) + 1).sum()
    }

    /// Largest summand degree; governs quadrature requirements.
    pub fn max_degree(&self) -> usize {
        (0..self.rank()).map(|i| self.summand_degree(i)).max().unwrap_or(0)
    }

    /// `r × N` matrix of section values in the unitary reference frame.
    pub fn evaluate(&self, p: &ChartPoint) -> CMatrix {
        self.fill(p, false)
    }

    /// `∂_z` of the holomorphic monomials, scaled by the same factor that
    /// makes [`SectionBasis::evaluate`] unitary. Ratios of quadratic
    /// expressions in the two therefore give exact `∂_z` derivatives.
    pub fn evaluate_dz(&self, p: &ChartPoint) -> CMatrix {
        self.fill(p, true)
    }

    fn fill(&self, p: &ChartPoint, derivative: bool) -> CMatrix {
        let mut s = CMatrix::from_element(self.rank(), self.dim(), ZERO);
        let (a, b) = (p.sin_half(), p.cos_half());
        let mut col = 0;
        for row in 0..self.rank() {
            let m = self.summand_degree(row);
            let mut binom = (m + 1) as f64;
            for j in 0..=m {
                if j > 0 {
                    binom = binom * (m + 1 - j) as f64 / j as f64;
                }
                let c = binom.sqrt();
                let v = if !derivative {
                    polar(c * a.powi(j as i32) * b.powi((m - j) as i32), j as f64 * p.azimuth)
                } else if j == 0 {
                    ZERO
                } else {
                    polar(
                        c * j as f64 * a.powi(j as i32 - 1) * b.powi((m - j + 1) as i32),
                        (j - 1) as f64 * p.azimuth,
                    )
                };
                s[(row, col + j)] = v;
            }
            col += m + 1;
        }
        s
    }
}

/// A hermitian metric on `E`, as positive matrices relative to the
/// unitary reference frame.
pub trait FiberMetric: Sync {
    fn rank(&self) -> usize;
    fn relative(&self, p: &ChartPoint) -> CMatrix;
}

/// The reference metric (round on every summand).
#[derive(Debug, Clone)]
pub struct RoundMetric {
    pub rank: usize,
}

impl FiberMetric for RoundMetric {
    fn rank(&self) -> usize {
        self.rank
    }
    fn relative(&self, _p: &ChartPoint) -> CMatrix {
        CMatrix::identity(self.rank, self.rank)
    }
}

/// `diag(e^{-ψ_1}, ..., e^{-ψ_r})`: a conformal change on each summand of `E`,
/// leaving the polarization `O(1)` round. For `r = 1` the curvature of
/// `O(k) ⊗ E` is `k ω_FS + i∂∂̄ψ`, positive for all `k ≥ 1` when `ψ` is small.
#[derive(Debug, Clone)]
pub struct WeightedMetric {
    weights: Vec<HarmonicField>,
}

impl WeightedMetric {
    pub fn new(weights: Vec<HarmonicField>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("metric needs at least one weight".into()));
        }
        Ok(Self { weights })
    }

    pub fn scalar(psi: HarmonicField, rank: usize) -> Result<Self> {
        Self::new(vec![psi; rank])
    }

    pub fn weights(&self) -> &[HarmonicField] {
        &self.weights
    }
}

impl FiberMetric for WeightedMetric {
    fn rank(&self) -> usize {
        self.weights.len()
    }
    fn relative(&self, p: &ChartPoint) -> CMatrix {
        let r = self.weights.len();
        let mut m = CMatrix::from_element(r, r, ZERO);
        for (i, w) in self.weights.iter().enumerate() {
            m[(i, i)] = C64::new((-w.value(p)).exp(), 0.0);
        }
        m
    }
}

/// Fubini–Study metric `FS(H)`: `R(p) = (S(p) H⁻¹ S(p)*)⁻¹`.
#[derive(Debug, Clone)]
pub struct FsMetric {
    basis: SectionBasis,
    h_inv: CMatrix,
}

impl FsMetric {
    pub fn h_inverse(&self) -> &CMatrix {
        &self.h_inv
    }

    /// `Σ_α |t_α|²_{FS(H)}` for an `H`-orthonormal basis: identically `r`.
    pub fn partition_residual(&self, points: &[ChartPoint]) -> f64 {
        points
            .iter()
            .map(|p| {
                let s = self.basis.evaluate(p);
                let k = &s * &self.h_inv * s.adjoint();
                let r = self.relative(p);
                let tr = (k * r).trace().re;
                (tr - self.basis.rank() as f64).abs()
            })
            .fold(0.0, f64::max)
    }
}

impl FiberMetric for FsMetric {
    fn rank(&self) -> usize {
        self.basis.rank()
    }
    fn relative(&self, p: &ChartPoint) -> CMatrix {
        let s = self.basis.evaluate(p);
        let k = &s * &self.h_inv * s.adjoint();
        hpd_inverse(&k).unwrap_or_else(|_| CMatrix::from_element(k.nrows(), k.ncols(), C64::new(f64::NAN, 0.0)))
    }
}

/// Fubini–Study map `H ↦ FS(H)`.
pub fn fs_map(h: &InnerProductMatrix, basis: &SectionBasis) -> Result<FsMetric> {
    if h.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: h.dim() });
    }
    Ok(FsMetric { basis: basis.clone(), h_inv: hpd_inverse(&h.0)? })
}

/// A volume form `Ω = e^{f} ω_FS / c` of total volume one.
#[derive(Debug, Clone)]
pub struct VolumeForm {
    log_density: Option<HarmonicField>,
    log_normalizer: f64,
}

impl VolumeForm {
    pub fn round() -> Self {
        Self { log_density: None, log_normalizer: 0.0 }
    }

    /// `Ω ∝ e^{f} ω_FS`, normalized to total volume one.
    pub fn exp_of(f: HarmonicField) -> Result<Self> {
        let mut degree = 4 * f.degree() + 8;
        let mut prev = f64::NAN;
        for _ in 0..12 {
            let g = QuadratureGrid::with_exactness(degree, 1)?;
            let total = g.integrate(|p| f.value(p).exp());
            if !total.is_finite() || total <= 0.0 {
                return Err(Error::Numeric("volume density does not integrate".into()));
            }
            if (total - prev).abs() <= 1e-14 * total {
                return Ok(Self { log_density: Some(f), log_normalizer: total.ln() });
            }
            prev = total;
            degree *= 2;
        }
        Err(Error::NonConvergence("normalization of the volume form".into()))
    }

    pub fn is_round(&self) -> bool {
        self.log_density.is_none()
    }

    pub fn log_density(&self) -> Option<&HarmonicField> {
        self.log_density.as_ref()
    }

    /// `Ω / ω_FS` at `p`.
    pub fn density(&self, p: &ChartPoint) -> f64 {
        match &self.log_density {
            None => 1.0,
            Some(f) => (f.value(p) - self.log_normalizer).exp(),
        }
    }

    pub fn total(&self) -> f64 {
        1.0
    }
}

/// A hermitian positive definite inner product on `H^0`, in the monomial
/// basis, with `H_ij = ⟨s_i, s_j⟩` (conjugate-linear in the first slot).
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductMatrix(CMatrix);

impl InnerProductMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        if crate::linalg::hermitian_defect(&m) > 1e-10 {
            return Err(Error::Domain("inner product matrix is not hermitian".into()));
        }
        let m = crate::linalg::hermitian_part(&m);
        cholesky(&m)?;
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Lower factor `L` with `H = L L*`.
    pub fn cholesky(&self) -> Result<CMatrix> {
        cholesky(&self.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * C64::new(s, 0.0))
    }
}

/// Sections, metric and volume sampled on a quadrature grid.
#[derive(Debug, Clone)]
pub struct SampledBundle {
    basis: SectionBasis,
    grid: QuadratureGrid,
    sections: Vec<CMatrix>,
    metric: Vec<CMatrix>,
    weights: Vec<f64>,
}

impl SampledBundle {
    pub fn new(
        basis: &SectionBasis,
        metric: &dyn FiberMetric,
        volume: &VolumeForm,
        grid: QuadratureGrid,
    ) -> Result<Self> {
        if metric.rank() != basis.rank() {
            return Err(Error::DimensionMismatch { expected: basis.rank(), found: metric.rank() });
        }
        let sections = grid.points().iter().map(|p| basis.evaluate(p)).collect();
        let weights = grid
            .points()
            .iter()
            .zip(grid.weights())
            .map(|(p, w)| w * volume.density(p))
            .collect();
        let mut out = Self { basis: basis.clone(), grid, sections, metric: Vec::new(), weights };
        out.set_metric(metric)?;
        Ok(out)
    }

    /// Sample on grids of increasing exactness until the `L²` Gram matrix is
    /// stable to `tol` (relative, entrywise maximum).
    pub fn adaptive(
        basis: &SectionBasis,
        metric: &dyn FiberMetric,
        volume: &VolumeForm,
        tol: f64,
    ) -> Result<Self> {
        let base = 4 * basis.max_degree() + 2;
        let mut degree = base;
        let mut prev: Option<CMatrix> = None;
        for _ in 0..16 {
            let b = Self::new(basis, metric, volume, QuadratureGrid::with_exactness(degree, 1)?)?;
            let g = b.l2_gram();
            if let Some(p) = &prev {
                let scale = g.iter().fold(0.0f64, |a, z| a.max(modulus(z)));
                let diff = (&g - p).iter().fold(0.0f64, |a, z| a.max(modulus(z)));
                if diff <= tol * scale {
                    return Ok(b);
                }
            }
            prev = Some(g);
            degree += base / 2 + 8;
        }
        Err(Error::NonConvergence("quadrature refinement of the Gram matrix".into()))
    }

    /// Resample only the metric.
    pub fn set_metric(&mut self, metric: &dyn FiberMetric) -> Result<()> {
        if metric.rank() != self.basis.rank() {
            return Err(Error::DimensionMismatch { expected: self.basis.rank(), found: metric.rank() });
        }
        self.metric = self.grid.points().iter().map(|p| metric.relative(p)).collect();
        if self.metric.iter().any(|m| m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(Error::Numeric("metric is not finite on the grid".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> &SectionBasis {
        &self.basis
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// `r × N` section values per node.
    pub fn sections(&self) -> &[CMatrix] {
        &self.sections
    }

    pub fn metric_values(&self) -> &[CMatrix] {
        &self.metric
    }

    /// Quadrature weights times the volume density.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ S* R S Ω`.
    pub fn l2_gram(&self) -> CMatrix {
        self.weighted_gram(|_| None)
    }

    /// `∫ S* R f S Ω` for an endomorphism field `f`, in the monomial basis.
    pub fn l2_pairing(&self, f: &dyn EndomorphismField) -> Result<CMatrix> {
        if f.rank() != self.basis.rank() {
            return Err(Error::DimensionMismatch { expected: self.basis.rank(), found: f.rank() });
        }
        let values: Vec<CMatrix> = self.grid.points().iter().map(|p| f.value(p)).collect();
        if values.iter().any(|v| !crate::linalg::is_hermitian(v, 1e-10)) {
            return Err(Error::Domain("endomorphism field is not hermitian".into()));
        }
        Ok(self.weighted_gram(|i| Some(values[i].clone())))
    }

    fn weighted_gram(&self, endo: impl Fn(usize) -> Option<CMatrix>) -> CMatrix {
        let n = self.basis.dim();
        let mut g = CMatrix::from_element(n, n, ZERO);
        for (i, (s, r)) in self.sections.iter().zip(&self.metric).enumerate() {
            let rf = match endo(i) {
                None => r.clone(),
                Some(f) => r * f,
            };
            let inner = s.adjoint() * rf * s;
            g += inner * C64::new(self.weights[i], 0.0);
        }
        crate::linalg::hermitian_part(&g)
    }

    /// `Hilb(h) = (N / rV) ∫ S* R S Ω`.
    pub fn hilb(&self) -> Result<InnerProductMatrix> {
        let scale = self.basis.dim() as f64 / self.basis.rank() as f64;
        InnerProductMatrix::new(self.l2_gram() * C64::new(scale, 0.0))
    }

    /// Frames `S(p) L^{-*}` orthonormalizing the sections for `H = L L*`.
    pub fn frames_for(&self, h: &InnerProductMatrix) -> Result<Vec<CMatrix>> {
        if h.dim() != self.basis.dim() {
            return Err(Error::DimensionMismatch { expected: self.basis.dim(), found: h.dim() });
        }
        let linv_adj = lower_inverse(&h.cholesky()?)?.adjoint();
        Ok(self.sections.iter().map(|s| s * &linv_adj).collect())
    }
}

/// `Hilb(h)` for a metric on the bundle.
pub fn hilb(
    basis: &SectionBasis,
    metric: &dyn FiberMetric,
    volume: &VolumeForm,
    grid: QuadratureGrid,
) -> Result<InnerProductMatrix> {
    SampledBundle::new(basis, metric, volume, grid)?.hilb()
}

/// Diagonal of the Bergman kernel, `S G⁻¹ S* R` (an `r × r` matrix whose
/// trace is the density of states), at the given points.
pub fn bergman_kernel_diag(
    bundle: &SampledBundle,
    metric: &dyn FiberMetric,
    points: &[ChartPoint],
) -> Result<Vec<CMatrix>> {
    let g_inv = hpd_inverse(&bundle.l2_gram())?;
    Ok(points
        .iter()
        .map(|p| {
            let s = bundle.basis().evaluate(p);
            &s * &g_inv * s.adjoint() * metric.relative(p)
        })
        .collect())
}

/// Diagonal of the kernel of `T_f T_g` (or of `T_f` when `g` is `None`),
/// with `T_f` the Toeplitz operator of `f` on `H^0` with its `L²` product.
pub fn toeplitz_kernel_diag(
    bundle: &SampledBundle,
    metric: &dyn FiberMetric,
    f: &dyn EndomorphismField,
    g: Option<&dyn EndomorphismField>,
    points: &[ChartPoint],
) -> Result<Vec<CMatrix>> {
    let g_inv = hpd_inverse(&bundle.l2_gram())?;
    let mut middle = &g_inv * bundle.l2_pairing(f)? * &g_inv;
    if let Some(g) = g {
        middle = middle * bundle.l2_pairing(g)? * &g_inv;
    }
    Ok(points
        .iter()
        .map(|p| {
            let s = bundle.basis().evaluate(p);
            &s * &middle * s.adjoint() * metric.relative(p)
        })
        .collect())
}

/// Toeplitz matrix of `f` in the `L²`-orthonormal basis `S L^{-*}`.
pub fn toeplitz_matrix(bundle: &SampledBundle, f: &dyn EndomorphismField) -> Result<CMatrix> {
    let linv = lower_inverse(&cholesky(&bundle.l2_gram())?)?;
    let q = &linv * bundle.l2_pairing(f)? * linv.adjoint();
    Ok(crate::linalg::hermitian_part(&q))
}

/// Evaluates a scalar field on the grid of a bundle.
pub fn sample_scalar(bundle: &SampledBundle, f: &dyn ScalarField) -> Vec<f64> {
    bundle.grid().points().iter().map(|p| f.value(p)).collect()
}
