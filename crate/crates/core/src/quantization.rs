//! The Fubini–Study embedding of a sampled bundle, its centre of mass, the
//! Hessian form `P*P` of the balancing energy, and the quantization maps
//! `Q` (functions to hermitian matrices) and `H` (matrices to functions).

use crate::bundles::{InnerProductMatrix, SampledBundle, SectionBasis, VolumeForm, WeightedMetric};
use crate::field::{EndomorphismField, HarmonicField};
use crate::geometry::{FrameMatrix, QuadratureGrid};
use crate::linalg::{
    cholesky, gram_of_rows, hermitian_part, lower_inverse, op_norm_hermitian, trace_product, CMatrix,
    RMatrix, RVector, C64, ZERO,
};
use crate::par::{map_reduce, Reduction};
use crate::prelude::*;
use crate::{Error, Result};
use core::f64::consts::{PI, SQRT_2};

/// Orthonormal basis of `Herm(N)` for the real pairing `tr(AB)`:
/// `E_ii`, then for each `i < j` the pair `(E_ij + E_ji)/√2`,
/// `(-i E_ij + i E_ji)/√2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HermitianBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

/// One basis element: `Diag(i)`, `Sym(i, j)` or `Anti(i, j)` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HermitianElement {
    Diag(usize),
    Sym(usize, usize),
    Anti(usize, usize),
}

impl HermitianBasis {
    pub fn new(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((i, j));
            }
        }
        Self { n, pairs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `N²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn element(&self, idx: usize) -> HermitianElement {
        if idx < self.n {
            HermitianElement::Diag(idx)
        } else {
            let (i, j) = self.pairs[(idx - self.n) / 2];
            if (idx - self.n) % 2 == 0 {
                HermitianElement::Sym(i, j)
            } else {
                HermitianElement::Anti(i, j)
            }
        }
    }

    /// Non-zero entries `(row, col, value)` of basis element `idx`.
    pub fn entries(&self, idx: usize) -> Vec<(usize, usize, C64)> {
        let h = 1.0 / SQRT_2;
        match self.element(idx) {
            HermitianElement::Diag(i) => vec![(i, i, C64::new(1.0, 0.0))],
            HermitianElement::Sym(i, j) => vec![(i, j, C64::new(h, 0.0)), (j, i, C64::new(h, 0.0))],
            HermitianElement::Anti(i, j) => vec![(i, j, C64::new(0.0, -h)), (j, i, C64::new(0.0, h))],
        }
    }

    pub fn matrix(&self, idx: usize) -> CMatrix {
        let mut m = CMatrix::from_element(self.n, self.n, ZERO);
        for (r, c, v) in self.entries(idx) {
            m[(r, c)] = v;
        }
        m
    }

    /// Coordinates `tr(A e_a)` of a hermitian matrix.
    pub fn coordinates(&self, a: &CMatrix) -> Result<RVector> {
        if a.nrows() != self.n || a.ncols() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: a.nrows() });
        }
        Ok(RVector::from_fn(self.len(), |idx, _| {
            self.entries(idx).iter().map(|(r, c, v)| (a[(*c, *r)] * v).re).sum()
        }))
    }

    /// Hermitian matrix with the given coordinates.
    pub fn assemble(&self, coords: &[f64]) -> Result<CMatrix> {
        if coords.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: coords.len() });
        }
        let mut m = CMatrix::from_element(self.n, self.n, ZERO);
        for (idx, x) in coords.iter().enumerate() {
            for (r, c, v) in self.entries(idx) {
                m[(r, c)] += v * *x;
            }
        }
        Ok(m)
    }
}

/// Centre of mass `μ̄ = ∫ μ Ω`.
#[derive(Debug, Clone)]
pub struct MuBar {
    matrix: CMatrix,
    rank: usize,
}

impl MuBar {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `‖μ̄ - (rV/N) Id‖_op`; zero exactly at balanced embeddings.
    pub fn balance_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let target = CMatrix::identity(n, n) * C64::new(self.rank as f64 / n as f64, 0.0);
        op_norm_hermitian(&(&self.matrix - target))
    }
}

/// A Fubini–Study embedding sampled on the quadrature grid of a bundle:
/// per node an `r × N` frame with orthonormal rows spanning the fibre.
#[derive(Debug, Clone)]
pub struct Embedding {
    rank: usize,
    dim: usize,
    frames: Vec<CMatrix>,
    weights: Vec<f64>,
    reduction: Reduction,
}

impl Embedding {
    /// Embedding defined by the inner product `H` on `H^0`.
    pub fn new(bundle: &SampledBundle, h: &InnerProductMatrix) -> Result<Self> {
        let raw = bundle.frames_for(h)?;
        let frames = raw
            .into_iter()
            .map(|z| {
                let l = cholesky(&(&z * z.adjoint()))?;
                Ok(lower_inverse(&l)? * z)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rank: bundle.basis().rank(),
            dim: bundle.basis().dim(),
            frames,
            weights: bundle.weights().to_vec(),
            reduction: Reduction::Ordered,
        })
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unitary frame at grid node `i`.
    pub fn frame(&self, i: usize) -> Result<FrameMatrix> {
        FrameMatrix::new(self.frames[i].clone())
    }

    pub fn node_count(&self) -> usize {
        self.frames.len()
    }

    fn parts(&self) -> usize {
        // Bound the memory held by partial N²×N² sums to roughly 512 MiB.
        let bytes = (self.dim * self.dim) as f64 * (self.dim * self.dim) as f64 * 8.0;
        ((512.0 * 1024.0 * 1024.0 / bytes) as usize).clamp(1, 16)
    }

    fn sum_matrices(&self, parts: usize, f: impl Fn(usize) -> CMatrix + Sync + Send) -> CMatrix {
        let n = self.dim;
        map_reduce(
            self.frames.len(),
            parts,
            self.reduction,
            |range| {
                let mut acc = CMatrix::from_element(n, n, ZERO);
                for i in range {
                    acc += f(i);
                }
                acc
            },
            |a, b| a + b,
        )
        .unwrap_or_else(|| CMatrix::from_element(n, n, ZERO))
    }

    /// `μ̄ = ∫ U* U Ω`.
    pub fn mu_bar(&self) -> MuBar {
        let m = self.sum_matrices(16, |i| self.frames[i].adjoint() * &self.frames[i] * C64::new(self.weights[i], 0.0));
        MuBar { matrix: hermitian_part(&m), rank: self.rank }
    }

    /// `U A U*` at node `i`: hermitian and similar to `H_A`.
    fn reduced(&self, i: usize, a: &CMatrix) -> CMatrix {
        &self.frames[i] * a * self.frames[i].adjoint()
    }

    /// `tr H_A` at every node.
    pub fn hamiltonian_values(&self, a: &CMatrix) -> Result<Vec<f64>> {
        self.check(a)?;
        Ok((0..self.frames.len()).map(|i| self.reduced(i, a).trace().re).collect())
    }

    /// `Re tr(AB μ̄) - ∫ tr(H_A H_B) Ω`, evaluated without assembling `P*P`.
    pub fn form_value(&self, a: &CMatrix, b: &CMatrix) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let mb = self.mu_bar();
        let first = trace_product(&(a * b), mb.matrix()).re;
        let second = map_reduce(
            self.frames.len(),
            16,
            self.reduction,
            |range| {
                range
                    .map(|i| self.weights[i] * trace_product(&self.reduced(i, a), &self.reduced(i, b)).re)
                    .sum::<f64>()
            },
            |x, y| x + y,
        )
        .unwrap_or(0.0);
        Ok(first - second)
    }

    /// Derivative of `μ̄` in direction `A`:
    /// `(A μ̄ + μ̄ A)/2 - ∫ U* (U A U*) U Ω`, so that
    /// `tr(B · dμ̄(A))` is the `P*P` form.
    pub fn dmu_bar(&self, a: &CMatrix) -> Result<CMatrix> {
        self.check(a)?;
        let mb = self.mu_bar();
        let half = C64::new(0.5, 0.0);
        let sym = (a * mb.matrix() + mb.matrix() * a) * half;
        let integral = self.sum_matrices(16, |i| {
            let u = &self.frames[i];
            u.adjoint() * self.reduced(i, a) * u * C64::new(self.weights[i], 0.0)
        });
        Ok(hermitian_part(&(sym - integral)))
    }

    /// Assembles `P*P` as a symmetric `N² × N²` matrix in `basis`.
    pub fn assemble_pstarp(&self) -> Result<PStarPForm> {
        let basis = HermitianBasis::new(self.dim);
        let mb = self.mu_bar();
        let nn = basis.len();
        let entries: Vec<Vec<(usize, usize, C64)>> = (0..nn).map(|a| basis.entries(a)).collect();
        let r2 = self.rank * self.rank;
        let chunk = 256usize;
        let gram2 = map_reduce(
            self.frames.len(),
            self.parts(),
            self.reduction,
            |range| {
                let mut acc = RMatrix::zeros(nn, nn);
                let mut start = range.start;
                while start < range.end {
                    let end = (start + chunk).min(range.end);
                    let mut x = RMatrix::zeros((end - start) * r2, nn);
                    for (row_block, node) in (start..end).enumerate() {
                        self.fill_hamiltonian_rows(node, &entries, &mut x, row_block * r2);
                    }
                    acc += gram_of_rows(&x);
                    start = end;
                }
                acc
            },
            |a, b| a + b,
        )
        .unwrap_or_else(|| RMatrix::zeros(nn, nn));
        let mut first = RMatrix::zeros(nn, nn);
        let m = mb.matrix();
        for a in 0..nn {
            for b in 0..=a {
                // Re tr(e_a e_b μ̄) from the sparse entries.
                let mut acc = ZERO;
                for (ra, ca, va) in &entries[a] {
                    for (rb, cb, vb) in &entries[b] {
                        if ca == rb {
                            acc += va * vb * m[(*cb, *ra)];
                        }
                    }
                }
                first[(a, b)] = acc.re;
                first[(b, a)] = acc.re;
            }
        }
        let form = &first - &gram2;
        let form = (&form + form.transpose()) * 0.5;
        Ok(PStarPForm { basis, mu_bar: mb, gram2, form })
    }

    /// Writes `sqrt(w) · coords(U e_a U*)` for every basis element `a` into
    /// rows `row0 .. row0 + r²` of `x`.
    fn fill_hamiltonian_rows(&self, node: usize, entries: &[Vec<(usize, usize, C64)>], x: &mut RMatrix, row0: usize) {
        let u = &self.frames[node];
        let sw = self.weights[node].sqrt();
        let r = self.rank;
        for (col, ent) in entries.iter().enumerate() {
            let mut row = row0;
            for c in 0..r {
                for d in c..r {
                    let mut val = ZERO;
                    for (i, j, v) in ent {
                        val += v * u[(c, *i)] * u[(d, *j)].conj();
                    }
                    if c == d {
                        x[(row, col)] = sw * val.re;
                        row += 1;
                    } else {
                        x[(row, col)] = sw * SQRT_2 * val.re;
                        x[(row + 1, col)] = sw * SQRT_2 * val.im;
                        row += 2;
                    }
                }
            }
        }
    }

    fn check(&self, a: &CMatrix) -> Result<()> {
        if a.nrows() != self.dim || a.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: a.nrows() });
        }
        Ok(())
    }
}

/// The assembled Hessian form together with its ingredients.
#[derive(Debug, Clone)]
pub struct PStarPForm {
    basis: HermitianBasis,
    mu_bar: MuBar,
    gram2: RMatrix,
    form: RMatrix,
}

impl PStarPForm {
    /// Rebuilds a form from a stored matrix (for example a file dump).
    pub fn from_matrix(basis: HermitianBasis, mu_bar: CMatrix, rank: usize, form: RMatrix) -> Result<Self> {
        if form.nrows() != basis.len() || form.ncols() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), found: form.nrows() });
        }
        let nn = basis.len();
        Ok(Self { basis, mu_bar: MuBar { matrix: mu_bar, rank }, gram2: RMatrix::zeros(nn, nn), form })
    }

    pub fn basis(&self) -> &HermitianBasis {
        &self.basis
    }

    pub fn mu_bar(&self) -> &MuBar {
        &self.mu_bar
    }

    /// `∫ tr(H_{e_a} H_{e_b}) Ω`.
    pub fn gram2(&self) -> &RMatrix {
        &self.gram2
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.form
    }

    pub fn value(&self, a: &CMatrix, b: &CMatrix) -> Result<f64> {
        let ca = self.basis.coordinates(a)?;
        let cb = self.basis.coordinates(b)?;
        Ok(ca.dot(&(&self.form * cb)))
    }

    /// `P*P(A)` as a hermitian matrix.
    pub fn apply(&self, a: &CMatrix) -> Result<CMatrix> {
        let c = self.basis.coordinates(a)?;
        let out = &self.form * c;
        self.basis.assemble(out.as_slice())
    }
}

/// How the grid for a bundle is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadraturePolicy {
    /// Base exactness `4 d + 2` for the largest summand degree `d`, times
    /// the given oversampling factor.
    Fixed(usize),
    /// Refine until the `L²` Gram matrix is stable to this relative tolerance.
    Adaptive(f64),
}

/// A family of problems indexed by `k`: bundle `E`, metric and volume form.
#[derive(Debug, Clone)]
pub struct BundleSpec {
    pub twists: Vec<i64>,
    pub metric: WeightedMetric,
    pub volume: VolumeForm,
    pub quadrature: QuadraturePolicy,
}

impl BundleSpec {
    /// `O(k)` with the round metric and volume.
    pub fn round_line() -> Self {
        Self {
            twists: vec![0],
            metric: WeightedMetric::scalar(HarmonicField::zero(), 1).expect("rank one"),
            volume: VolumeForm::round(),
            quadrature: QuadraturePolicy::Fixed(1),
        }
    }

    pub fn rank(&self) -> usize {
        self.twists.len()
    }

    pub fn bundle(&self, k: usize) -> Result<SampledBundle> {
        let basis = SectionBasis::split(k, &self.twists)?;
        match self.quadrature {
            QuadraturePolicy::Fixed(os) => {
                let grid = QuadratureGrid::with_exactness(4 * basis.max_degree() + 2, os)?;
                SampledBundle::new(&basis, &self.metric, &self.volume, grid)
            }
            QuadraturePolicy::Adaptive(tol) => SampledBundle::adaptive(&basis, &self.metric, &self.volume, tol),
        }
    }

    pub fn context(&self, k: usize) -> Result<QuantizationContext> {
        QuantizationContext::new(self.bundle(k)?)
    }
}

/// A sampled bundle with the embedding given by its `L²` inner product,
/// `(rV/N) Hilb(h)`.
#[derive(Debug, Clone)]
pub struct QuantizationContext {
    bundle: SampledBundle,
    embedding: Embedding,
    chol_inv: CMatrix,
}

impl QuantizationContext {
    pub fn new(bundle: SampledBundle) -> Result<Self> {
        let gram = InnerProductMatrix::new(bundle.l2_gram())?;
        let embedding = Embedding::new(&bundle, &gram)?;
        let chol_inv = lower_inverse(&gram.cholesky()?)?;
        Ok(Self { bundle, embedding, chol_inv })
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.embedding = self.embedding.with_reduction(reduction);
        self
    }

    pub fn bundle(&self) -> &SampledBundle {
        &self.bundle
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn k(&self) -> usize {
        self.bundle.basis().k()
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    pub fn mu_bar(&self) -> MuBar {
        self.embedding.mu_bar()
    }

    /// `Q(φ)`: the Toeplitz matrix of `φ` in the `L²`-orthonormal basis.
    /// `Q(Id) = Id`.
    pub fn q_of(&self, phi: &dyn EndomorphismField) -> Result<CMatrix> {
        let q = &self.chol_inv * self.bundle.l2_pairing(phi)? * self.chol_inv.adjoint();
        Ok(hermitian_part(&q))
    }

    /// `tr H_A` on the grid, in the same basis as [`QuantizationContext::q_of`].
    pub fn h_of(&self, a: &CMatrix) -> Result<Vec<f64>> {
        self.embedding.hamiltonian_values(a)
    }

    pub fn form_value(&self, a: &CMatrix, b: &CMatrix) -> Result<f64> {
        self.embedding.form_value(a, b)
    }

    pub fn dmu_bar(&self, a: &CMatrix) -> Result<CMatrix> {
        self.embedding.dmu_bar(a)
    }

    pub fn assemble_pstarp(&self) -> Result<PStarPForm> {
        self.embedding.assemble_pstarp()
    }

    /// `∫ |∇ H_A|² dA` for a line bundle. The Dirichlet energy is conformally
    /// invariant, so it is the same for every metric in the round
    /// conformal class.
    pub fn grad_l2_norm_sq(&self, a: &CMatrix) -> Result<f64> {
        if self.bundle.basis().rank() != 1 {
            return Err(Error::Domain("gradient norms are implemented for line bundles".into()));
        }
        self.embedding.check(a)?;
        let m = self.chol_inv.adjoint();
        let grid = self.bundle.grid();
        let mut total = 0.0;
        for (p, w) in grid.points().iter().zip(grid.weights()) {
            let v = self.bundle.basis().evaluate(p) * &m;
            let dv = self.bundle.basis().evaluate_dz(p) * &m;
            let vs = v.adjoint();
            let num = (&v * a * &vs)[(0, 0)];
            let den = (&v * &vs)[(0, 0)].re;
            let dz = ((&dv * a * &vs)[(0, 0)] * den - num * (&dv * &vs)[(0, 0)]) / (den * den);
            let conformal = PI * (2.0 / (1.0 + p.t)).powi(2);
            total += w * conformal * 4.0 * dz.norm_sqr();
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fs_tangent_inner, hamiltonian, moment_map, xi_field};
    use crate::linalg::C64;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = CMatrix::from_fn(n, n, |_, _| C64::new(next(), next()));
        hermitian_part(&m)
    }

    #[test]
    fn basis_coordinates_round_trip() {
        let b = HermitianBasis::new(4);
        let a = random_hermitian(4, 3);
        let c = b.coordinates(&a).unwrap();
        let back = b.assemble(c.as_slice()).unwrap();
        assert!((back - &a).norm() < 1e-14);
        let c2 = b.coordinates(&random_hermitian(4, 5)).unwrap();
        let direct = trace_product(&a, &random_hermitian(4, 5)).re;
        assert!((c.dot(&c2) - direct).abs() < 1e-14);
    }

    #[test]
    fn assembled_form_agrees_with_matrix_free() {
        let ctx = BundleSpec::round_line().context(3).unwrap();
        let form = ctx.assemble_pstarp().unwrap();
        let a = random_hermitian(4, 11);
        let b = random_hermitian(4, 12);
        let assembled = form.value(&a, &b).unwrap();
        let free = ctx.form_value(&a, &b).unwrap();
        assert!((assembled - free).abs() < 1e-13, "{assembled} vs {free}");
        let via_dmu = trace_product(&b, &ctx.dmu_bar(&a).unwrap()).re;
        assert!((via_dmu - free).abs() < 1e-13);
    }

    #[test]
    fn rank_two_form_agrees_with_matrix_free() {
        let spec = BundleSpec {
            twists: vec![1, 0],
            metric: WeightedMetric::new(vec![
                HarmonicField::zonal_polynomial(&[0.0, 0.2]).unwrap(),
                HarmonicField::zero(),
            ])
            .unwrap(),
            volume: VolumeForm::round(),
            quadrature: QuadraturePolicy::Fixed(2),
        };
        let ctx = spec.context(2).unwrap();
        let n = ctx.dim();
        assert_eq!(n, 7);
        let form = ctx.assemble_pstarp().unwrap();
        let a = random_hermitian(n, 1);
        let b = random_hermitian(n, 2);
        assert!((form.value(&a, &b).unwrap() - ctx.form_value(&a, &b).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn pointwise_identity_holds_at_a_frame() {
        let ctx = BundleSpec::round_line().context(4).unwrap();
        let z = ctx.embedding().frame(17).unwrap();
        let a = random_hermitian(5, 21);
        let b = random_hermitian(5, 22);
        let ha = hamiltonian(&z, &a).unwrap();
        let hb = hamiltonian(&z, &b).unwrap();
        let lhs = trace_product(&ha, &hb)
            + fs_tangent_inner(&z, &xi_field(&z, &a).unwrap(), &xi_field(&z, &b).unwrap()).unwrap();
        let rhs = trace_product(&(&a * &b), &moment_map(&z));
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn q_of_identity_is_identity() {
        let ctx = BundleSpec::round_line().context(5).unwrap();
        let one = HarmonicField::constant(1.0);
        let q = ctx
            .q_of(&crate::field::ScalarEndomorphism { field: &one, rank: 1 })
            .unwrap();
        assert!((q - CMatrix::identity(6, 6)).norm() < 1e-13);
    }
}
