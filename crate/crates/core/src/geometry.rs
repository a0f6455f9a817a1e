//! Pointwise projective geometry of Fubini–Study embeddings and the
//! quadrature on the sphere.
//!
//! Points of `CP^1` are parametrized by the height `t ∈ (-1, 1)` and the
//! azimuth `θ`, with affine coordinate `z = r e^{iθ}`, `r² = (1-t)/(1+t)`.
//! In these coordinates the round Fubini–Study area form of total area one
//! is `dt dθ / 4π`.

use crate::linalg::{polar, trace_product, CMatrix, C64};
use crate::prelude::*;
use crate::{Error, Result};
use core::f64::consts::PI;

/// A point of the sphere away from the poles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub t: f64,
    pub azimuth: f64,
}

impl ChartPoint {
    pub fn new(t: f64, azimuth: f64) -> Result<Self> {
        if !(t > -1.0 && t < 1.0) || !azimuth.is_finite() {
            return Err(Error::Domain(format!(
                "chart point needs -1 < t < 1 and finite azimuth, got t = {t}, θ = {azimuth}"
            )));
        }
        Ok(Self { t, azimuth })
    }

    /// Point with affine coordinate `z`.
    pub fn from_affine(z: C64) -> Result<Self> {
        let r2 = z.norm_sqr();
        Self::new((1.0 - r2) / (1.0 + r2), z.im.atan2(z.re))
    }

    pub fn affine(&self) -> C64 {
        let r = ((1.0 - self.t) / (1.0 + self.t)).sqrt();
        polar(r, self.azimuth)
    }

    /// `|z| / sqrt(1 + |z|²)`.
    pub fn sin_half(&self) -> f64 {
        (0.5 * (1.0 - self.t)).max(0.0).sqrt()
    }

    /// `1 / sqrt(1 + |z|²)`.
    pub fn cos_half(&self) -> f64 {
        (0.5 * (1.0 + self.t)).max(0.0).sqrt()
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes ascending.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Domain("Gauss–Legendre rule needs at least one node".into()));
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            z = 0.0;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}

/// Product rule: Gauss–Legendre in `t` times the uniform rule in `θ`.
/// Weights are normalized against the round area form, so they sum to one.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    points: Vec<ChartPoint>,
    weights: Vec<f64>,
    height_nodes: usize,
    azimuth_nodes: usize,
    exactness: usize,
}

impl QuadratureGrid {
    /// Grid integrating exactly every `z^a z̄^b / (1+|z|²)^{(a+b)/2+1+m}`
    /// with `a + b + 2m ≤ degree` (and so every spherical polynomial of
    /// degree `≤ degree / 2 + 1`). `oversample` multiplies both node counts.
    pub fn with_exactness(degree: usize, oversample: usize) -> Result<Self> {
        if oversample == 0 {
            return Err(Error::Domain("oversampling factor must be positive".into()));
        }
        let nt = (degree / 4 + 2) * oversample;
        let na = (degree + 1) * oversample;
        let (tn, tw) = gauss_legendre(nt)?;
        let mut points = Vec::with_capacity(nt * na);
        let mut weights = Vec::with_capacity(nt * na);
        for (t, w) in tn.iter().zip(&tw) {
            for m in 0..na {
                points.push(ChartPoint {
                    t: *t,
                    azimuth: 2.0 * PI * m as f64 / na as f64,
                });
                weights.push(w / (2.0 * na as f64));
            }
        }
        Ok(Self {
            points,
            weights,
            height_nodes: nt,
            azimuth_nodes: na,
            exactness: degree * oversample,
        })
    }

    pub fn points(&self) -> &[ChartPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn height_nodes(&self) -> usize {
        self.height_nodes
    }

    pub fn azimuth_nodes(&self) -> usize {
        self.azimuth_nodes
    }

    /// Exactness degree in the sense of [`QuadratureGrid::with_exactness`].
    pub fn exactness(&self) -> usize {
        self.exactness
    }

    /// `Σ w_p f(p)`.
    pub fn integrate(&self, f: impl Fn(&ChartPoint) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

/// Default grid for sections of `O(k)`: exact for all fourth-moment
/// integrands of degree `k`.
pub fn build_quadrature(k: usize, oversample: usize) -> Result<QuadratureGrid> {
    QuadratureGrid::with_exactness(4 * k + 2, oversample)
}

/// An `r × N` matrix of full rank `r`: the homogeneous coordinates of a
/// point of the Grassmannian `G(r, N)`.
#[derive(Debug, Clone)]
pub struct FrameMatrix {
    z: CMatrix,
    gram_inv: CMatrix,
}

impl FrameMatrix {
    pub fn new(z: CMatrix) -> Result<Self> {
        if z.nrows() == 0 || z.nrows() > z.ncols() {
            return Err(Error::Domain(format!(
                "frame must be r × N with 0 < r ≤ N, got {} × {}",
                z.nrows(),
                z.ncols()
            )));
        }
        if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numeric("non-finite frame entry".into()));
        }
        // z = U Σ V*, so (z z*)⁻¹ = U Σ⁻² U*; this stays accurate for badly
        // scaled rows where forming z z* first would not.
        let svd = z.clone().svd(true, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin.is_nan() || smin <= 1e-12 * smax {
            return Err(Error::DegenerateFrame(format!(
                "frame rank below {} (singular value ratio {:.3e})",
                z.nrows(),
                smin / smax
            )));
        }
        let u = svd.u.expect("requested");
        let inv_sq = CMatrix::from_diagonal(&svd.singular_values.map(|s| C64::new(1.0 / (s * s), 0.0)));
        let gram_inv = &u * inv_sq * u.adjoint();
        Ok(Self { z, gram_inv })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.z
    }

    pub fn rank(&self) -> usize {
        self.z.nrows()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// `(z z*)⁻¹`.
    pub fn gram_inverse(&self) -> &CMatrix {
        &self.gram_inv
    }
}

/// A tangent vector at a frame, represented by an `r × N` matrix.
#[derive(Debug, Clone)]
pub struct TangentRep(pub CMatrix);

/// `μ(z) = z* (z z*)⁻¹ z`, the orthogonal projection onto the row space.
pub fn moment_map(z: &FrameMatrix) -> CMatrix {
    z.z.adjoint() * &z.gram_inv * &z.z
}

/// `H_A(z) = z A z* (z z*)⁻¹`, an `r × r` matrix with `tr H_A = tr(A μ)`.
pub fn hamiltonian(z: &FrameMatrix, a: &CMatrix) -> Result<CMatrix> {
    check_square(a, z.dim())?;
    Ok(&z.z * a * z.z.adjoint() * &z.gram_inv)
}

/// The vector field generated by `A` at `z`.
pub fn xi_field(z: &FrameMatrix, a: &CMatrix) -> Result<TangentRep> {
    check_square(a, z.dim())?;
    Ok(TangentRep(&z.z * a))
}

/// Fubini–Study pairing of tangent representatives,
/// `tr(Y* G⁻¹ X) - tr(G⁻¹ z Y* G⁻¹ X z*)` with `G = z z*`.
pub fn fs_tangent_inner(z: &FrameMatrix, x: &TangentRep, y: &TangentRep) -> Result<C64> {
    for m in [&x.0, &y.0] {
        if m.shape() != z.z.shape() {
            return Err(Error::DimensionMismatch {
                expected: z.dim(),
                found: m.ncols(),
            });
        }
    }
    let ystar = y.0.adjoint();
    let first = trace_product(&(&ystar * &z.gram_inv), &x.0);
    let left = &z.gram_inv * &z.z * &ystar * &z.gram_inv;
    let right = &x.0 * z.z.adjoint();
    Ok(first - trace_product(&left, &right))
}

fn check_square(a: &CMatrix, n: usize) -> Result<()> {
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if a.nrows() != n { a.nrows() } else { a.ncols() },
        });
    }
    Ok(())
}
