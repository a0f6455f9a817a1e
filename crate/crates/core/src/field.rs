//! Scalar and endomorphism-valued fields on the sphere.
//!
//! [`HarmonicField`] stores a finite expansion in real spherical harmonics,
//! orthonormal for the round area form of total area one, so its
//! Laplacian is exact. Throughout, `Δ` is the positive Laplacian of the
//! round metric of area one; its eigenvalues are `4π l(l+1)`.

use crate::geometry::{gauss_legendre, ChartPoint};
use crate::linalg::{least_squares, CMatrix, RMatrix, RVector, C64};
use crate::prelude::*;
use crate::{Error, Result};
use core::f64::consts::PI;

/// Eigenvalue of `Δ` on spherical harmonics of degree `l`.
pub fn laplace_eigenvalue(l: usize) -> f64 {
    4.0 * PI * (l * (l + 1)) as f64
}

/// A real-valued function on the sphere.
pub trait ScalarField: Sync {
    fn value(&self, p: &ChartPoint) -> f64;
}

/// Adapter turning a closure into a [`ScalarField`].
pub struct FnField<F>(pub F);

impl<F: Fn(&ChartPoint) -> f64 + Sync> ScalarField for FnField<F> {
    fn value(&self, p: &ChartPoint) -> f64 {
        (self.0)(p)
    }
}

/// A hermitian-endomorphism-valued function, in a unitary frame of the
/// bundle `E` (of rank `rank()`).
pub trait EndomorphismField: Sync {
    fn rank(&self) -> usize;
    fn value(&self, p: &ChartPoint) -> CMatrix;
}

/// `f · Id_E`.
pub struct ScalarEndomorphism<'a> {
    pub field: &'a dyn ScalarField,
    pub rank: usize,
}

impl EndomorphismField for ScalarEndomorphism<'_> {
    fn rank(&self) -> usize {
        self.rank
    }
    fn value(&self, p: &ChartPoint) -> CMatrix {
        CMatrix::identity(self.rank, self.rank) * C64::new(self.field.value(p), 0.0)
    }
}

/// `diag(f_1, ..., f_r)` in the splitting frame.
pub struct DiagonalEndomorphism<'a>(pub Vec<&'a dyn ScalarField>);

impl EndomorphismField for DiagonalEndomorphism<'_> {
    fn rank(&self) -> usize {
        self.0.len()
    }
    fn value(&self, p: &ChartPoint) -> CMatrix {
        let r = self.0.len();
        CMatrix::from_fn(r, r, |i, j| {
            if i == j {
                C64::new(self.0[i].value(p), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }
}

/// Index of the real harmonic `(l, m)` with `-l ≤ m ≤ l`: `m > 0` is the
/// `cos(mθ)` branch and `m < 0` the `sin(|m|θ)` branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct HarmonicIndex {
    pub l: usize,
    pub m: i64,
}

/// Finite real spherical-harmonic expansion `Σ c_{lm} Y_{lm}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HarmonicField {
    terms: Vec<(HarmonicIndex, f64)>,
}

impl HarmonicField {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms(&[(0, 0, c)]).expect("degree zero is valid")
    }

    /// From `(l, m, c)` triples; repeated indices are summed.
    pub fn from_terms(terms: &[(usize, i64, f64)]) -> Result<Self> {
        let mut out: Vec<(HarmonicIndex, f64)> = Vec::new();
        for &(l, m, c) in terms {
            if m.unsigned_abs() as usize > l {
                return Err(Error::Domain(format!("harmonic index needs |m| ≤ l, got l = {l}, m = {m}")));
            }
            if !c.is_finite() {
                return Err(Error::Domain("non-finite harmonic coefficient".into()));
            }
            let idx = HarmonicIndex { l, m };
            match out.iter_mut().find(|(i, _)| *i == idx) {
                Some(entry) => entry.1 += c,
                None => out.push((idx, c)),
            }
        }
        out.sort_by_key(|a| a.0);
        Ok(Self { terms: out })
    }

    /// Axisymmetric field `Σ_j a_j t^j` (coefficients by increasing power).
    pub fn zonal_polynomial(coeffs: &[f64]) -> Result<Self> {
        let deg = coeffs.len().saturating_sub(1);
        let (x, w) = gauss_legendre(deg + 1)?;
        let mut terms = Vec::new();
        for l in 0..=deg {
            // ∫ p P_l dt · (2l+1)/2 gives the Legendre coefficient.
            let proj: f64 = x
                .iter()
                .zip(&w)
                .map(|(t, w)| w * horner(coeffs, *t) * legendre(l, *t))
                .sum();
            let c = proj * (2 * l + 1) as f64 / 2.0 / normalization(l, 0);
            if c != 0.0 {
                terms.push((l, 0, c));
            }
        }
        Self::from_terms(&terms)
    }

    /// Best band-limited approximation of degree `≤ degree` to `f`, by
    /// projection with an exact product rule.
    pub fn project(f: &dyn Fn(&ChartPoint) -> f64, degree: usize) -> Result<Self> {
        let nt = degree + 2;
        let na = 2 * degree + 2;
        let (x, w) = gauss_legendre(nt)?;
        let idx = all_indices(degree);
        let mut coeffs = vec![0.0; idx.len()];
        for (t, wt) in x.iter().zip(&w) {
            for a in 0..na {
                let p = ChartPoint { t: *t, azimuth: 2.0 * PI * a as f64 / na as f64 };
                let v = f(&p) * wt / (2.0 * na as f64);
                for (c, i) in coeffs.iter_mut().zip(&idx) {
                    *c += v * eval_harmonic(*i, &p);
                }
            }
        }
        let terms: Vec<_> = idx.iter().zip(&coeffs).map(|(i, c)| (i.l, i.m, *c)).collect();
        Self::from_terms(&terms)
    }

    /// Least-squares fit of degree `≤ degree` to scattered samples.
    pub fn fit_samples(samples: &[(ChartPoint, f64)], degree: usize) -> Result<Self> {
        let idx = all_indices(degree);
        if samples.len() < idx.len() {
            return Err(Error::Domain(format!(
                "{} samples cannot determine {} harmonic coefficients",
                samples.len(),
                idx.len()
            )));
        }
        let a = RMatrix::from_fn(samples.len(), idx.len(), |r, c| eval_harmonic(idx[c], &samples[r].0));
        let b = RVector::from_fn(samples.len(), |r, _| samples[r].1);
        let c = least_squares(&a, &b)?;
        let terms: Vec<_> = idx.iter().zip(c.iter()).map(|(i, c)| (i.l, i.m, *c)).collect();
        Self::from_terms(&terms)
    }

    pub fn terms(&self) -> impl Iterator<Item = (HarmonicIndex, f64)> + '_ {
        self.terms.iter().copied()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().filter(|(_, c)| *c != 0.0).map(|(i, _)| i.l).max().unwrap_or(0)
    }

    pub fn is_axisymmetric(&self) -> bool {
        self.terms.iter().all(|(i, c)| i.m == 0 || *c == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|(i, c)| (*i, c * s)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let all: Vec<_> = self
            .terms
            .iter()
            .chain(&other.terms)
            .map(|(i, c)| (i.l, i.m, *c))
            .collect();
        Self::from_terms(&all).expect("indices already validated")
    }

    /// Average over the round area form.
    pub fn mean(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(i, _)| i.l == 0)
            .map(|(_, c)| c)
            .sum()
    }

    /// Exact `Δf`.
    pub fn laplacian(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(i, c)| (*i, c * laplace_eigenvalue(i.l)))
                .collect(),
        }
    }

    /// `L²` norm against the round area form.
    pub fn l2_norm(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c * c).sum::<f64>().sqrt()
    }
}

impl ScalarField for HarmonicField {
    fn value(&self, p: &ChartPoint) -> f64 {
        self.terms.iter().map(|(i, c)| c * eval_harmonic(*i, p)).sum()
    }
}

fn all_indices(degree: usize) -> Vec<HarmonicIndex> {
    let mut v = Vec::new();
    for l in 0..=degree {
        for m in -(l as i64)..=(l as i64) {
            v.push(HarmonicIndex { l, m });
        }
    }
    v
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn legendre(l: usize, t: f64) -> f64 {
    assoc_legendre(l, 0, t)
}

/// Associated Legendre function `P_l^m(t)` without the Condon–Shortley phase.
fn assoc_legendre(l: usize, m: usize, t: f64) -> f64 {
    let s = (1.0 - t * t).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 0..m {
        pmm *= (2 * i + 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = t * (2 * m + 1) as f64 * pmm;
    let mut pm0 = pmm;
    for ll in (m + 2)..=l {
        let next = (t * (2 * ll - 1) as f64 * pm1 - (ll + m - 1) as f64 * pm0) / (ll - m) as f64;
        pm0 = pm1;
        pm1 = next;
    }
    pm1
}

/// Factor making `N P_l^m trig(mθ)` orthonormal for `dt dθ / 4π`.
fn normalization(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0; // (l-m)!/(l+m)!
    for j in (l - m + 1)..=(l + m) {
        ratio /= j as f64;
    }
    let base = (2 * l + 1) as f64 * ratio;
    if m == 0 { base.sqrt() } else { (2.0 * base).sqrt() }
}

pub(crate) fn eval_harmonic(i: HarmonicIndex, p: &ChartPoint) -> f64 {
    let m = i.m.unsigned_abs() as usize;
    let trig = match i.m {
        0 => 1.0,
        x if x > 0 => (m as f64 * p.azimuth).cos(),
        _ => (m as f64 * p.azimuth).sin(),
    };
    normalization(i.l, m) * assoc_legendre(i.l, m, p.t) * trig
}

/// Sixth-order finite-difference approximation of `Δf` at `p`, using the
/// chart expression `-4π[∂_t((1-t²)∂_t f) + ∂²_θ f / (1-t²)]`.
pub fn numeric_laplacian(f: &dyn Fn(&ChartPoint) -> f64, p: &ChartPoint, h: f64) -> Result<f64> {
    if p.t.abs() + 3.0 * h >= 1.0 {
        return Err(Error::Domain("finite-difference stencil leaves the chart".into()));
    }
    let at = |dt: f64, da: f64| f(&ChartPoint { t: p.t + dt, azimuth: p.azimuth + da });
    let f0 = at(0.0, 0.0);
    // Sixth-order central stencils.
    let d1 = |g: &dyn Fn(f64) -> f64| {
        (45.0 * (g(h) - g(-h)) - 9.0 * (g(2.0 * h) - g(-2.0 * h)) + (g(3.0 * h) - g(-3.0 * h))) / (60.0 * h)
    };
    let d2 = |g: &dyn Fn(f64) -> f64| {
        (270.0 * (g(h) + g(-h)) - 27.0 * (g(2.0 * h) + g(-2.0 * h)) + 2.0 * (g(3.0 * h) + g(-3.0 * h))
            - 490.0 * f0)
            / (180.0 * h * h)
    };
    let ft = d1(&|d| at(d, 0.0));
    let ftt = d2(&|d| at(d, 0.0));
    let faa = d2(&|d| at(0.0, d));
    let s = 1.0 - p.t * p.t;
    Ok(-4.0 * PI * (s * ftt - 2.0 * p.t * ft + faa / s))
}
