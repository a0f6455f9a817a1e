//! Spectrum of `P*P`, matching against reference spectra, eigenspace
//! diagnostics and inverse-power fits in `k`.

use crate::field::{EndomorphismField, ScalarField};
use crate::linalg::{least_squares, symmetric_eigen, CMatrix, RMatrix, RVector};
use crate::prelude::*;
use crate::quantization::{BundleSpec, HermitianBasis, PStarPForm, QuantizationContext};
use crate::{Error, Result};
use core::f64::consts::PI;
use core::ops::Range;

/// A run of consecutive eigenvalues treated as one eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub range: Range<usize>,
    /// Index `i` of the matched reference eigenvalue, if any.
    pub oracle_index: Option<usize>,
    pub oracle_lambda: Option<f64>,
}

/// How eigenvalues are grouped into clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterRule {
    /// Sizes taken from the round multiplicities `1, 3, 5, ...`.
    RoundMultiplicities,
    /// Greedy: a new cluster starts where consecutive eigenvalues differ by
    /// more than this fraction of the largest eigenvalue.
    RelativeGap(f64),
}

/// Eigenvalues and eigenmatrices of `P*P` at one degree `k`.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    k: usize,
    eigenvalues: Vec<f64>,
    vectors: RMatrix,
    basis: HermitianBasis,
    clusters: Vec<Cluster>,
}

/// `4π k^{n+1} ν` with `n = 1`.
pub fn rescale(nu: f64, k: usize) -> f64 {
    4.0 * PI * (k * k) as f64 * nu
}

/// Full symmetric eigendecomposition of the assembled form.
pub fn eigendecompose(form: &PStarPForm, k: usize) -> Result<SpectrumReport> {
    let (eigenvalues, vectors) = symmetric_eigen(form.matrix())?;
    if let Some(lo) = eigenvalues.first() {
        let scale = eigenvalues.last().copied().unwrap_or(0.0).abs().max(1.0);
        if *lo < -1e-9 * scale {
            return Err(Error::Precision(format!(
                "P*P is indefinite (smallest eigenvalue {lo:.3e}); refine the quadrature"
            )));
        }
    }
    let mut report = SpectrumReport {
        k,
        eigenvalues,
        vectors,
        basis: form.basis().clone(),
        clusters: Vec::new(),
    };
    report.cluster(ClusterRule::RoundMultiplicities);
    Ok(report)
}

impl SpectrumReport {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rescaled(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|v| rescale(*v, self.k)).collect()
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// Coordinates of eigenvector `j` in the hermitian basis.
    pub fn eigenvector(&self, j: usize) -> RVector {
        self.vectors.column(j).into_owned()
    }

    /// Eigenvector `j` as a hermitian matrix with `tr A² = 1`.
    pub fn eigenmatrix(&self, j: usize) -> Result<CMatrix> {
        let v = self.eigenvector(j);
        self.basis.assemble(v.as_slice())
    }

    /// Regroups eigenvalues into clusters; previous oracle matches are dropped.
    pub fn cluster(&mut self, rule: ClusterRule) {
        let n = self.eigenvalues.len();
        let mut clusters = Vec::new();
        match rule {
            ClusterRule::RoundMultiplicities => {
                let mut start = 0;
                let mut i = 0;
                while start < n {
                    let end = (start + 2 * i + 1).min(n);
                    clusters.push(Cluster { range: start..end, oracle_index: None, oracle_lambda: None });
                    start = end;
                    i += 1;
                }
            }
            ClusterRule::RelativeGap(rel) => {
                let top = self.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let mut start = 0;
                for j in 1..=n {
                    if j == n || self.eigenvalues[j] - self.eigenvalues[j - 1] > rel * top {
                        clusters.push(Cluster { range: start..j, oracle_index: None, oracle_lambda: None });
                        start = j;
                    }
                }
            }
        }
        self.clusters = clusters;
    }

    /// Matches clusters to reference eigenvalues `lambdas[i]` (indexed by
    /// cluster order) and records them.
    pub fn match_oracle(&mut self, lambdas: &[f64]) {
        for (i, c) in self.clusters.iter_mut().enumerate() {
            c.oracle_index = lambdas.get(i).map(|_| i);
            c.oracle_lambda = lambdas.get(i).copied();
        }
    }

    /// Cluster containing eigenvalue `j`.
    pub fn cluster_of(&self, j: usize) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.range.contains(&j))
    }

    /// Rows `(j, ν, 4πk²ν, cluster index, reference λ, |rescaled - λ|)`.
    pub fn rows(&self) -> Vec<SpectrumRow> {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(j, nu)| {
                let c = self.cluster_of(j);
                let lambda = c.and_then(|c| c.oracle_lambda);
                let rescaled = rescale(*nu, self.k);
                SpectrumRow {
                    j,
                    nu: *nu,
                    rescaled,
                    cluster: c.and_then(|c| c.oracle_index),
                    oracle_lambda: lambda,
                    abs_err: lambda.map(|l| (rescaled - l).abs()),
                }
            })
            .collect()
    }
}

/// One line of a spectrum table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub j: usize,
    pub nu: f64,
    pub rescaled: f64,
    pub cluster: Option<usize>,
    pub oracle_lambda: Option<f64>,
    pub abs_err: Option<f64>,
}

/// `min_{A ∈ span} ‖H_A - φ‖²_{L²}` over the eigenmatrices `range` of `report`.
pub fn eigenspace_distance(
    ctx: &QuantizationContext,
    phi: &dyn ScalarField,
    report: &SpectrumReport,
    range: Range<usize>,
) -> Result<f64> {
    if range.is_empty() || range.end > report.len() {
        return Err(Error::Domain("eigenspace cluster is empty or out of range".into()));
    }
    let bundle = ctx.bundle();
    let w = bundle.weights();
    let target: Vec<f64> = bundle.grid().points().iter().map(|p| phi.value(p)).collect();
    let columns = range
        .clone()
        .map(|j| ctx.h_of(&report.eigenmatrix(j)?))
        .collect::<Result<Vec<_>>>()?;
    let rows = w.len();
    let design = RMatrix::from_fn(rows, columns.len(), |r, c| w[r].sqrt() * columns[c][r]);
    let rhs = RVector::from_fn(rows, |r, _| w[r].sqrt() * target[r]);
    let coef = least_squares(&design, &rhs)?;
    let resid = rhs - design * coef;
    Ok(resid.norm_squared())
}

/// `max_{a,b} |tr(A_a A_b) - k ⟨H_{A_a}, H_{A_b}⟩_{L²}|` over a cluster.
pub fn trace_pairing_deviation(ctx: &QuantizationContext, report: &SpectrumReport, range: Range<usize>) -> Result<f64> {
    let w = ctx.bundle().weights();
    let mats = range.clone().map(|j| report.eigenmatrix(j)).collect::<Result<Vec<_>>>()?;
    let hs = mats.iter().map(|a| ctx.h_of(a)).collect::<Result<Vec<_>>>()?;
    let k = report.k() as f64;
    let mut worst: f64 = 0.0;
    for a in 0..mats.len() {
        for b in 0..=a {
            let tr = crate::linalg::trace_product(&mats[a], &mats[b]).re;
            let l2: f64 = hs[a].iter().zip(&hs[b]).zip(w).map(|((x, y), w)| w * x * y).sum();
            worst = worst.max((tr - k * l2).abs());
        }
    }
    Ok(worst)
}

/// Least-squares fit `v(k) ≈ Σ_{j<terms} c_j k^{-(first_power + j)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticFit {
    pub degrees: Vec<usize>,
    pub values: Vec<f64>,
    pub first_power: i32,
    pub coefficients: Vec<f64>,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    /// Ratio of extreme singular values of the design matrix.
    pub condition: f64,
}

impl AsymptoticFit {
    /// Coefficient of `k^{-power}`, if fitted.
    pub fn coefficient(&self, power: i32) -> Option<f64> {
        let idx = power - self.first_power;
        if idx < 0 {
            return None;
        }
        self.coefficients.get(idx as usize).copied()
    }
}

/// Fits inverse powers of `k`. A rank-deficient design does not fail: the
/// minimum-norm solution is returned and [`AsymptoticFit::condition`] shows it.
pub fn fit_inverse_powers(degrees: &[usize], values: &[f64], first_power: i32, terms: usize) -> Result<AsymptoticFit> {
    if degrees.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: degrees.len(), found: values.len() });
    }
    if degrees.len() < 3 || terms == 0 || terms > degrees.len() {
        return Err(Error::Domain(format!(
            "an inverse-power fit with {terms} terms needs at least max(3, terms) degrees, got {}",
            degrees.len()
        )));
    }
    let design = RMatrix::from_fn(degrees.len(), terms, |r, c| (degrees[r] as f64).powi(-(first_power + c as i32)));
    let rhs = RVector::from_column_slice(values);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let coef = svd
        .solve(&rhs, 1e-14 * smax)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    let resid = &rhs - &design * &coef;
    Ok(AsymptoticFit {
        degrees: degrees.to_vec(),
        values: values.to_vec(),
        first_power,
        coefficients: coef.iter().copied().collect(),
        residual: (resid.norm_squared() / degrees.len() as f64).sqrt(),
        condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
    })
}

/// Slope of `log y` against `log x` by least squares.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pooled_log_log_slope(&[(xs.to_vec(), ys.to_vec())])
}

/// Common slope of several `log y ~ log x` series, each with its own
/// intercept (a fixed-effects regression).
pub fn pooled_log_log_slope(series: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let g = series.len();
    let rows: usize = series.iter().map(|(x, _)| x.len()).sum();
    if g == 0 || rows < g + 1 {
        return Err(Error::Domain("not enough points for a log-log slope".into()));
    }
    let mut design = RMatrix::zeros(rows, g + 1);
    let mut rhs = RVector::zeros(rows);
    let mut r = 0;
    for (s, (xs, ys)) in series.iter().enumerate() {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
        }
        for (x, y) in xs.iter().zip(ys) {
            if !(*x > 0.0 && *y > 0.0) {
                return Err(Error::Domain("log-log slope needs positive data".into()));
            }
            design[(r, 0)] = x.ln();
            design[(r, s + 1)] = 1.0;
            rhs[r] = y.ln();
            r += 1;
        }
    }
    Ok(least_squares(&design, &rhs)?[0])
}

/// `tr(Q_φ P*P Q_φ)` at degree `k`, computed without assembling `P*P`.
pub fn hessian_value(ctx: &QuantizationContext, phi: &dyn EndomorphismField) -> Result<f64> {
    let q = ctx.q_of(phi)?;
    ctx.form_value(&q, &q)
}

/// `tr(Q_φ P*P Q_ψ)` at degree `k`.
pub fn polarized_hessian_value(
    ctx: &QuantizationContext,
    phi: &dyn EndomorphismField,
    psi: &dyn EndomorphismField,
) -> Result<f64> {
    let qa = ctx.q_of(phi)?;
    let qb = ctx.q_of(psi)?;
    ctx.form_value(&qa, &qb)
}

/// Fits `tr(Q_φ P*P Q_φ) ≈ a_1/k + a_2/k² + ...` over `degrees`.
pub fn hessian_asymptotics(
    spec: &BundleSpec,
    phi: &dyn EndomorphismField,
    degrees: &[usize],
    terms: usize,
) -> Result<AsymptoticFit> {
    let values = degrees
        .iter()
        .map(|&k| hessian_value(&spec.context(k)?, phi))
        .collect::<Result<Vec<_>>>()?;
    fit_inverse_powers(degrees, &values, 1, terms)
}

/// Fits `tr(Q_φ P*P Q_ψ)` the same way.
pub fn polarized_hessian_asymptotics(
    spec: &BundleSpec,
    phi: &dyn EndomorphismField,
    psi: &dyn EndomorphismField,
    degrees: &[usize],
    terms: usize,
) -> Result<AsymptoticFit> {
    let values = degrees
        .iter()
        .map(|&k| polarized_hessian_value(&spec.context(k)?, phi, psi))
        .collect::<Result<Vec<_>>>()?;
    fit_inverse_powers(degrees, &values, 1, terms)
}
