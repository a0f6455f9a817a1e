//! The four subcommands. Each returns the list of failed assertions; the
//! caller decides whether they affect the exit code.

use crate::config::{ConfigError, ExperimentConfig, OracleKind};
use crate::output::Writer;
use quantlap_core::balance::{t_iterate, t_map, BalanceOptions, BalanceState};
use quantlap_core::bundles::{bergman_kernel_diag, toeplitz_kernel_diag, InnerProductMatrix, SampledBundle};
use quantlap_core::field::{laplace_eigenvalue, HarmonicField, ScalarEndomorphism, ScalarField};
use quantlap_core::geometry::ChartPoint;
use quantlap_core::linalg::{op_norm_hermitian, CMatrix, C64};
use quantlap_core::oracle::{
    bergman_a1, exact_balanced_eigenvalue, hessian_a1, hessian_a2_round, sturm_liouville_spectrum, toeplitz_b1,
};
use quantlap_core::quantization::{BundleSpec, Embedding};
use quantlap_core::spectral::{eigendecompose, fit_inverse_powers, hessian_value, AsymptoticFit};
use quantlap_core::Reduction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CmdError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Numeric { context: String, source: quantlap_core::Error },
    #[error("{0}")]
    NonConvergence(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

trait Context<T> {
    fn at(self, context: impl FnOnce() -> String) -> Result<T, CmdError>;
}

impl<T> Context<T> for quantlap_core::Result<T> {
    fn at(self, context: impl FnOnce() -> String) -> Result<T, CmdError> {
        self.map_err(|source| CmdError::Numeric { context: context(), source })
    }
}

pub type Failures = Vec<String>;

fn reduction(cfg: &ExperimentConfig) -> Reduction {
    if cfg.deterministic {
        Reduction::Ordered
    } else {
        Reduction::Unordered
    }
}

/// `Hilb(h)`, optionally perturbed by `ε (tr H/N) B B*/N` with seeded `B`.
fn starting_point(cfg: &ExperimentConfig, bundle: &SampledBundle, k: usize) -> Result<InnerProductMatrix, CmdError> {
    let h = bundle.hilb().at(|| format!("k = {k}: Hilb"))?;
    if cfg.start_perturbation == 0.0 {
        return Ok(h);
    }
    let n = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ k as u64);
    let b = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let scale = cfg.start_perturbation * h.matrix().trace().re / (n * n) as f64;
    InnerProductMatrix::new(h.matrix() + &b * b.adjoint() * C64::new(scale, 0.0)).at(|| format!("k = {k}: start"))
}

fn run_balance(
    cfg: &ExperimentConfig,
    bundle: &SampledBundle,
    k: usize,
    log: &mut Vec<LogRow>,
) -> Result<BalanceState, CmdError> {
    let h0 = starting_point(cfg, bundle, k)?;
    let opts = BalanceOptions { tol: cfg.balance_tol, max_iter: cfg.balance_max_iter };
    let start = Instant::now();
    let deterministic = cfg.deterministic;
    let state = t_iterate(bundle, &h0, opts, &mut |r| {
        log.push(LogRow {
            iter: r.iteration,
            residual: r.residual,
            time: (!deterministic).then(|| start.elapsed().as_secs_f64()),
        })
    })
    .at(|| format!("k = {k}: balancing"))?;
    if !state.converged {
        return Err(CmdError::NonConvergence(format!(
            "k = {k}: balancing stopped after {} iterations at residual {:.3e}",
            state.iterations, state.residual
        )));
    }
    Ok(state)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    pub residual: f64,
    /// Seconds since the start; omitted in deterministic runs.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub j: usize,
    pub nu: f64,
    pub rescaled: f64,
    pub cluster_i: Option<usize>,
    pub oracle_lambda: Option<f64>,
    pub abs_err: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SpectrumData {
    pub k: usize,
    pub dim: usize,
    pub balance_iterations: Option<usize>,
    pub balance_residual: Option<f64>,
    /// `‖P*P(Id)‖_F`, zero up to rounding.
    pub kernel_residual: f64,
    pub max_checked_error: Option<f64>,
    pub failures: Failures,
    pub rows: Vec<Row>,
}

fn spectrum_at(cfg: &ExperimentConfig, spec: &BundleSpec, k: usize) -> Result<SpectrumData, CmdError> {
    let bundle = spec.bundle(k).at(|| format!("k = {k}: quadrature"))?;
    let (h, balance) = if cfg.balance {
        let state = run_balance(cfg, &bundle, k, &mut Vec::new())?;
        (state.h.clone(), Some(state))
    } else {
        (InnerProductMatrix::new(bundle.l2_gram()).at(|| format!("k = {k}: L² Gram"))?, None)
    };
    let emb = Embedding::new(&bundle, &h).at(|| format!("k = {k}: embedding"))?.with_reduction(reduction(cfg));
    let form = emb.assemble_pstarp().at(|| format!("k = {k}: assembly"))?;
    let n = emb.dim();
    let kernel_residual = quantlap_core::linalg::frobenius(&form.apply(&CMatrix::identity(n, n)).at(|| format!("k = {k}"))?);
    let report = eigendecompose(&form, k).at(|| format!("k = {k}: eigensolver"))?;

    let line = cfg.rank() == 1;
    let sl = if cfg.oracle == OracleKind::SturmLiouville {
        let count = (cfg.spectrum_check + 1).min(report.len());
        Some(sturm_liouville_spectrum(&spec.volume, count, cfg.sl_resolution).at(|| "Sturm–Liouville oracle".into())?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(report.len());
    let mut failures = Vec::new();
    let mut worst: Option<f64> = None;
    for r in report.rows() {
        let cluster = report.clusters().iter().position(|c| c.range.contains(&r.j));
        let lambda = match (&sl, line) {
            (Some(sl), _) => sl.get(r.j).copied(),
            (None, true) => cluster.map(laplace_eigenvalue),
            (None, false) => None,
        };
        let abs_err = lambda.map(|l| (r.rescaled - l).abs());
        let checked = r.j >= 1 && r.j <= cfg.spectrum_check;
        match cfg.oracle {
            OracleKind::Exact => {
                let i = cluster.expect("round clusters cover the spectrum");
                let want = exact_balanced_eigenvalue(i, k).at(|| format!("k = {k}: closed form"))?;
                let err = (r.nu - want).abs();
                worst = Some(worst.unwrap_or(0.0).max(err));
                if err >= cfg.spectrum_tol {
                    failures.push(format!("k = {k}, j = {}: |ν - ν_exact| = {err:.3e}", r.j));
                }
            }
            _ if checked && line => {
                if let (Some(l), Some(e)) = (lambda, abs_err) {
                    let rel = e / l;
                    worst = Some(worst.unwrap_or(0.0).max(rel));
                    if rel >= cfg.spectrum_tol {
                        failures.push(format!("k = {k}, j = {}: relative error {rel:.3e}", r.j));
                    }
                }
            }
            _ => {}
        }
        rows.push(Row { j: r.j, nu: r.nu, rescaled: r.rescaled, cluster_i: cluster, oracle_lambda: lambda, abs_err });
    }
    Ok(SpectrumData {
        k,
        dim: n,
        balance_iterations: balance.as_ref().map(|s| s.iterations),
        balance_residual: balance.as_ref().map(|s| s.residual),
        kernel_residual,
        max_checked_error: worst,
        failures,
        rows,
    })
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<Failures, CmdError> {
    let spec = cfg.bundle_spec()?;
    let results: Vec<_> = cfg.degrees.par_iter().map(|&k| spectrum_at(cfg, &spec, k)).collect();
    let mut out = Writer::new(cfg, "spectrum")?;
    let mut failures = Vec::new();
    for res in results {
        let data = res?;
        out.csv(&format!("spectrum_k{}.csv", data.k), &data.rows)?;
        failures.extend(data.failures.iter().cloned());
        out.json(&format!("spectrum_k{}.json", data.k), &data)?;
    }
    Ok(failures)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BalanceData {
    pub k: usize,
    pub iterations: usize,
    pub residual: f64,
    /// `‖T(H)/c - H‖_op / ‖H‖_op` with `c` matching the traces.
    pub fixed_point_defect: f64,
    /// Whether the last ten residuals are non-increasing within `1e-14`.
    pub monotone_tail: bool,
    pub log: Vec<LogRow>,
}

fn balance_at(cfg: &ExperimentConfig, spec: &BundleSpec, k: usize) -> Result<BalanceData, CmdError> {
    let bundle = spec.bundle(k).at(|| format!("k = {k}: quadrature"))?;
    let mut log = Vec::new();
    let state = run_balance(cfg, &bundle, k, &mut log)?;
    let t = t_map(&bundle, &state.h).at(|| format!("k = {k}: T map"))?;
    let c = t.matrix().trace().re / state.h.matrix().trace().re;
    let diff = t.matrix() * C64::new(1.0 / c, 0.0) - state.h.matrix();
    let fixed_point_defect = op_norm_hermitian(&diff) / op_norm_hermitian(state.h.matrix());
    let tail = &log[log.len().saturating_sub(10)..];
    let monotone_tail = tail.windows(2).all(|w| w[1].residual <= w[0].residual + 1e-14);
    Ok(BalanceData { k, iterations: state.iterations, residual: state.residual, fixed_point_defect, monotone_tail, log })
}

pub fn balance(cfg: &ExperimentConfig) -> Result<Failures, CmdError> {
    let spec = cfg.bundle_spec()?;
    let results: Vec<_> = cfg.degrees.par_iter().map(|&k| balance_at(cfg, &spec, k)).collect();
    let mut out = Writer::new(cfg, "balance")?;
    let mut failures = Vec::new();
    for res in results {
        let data = res?;
        if !data.monotone_tail {
            failures.push(format!("k = {}: residual tail is not monotone", data.k));
        }
        if data.fixed_point_defect > 1e3 * cfg.balance_tol {
            failures.push(format!("k = {}: fixed-point defect {:.3e}", data.k, data.fixed_point_defect));
        }
        out.csv(&format!("balance_k{}.csv", data.k), &data.log)?;
        out.json(&format!("balance_k{}.json", data.k), &data)?;
    }
    Ok(failures)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub quantity: String,
    pub t: Option<f64>,
    pub azimuth: Option<f64>,
    pub degrees: Vec<usize>,
    pub values: Vec<f64>,
    pub first_power: i32,
    pub coefficients: Vec<f64>,
    pub residual: f64,
    pub condition: f64,
    /// Residual above `fit_residual_max`.
    pub flagged: bool,
    /// `(power, oracle value, fitted value, relative error)`.
    pub comparisons: Vec<(i32, f64, f64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ValueRow {
    quantity: String,
    point: Option<usize>,
    k: usize,
    value: f64,
}

fn probe_points() -> Vec<ChartPoint> {
    [(-0.6, 0.4), (0.0, 2.0), (0.5, 4.1)].iter().map(|&(t, a)| ChartPoint::new(t, a).expect("interior")).collect()
}

fn fit_report(
    cfg: &ExperimentConfig,
    quantity: &str,
    point: Option<&ChartPoint>,
    values: Vec<f64>,
    first_power: i32,
    oracles: &[(i32, f64)],
) -> Result<FitReport, CmdError> {
    let AsymptoticFit { degrees, values, coefficients, residual, condition, .. } =
        fit_inverse_powers(&cfg.degrees, &values, first_power, cfg.fit_terms).at(|| format!("{quantity}: fit"))?;
    let comparisons = oracles
        .iter()
        .filter_map(|&(power, want)| {
            let idx = usize::try_from(power - first_power).ok()?;
            let got = *coefficients.get(idx)?;
            Some((power, want, got, (got - want).abs() / want.abs().max(1.0)))
        })
        .collect();
    Ok(FitReport {
        quantity: quantity.into(),
        t: point.map(|p| p.t),
        azimuth: point.map(|p| p.azimuth),
        degrees,
        values,
        first_power,
        coefficients,
        residual,
        condition,
        flagged: residual > cfg.fit_residual_max,
        comparisons,
    })
}

struct Sample {
    hessian: f64,
    bergman: Vec<f64>,
    toeplitz: Vec<f64>,
}

fn sample_at(spec: &BundleSpec, phi: &HarmonicField, reduction: Reduction, k: usize) -> Result<Sample, CmdError> {
    let ctx = spec.context(k).at(|| format!("k = {k}: context"))?.with_reduction(reduction);
    let rank = spec.rank();
    let ephi = ScalarEndomorphism { field: phi, rank };
    let hessian = hessian_value(&ctx, &ephi).at(|| format!("k = {k}: Hessian"))?;
    let pts = probe_points();
    let kf = k as f64;
    let bergman = bergman_kernel_diag(ctx.bundle(), &spec.metric, &pts)
        .at(|| format!("k = {k}: Bergman kernel"))?
        .iter()
        .map(|m| m.trace().re - rank as f64 * kf)
        .collect();
    let toeplitz = toeplitz_kernel_diag(ctx.bundle(), &spec.metric, &ephi, None, &pts)
        .at(|| format!("k = {k}: Toeplitz kernel"))?
        .iter()
        .zip(&pts)
        .map(|(m, p)| m.trace().re - rank as f64 * kf * phi.value(p))
        .collect();
    Ok(Sample { hessian, bergman, toeplitz })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AsymptoticsData {
    pub fits: Vec<FitReport>,
    pub failures: Failures,
}

pub fn asymptotics(cfg: &ExperimentConfig) -> Result<Failures, CmdError> {
    if cfg.degrees.len() < 3 || cfg.fit_terms > cfg.degrees.len() {
        return Err(ConfigError::Invalid(format!(
            "asymptotics needs at least max(3, fit_terms) degrees, got {}",
            cfg.degrees.len()
        ))
        .into());
    }
    let spec = cfg.bundle_spec()?;
    let phi = cfg.phi_field()?;
    let psi = cfg.psi()?;
    let red = reduction(cfg);
    let samples =
        cfg.degrees.par_iter().map(|&k| sample_at(&spec, &phi, red, k)).collect::<Result<Vec<_>, _>>()?;

    // Closed-form references exist for line bundles with the round volume.
    let line_round_volume = cfg.rank() == 1 && spec.volume.is_round();
    let mut hessian_oracles = Vec::new();
    if line_round_volume {
        hessian_oracles.push((1, hessian_a1(&phi)));
        if cfg.is_round() {
            hessian_oracles.push((2, hessian_a2_round(&phi)));
        }
    }
    let mut fits = vec![fit_report(cfg, "hessian", None, samples.iter().map(|s| s.hessian).collect(), 1, &hessian_oracles)?];
    let lap = phi.laplacian();
    for (i, p) in probe_points().iter().enumerate() {
        let a1 = if line_round_volume { vec![(0, bergman_a1(&psi).value(p))] } else { Vec::new() };
        let values = samples.iter().map(|s| s.bergman[i]).collect();
        fits.push(fit_report(cfg, "bergman", Some(p), values, 0, &a1)?);
        let b1 = if line_round_volume { vec![(0, toeplitz_b1(&phi, &psi, lap.value(p), p))] } else { Vec::new() };
        let values = samples.iter().map(|s| s.toeplitz[i]).collect();
        fits.push(fit_report(cfg, "toeplitz", Some(p), values, 0, &b1)?);
    }

    let mut failures = Vec::new();
    for f in &fits {
        if f.flagged {
            failures.push(format!("{}: fit residual {:.3e} above threshold", f.quantity, f.residual));
        }
        for &(power, want, got, rel) in &f.comparisons {
            if rel > cfg.asymptotics_tol {
                failures.push(format!("{} k^-{power}: fitted {got:.6} vs oracle {want:.6}", f.quantity));
            }
        }
    }
    let mut values = Vec::new();
    for (s, &k) in samples.iter().zip(&cfg.degrees) {
        values.push(ValueRow { quantity: "hessian".into(), point: None, k, value: s.hessian });
        for (i, v) in s.bergman.iter().enumerate() {
            values.push(ValueRow { quantity: "bergman".into(), point: Some(i), k, value: *v });
        }
        for (i, v) in s.toeplitz.iter().enumerate() {
            values.push(ValueRow { quantity: "toeplitz".into(), point: Some(i), k, value: *v });
        }
    }
    let mut out = Writer::new(cfg, "asymptotics")?;
    out.csv("asymptotics_values.csv", &values)?;
    out.json("asymptotics.json", AsymptoticsData { fits, failures: failures.clone() })?;
    Ok(failures)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub file: String,
    pub command: String,
    pub k: Option<usize>,
    pub metric: String,
    pub value: Option<f64>,
    pub status: String,
}

fn status(failures: Option<&serde_json::Value>) -> String {
    match failures.and_then(|f| f.as_array()) {
        Some(a) if a.is_empty() => "pass".into(),
        Some(a) => format!("fail ({})", a.len()),
        None => "n/a".into(),
    }
}

/// Collects every JSON report in `dir` into one table.
pub fn report(cfg: &ExperimentConfig) -> Result<Failures, CmdError> {
    let dir: &Path = &cfg.out_dir;
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for path in entries {
        let text = std::fs::read_to_string(&path)?;
        let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) else { continue };
        if v.get("tool").and_then(|t| t.as_str()) != Some("quantlap") {
            continue;
        }
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        let command = v["command"].as_str().unwrap_or_default().to_string();
        let data = &v["data"];
        let k = data["k"].as_u64().map(|k| k as usize);
        let (metric, value, st) = match command.as_str() {
            "spectrum" => ("max_checked_error", data["max_checked_error"].as_f64(), status(data.get("failures"))),
            "balance" => ("residual", data["residual"].as_f64(), {
                if data["monotone_tail"].as_bool() == Some(true) { "pass".into() } else { "fail".into() }
            }),
            "asymptotics" => {
                let a1 = data["fits"][0]["coefficients"][0].as_f64();
                ("hessian_a1", a1, status(data.get("failures")))
            }
            _ => continue,
        };
        if st.starts_with("fail") {
            failures.push(format!("{file}: {st}"));
        }
        rows.push(SummaryRow { file, command, k, metric: metric.into(), value, status: st });
    }
    let mut out = Writer::new(cfg, "report")?;
    out.csv("summary.csv", &rows)?;
    for r in &rows {
        let k = r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
        let v = r.value.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
        println!("{:<28} {:<12} k={:<4} {:<18} {:<14} {}", r.file, r.command, k, r.metric, v, r.status);
    }
    Ok(failures)
}
