//! Experiment configuration: a flat TOML table, validated into core types.

use quantlap_core::bundles::{VolumeForm, WeightedMetric};
use quantlap_core::field::HarmonicField;
use quantlap_core::geometry::ChartPoint;
use quantlap_core::quantization::{BundleSpec, QuadraturePolicy};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFamily {
    /// `ψ = 0`.
    Round,
    /// `ψ = metric_constant`.
    Constant,
    /// `ψ(t) = Σ metric_axial[j] t^j`.
    Axial,
    /// `ψ = Σ c Y_{l,m}` from `metric_harmonics = [[l, m, c], ...]`.
    Harmonic,
    /// `ψ` fitted to the CSV `metric_samples` (columns `t, azimuth, value`).
    Samples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeFamily {
    Round,
    /// `Ω ∝ exp(Σ volume_axial[j] t^j)` times the round form.
    ExpAxial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Closed-form balanced eigenvalues, compared on `ν` (round only).
    Exact,
    /// Round Laplace eigenvalues `4πi(i+1)`, compared on `4πk²ν`.
    Laplace,
    /// Sturm–Liouville discretization of `Δ` for the configured volume.
    SturmLiouville,
}

/// Every key with its default. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub degrees: Vec<usize>,
    /// Twists `a ≥ b ≥ ...` of `E = O(a) ⊕ O(b) ⊕ ...`; `[0]` is the line bundle.
    pub twists: Vec<i64>,
    pub metric: MetricFamily,
    pub metric_constant: f64,
    pub metric_axial: Vec<f64>,
    pub metric_harmonics: Vec<(usize, i64, f64)>,
    pub metric_samples: Option<PathBuf>,
    pub metric_sample_degree: usize,
    pub volume: VolumeFamily,
    pub volume_axial: Vec<f64>,
    pub quadrature_oversample: usize,
    /// Balance before assembling `P*P` instead of using `Hilb(h)`.
    pub balance: bool,
    pub balance_tol: f64,
    pub balance_max_iter: usize,
    /// Size of the random perturbation of the starting inner product.
    pub start_perturbation: f64,
    pub seed: u64,
    pub oracle: OracleKind,
    /// Absolute on `ν` for `exact`, relative on `4πk²ν` otherwise.
    pub spectrum_tol: f64,
    /// Number of nonzero eigenvalues checked under `--assert`.
    pub spectrum_check: usize,
    pub sl_resolution: usize,
    /// Test field for `asymptotics`, `[[l, m, c], ...]`.
    pub phi: Vec<(usize, i64, f64)>,
    pub fit_terms: usize,
    pub fit_residual_max: f64,
    pub asymptotics_tol: f64,
    pub deterministic: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            degrees: vec![2, 4, 8],
            twists: vec![0],
            metric: MetricFamily::Round,
            metric_constant: 0.0,
            metric_axial: Vec::new(),
            metric_harmonics: Vec::new(),
            metric_samples: None,
            metric_sample_degree: 4,
            volume: VolumeFamily::Round,
            volume_axial: Vec::new(),
            quadrature_oversample: 1,
            balance: false,
            balance_tol: 1e-12,
            balance_max_iter: 10_000,
            start_perturbation: 0.0,
            seed: 0x5eed,
            oracle: OracleKind::Laplace,
            spectrum_tol: 1e-9,
            spectrum_check: 8,
            sl_resolution: quantlap_core::oracle::DEFAULT_SL_RESOLUTION,
            phi: vec![(1, 0, 1.0)],
            fit_terms: 3,
            fit_residual_max: 1e-6,
            asymptotics_tol: 0.05,
            deterministic: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        // Sample files are resolved against the config location.
        if let (Some(samples), Some(dir)) = (cfg.metric_samples.as_mut(), path.parent()) {
            if samples.is_relative() {
                *samples = dir.join(&*samples);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.degrees.is_empty() {
            return invalid("`degrees` is empty");
        }
        if self.degrees[0] < 1 {
            return invalid("degrees must be at least 1");
        }
        if self.degrees.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("`degrees` must be strictly increasing");
        }
        if self.twists.is_empty() {
            return invalid("`twists` is empty");
        }
        if self.twists.windows(2).any(|w| w[0] < w[1]) {
            return invalid("`twists` must be non-increasing");
        }
        for (name, v) in [
            ("balance_tol", self.balance_tol),
            ("spectrum_tol", self.spectrum_tol),
            ("fit_residual_max", self.fit_residual_max),
            ("asymptotics_tol", self.asymptotics_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("`{name}` must be a positive number, got {v}"));
            }
        }
        if !(self.start_perturbation >= 0.0 && self.start_perturbation.is_finite()) {
            return invalid("`start_perturbation` must be non-negative");
        }
        if self.quadrature_oversample == 0 {
            return invalid("`quadrature_oversample` must be at least 1");
        }
        if self.fit_terms == 0 {
            return invalid("`fit_terms` must be at least 1");
        }
        if self.sl_resolution < 16 {
            return invalid("`sl_resolution` must be at least 16");
        }
        if self.metric == MetricFamily::Samples && self.metric_samples.is_none() {
            return invalid("metric = \"samples\" needs `metric_samples`");
        }
        if self.phi.is_empty() {
            return invalid("`phi` is empty");
        }
        for &(l, m, _) in self.phi.iter().chain(&self.metric_harmonics) {
            if m.unsigned_abs() as usize > l {
                return invalid(format!("harmonic index ({l}, {m}) needs |m| ≤ l"));
            }
        }
        let round_data = self.metric == MetricFamily::Round && self.volume == VolumeFamily::Round && self.rank() == 1;
        if self.oracle == OracleKind::Exact && !round_data {
            return invalid("oracle = \"exact\" needs the round metric and volume on a line bundle");
        }
        if self.oracle == OracleKind::SturmLiouville && self.rank() != 1 {
            return invalid("the Sturm–Liouville oracle is for line bundles");
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.twists.len()
    }

    pub fn is_round(&self) -> bool {
        matches!(self.metric, MetricFamily::Round) && self.volume == VolumeFamily::Round
    }

    /// The fiber weight `ψ`.
    pub fn psi(&self) -> Result<HarmonicField, ConfigError> {
        let f = match self.metric {
            MetricFamily::Round => Ok(HarmonicField::zero()),
            MetricFamily::Constant => Ok(HarmonicField::constant(self.metric_constant)),
            MetricFamily::Axial => HarmonicField::zonal_polynomial(&self.metric_axial),
            MetricFamily::Harmonic => HarmonicField::from_terms(&self.metric_harmonics),
            MetricFamily::Samples => {
                let path = self.metric_samples.as_ref().expect("validated");
                HarmonicField::fit_samples(&read_samples(path)?, self.metric_sample_degree)
            }
        };
        f.map_err(|e| ConfigError::Invalid(format!("metric: {e}")))
    }

    pub fn volume_form(&self) -> Result<VolumeForm, ConfigError> {
        match self.volume {
            VolumeFamily::Round => Ok(VolumeForm::round()),
            VolumeFamily::ExpAxial => HarmonicField::zonal_polynomial(&self.volume_axial)
                .and_then(VolumeForm::exp_of)
                .map_err(|e| ConfigError::Invalid(format!("volume: {e}"))),
        }
    }

    pub fn phi_field(&self) -> Result<HarmonicField, ConfigError> {
        HarmonicField::from_terms(&self.phi).map_err(|e| ConfigError::Invalid(format!("phi: {e}")))
    }

    pub fn bundle_spec(&self) -> Result<BundleSpec, ConfigError> {
        let metric = WeightedMetric::scalar(self.psi()?, self.rank())
            .map_err(|e| ConfigError::Invalid(format!("metric: {e}")))?;
        Ok(BundleSpec {
            twists: self.twists.clone(),
            metric,
            volume: self.volume_form()?,
            quadrature: QuadraturePolicy::Fixed(self.quadrature_oversample),
        })
    }
}

fn read_samples(path: &Path) -> Result<Vec<(ChartPoint, f64)>, ConfigError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<(f64, f64, f64)>() {
        let (t, azimuth, value) = row.map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let p = ChartPoint::new(t, azimuth).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        out.push((p, value));
    }
    Ok(out)
}
