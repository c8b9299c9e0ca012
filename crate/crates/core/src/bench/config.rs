//! Flat key/value run configuration, read from TOML.
//!
//! Keys mirror the command-line flags; list-valued keys (`solvers`, `steps`,
//! `tols`) define sweep axes. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::problems::{DiffusionInit, DEFAULT_SEED};
use super::report::ReportFormat;
use super::sweep::{BenchmarkKind, BenchmarkSpec, Metric, SolverSpec, SweepSpec};
use crate::error::{Error, Result};
use crate::inner::{InnerConfig, InnerMethod};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub init: Option<String>,
    pub t0: Option<f64>,
    pub tend: Option<f64>,
    pub scheme: Option<String>,
    pub solvers: Option<Vec<String>>,
    pub inner: Option<String>,
    pub eta: Option<f64>,
    pub inner_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub step: Option<f64>,
    pub steps: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub tols: Option<Vec<f64>>,
    pub metric: Option<String>,
    pub repetitions: Option<usize>,
    pub warmup: Option<bool>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
}

/// A sweep plus where to write it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    pub spec: SweepSpec,
    pub format: ReportFormat,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "config".into(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                what: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn inner_config(&self) -> Result<InnerConfig> {
        let mut inner = InnerConfig::default();
        if let Some(m) = &self.inner {
            inner.method = InnerMethod::parse(m)?;
        }
        if let Some(eta) = self.eta {
            inner.eta = eta;
        }
        if let Some(tol) = self.inner_tol {
            inner.tol = tol;
        }
        if let Some(max_iter) = self.max_iter {
            inner.max_iter = max_iter;
        }
        inner.validate()?;
        Ok(inner)
    }

    pub fn into_job(self) -> Result<SweepJob> {
        let inner = self.inner_config()?;
        let defaults = BenchmarkSpec::default();
        let benchmark = BenchmarkSpec {
            kind: match &self.benchmark {
                Some(b) => BenchmarkKind::parse(b)?,
                None => defaults.kind,
            },
            n: self.n.unwrap_or(defaults.n),
            init: match &self.init {
                Some(i) => DiffusionInit::parse(i)?,
                None => defaults.init,
            },
            t0: self.t0.unwrap_or(defaults.t0),
            t_end: self.tend.unwrap_or(defaults.t_end),
        };
        let names: Vec<&String> = self.scheme.iter().chain(self.solvers.iter().flatten()).collect();
        let solvers = names
            .into_iter()
            .map(|n| SolverSpec::parse(n, inner))
            .collect::<Result<Vec<_>>>()?;
        let step_sizes: Vec<f64> = self.step.into_iter().chain(self.steps.into_iter().flatten()).collect();
        let tolerances: Vec<f64> = self.tol.into_iter().chain(self.tols.into_iter().flatten()).collect();
        let spec = SweepSpec {
            benchmark,
            solvers,
            step_sizes,
            tolerances,
            metric: match &self.metric {
                Some(m) => Metric::parse(m)?,
                None => Metric::default(),
            },
            repetitions: self.repetitions.unwrap_or(1),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            warmup: self.warmup.unwrap_or(true),
        };
        spec.validate()?;
        let format = match &self.format {
            Some(f) => ReportFormat::parse(f)?,
            None => ReportFormat::default(),
        };
        Ok(SweepJob {
            spec,
            format,
            out: self.out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::ProxScheme;

    const TABLE: &str = r#"
benchmark = "diffusion"
n = 64
seed = 7
solvers = ["be", "bdf2:newton", "dopri5"]
inner = "nag"
eta = 0.05
inner_tol = 1e-8
steps = [0.01, 0.005]
tols = [1e-4]
repetitions = 3
format = "json"
"#;

    #[test]
    fn parses_full_config() {
        let job = RunConfig::from_toml(TABLE).unwrap().into_job().unwrap();
        assert_eq!(job.spec.benchmark.kind, BenchmarkKind::Diffusion);
        assert_eq!(job.spec.benchmark.n, 64);
        assert_eq!(job.spec.seed, 7);
        assert_eq!(job.spec.solvers.len(), 3);
        match &job.spec.solvers[0] {
            SolverSpec::Prox { scheme, config } => {
                assert_eq!(*scheme, ProxScheme::BackwardEuler);
                assert_eq!(config.inner.method, InnerMethod::Nag);
                assert_eq!(config.inner.eta, 0.05);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(job.spec.solvers[1].label(), "prox-bdf2/newton");
        assert_eq!(job.spec.step_sizes, vec![0.01, 0.005]);
        assert_eq!(job.format, ReportFormat::Json);
    }

    #[test]
    fn unknown_key_is_error() {
        let err = RunConfig::from_toml("scheme = \"be\"\nstep = 0.1\ncolour = 3\n").unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn single_values_fill_axes() {
        let job = RunConfig::from_toml("scheme = \"cn\"\nstep = 0.1\n")
            .unwrap()
            .into_job()
            .unwrap();
        assert_eq!(job.spec.step_sizes, vec![0.1]);
        assert_eq!(job.spec.solvers[0].label(), "prox-cn/fr");
    }

    #[test]
    fn missing_axis_is_error() {
        let err = RunConfig::from_toml("scheme = \"dopri5\"\nstep = 0.1\n")
            .unwrap()
            .into_job()
            .unwrap_err();
        assert!(err.is_config_error());
    }
}
