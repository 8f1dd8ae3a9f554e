//! Experiment configuration: TOML-backed, validated with field-anchored
//! messages before any suite runs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::commutator::ExponentTriple;
use crate::error::{OulabError, Result};
use crate::spectral::{build_spectrum, Spectrum, SpectrumKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumConfig {
    /// "power_law" (with `gamma`) or "explicit" (with `lambdas`).
    pub family: String,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentConfig {
    pub p: f64,
    pub r: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: f64,
    pub eps_grid: Vec<f64>,
    /// Nodes of the w-grid for the angular split integral.
    pub xi_nodes: usize,
    /// Monte Carlo oracle sample count.
    pub samples: usize,
    /// Outer batch size for norm sweeps and the range probe.
    pub sweep_samples: usize,
    /// Particle count for pushforward trajectories.
    pub particles: usize,
    /// Probe count for PDE residual checks.
    pub probes: usize,
    /// Nodes of the time grid for dt x mu integrals.
    pub time_nodes: usize,
    pub seed: u64,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogConfig {
    /// Test function for commutator sweeps.
    pub u: String,
    #[serde(default)]
    pub u_params: BTreeMap<String, f64>,
    /// Drift field.
    pub field: String,
    #[serde(default)]
    pub field_params: BTreeMap<String, f64>,
    /// Source term for the transport/range suites (ramped to terminal
    /// zero).
    pub source: String,
    #[serde(default)]
    pub source_params: BTreeMap<String, f64>,
    /// Initial law of the particle ensemble: "mu" or "shifted".
    pub zeta: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spectrum: SpectrumConfig,
    pub exponents: ExponentConfig,
    pub run: RunConfig,
    pub catalog: CatalogConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OulabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| OulabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.exponent_triple()?;
        self.build_spectrum()?;
        let r = &self.run;
        if r.horizon <= 0.0 {
            return Err(OulabError::Config("run.horizon must be positive".into()));
        }
        if r.eps_grid.is_empty() {
            return Err(OulabError::Config("run.eps_grid must be nonempty".into()));
        }
        if r.eps_grid.iter().any(|&e| e <= 0.0) {
            return Err(OulabError::Config("run.eps_grid entries must be positive".into()));
        }
        if r.eps_grid.windows(2).any(|w| w[0] <= w[1]) {
            return Err(OulabError::Config(
                "run.eps_grid must be strictly decreasing".into(),
            ));
        }
        for (name, v) in [
            ("run.xi_nodes", r.xi_nodes),
            ("run.samples", r.samples),
            ("run.sweep_samples", r.sweep_samples),
            ("run.particles", r.particles),
            ("run.probes", r.probes),
        ] {
            if v == 0 {
                return Err(OulabError::Config(format!("{name} must be positive")));
            }
        }
        if r.time_nodes < 2 {
            return Err(OulabError::Config("run.time_nodes must be at least 2".into()));
        }
        if self.catalog.zeta != "mu" && self.catalog.zeta != "shifted" {
            return Err(OulabError::Config(format!(
                "catalog.zeta must be \"mu\" or \"shifted\", got {:?}",
                self.catalog.zeta
            )));
        }
        Ok(())
    }

    pub fn exponent_triple(&self) -> Result<ExponentTriple> {
        ExponentTriple::new(self.exponents.p, self.exponents.r, self.exponents.s)
            .map_err(|e| OulabError::Config(format!("exponents: {e}")))
    }

    pub fn build_spectrum(&self) -> Result<Spectrum> {
        let kind = match self.spectrum.family.as_str() {
            "power_law" => SpectrumKind::PowerLaw {
                gamma: self.spectrum.gamma.ok_or_else(|| {
                    OulabError::Config("spectrum.gamma required for power_law".into())
                })?,
            },
            "explicit" => SpectrumKind::Explicit(self.spectrum.lambdas.clone().ok_or_else(
                || OulabError::Config("spectrum.lambdas required for explicit".into()),
            )?),
            other => {
                return Err(OulabError::Config(format!(
                    "spectrum.family must be \"power_law\" or \"explicit\", got {other:?}"
                )))
            }
        };
        build_spectrum(kind, self.spectrum.n)
            .map_err(|e| OulabError::Config(format!("spectrum: {e}")))
    }

    /// Apply a `section.key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| OulabError::Config(format!("override {kv:?} is not KEY=VALUE")))?;
        let parse_f = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| OulabError::Config(format!("override {key}: bad number {value:?}")))
        };
        let parse_u = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| OulabError::Config(format!("override {key}: bad count {value:?}")))
        };
        match key {
            "spectrum.gamma" => self.spectrum.gamma = Some(parse_f()?),
            "spectrum.n" => self.spectrum.n = parse_u()?,
            "exponents.p" => self.exponents.p = parse_f()?,
            "exponents.r" => self.exponents.r = parse_f()?,
            "exponents.s" => self.exponents.s = parse_f()?,
            "run.horizon" => self.run.horizon = parse_f()?,
            "run.xi_nodes" => self.run.xi_nodes = parse_u()?,
            "run.samples" => self.run.samples = parse_u()?,
            "run.sweep_samples" => self.run.sweep_samples = parse_u()?,
            "run.particles" => self.run.particles = parse_u()?,
            "run.probes" => self.run.probes = parse_u()?,
            "run.time_nodes" => self.run.time_nodes = parse_u()?,
            "run.seed" => {
                self.run.seed = value.parse().map_err(|_| {
                    OulabError::Config(format!("override run.seed: bad seed {value:?}"))
                })?
            }
            "run.out_dir" => self.run.out_dir = value.to_string(),
            "catalog.u" => self.catalog.u = value.to_string(),
            "catalog.field" => self.catalog.field = value.to_string(),
            "catalog.source" => self.catalog.source = value.to_string(),
            "catalog.zeta" => self.catalog.zeta = value.to_string(),
            other => {
                return Err(OulabError::Config(format!("unknown override key {other:?}")))
            }
        }
        Ok(())
    }
}

/// The bundled reference configuration.
pub fn reference_config() -> ExperimentConfig {
    ExperimentConfig {
        spectrum: SpectrumConfig {
            family: "power_law".into(),
            gamma: Some(2.0),
            lambdas: None,
            n: 64,
        },
        exponents: ExponentConfig { p: 4.0, r: 4.0, s: 2.0 },
        run: RunConfig {
            horizon: 1.0,
            eps_grid: vec![0.4, 0.2, 0.1, 0.05, 0.01],
            xi_nodes: 33,
            samples: 200_000,
            sweep_samples: 256,
            particles: 5_000,
            probes: 64,
            time_nodes: 5,
            seed: 20240,
            out_dir: "reports".into(),
        },
        catalog: CatalogConfig {
            u: "sine".into(),
            u_params: BTreeMap::new(),
            field: "sine_field".into(),
            field_params: BTreeMap::new(),
            source: "sine".into(),
            source_params: BTreeMap::new(),
            zeta: "mu".into(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_round_trips() {
        let cfg = reference_config();
        cfg.validate().unwrap();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_str(&text).unwrap();
        assert_eq!(back.run.seed, cfg.run.seed);
        assert_eq!(back.spectrum.n, 64);
    }

    #[test]
    fn bundled_reference_file_matches_builtin() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
        let cfg = ExperimentConfig::from_path(&path).unwrap();
        assert_eq!(
            toml::to_string(&cfg).unwrap(),
            toml::to_string(&reference_config()).unwrap()
        );
    }

    #[test]
    fn exponent_relation_enforced() {
        let mut cfg = reference_config();
        cfg.exponents.r = 3.0;
        assert!(matches!(cfg.validate(), Err(OulabError::Config(_))));
    }

    #[test]
    fn eps_grid_ordering_enforced() {
        let mut cfg = reference_config();
        cfg.run.eps_grid = vec![0.1, 0.4];
        assert!(cfg.validate().is_err());
        cfg.run.eps_grid = vec![0.4, -0.1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = reference_config();
        cfg.apply_override("run.seed=7").unwrap();
        assert_eq!(cfg.run.seed, 7);
        cfg.apply_override("spectrum.gamma=1.5").unwrap();
        assert_eq!(cfg.spectrum.gamma, Some(1.5));
        assert!(cfg.apply_override("nope").is_err());
        assert!(cfg.apply_override("bad.key=1").is_err());
    }
}
