//! Experiment configuration read from TOML with dotted keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::averaging::BoundConstants;
use crate::fields::{preset_field, FieldParams, PresetField};
use crate::geometry::Minkowski;
use crate::kinetics::{boosted_velocity, HyperboloidDistribution};
use crate::{Error, Result, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub dist: DistConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub constants: BoundConstants,
    #[serde(default)]
    pub hypotheses: Thresholds,
    #[serde(default)]
    pub scaling: ScalingConfig,
}

fn default_metric() -> String {
    "minkowski".into()
}

fn default_dimension() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default = "default_field")]
    pub name: String,
    #[serde(default)]
    pub params: FieldParams,
}

fn default_field() -> String {
    "uniform_B".into()
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            name: default_field(),
            params: FieldParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Dirac,
    GaussianBump,
    UniformBall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistConfig {
    pub kind: DistKind,
    /// Boost of the center velocity along `x^1`.
    pub center_rapidity: f64,
    /// Rest-frame width; the radius for `uniform_ball`.
    pub sigma: f64,
    /// Truncation radius in units of `sigma`.
    pub r_cut: f64,
    /// Monte Carlo ensemble size; when absent the quadrature nodes are
    /// transported as weighted particles.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Falls back to `run.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Quadrature nodes per axis for the transported node ensemble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
}

impl Default for DistConfig {
    fn default() -> Self {
        Self {
            kind: DistKind::GaussianBump,
            center_rapidity: 10f64.acosh(),
            sigma: 0.05 / 8.0,
            r_cut: 4.0,
            n: None,
            seed: None,
            nodes: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMode {
    /// Moments recomputed from the transported ensemble.
    Vlasov,
    /// Moments held at their initial values.
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(rename = "T")]
    pub t: f64,
    pub tol: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub mode: MomentMode,
    pub n_out: usize,
    /// Separation length for the validity-horizon estimate.
    #[serde(rename = "L0")]
    pub l0: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t: 20.0,
            tol: 1e-10,
            output_dir: PathBuf::from("out"),
            seed: 0,
            mode: MomentMode::Vlasov,
            n_out: 100,
            l0: 1.0,
        }
    }
}

/// Thresholds under which the hypotheses of the divergence bounds count as
/// satisfied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    #[serde(rename = "E_min")]
    pub e_min: f64,
    pub alpha_max: f64,
    pub theta_gap: f64,
    pub adiabaticity: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            e_min: 5.0,
            alpha_max: 0.2,
            theta_gap: 0.1,
            adiabaticity: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub alphas: Vec<f64>,
    pub energies: Vec<f64>,
    /// Energy held fixed during the alpha sweep.
    pub energy: f64,
    /// Diameter held fixed during the energy sweep.
    pub alpha: f64,
    /// End of the early-time window for the time exponents.
    pub t_early: f64,
    pub tol: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.02, 0.04, 0.08, 0.16],
            energies: vec![5.0, 10.0, 20.0, 40.0],
            energy: 10.0,
            alpha: 0.05,
            t_early: 2.0,
            tol: 1e-12,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            metric: default_metric(),
            dimension: default_dimension(),
            field: FieldConfig::default(),
            dist: DistConfig::default(),
            run: RunConfig::default(),
            constants: BoundConstants::default(),
            hypotheses: Thresholds::default(),
            scaling: ScalingConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.metric != "minkowski" {
            return bad(format!("unknown metric {:?}", self.metric));
        }
        if self.dimension < 2 {
            return bad(format!("dimension must be at least 2, got {}", self.dimension));
        }
        if !(self.run.t > 0.0) || !self.run.t.is_finite() {
            return bad(format!("run.T must be positive, got {}", self.run.t));
        }
        if !(self.run.tol > 0.0) {
            return bad(format!("run.tol must be positive, got {}", self.run.tol));
        }
        if self.run.n_out == 0 {
            return bad("run.n_out must be at least 1".into());
        }
        if self.dist.kind != DistKind::Dirac && !(self.dist.sigma > 0.0) {
            return bad(format!("dist.sigma must be positive, got {}", self.dist.sigma));
        }
        if !(self.dist.r_cut > 0.0) {
            return bad(format!("dist.r_cut must be positive, got {}", self.dist.r_cut));
        }
        if self.dist.n == Some(0) {
            return bad("dist.N must be at least 1".into());
        }
        if !self.dist.center_rapidity.is_finite() {
            return bad("dist.center_rapidity must be finite".into());
        }
        self.field_preset()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.dist.seed.unwrap_or(self.run.seed)
    }

    pub fn metric_field(&self) -> Result<Minkowski> {
        Minkowski::new(self.dimension)
    }

    pub fn field_preset(&self) -> Result<PresetField> {
        preset_field(&self.field.name, &self.field.params, self.dimension)
    }

    pub fn center_velocity(&self) -> Result<Vector> {
        let mut dir = vec![0.0; self.dimension - 1];
        dir[0] = 1.0;
        boosted_velocity(self.dimension, self.dist.center_rapidity, &dir)
    }

    pub fn distribution(&self) -> Result<HyperboloidDistribution> {
        let center = self.center_velocity()?;
        Ok(match self.dist.kind {
            DistKind::Dirac => HyperboloidDistribution::dirac(center),
            DistKind::GaussianBump => HyperboloidDistribution::gaussian_bump(center, self.dist.sigma, self.dist.r_cut),
            DistKind::UniformBall => HyperboloidDistribution::uniform_ball(center, self.dist.sigma),
        })
    }

    /// Gaussian-bump width whose truncated support has diameter `alpha`.
    pub fn sigma_for_alpha(&self, alpha: f64) -> f64 {
        alpha / (2.0 * self.dist.r_cut)
    }
}
