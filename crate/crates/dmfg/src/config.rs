//! JSON run configuration: schema-validated before any compute, unknown
//! keys rejected, echoed verbatim into every output directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::measures::{GridMeasure, VelocityWindow};
use crate::models::{
    potential_sin_sq, potential_table, potential_two_well, CouplingModel, LagrangianModel,
    PointFn,
};
use crate::problem::{OrbitParams, ProblemSpec, Tolerances};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub tau: f64,
    pub lambda: f64,
    #[serde(default)]
    pub window: Option<WindowConfig>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub m_init: MeasureInit,
    #[serde(default)]
    pub seeds: Vec<Vec<f64>>,
    #[serde(default)]
    pub orbit: OrbitConfig,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub nonuniq: Option<NonuniqConfig>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lagrangian: LagrangianKind,
    pub g: PotentialConfig,
    pub coupling: CouplingConfig,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LagrangianKind {
    Quadratic,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialConfig {
    /// `sum_a sin^2(pi x_a)`.
    Sin2pi,
    /// `sum_a (1 - cos(4 pi x_a)) / 2`, tied wells at 0 and 1/2.
    Twowell,
    /// Values on the run grid, row-major.
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CouplingConfig {
    /// `F(x, m) = f + g(x)`.
    Additive {
        #[serde(default)]
        f: f64,
    },
    /// `F(x, m) = f + g(x) + eps * sum_y cos(2 pi (x - y)) m(y)`.
    Convolution {
        #[serde(default)]
        f: f64,
        eps: f64,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub radius_steps: usize,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub value_iter: Option<f64>,
    pub ergodic_span: Option<f64>,
    pub fixed_point: Option<f64>,
    pub damping: Option<f64>,
    pub max_outer_iters: Option<usize>,
    pub max_value_iters: Option<usize>,
}

impl ToleranceConfig {
    pub fn resolve(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            value_iter: self.value_iter.unwrap_or(d.value_iter),
            ergodic_span: self.ergodic_span.unwrap_or(d.ergodic_span),
            fixed_point: self.fixed_point.unwrap_or(d.fixed_point),
            damping: self.damping.unwrap_or(d.damping),
            max_outer_iters: self.max_outer_iters.unwrap_or(d.max_outer_iters),
            max_value_iters: self.max_value_iters.unwrap_or(d.max_value_iters),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureInit {
    #[default]
    Uniform,
    Delta {
        at: Vec<f64>,
    },
    Weights {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub n_steps: Option<usize>,
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub shift: ShiftKind,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, Default, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    #[default]
    Discrete,
    Continuum,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NonuniqConfig {
    pub seed_a: Vec<f64>,
    pub seed_b: Vec<f64>,
}

impl RunConfig {
    /// Parses and schema-validates a config document; also returns the raw
    /// bytes for verbatim echoing.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let raw = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_slice(&raw).map_err(|e| {
            Error::Config(format!(
                "malformed config at line {} column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        config.validate()?;
        Ok((config, raw))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        self.to_problem_spec().map(|_| ())
    }

    pub fn torus_grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.dim, self.grid.n)
    }

    fn potential(&self, grid: TorusGrid) -> Result<(PointFn, f64)> {
        match &self.model.g {
            PotentialConfig::Sin2pi => Ok((potential_sin_sq(), grid.dim() as f64)),
            PotentialConfig::Twowell => Ok((potential_two_well(), grid.dim() as f64)),
            PotentialConfig::Table { values } => {
                let sup = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                Ok((potential_table(grid, values.clone())?, sup))
            }
        }
    }

    pub fn to_problem_spec(&self) -> Result<ProblemSpec> {
        let grid = self.torus_grid()?;
        let lagrangian = match self.model.lagrangian {
            LagrangianKind::Quadratic => LagrangianModel::quadratic(),
        };
        let (g, g_sup) = self.potential(grid)?;
        let coupling = match self.model.coupling {
            CouplingConfig::Additive { f } => CouplingModel::additive(f, g, g_sup),
            CouplingConfig::Convolution { f, eps } => {
                CouplingModel::convolution(f, g, g_sup, eps)
            }
        };
        let mut spec = ProblemSpec {
            lagrangian,
            coupling,
            grid,
            window: None,
            tau: self.tau,
            lambda: self.lambda,
            tolerances: self.tolerances.resolve(),
            seeds: self.seeds.clone(),
            orbit: OrbitParams {
                n_steps: self.orbit.n_steps,
                burn_in: self.orbit.burn_in,
            },
            rng_seed: self.rng_seed,
        };
        if let Some(w) = self.window {
            spec.window = Some(VelocityWindow::new(w.radius_steps, self.tau)?);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn m_init_measure(&self) -> Result<GridMeasure> {
        let grid = self.torus_grid()?;
        match &self.m_init {
            MeasureInit::Uniform => Ok(GridMeasure::uniform(grid)),
            MeasureInit::Delta { at } => {
                if at.len() != grid.dim() {
                    return Err(Error::Config(format!(
                        "m_init delta point {at:?} has wrong dimension"
                    )));
                }
                Ok(GridMeasure::dirac(grid, grid.nearest_index(at)))
            }
            MeasureInit::Weights { values } => GridMeasure::new(grid, values.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config() -> serde_json::Value {
        serde_json::json!({
            "schema": 1,
            "model": {
                "lagrangian": "quadratic",
                "g": {"kind": "sin2pi"},
                "coupling": {"kind": "additive", "f": 0.0}
            },
            "grid": {"dim": 1, "n": 32},
            "tau": 0.1,
            "lambda": 0.5
        })
    }

    #[test]
    fn minimal_config_parses_and_lowers() {
        let config: RunConfig = serde_json::from_value(minimal_config()).unwrap();
        config.validate().unwrap();
        let spec = config.to_problem_spec().unwrap();
        assert_eq!(spec.grid.n_per_axis(), 32);
        assert!(spec.window.is_none());
        let m = config.m_init_measure().unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut doc = minimal_config();
        doc["unexpected"] = serde_json::json!(1);
        assert!(serde_json::from_value::<RunConfig>(doc).is_err());

        let mut doc = minimal_config();
        doc["model"]["coupling"]["typo"] = serde_json::json!(true);
        assert!(serde_json::from_value::<RunConfig>(doc).is_err());
    }

    #[test]
    fn schema_version_is_enforced() {
        let mut doc = minimal_config();
        doc["schema"] = serde_json::json!(2);
        let config: RunConfig = serde_json::from_value(doc).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn constraint_violations_name_the_constraint() {
        let mut doc = minimal_config();
        doc["tau"] = serde_json::json!(0.9);
        doc["lambda"] = serde_json::json!(1.2);
        let config: RunConfig = serde_json::from_value(doc).unwrap();
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("tau*lambda"), "message was: {err}");
    }

    #[test]
    fn table_potential_requires_matching_length() {
        let mut doc = minimal_config();
        doc["model"]["g"] = serde_json::json!({"kind": "table", "values": [0.0, 1.0]});
        let config: RunConfig = serde_json::from_value(doc).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn delta_init_snaps_to_grid() {
        let mut doc = minimal_config();
        doc["m_init"] = serde_json::json!({"kind": "delta", "at": [0.26]});
        let config: RunConfig = serde_json::from_value(doc).unwrap();
        let m = config.m_init_measure().unwrap();
        assert_eq!(m.weight(8), 1.0);
    }
}
