//! Scenario files.
//!
//! A scenario is a TOML document with one table per concern:
//!
//! ```toml
//! version = 1
//!
//! [grid]
//! a = 0.0
//! b = 1.0
//! n = 100
//!
//! [kernel_u]
//! family = "gaussian"
//! scale = 0.1
//! mode = "N"
//!
//! [kernel_v]
//! family = "gaussian"
//! scale = 0.1
//! mode = "N"
//!
//! [reaction]
//! model = "lotka-volterra"
//! b = 0.5
//! c = 0.5
//! m = { profile = "constant", value = 1.0 }
//!
//! [rates]
//! d = 0.01
//! D = 0.1
//! ```
//!
//! `[tolerances]`, `[simulation]` and `[verify]` are optional.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dispersal::{BoundaryMode, DispersalOperator, KernelSpec};
use crate::dynamics::SimConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::reaction::{CubicCompetition, LotkaVolterra, LotkaVolterraParams, ReactionModel, ResourceProfile};
use crate::steady::SteadyOptions;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
    pub n: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    #[serde(flatten)]
    pub kernel: KernelSpec,
    pub mode: BoundaryMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[serde(alias = "lv")]
    LotkaVolterra,
    Cubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionConfig {
    pub model: ModelKind,
    pub b: f64,
    pub c: f64,
    pub m: ResourceProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub d: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Residual of every steady state.
    pub steady: f64,
    /// Bracket width of every principal bound.
    pub spectral: f64,
    /// Indicators closer to zero than this are treated as neutral.
    pub dead_band: f64,
    /// Lattice points per axis in the assumption audit.
    pub audit_samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            steady: 1e-10,
            spectral: 1e-10,
            dead_band: 1e-6,
            audit_samples: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { trials: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub grid: GridConfig,
    pub kernel_u: OperatorConfig,
    pub kernel_v: OperatorConfig,
    pub reaction: ReactionConfig,
    pub rates: Rates,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Grid, operators and reaction model of a scenario.
#[derive(Debug)]
pub struct Assembled {
    pub grid: Arc<Grid>,
    /// `d·K`
    pub k_op: DispersalOperator,
    /// `D·P`
    pub p_op: DispersalOperator,
    pub model: Box<dyn ReactionModel>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Scenario::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported scenario version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        for (name, r) in [("d", self.rates.d), ("D", self.rates.big_d)] {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("rate {name} must be positive, got {r}")));
            }
        }
        let t = &self.tolerances;
        if !(t.steady > 0.0 && t.spectral > 0.0 && t.dead_band >= 0.0 && t.audit_samples >= 2) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        self.kernel_u.kernel.validate()?;
        self.kernel_v.kernel.validate()?;
        Ok(())
    }

    pub fn model(&self) -> Result<Box<dyn ReactionModel>> {
        let r = &self.reaction;
        let params = LotkaVolterraParams { m: r.m, b: r.b, c: r.c };
        Ok(match r.model {
            ModelKind::LotkaVolterra => Box::new(LotkaVolterra::new(params)?),
            ModelKind::Cubic => Box::new(CubicCompetition::new(params)?),
        })
    }

    pub fn steady_options(&self) -> SteadyOptions {
        SteadyOptions {
            tol: self.tolerances.steady,
            spectral_tol: self.tolerances.spectral,
            ..SteadyOptions::default()
        }
    }

    /// `d·K` at an arbitrary rate, keeping the scenario's kernel and mode.
    pub fn k_op_at(&self, grid: &Arc<Grid>, d: f64) -> Result<DispersalOperator> {
        DispersalOperator::assemble(&self.kernel_u.kernel, grid, self.kernel_u.mode, d)
    }

    pub fn assemble(&self) -> Result<Assembled> {
        self.validate()?;
        let grid = Grid::new(self.grid.a, self.grid.b, self.grid.n)?;
        let k_op = self.k_op_at(&grid, self.rates.d)?;
        let p_op = DispersalOperator::assemble(&self.kernel_v.kernel, &grid, self.kernel_v.mode, self.rates.big_d)?;
        Ok(Assembled {
            grid,
            k_op,
            p_op,
            model: self.model()?,
        })
    }

    /// Constant-resource Lotka–Volterra scenario on [0, 1] with Gaussian kernels.
    pub fn lotka_volterra(b: f64, c: f64, d: f64, big_d: f64, n: usize, kernel: KernelSpec, mode: BoundaryMode) -> Scenario {
        Scenario {
            version: SCHEMA_VERSION,
            grid: GridConfig { a: 0.0, b: 1.0, n },
            kernel_u: OperatorConfig { kernel, mode },
            kernel_v: OperatorConfig { kernel, mode },
            reaction: ReactionConfig {
                model: ModelKind::LotkaVolterra,
                b,
                c,
                m: ResourceProfile::Constant { value: 1.0 },
            },
            rates: Rates { d, big_d },
            tolerances: Tolerances::default(),
            simulation: SimConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}
