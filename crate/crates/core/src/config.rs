//! Run configuration: a sectioned key-value file (the TOML subset of
//! tables with string, number and boolean values).
//!
//! ```toml
//! [model]
//! family = "quadratic"      # or "tabulated" (then `table = "h.csv"`)
//! coupling = "-3*u"         # g(u)
//! potential = "0.5*x^2"     # V(x), or V(x, y) on the torus
//! kinetic = 1.0
//! lambda = 3.0
//! p_max = 8.0
//!
//! [grid]
//! dimension = 1
//! length = 2.0
//! n = 400
//!
//! [scheme]
//! dt = 0.0025
//! v_max = 4.0
//! velocity_count = 81
//! ```
//!
//! Every other section (`run`, `trace`, `compare`, `scan`, `legendre`,
//! `oracle`, `output`) and every key not shown has a default. Relative file
//! paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, Expression, Var};
use crate::grid::{GridError, GridFunction, PeriodicGrid};
use crate::model::{HamiltonianModel, HamiltonianTable, LagrangianModel, LegendreOptions, ModelError};
use crate::semigroup::{Scheme, SchemeError, SchemeParams};
use crate::weakkam::{LimitOptions, TraceMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("config value: {0}")]
    Value(String),
    #[error(transparent)]
    Expression(#[from] ExprError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Quadratic,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub family: Family,
    pub coupling: String,
    pub potential: String,
    pub kinetic: f64,
    pub lambda: f64,
    pub p_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    /// Declared (STD) property; checked numerically when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strictly_decreasing: Option<bool>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            family: Family::Quadratic,
            coupling: "-3*u".into(),
            potential: "0.5*x^2".into(),
            kinetic: 1.0,
            lambda: 3.0,
            p_max: 8.0,
            table: None,
            strictly_decreasing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dimension: usize,
    pub length: f64,
    pub n: usize,
    pub length_y: f64,
    pub n_y: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            dimension: 1,
            length: 2.0,
            n: 400,
            length_y: 2.0,
            n_y: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub dt: f64,
    pub v_max: f64,
    pub velocity_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_tol: Option<f64>,
    pub picard_max_iter: usize,
    pub max_horizon: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let p = SchemeParams::default();
        SchemeSection {
            dt: p.dt,
            v_max: p.v_max,
            velocity_count: p.velocity_count,
            picard_tol: p.picard_tol,
            picard_max_iter: p.picard_max_iter,
            max_horizon: p.max_horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Backward,
    Forward,
}

/// Initial data and long-time controls shared by the evolution commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Expression in `x` (and `y`); ignored when `initial_csv` is set.
    pub initial: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_csv: Option<String>,
    pub horizon: f64,
    pub direction: Direction,
    pub chunk: f64,
    pub max_horizon: f64,
    pub tol_limit: f64,
    pub blowup: f64,
    /// Accepted fixed-point residual over one chunk.
    pub residual_tol: f64,
    /// Aubry threshold; `3 h` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        let l = LimitOptions::default();
        RunSection {
            initial: "0".into(),
            initial_csv: None,
            horizon: 1.0,
            direction: Direction::Backward,
            chunk: l.chunk,
            max_horizon: 32.0,
            tol_limit: 1e-8,
            blowup: l.blowup,
            residual_tol: 0.05,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    pub x: f64,
    pub y: f64,
    pub horizon: f64,
    pub tail_fraction: f64,
    pub mode: TraceModeName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceModeName {
    Continuous,
    NearestNode,
}

impl From<TraceModeName> for TraceMode {
    fn from(m: TraceModeName) -> Self {
        match m {
            TraceModeName::Continuous => TraceMode::Continuous,
            TraceModeName::NearestNode => TraceMode::NearestNode,
        }
    }
}

impl Default for TraceSection {
    fn default() -> Self {
        TraceSection {
            x: 0.7,
            y: 0.0,
            horizon: 32.0,
            tail_fraction: 0.25,
            mode: TraceModeName::Continuous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub v1: String,
    pub v2: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v1_csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v2_csv: Option<String>,
    pub radius: f64,
    pub tol: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            v1: "0".into(),
            v2: "0".into(),
            v1_csv: None,
            v2_csv: None,
            radius: 0.2,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub c_min: f64,
    pub c_max: f64,
    pub count: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            c_min: -2.0,
            c_max: 2.0,
            count: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LegendreSection {
    pub u_min: f64,
    pub u_max: f64,
    pub u_count: usize,
    /// Odd number of momentum samples on `[-p_max, p_max]`.
    pub p_count: usize,
}

impl Default for LegendreSection {
    fn default() -> Self {
        LegendreSection {
            u_min: -1.0,
            u_max: 1.0,
            u_count: 3,
            p_count: 801,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub cases: usize,
    pub seed: u64,
    pub hopf_lax_tol: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            cases: 50,
            seed: 20240601,
            hopf_lax_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub scheme: SchemeSection,
    pub run: RunSection,
    pub trace: TraceSection,
    pub compare: CompareSection,
    pub scan: ScanSection,
    pub legendre: LegendreSection,
    pub oracle: OracleSection,
    pub output: OutputSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Value(m));
        if !(self.model.lambda >= 0.0) {
            return bad(format!("model.lambda must be >= 0, got {}", self.model.lambda));
        }
        if self.model.family == Family::Tabulated && self.model.table.is_none() {
            return bad("model.table is required for the tabulated family".into());
        }
        if !(1..=2).contains(&self.grid.dimension) {
            return bad(format!("grid.dimension must be 1 or 2, got {}", self.grid.dimension));
        }
        let grid = self.grid()?;
        self.scheme_params().validate(&grid)?;
        let r = &self.run;
        if !(r.horizon >= 0.0) {
            return bad(format!("run.horizon must be >= 0, got {}", r.horizon));
        }
        if !(r.chunk > 0.0 && r.chunk <= r.max_horizon) {
            return bad("run.chunk must lie in (0, run.max_horizon]".into());
        }
        if !(r.tol_limit > 0.0 && r.blowup > 0.0 && r.residual_tol > 0.0) {
            return bad("run.tol_limit, run.blowup and run.residual_tol must be positive".into());
        }
        if r.eta.is_some_and(|e| !(e > 0.0)) {
            return bad("run.eta must be positive".into());
        }
        if !(self.trace.tail_fraction > 0.0 && self.trace.tail_fraction <= 1.0) {
            return bad("trace.tail_fraction must lie in (0, 1]".into());
        }
        if self.scan.count == 0 || self.scan.c_min > self.scan.c_max {
            return bad("scan needs count >= 1 and c_min <= c_max".into());
        }
        if self.legendre.p_count < 3 || self.legendre.p_count.is_multiple_of(2) || self.legendre.u_count == 0 {
            return bad("legendre.p_count must be odd and >= 3, u_count >= 1".into());
        }
        Ok(())
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn grid(&self) -> Result<PeriodicGrid, ConfigError> {
        let g = &self.grid;
        Ok(match g.dimension {
            1 => PeriodicGrid::circle(g.length, g.n)?,
            _ => PeriodicGrid::torus([g.length, g.length_y], [g.n, g.n_y])?,
        })
    }

    pub fn scheme_params(&self) -> SchemeParams {
        let s = &self.scheme;
        SchemeParams {
            dt: s.dt,
            v_max: s.v_max,
            velocity_count: s.velocity_count,
            picard_tol: s.picard_tol,
            picard_max_iter: s.picard_max_iter,
            max_horizon: s.max_horizon,
        }
    }

    pub fn scheme(&self) -> Result<Scheme, ConfigError> {
        Ok(Scheme::new(self.grid()?, self.scheme_params())?)
    }

    pub fn hamiltonian(&self) -> Result<HamiltonianModel, ConfigError> {
        let m = &self.model;
        let model = match m.family {
            Family::Quadratic => HamiltonianModel::quadratic_contact(
                &m.coupling,
                &m.potential,
                m.kinetic,
                m.lambda,
                m.p_max,
                self.grid.dimension,
            )?,
            Family::Tabulated => {
                let path = self.resolve(m.table.as_deref().unwrap_or_default());
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read { path, source })?;
                HamiltonianModel::tabulated(HamiltonianTable::from_csv(&text)?, m.lambda)?
            }
        };
        let declared = match m.strictly_decreasing {
            Some(d) => d,
            None => model.check_strictly_decreasing(21)?,
        };
        Ok(model.with_strictly_decreasing(declared))
    }

    pub fn lagrangian(&self, model: &HamiltonianModel) -> Result<LagrangianModel, ConfigError> {
        Ok(LagrangianModel::from_hamiltonian(
            model,
            LegendreOptions {
                v_max: self.scheme.v_max,
                v_count: self.scheme.velocity_count,
            },
        )?)
    }

    pub fn limit_options(&self) -> LimitOptions {
        LimitOptions {
            chunk: self.run.chunk,
            max_horizon: self.run.max_horizon,
            tol_limit: self.run.tol_limit,
            blowup: self.run.blowup,
        }
    }

    /// A grid function from a CSV file if given, else from an expression.
    pub fn function(&self, expr: &str, csv: Option<&str>) -> Result<GridFunction, ConfigError> {
        let grid = self.grid()?;
        if let Some(file) = csv {
            let path = self.resolve(file);
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read { path, source })?;
            return Ok(GridFunction::from_csv(grid, &text)?);
        }
        let vars: &[Var] = if grid.dim() == 2 { &[Var::X, Var::Y] } else { &[Var::X] };
        let e = Expression::parse(expr, vars)?;
        Ok(GridFunction::from_expression(grid, &e)?)
    }

    pub fn initial(&self) -> Result<GridFunction, ConfigError> {
        self.function(&self.run.initial, self.run.initial_csv.as_deref())
    }

    pub fn eta(&self) -> Result<f64, ConfigError> {
        Ok(match self.run.eta {
            Some(e) => e,
            None => 3.0 * self.grid()?.min_spacing(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const E1: &str = r#"
[model]
coupling = "-3*u"
potential = "0.5*x^2"
lambda = 3.0

[grid]
n = 400

[scheme]
dt = 0.0025
v_max = 4.0
velocity_count = 81

[run]
initial = "0.5*(3 - sqrt(5))/2*x^2"
"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::parse(E1).unwrap();
        assert_eq!(c.grid.n, 400);
        assert_eq!(c.model.kinetic, 1.0);
        assert_eq!(c.run.direction, Direction::Backward);
        let u = c.initial().unwrap();
        assert!((u.values()[399] - (3.0 - 5f64.sqrt()) / 4.0).abs() < 1e-15);
        assert!(c.hamiltonian().unwrap().strictly_decreasing);
        assert!((c.eta().unwrap() - 0.015).abs() < 1e-15);
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::parse(E1).unwrap();
        let again = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("[grid]\nn = 3").is_err());
        assert!(RunConfig::parse("[model]\nlambda = -1.0").is_err());
        assert!(RunConfig::parse("[scheme]\nvelocity_count = 4").is_err());
        assert!(RunConfig::parse("[scheme]\ndt = 0.5").is_err());
        assert!(RunConfig::parse("[model]\nbogus = 1").is_err());
        assert!(RunConfig::parse("[model]\nfamily = \"tabulated\"").is_err());
    }
}
