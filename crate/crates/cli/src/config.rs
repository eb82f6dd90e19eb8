use serde::Deserialize;

use qdom_core::linsolve::SolverConfig;
use qdom_core::scatter::IncidentKind;
use qdom_core::{deposit_measure, Atom, Grid, GridMeasure, QdomError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Balayage,
    OnePhase,
    TwoPhase,
    MultiPhase,
    VerifyNull,
    Pompeiu,
    Scatter,
    Permittivity,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Balayage => "balayage",
            Task::OnePhase => "one-phase",
            Task::TwoPhase => "two-phase",
            Task::MultiPhase => "multi-phase",
            Task::VerifyNull => "verify-null",
            Task::Pompeiu => "pompeiu",
            Task::Scatter => "scatter",
            Task::Permittivity => "permittivity",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    pub origin: Vec<f64>,
    pub extent: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomBlock {
    pub point: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseBlock {
    #[serde(default)]
    pub label: Option<String>,
    pub k: f64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub atoms: Vec<AtomBlock>,
    /// Defaults to four cell widths.
    #[serde(default)]
    pub mollify_radius: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub tol_rel: Option<f64>,
    pub max_iter: Option<usize>,
    /// Defaults to the box-tuned SOR factor.
    pub relaxation: Option<f64>,
    /// Alternation sweeps for the two-phase and multi-phase pipelines.
    pub max_sweeps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Raster,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default = "yes")]
    pub heatmap: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: default_dir(),
            formats: default_formats(),
            heatmap: true,
        }
    }
}

fn default_dir() -> String {
    "qdom-out".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Raster]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteChoice {
    Minimization,
    Balayage,
    Both,
}

/// Task-specific parameters; each task reads the fields it needs.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Two-phase route.
    pub method: Option<RouteChoice>,
    /// Index m of the null quadrature ball.
    pub m: Option<usize>,
    /// Plane-wave directions in the test family.
    pub directions: Option<usize>,
    /// Centres of radial test solutions.
    pub centers: Option<Vec<Vec<f64>>>,
    /// Relative tolerance for identity and quadrature checks.
    pub tolerance: Option<f64>,
    pub k0: Option<f64>,
    pub incident: Option<IncidentKind>,
    /// Disk for the permittivity reconstruction.
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    /// Box doublings allowed when the balayage set reaches the box.
    pub grow_box: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub grid: GridBlock,
    #[serde(default)]
    pub phases: Vec<PhaseBlock>,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub options: Options,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<(RunConfig, serde_json::Value)> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| QdomError::Format(e.to_string()))?;
        let cfg: RunConfig =
            serde_json::from_value(raw.clone()).map_err(|e| QdomError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok((cfg, raw))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.origin.len() != g.n || g.extent.len() != g.n || g.cells.len() != g.n {
            return Err(QdomError::Config(format!(
                "grid origin, extent and cells must all have length n = {}",
                g.n
            )));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if let Some(a) = p.atoms.iter().find(|a| a.point.len() != g.n) {
                return Err(QdomError::Config(format!(
                    "phase {i}: atom {:?} is not in R^{}",
                    a.point, g.n
                )));
            }
        }
        let need = match self.task {
            Task::Balayage | Task::OnePhase | Task::VerifyNull | Task::Pompeiu => 1,
            Task::TwoPhase | Task::Scatter => 2,
            Task::MultiPhase => 1,
            Task::Permittivity => 0,
        };
        if self.phases.len() < need {
            return Err(QdomError::Config(format!(
                "task {} needs at least {need} phase block(s)",
                self.task.name()
            )));
        }
        if matches!(self.task, Task::TwoPhase | Task::Scatter) && self.phases.len() != 2 {
            return Err(QdomError::Config(
                "two-phase tasks take exactly two phases".into(),
            ));
        }
        if self.task == Task::Permittivity && !matches!(self.phases.len(), 0 | 2) {
            return Err(QdomError::Config(
                "permittivity takes no phases (zero contrast) or two phases".into(),
            ));
        }
        Ok(())
    }

    pub fn make_grid(&self) -> Result<Grid> {
        Grid::new(
            self.grid.n,
            &self.grid.origin,
            &self.grid.extent,
            &self.grid.cells,
        )
    }

    pub fn solver(&self, grid: &Grid) -> Result<SolverConfig> {
        let mut s = SolverConfig::tuned(grid);
        if let Some(t) = self.solver.tol_rel {
            s.tol_rel = t;
        }
        if let Some(m) = self.solver.max_iter {
            s.max_iter = Some(m);
        }
        if let Some(w) = self.solver.relaxation {
            s.relaxation = w;
        }
        s.validate()?;
        Ok(s)
    }
}

impl PhaseBlock {
    pub fn label(&self, i: usize) -> String {
        self.label.clone().unwrap_or_else(|| format!("phase{i}"))
    }

    pub fn measure(&self, grid: &Grid) -> Result<GridMeasure> {
        if self.atoms.is_empty() {
            return Ok(GridMeasure::zero(*grid));
        }
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|a| Atom::new(&a.point, a.mass))
            .collect();
        let r = self.mollify_radius.unwrap_or(4.0 * grid.h());
        deposit_measure(grid, &atoms, r)
    }
}
