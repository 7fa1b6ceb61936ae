//! TOML run configuration. Every section is optional and falls back to the
//! defaults below; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use radial_nls::classify::Gates;
use radial_nls::evolve::{
    wall_safe_grid, InitialData, RunSettings, DEFAULT_BLOWUP_FACTOR, DEFAULT_DT, DEFAULT_DT_MIN, DEFAULT_PHASE_CAP,
};
use radial_nls::{make_grid, Execution, RadialGrid};

use crate::artifacts::read_snapshot;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub run: RunSection,
    pub diagnostics: Diagnostics,
    pub ground_state: GroundStateConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evacuation: Option<EvacuationConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            grid: GridConfig::default(),
            initial: InitialConfig::default(),
            run: RunSection::default(),
            diagnostics: Diagnostics::default(),
            ground_state: GroundStateConfig::default(),
            sweep: None,
            evacuation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub length: f64,
    pub n: usize,
    /// When set, `length` and `n` are replaced by a wall-clean grid of this
    /// spacing sized for the run horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_safe_dr: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            length: 50.0,
            n: 4096,
            wall_safe_dr: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Gaussian { amplitude: f64, width: f64 },
    SolitonMultiple { lambda: f64 },
    /// A snapshot file written by `evolve`.
    File { path: PathBuf },
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self::Gaussian {
            amplitude: 0.5,
            width: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub horizon: f64,
    pub dt: f64,
    pub sample_every: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    pub dt_min: f64,
    pub blowup_factor: f64,
    pub phase_cap: f64,
    pub execution: Execution,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            dt: DEFAULT_DT,
            sample_every: 0.1,
            snapshot_every: Some(1.0),
            dt_min: DEFAULT_DT_MIN,
            blowup_factor: DEFAULT_BLOWUP_FACTOR,
            phase_cap: DEFAULT_PHASE_CAP,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Diagnostics {
    pub ball_radii: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub morawetz_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coercivity_radius: Option<f64>,
    pub delta: f64,
    pub tao: TaoConfig,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            ball_radii: vec![5.0, 10.0],
            morawetz_radius: Some(10.0),
            coercivity_radius: None,
            delta: 0.05,
            tao: TaoConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaoConfig {
    pub epsilon: f64,
    pub radius: f64,
    pub residual_rel: f64,
}

impl Default for TaoConfig {
    fn default() -> Self {
        let g = Gates::default();
        Self {
            epsilon: g.tao_epsilon,
            radius: g.tao_radius,
            residual_rel: g.residual_rel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundStateConfig {
    pub tol: f64,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        Self { tol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Lambda,
    Amplitude,
    Width,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::Amplitude => "amplitude",
            Self::Width => "width",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvacuationConfig {
    pub horizons: Vec<f64>,
    /// Grid spacing for per-horizon wall-clean grids; the `[grid]` section is
    /// used for every horizon when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dr: Option<f64>,
}

impl Default for EvacuationConfig {
    fn default() -> Self {
        Self {
            horizons: vec![25.0, 50.0, 100.0],
            dr: None,
        }
    }
}

fn positive(x: f64, what: &str) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Structural checks that do not need a grid.
    pub fn validate(&self) -> Result<(), CliError> {
        positive(self.grid.length, "grid.length")?;
        if self.grid.n < 16 {
            return Err(CliError::Config(format!("grid.n must be at least 16, got {}", self.grid.n)));
        }
        if let Some(dr) = self.grid.wall_safe_dr {
            positive(dr, "grid.wall_safe_dr")?;
        }
        match &self.initial {
            InitialConfig::Gaussian { amplitude, width } => {
                if !amplitude.is_finite() {
                    return Err(CliError::Config("initial.amplitude must be finite".into()));
                }
                positive(*width, "initial.width")?;
            }
            InitialConfig::SolitonMultiple { lambda } => {
                if !lambda.is_finite() {
                    return Err(CliError::Config("initial.lambda must be finite".into()));
                }
            }
            InitialConfig::File { .. } => {}
        }
        let r = &self.run;
        positive(r.horizon, "run.horizon")?;
        positive(r.dt, "run.dt")?;
        positive(r.sample_every, "run.sample_every")?;
        positive(r.dt_min, "run.dt_min")?;
        positive(r.phase_cap, "run.phase_cap")?;
        positive(r.blowup_factor, "run.blowup_factor")?;
        if r.dt > r.sample_every {
            return Err(CliError::Config("need run.dt <= run.sample_every".into()));
        }
        if let Some(s) = r.snapshot_every {
            positive(s, "run.snapshot_every")?;
            if s < r.sample_every {
                return Err(CliError::Config("need run.sample_every <= run.snapshot_every".into()));
            }
        }
        let d = &self.diagnostics;
        for &radius in &d.ball_radii {
            positive(radius, "diagnostics.ball_radii")?;
        }
        if let Some(radius) = d.morawetz_radius {
            positive(radius, "diagnostics.morawetz_radius")?;
        }
        if let Some(radius) = d.coercivity_radius {
            positive(radius, "diagnostics.coercivity_radius")?;
        }
        positive(d.delta, "diagnostics.delta")?;
        if d.delta >= 1.0 {
            return Err(CliError::Config("diagnostics.delta must be below 1".into()));
        }
        positive(d.tao.epsilon, "diagnostics.tao.epsilon")?;
        positive(d.tao.radius, "diagnostics.tao.radius")?;
        positive(d.tao.residual_rel, "diagnostics.tao.residual_rel")?;
        positive(self.ground_state.tol, "ground_state.tol")?;
        if let Some(e) = &self.evacuation {
            for &t in &e.horizons {
                positive(t, "evacuation.horizons")?;
            }
            if let Some(dr) = e.dr {
                positive(dr, "evacuation.dr")?;
            }
        }
        Ok(())
    }

    /// The fixed `[grid]` section as a grid.
    pub fn base_grid(&self) -> Result<RadialGrid, CliError> {
        Ok(make_grid(self.grid.length, self.grid.n)?)
    }

    /// Grid for a run to `horizon`, honouring `wall_safe_dr`.
    pub fn run_grid(&self, horizon: f64) -> Result<RadialGrid, CliError> {
        match self.grid.wall_safe_dr {
            Some(dr) => Ok(wall_safe_grid(&self.initial_data()?, horizon, dr)?),
            None => self.base_grid(),
        }
    }

    pub fn initial_data(&self) -> Result<InitialData, CliError> {
        Ok(match &self.initial {
            InitialConfig::Gaussian { amplitude, width } => InitialData::gaussian(*amplitude, *width),
            InitialConfig::SolitonMultiple { lambda } => InitialData::soliton_multiple(*lambda),
            InitialConfig::File { path } => {
                let snap = read_snapshot(path, &self.base_grid()?)?;
                InitialData::Field(snap.field)
            }
        })
    }

    pub fn settings(&self) -> RunSettings {
        let r = &self.run;
        let d = &self.diagnostics;
        let mut s = RunSettings::new(r.horizon, r.dt, r.sample_every)
            .with_balls(&d.ball_radii)
            .with_execution(r.execution);
        if let Some(radius) = d.morawetz_radius {
            s = s.with_morawetz(radius);
        }
        if let Some(every) = r.snapshot_every {
            s = s.with_snapshots(every);
        }
        s.dt_min = r.dt_min;
        s.blowup_factor = r.blowup_factor;
        s.phase_cap = r.phase_cap;
        s
    }

    pub fn gates(&self) -> Gates {
        Gates {
            tao_epsilon: self.diagnostics.tao.epsilon,
            tao_radius: self.diagnostics.tao.radius,
            residual_rel: self.diagnostics.tao.residual_rel,
        }
    }

    /// Radii that must lie inside the grid.
    pub fn check_radii(&self, grid: &RadialGrid) -> Result<(), CliError> {
        let d = &self.diagnostics;
        let length = grid.length();
        let named = d
            .ball_radii
            .iter()
            .map(|r| ("ball radius", *r))
            .chain(d.morawetz_radius.map(|r| ("Morawetz radius", r)))
            .chain(d.coercivity_radius.map(|r| ("coercivity radius", r)))
            .chain(std::iter::once(("tao radius", d.tao.radius)));
        for (what, r) in named {
            if r >= length {
                return Err(CliError::Config(format!("{what} {r} not below L = {length}")));
            }
        }
        Ok(())
    }

    /// Copy with the sweep parameter set to `value`.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Self, CliError> {
        let mut c = self.clone();
        c.sweep = None;
        match (&mut c.initial, parameter) {
            (InitialConfig::SolitonMultiple { lambda }, SweepParameter::Lambda) => *lambda = value,
            (InitialConfig::Gaussian { amplitude, .. }, SweepParameter::Amplitude) => *amplitude = value,
            (InitialConfig::Gaussian { width, .. }, SweepParameter::Width) => *width = value,
            _ => {
                return Err(CliError::Config(format!(
                    "sweep parameter {} does not apply to this initial data",
                    parameter.name()
                )))
            }
        }
        c.validate()?;
        Ok(c)
    }
}
