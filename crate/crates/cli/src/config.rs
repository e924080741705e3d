//! Run configuration: the on-disk TOML schema, its defaults, and the
//! cross-field validation that turns it into a [`Plan`].
//!
//! Every section is optional and every key has a default, so the smallest
//! valid file is a single `scenario = "..."` line. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use w2pt::evolution::{Bootstrap, VPrimeIndexing};
use w2pt::lattice::{cfl_max_timestep, SpatialGrid};
use w2pt::observables::RegionSpec;
use w2pt::potential::{Potential, PotentialParams};
use w2pt::setup::{DispersionKind, Setup, SmearingSpec, StateSpec};
use w2pt::states::wavepacket_coefficients;

/// A configuration the run cannot start from. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    StaticCavityWavepacket,
    DynamicCavityVacuum,
    PuritySweep,
    QualitySweep,
    Convergence,
    StabilityScan,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::StaticCavityWavepacket => "static-cavity-wavepacket",
            Scenario::DynamicCavityVacuum => "dynamic-cavity-vacuum",
            Scenario::PuritySweep => "purity-sweep",
            Scenario::QualitySweep => "quality-sweep",
            Scenario::Convergence => "convergence",
            Scenario::StabilityScan => "stability-scan",
        }
    }

    fn static_walls(self) -> bool {
        matches!(self, Scenario::StaticCavityWavepacket | Scenario::QualitySweep)
    }

    /// Which aggregate a sweep over this scenario produces.
    pub fn sweep_kind(self) -> Option<SweepKind> {
        match self {
            Scenario::DynamicCavityVacuum | Scenario::PuritySweep => Some(SweepKind::Purity),
            Scenario::StaticCavityWavepacket | Scenario::QualitySweep => Some(SweepKind::Quality),
            Scenario::Convergence | Scenario::StabilityScan => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Purity,
    Quality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    RampTime,
    Sharpness,
    WallWidth,
    ModeNumber,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::RampTime => "ramp_time",
            SweepParam::Sharpness => "sharpness",
            SweepParam::WallWidth => "wall_width",
            SweepParam::ModeNumber => "mode_number",
        }
    }

    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        match name {
            "ramp_time" => Ok(SweepParam::RampTime),
            "sharpness" => Ok(SweepParam::Sharpness),
            "wall_width" => Ok(SweepParam::WallWidth),
            "mode_number" => Ok(SweepParam::ModeNumber),
            other => bad(format!(
                "unknown sweep parameter '{other}' (expected ramp_time, sharpness, wall_width or mode_number)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    #[default]
    Vacuum,
    Wavepacket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub potential: PotentialSection,
    #[serde(default)]
    pub smearing: SmearingSection,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub region: RegionSection,
    #[serde(default)]
    pub modes: ModesSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub length: f64,
    /// 0.05, or 0.1 for convergence runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { length: 10.0, dx: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    /// `Δt/Δx`; 1/20, or 1/5 for convergence runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    pub v_max: f64,
    pub ramp_time: f64,
    pub x_left_wall: f64,
    pub x_right_wall: f64,
    pub wall_width: f64,
    pub sharpness: f64,
}

impl Default for PotentialSection {
    fn default() -> Self {
        let p = PotentialParams::default();
        Self {
            v_max: p.v_max,
            ramp_time: p.ramp_time,
            x_left_wall: p.x_left_wall,
            x_right_wall: p.x_right_wall,
            wall_width: p.wall_width,
            sharpness: p.sharpness,
        }
    }
}

impl PotentialSection {
    pub fn params(&self) -> PotentialParams {
        PotentialParams {
            v_max: self.v_max,
            ramp_time: self.ramp_time,
            x_left_wall: self.x_left_wall,
            x_right_wall: self.x_right_wall,
            wall_width: self.wall_width,
            sharpness: self.sharpness,
        }
    }
}

/// Both widths default to twice the (coarsest) grid spacing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmearingSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateSection {
    /// Wavepacket for the static-wall scenarios, vacuum otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<StateKind>,
    pub alpha: f64,
    pub x0: f64,
    pub n_modes: usize,
}

impl Default for StateSection {
    fn default() -> Self {
        Self { kind: None, alpha: 1.0 / 11.0, x0: 5.0, n_modes: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionSection {
    pub x_left: f64,
    pub x_right: f64,
}

impl Default for RegionSection {
    fn default() -> Self {
        Self { x_left: 2.4, x_right: 7.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesSection {
    pub numbers: Vec<usize>,
    /// Averaging window after the ramp; three light-crossing times by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
}

impl Default for ModesSection {
    fn default() -> Self {
        Self { numbers: vec![9], window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Time between energy-density profiles; 0 writes every step.
    pub density_interval: f64,
    /// Also dump the final diagonal record as a binary snapshot.
    pub snapshot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { density_interval: 0.1, snapshot: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionChoice {
    Continuum,
    #[default]
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VPrimeChoice {
    #[default]
    Physical,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapChoice {
    #[default]
    SecondOrder,
    FirstOrderDegraded,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    /// Vacuum seeded with the lattice (`lattice`) or continuum (`continuum`)
    /// mode frequencies.
    pub dispersion: DispersionChoice,
    pub vprime: VPrimeChoice,
    pub bootstrap: BootstrapChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub x_prime: f64,
    pub t_prime: f64,
    /// Order used to scale the medium/fine difference curves.
    pub order: f64,
    /// Times of the spatial difference curves, snapped to the nearest coarse
    /// time level.
    pub curve_times: Vec<f64>,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self { x_prime: 3.0, t_prime: 1.0, order: 2.0, curve_times: vec![0.75] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    /// Potential maximum entering the bound; the wall maximum by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_tilde: Option<f64>,
    pub n_theta: usize,
    pub steps: usize,
    /// Probe time steps as multiples of the closed-form bound.
    pub ratios: Vec<f64>,
    pub growth_threshold: f64,
    pub bisect: bool,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            v_tilde: None,
            n_theta: w2pt::lattice::DEFAULT_THETA_SAMPLES,
            steps: 2000,
            ratios: vec![0.95, 1.05],
            growth_threshold: 1e3,
            bisect: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies one sweep value to a copy of this config.
    pub fn with_value(&self, param: SweepParam, value: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.sweep = None;
        match param {
            SweepParam::RampTime => c.potential.ramp_time = value,
            SweepParam::Sharpness => c.potential.sharpness = value,
            SweepParam::WallWidth => c.potential.wall_width = value,
            SweepParam::ModeNumber => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return bad(format!("mode_number must be a positive integer, got {value}"));
                }
                c.modes.numbers = vec![value as usize];
            }
        }
        Ok(c)
    }

    pub fn resolve(&self) -> Result<Plan, ConfigError> {
        let s = self.scenario;
        let convergence = s == Scenario::Convergence;
        let dx = self.grid.dx.unwrap_or(if convergence { 0.1 } else { 0.05 });
        let cfl = self.time.cfl.unwrap_or(if convergence { 0.2 } else { 0.05 });
        if !(self.grid.length.is_finite() && self.grid.length > 0.0) {
            return bad(format!("grid.length must be positive, got {}", self.grid.length));
        }
        SpatialGrid::with_spacing(self.grid.length, dx).map_err(|e| ConfigError(e.to_string()))?;
        if !(cfl.is_finite() && cfl > 0.0) {
            return bad(format!("time.cfl must be positive, got {cfl}"));
        }

        let params = self.potential.params();
        params.validate().map_err(|e| ConfigError(format!("potential: {e}")))?;
        let potential = if s.static_walls() { Potential::Static(params) } else { Potential::Ramped(params) };

        let region = RegionSpec::new(self.region.x_left, self.region.x_right, self.grid.length)
            .map_err(|e| ConfigError(format!("region: {e}")))?;

        let sigma_x = self.smearing.sigma_x.unwrap_or(2.0 * dx);
        let sigma_t = self.smearing.sigma_t.unwrap_or(2.0 * dx);
        if !(sigma_x.is_finite() && sigma_x > 0.0 && sigma_t.is_finite() && sigma_t > 0.0) {
            return bad(format!("smearing widths must be positive, got sigma_x = {sigma_x}, sigma_t = {sigma_t}"));
        }

        let kind = self.state.kind.unwrap_or(if s.static_walls() { StateKind::Wavepacket } else { StateKind::Vacuum });
        if s.static_walls() && kind != StateKind::Wavepacket {
            return bad(format!("scenario {} needs a wavepacket state", s.name()));
        }
        let state = match kind {
            StateKind::Vacuum => StateSpec::Vacuum,
            StateKind::Wavepacket => {
                let st = &self.state;
                wavepacket_coefficients(st.alpha, st.x0, st.n_modes, self.grid.length)
                    .map_err(|e| ConfigError(format!("state: {e}")))?;
                StateSpec::Wavepacket { alpha: st.alpha, x0: st.x0, n_modes: st.n_modes }
            }
        };

        let modes = self.modes.numbers.clone();
        if modes.iter().any(|&n| n == 0) {
            return bad("mode numbers start at 1");
        }
        if matches!(s, Scenario::DynamicCavityVacuum | Scenario::PuritySweep) && modes.is_empty() {
            return bad("modes.numbers must name at least one mode");
        }
        let window = self.modes.window.unwrap_or(3.0 * region.length());
        if !(window.is_finite() && window > 0.0) {
            return bad(format!("modes.window must be positive, got {window}"));
        }

        let t_max = match self.time.t_max {
            Some(t) => t,
            None => match s {
                Scenario::StaticCavityWavepacket | Scenario::Convergence => 10.0,
                // one light-crossing plus a little margin for the interpolation
                Scenario::QualitySweep => region.length() + 0.1,
                Scenario::DynamicCavityVacuum | Scenario::PuritySweep => params.ramp_time + window,
                Scenario::StabilityScan => 0.0,
            },
        };
        if s != Scenario::StabilityScan && !(t_max.is_finite() && t_max > 0.0) {
            return bad(format!("time.t_max must be positive, got {t_max}"));
        }
        if !(self.output.density_interval.is_finite() && self.output.density_interval >= 0.0) {
            return bad("output.density_interval must be non-negative");
        }

        let setup = Setup {
            length: self.grid.length,
            dx,
            cfl,
            t_max,
            potential,
            state,
            smearing: SmearingSpec::Physical { sigma_x, sigma_t },
            dispersion: match self.numerics.dispersion {
                DispersionChoice::Continuum => DispersionKind::Continuum,
                DispersionChoice::Lattice => DispersionKind::Lattice,
            },
            vprime: match self.numerics.vprime {
                VPrimeChoice::Physical => VPrimeIndexing::Physical,
                VPrimeChoice::PaperLiteral => VPrimeIndexing::PaperLiteral,
            },
            bootstrap: match self.numerics.bootstrap {
                BootstrapChoice::SecondOrder => Bootstrap::SecondOrder,
                BootstrapChoice::FirstOrderDegraded => Bootstrap::FirstOrderDegraded,
            },
        };
        if setup.dispersion == DispersionKind::Lattice && cfl > 1.0 {
            return bad(format!("lattice vacuum needs time.cfl ≤ 1, got {cfl}"));
        }
        setup.time_grid().map_err(|e| ConfigError(e.to_string()))?;

        match s {
            Scenario::Convergence => self.validate_convergence(&setup)?,
            Scenario::StabilityScan => self.validate_stability()?,
            _ => {}
        }

        let sweep = match &self.sweep {
            Some(sw) => {
                let kind = s.sweep_kind().ok_or_else(|| ConfigError(format!("scenario {} cannot be swept", s.name())))?;
                Some(validate_sweep(self, kind, sw.param, &sw.values)?)
            }
            None => None,
        };
        if kind == StateKind::Wavepacket && s.sweep_kind() == Some(SweepKind::Purity) && sweep.is_some() {
            return bad("purity sweeps start from the vacuum");
        }

        Ok(Plan {
            scenario: s,
            setup,
            region,
            modes,
            window,
            t_max_explicit: self.time.t_max.is_some(),
            config: self.clone(),
            sweep,
        })
    }

    fn validate_convergence(&self, setup: &Setup) -> Result<(), ConfigError> {
        let c = &self.convergence;
        if !(c.order.is_finite() && c.order > 0.0) {
            return bad(format!("convergence.order must be positive, got {}", c.order));
        }
        for (i, s) in [setup.clone(), refine(setup, 2)?, refine(setup, 4)?].iter().enumerate() {
            let on = |v: f64, h: f64| {
                let k = v / h;
                k >= 0.0 && (k - k.round()).abs() <= 1e-9 * k.abs().max(1.0)
            };
            if !on(c.x_prime, s.dx) || c.x_prime > s.length {
                return bad(format!("convergence.x_prime = {} is not a point of refinement level {i}", c.x_prime));
            }
            if !on(c.t_prime, s.dt()) || c.t_prime > s.t_max {
                return bad(format!("convergence.t_prime = {} is not a time level of refinement level {i}", c.t_prime));
            }
        }
        for &t in &c.curve_times {
            if !(t >= 0.0 && t <= setup.t_max) {
                return bad(format!("convergence.curve_times entry {t} lies outside [0, t_max]"));
            }
        }
        Ok(())
    }

    fn validate_stability(&self) -> Result<(), ConfigError> {
        let st = &self.stability;
        if let Some(v) = st.v_tilde {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("stability.v_tilde must be non-negative, got {v}"));
            }
        }
        if st.n_theta < 16 {
            return bad(format!("stability.n_theta must be at least 16, got {}", st.n_theta));
        }
        if st.steps < 2 {
            return bad("stability.steps must be at least 2");
        }
        if st.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("stability.ratios must be positive");
        }
        if !(st.growth_threshold > 1.0) {
            return bad("stability.growth_threshold must exceed 1");
        }
        Ok(())
    }
}

fn refine(setup: &Setup, h: usize) -> Result<Setup, ConfigError> {
    setup.refined(h).map_err(|e| ConfigError(e.to_string()))
}

pub(crate) fn validate_sweep(cfg: &RunConfig, kind: SweepKind, param: SweepParam, values: &[f64]) -> Result<Sweep, ConfigError> {
    if values.is_empty() {
        return bad("sweep needs at least one value");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return bad("sweep values must be finite");
    }
    match (kind, param) {
        (SweepKind::Quality, SweepParam::RampTime | SweepParam::ModeNumber) => {
            return bad(format!("{} does not affect the static-wall quality factor", param.name()))
        }
        (SweepKind::Purity, _) if cfg.modes.numbers.len() != 1 && param != SweepParam::ModeNumber => {
            return bad("purity sweeps follow exactly one mode")
        }
        _ => {}
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return bad("sweep values must be distinct");
    }
    let mut points = Vec::with_capacity(sorted.len());
    for v in sorted {
        let point = cfg.with_value(param, v)?;
        let mut plan = point.resolve()?;
        if kind == SweepKind::Purity {
            let end = plan.setup.potential.settle_time() + plan.window;
            if plan.t_max_explicit && plan.setup.t_max < end {
                return bad(format!("time.t_max = {} ends before the averaging window closes at {end}", plan.setup.t_max));
            }
            plan.setup.t_max = plan.setup.t_max.max(end);
        }
        points.push((v, plan));
    }
    Ok(Sweep { kind, param, points })
}

/// A validated run: the physics setup plus everything the observables need.
#[derive(Debug, Clone)]
pub struct Plan {
    pub scenario: Scenario,
    pub setup: Setup,
    pub region: RegionSpec,
    pub modes: Vec<usize>,
    pub window: f64,
    pub t_max_explicit: bool,
    /// The configuration this plan came from, echoed into manifests.
    pub config: RunConfig,
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub kind: SweepKind,
    pub param: SweepParam,
    /// Ordered by value.
    pub points: Vec<(f64, Plan)>,
}

/// A time step above the stability bound. Maps to exit code 3.
#[derive(Debug)]
pub struct CflError(pub w2pt::Error);

impl fmt::Display for CflError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for CflError {}

impl Plan {
    /// CFL gate for every evolution this plan will run. The stability scan is
    /// exempt: probing the bound is its purpose.
    pub fn check_cfl(&self) -> Result<(), CflError> {
        if self.scenario == Scenario::StabilityScan {
            return Ok(());
        }
        if let Some(sweep) = &self.sweep {
            return sweep.points.iter().try_for_each(|(_, p)| p.check_cfl());
        }
        let s = &self.setup;
        let v_max = s.potential.max_until(s.t_max);
        let dt_max = cfl_max_timestep(s.dx, v_max).map_err(CflError)?;
        if s.dt() > dt_max * (1.0 + 1e-12) {
            return Err(CflError(w2pt::Error::CflViolation { dt: s.dt(), dt_max, v_max }));
        }
        Ok(())
    }
}
