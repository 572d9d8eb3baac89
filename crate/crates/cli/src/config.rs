//! TOML run configuration. Every physical quantity carries its unit in the key
//! name; conversion to the SI / rad·s⁻¹ values used by the core happens only in
//! [`Acquisition::to_core`] and the per-command `to_*` helpers.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use vpdr::frames::{mw_direction_from_angles, NvLabel};
use vpdr::inversion::{InvertOptions, LineModel};
use vpdr::lindblad::{GridSpec, DEFAULT_CELL_CAP};
use vpdr::mw_optimizer::{OptimizeOptions, HARMONICS};
use vpdr::units::{mhz_to_rad, HYPERFINE_A, ZFS};
use vpdr::{Error, Vector3, VpdrConfig, WindowKind};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub acquisition: Option<Acquisition>,
    pub invert: Option<InvertSection>,
    pub sweep_accuracy: Option<SweepAccuracySection>,
    pub sweep_robustness: Option<SweepRobustnessSection>,
    pub optimize_mw: Option<OptimizeSection>,
    pub sensitivity: Option<SensitivitySection>,
    pub reconstruct: Option<ReconstructSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {}", e.message())))
    }

    pub fn acquisition(&self) -> Result<VpdrConfig, Error> {
        self.acquisition
            .as_ref()
            .ok_or_else(|| missing("acquisition"))?
            .to_core()
    }
}

pub fn missing(section: &str) -> Error {
    Error::InvalidConfig { field: section.to_string(), message: "section is required for this command".into() }
}

fn field_err(field: &str, message: impl Into<String>) -> Error {
    Error::InvalidConfig { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acquisition {
    pub b_dc_ut: [f64; 3],
    pub omega_max_mhz: f64,
    pub mw_theta_deg: f64,
    pub mw_phi_deg: f64,
    #[serde(default)]
    pub detuning_mhz: f64,
    /// `inf` disables dephasing.
    pub t2_star_us: f64,
    #[serde(default)]
    pub t_start_ns: f64,
    pub t_step_ns: f64,
    pub t_count: usize,
    #[serde(default)]
    pub tau_start_ns: f64,
    pub tau_step_ns: f64,
    pub tau_count: usize,
    #[serde(default = "default_phases")]
    pub phases_deg: Vec<f64>,
    /// Labels such as "<-111>" or indices "0".."3"; all four when omitted.
    pub orientations: Option<Vec<String>>,
    #[serde(default = "default_m_i")]
    pub m_i: Vec<i32>,
    pub zfs_ghz: Option<f64>,
    pub hyperfine_mhz: Option<f64>,
    pub cell_cap: Option<usize>,
}

fn default_phases() -> Vec<f64> {
    vec![0.0, 180.0]
}

fn default_m_i() -> Vec<i32> {
    vec![-1, 0, 1]
}

pub fn parse_labels(field: &str, names: &[String]) -> Result<Vec<NvLabel>, Error> {
    names
        .iter()
        .map(|n| NvLabel::parse(n).ok_or_else(|| field_err(field, format!("unknown orientation `{n}`"))))
        .collect()
}

impl Acquisition {
    pub fn to_core(&self) -> Result<VpdrConfig, Error> {
        if self.t_count == 0 {
            return Err(field_err("acquisition.t_count", "must be at least 1"));
        }
        if self.tau_count == 0 {
            return Err(field_err("acquisition.tau_count", "must be at least 1"));
        }
        let zfs = self.zfs_ghz.map_or(ZFS, |g| mhz_to_rad(g * 1e3));
        let orientations = match &self.orientations {
            Some(o) => parse_labels("acquisition.orientations", o)?,
            None => NvLabel::ALL.to_vec(),
        };
        let b = self.b_dc_ut;
        let cfg = VpdrConfig {
            b_dc: Vector3::new(b[0], b[1], b[2]) * 1e-6,
            omega_max: mhz_to_rad(self.omega_max_mhz),
            mw_direction: mw_direction_from_angles(self.mw_theta_deg, self.mw_phi_deg),
            mw_frequency: zfs + mhz_to_rad(self.detuning_mhz),
            t2_star: self.t2_star_us * 1e-6,
            t_grid: GridSpec::new(self.t_start_ns * 1e-9, self.t_step_ns * 1e-9, self.t_count),
            tau_grid: GridSpec::new(self.tau_start_ns * 1e-9, self.tau_step_ns * 1e-9, self.tau_count),
            phases: self.phases_deg.iter().map(|p| p.to_radians()).map(snap_pi).collect(),
            orientations,
            m_i_values: self.m_i.clone(),
            zfs,
            hyperfine_a: self.hyperfine_mhz.map_or(HYPERFINE_A, mhz_to_rad),
            cell_cap: self.cell_cap.unwrap_or(DEFAULT_CELL_CAP),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

// 180° in degrees converts to π only up to rounding; the phase-cycling check
// compares against π exactly.
fn snap_pi(p: f64) -> f64 {
    if (p - PI).abs() < 1e-9 {
        PI
    } else {
        p
    }
}

fn parse_line_model(field: &str, s: &str) -> Result<LineModel, Error> {
    match s {
        "hyperfine" => Ok(LineModel::Hyperfine),
        "single" | "single_line" => Ok(LineModel::SingleLine),
        "unconstrained" => Ok(LineModel::Unconstrained),
        other => Err(field_err(field, format!("unknown line model `{other}` (hyperfine, single, unconstrained)"))),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertSection {
    pub rabi_window: Option<WindowKind>,
    pub line_model: Option<String>,
    pub targets: Option<Vec<String>>,
    pub known_rabi_mhz: Option<[f64; 4]>,
}

impl InvertSection {
    pub fn to_options(&self, window: Option<WindowKind>) -> Result<InvertOptions, Error> {
        let mut o = InvertOptions::default();
        if let Some(w) = window {
            o.window = w;
        }
        if let Some(w) = self.rabi_window {
            o.rabi_window = w;
        }
        if let Some(m) = &self.line_model {
            o.line_model = parse_line_model("invert.line_model", m)?;
        }
        if let Some(t) = &self.targets {
            o.targets = Some(parse_labels("invert.targets", t)?);
        }
        o.known_rabi = self.known_rabi_mhz.map(|k| k.map(mhz_to_rad));
        Ok(o)
    }
}

/// Inclusive evenly spaced angle list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleAxis {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub count: usize,
}

impl AngleAxis {
    pub fn values(&self, field: &str) -> Result<Vec<f64>, Error> {
        if self.count == 0 {
            return Err(field_err(field, "count must be at least 1"));
        }
        if self.count == 1 {
            return Ok(vec![self.start_deg]);
        }
        let step = (self.stop_deg - self.start_deg) / (self.count - 1) as f64;
        Ok((0..self.count).map(|i| self.start_deg + i as f64 * step).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAccuracySection {
    pub b_magnitude_ut: f64,
    pub theta: AngleAxis,
    pub phi: AngleAxis,
    /// Skip directions within this angle of the plane perpendicular to any NV axis.
    #[serde(default)]
    pub exclude_perpendicular_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRobustnessSection {
    /// Actual MW amplitudes; the acquisition value is the nominal one.
    pub omega_max_mhz: Vec<f64>,
    /// Actual MW angles; default to the nominal angles.
    pub mw_theta_deg: Option<Vec<f64>>,
    pub mw_phi_deg: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(default = "default_theta_range")]
    pub theta_range_deg: (f64, f64),
    #[serde(default = "default_phi_range")]
    pub phi_range_deg: (f64, f64),
    #[serde(default = "default_step")]
    pub step_deg: f64,
    pub min_rabi_frac: Option<f64>,
    #[serde(default = "default_harmonics")]
    pub harmonics: Vec<f64>,
    /// Ranked optima kept in the output.
    #[serde(default = "default_top")]
    pub top: usize,
}

fn default_theta_range() -> (f64, f64) {
    (0.0, 90.0)
}

fn default_phi_range() -> (f64, f64) {
    (0.0, 45.0)
}

fn default_step() -> f64 {
    0.25
}

fn default_harmonics() -> Vec<f64> {
    HARMONICS.to_vec()
}

fn default_top() -> usize {
    10
}

impl Default for OptimizeSection {
    fn default() -> Self {
        OptimizeSection {
            theta_range_deg: default_theta_range(),
            phi_range_deg: default_phi_range(),
            step_deg: default_step(),
            min_rabi_frac: None,
            harmonics: default_harmonics(),
            top: default_top(),
        }
    }
}

impl OptimizeSection {
    pub fn to_options(&self) -> OptimizeOptions {
        OptimizeOptions {
            theta_range: self.theta_range_deg,
            phi_range: self.phi_range_deg,
            step_deg: self.step_deg,
            constraint_min_rabi_frac: self.min_rabi_frac,
            harmonics: self.harmonics.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySection {
    /// Orientation whose signal is analysed.
    pub orientation: String,
    /// Monte-Carlo ratio per maximum pulse duration.
    #[serde(default)]
    pub max_t_ns: Vec<f64>,
    /// Fit-cost ratio per maximum free-evolution time.
    #[serde(default)]
    pub tau_max_us: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Simulate three nuclear projections instead of m_I = 0.
    #[serde(default)]
    pub hyperfine: bool,
    /// Defaults to the slope-maximising free-evolution time.
    pub tau_opt_ns: Option<f64>,
    pub line_model: Option<String>,
}

fn default_trials() -> usize {
    200
}

fn default_sigma() -> f64 {
    1e-4
}

impl SensitivitySection {
    pub fn line_model(&self) -> Result<Option<LineModel>, Error> {
        self.line_model.as_deref().map(|m| parse_line_model("sensitivity.line_model", m)).transpose()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_scale")]
    pub offset_scale_ut: f64,
    #[serde(default = "default_scale")]
    pub slope_scale_ut_per_v: f64,
    pub hyperfine_mhz: Option<f64>,
}

fn default_starts() -> usize {
    30
}

fn default_scale() -> f64 {
    100.0
}

impl Default for ReconstructSection {
    fn default() -> Self {
        ReconstructSection {
            starts: default_starts(),
            offset_scale_ut: default_scale(),
            slope_scale_ut_per_v: default_scale(),
            hyperfine_mhz: None,
        }
    }
}
