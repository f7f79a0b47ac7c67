//! Experiment configuration: a TOML document with a fixed schema.
//!
//! Every table rejects unknown keys. The section matching `experiment` is
//! filled with defaults when absent; any other experiment section is an error.
//! Validation runs before any computation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stirlab_core::flow::{FlowFamily, FlowSpec};
use stirlab_core::keller_segel::BlowupCriteria;
use stirlab_core::profile::InitialProfile;
use stirlab_core::{Grid, SolverConfig};

/// A config that does not match the schema. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema error: {}", self.0)
    }
}

impl std::error::Error for SchemaError {}

fn schema<T>(msg: impl Into<String>) -> Result<T, SchemaError> {
    Err(SchemaError(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "ks-suppression")]
    KsSuppression,
    #[serde(rename = "rd-quench")]
    RdQuench,
    #[serde(rename = "tau-vs-nu")]
    TauVsNu,
    #[serde(rename = "D-vs-A")]
    DVsA,
    #[serde(rename = "occupancy")]
    Occupancy,
    #[serde(rename = "custom")]
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::KsSuppression => "ks-suppression",
            Self::RdQuench => "rd-quench",
            Self::TauVsNu => "tau-vs-nu",
            Self::DVsA => "D-vs-A",
            Self::Occupancy => "occupancy",
            Self::Custom => "custom",
        }
    }

    /// Name of the config table holding this experiment's parameters.
    pub fn section(self) -> &'static str {
        match self {
            Self::KsSuppression => "ks",
            Self::RdQuench => "rd",
            Self::TauVsNu => "tau",
            Self::DVsA => "diffusivity",
            Self::Occupancy => "occupancy",
            Self::Custom => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dim: usize,
    /// Points per side, a power of two.
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 2, n: 64 }
    }
}

/// `rescale(cellular2d(1), nu, +1)`.
pub fn cellular_stirring(nu: u32) -> FlowSpec {
    FlowSpec::new(FlowFamily::Cellular2d, 1.0, nu)
}

/// Paired Keller-Segel runs from one initial density, without and with stirring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsConfig {
    pub chi: f64,
    pub profile: InitialProfile,
    pub flow: FlowSpec,
    pub horizon: f64,
    pub sample_every: f64,
    /// The still run only needs to reach the blow-up trigger.
    pub still_horizon: f64,
    pub still_sample_every: f64,
    /// Repeat the still run at doubled resolution and halved step.
    pub confirm: bool,
    /// Admissible relative detection-time drift under refinement.
    pub max_drift: f64,
    pub criteria: BlowupCriteria,
}

impl Default for KsConfig {
    fn default() -> Self {
        Self {
            chi: 1.0,
            profile: InitialProfile::GaussianBump { center: vec![0.5, 0.5], width: 0.06, mass: 30.0, background: 0.0 },
            flow: cellular_stirring(8),
            horizon: 1.0,
            sample_every: 5e-3,
            still_horizon: 0.05,
            still_sample_every: 2.5e-5,
            confirm: true,
            max_drift: 0.2,
            criteria: BlowupCriteria::default(),
        }
    }
}

/// Paired ignition runs from one initial temperature, without and with stirring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RdConfig {
    pub alpha0: f64,
    pub rate: f64,
    pub profile: InitialProfile,
    /// Shift the hot-spot background so the initial mean equals this.
    pub mean: Option<f64>,
    pub flow: FlowSpec,
    pub horizon: f64,
    pub sample_every: f64,
    /// Fixed steps per sample on the stirred run; unset selects steps adaptively.
    pub steps_per_sample: Option<u32>,
    /// Constant in the dissipation-time quench requirement.
    pub c_d: f64,
}

impl Default for RdConfig {
    fn default() -> Self {
        Self {
            alpha0: 0.5,
            rate: 380.0,
            profile: InitialProfile::HotSpot { center: vec![0.5, 0.5], width: 0.2, peak: 1.0, background: 0.0 },
            mean: Some(0.25),
            flow: cellular_stirring(8),
            horizon: 0.3,
            sample_every: 7.5e-4,
            steps_per_sample: Some(8),
            c_d: 1.0,
        }
    }
}

/// Dissipation time along `rescale(family(amplitude), nu, +1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauConfig {
    pub family: FlowFamily,
    pub amplitude: f64,
    pub nus: Vec<u32>,
    /// Grid points per side per cell; the grid is never coarser than `grid.n`.
    pub n_per_cell: usize,
    /// Relative bisection tolerance on `tau*`.
    pub tol: f64,
}

impl Default for TauConfig {
    fn default() -> Self {
        Self { family: FlowFamily::Cellular2d, amplitude: 1.0, nus: vec![1, 2, 4, 8], n_per_cell: 64, tol: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub paths: usize,
    pub horizon: f64,
    /// Euler-Maruyama step; unset uses the recommended step of each flow.
    #[serde(default)]
    pub dt: Option<f64>,
}

/// Effective diffusivity against amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusivityConfig {
    pub family: FlowFamily,
    pub amplitudes: Vec<f64>,
    pub cells_per_side: u32,
    pub direction: Vec<f64>,
    /// Relative residual of the corrector solve.
    pub tol: f64,
    /// Optional Monte Carlo cross-check per amplitude.
    pub monte_carlo: Option<MonteCarloConfig>,
}

impl Default for DiffusivityConfig {
    fn default() -> Self {
        Self {
            family: FlowFamily::Cellular2d,
            amplitudes: vec![64.0, 128.0, 256.0, 512.0, 1024.0],
            cells_per_side: 1,
            direction: vec![1.0, 0.0],
            tol: 1e-8,
            monte_carlo: None,
        }
    }
}

/// Cell-occupancy histograms of paths from a fixed start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccupancyConfig {
    pub flow: FlowSpec,
    pub mu: u32,
    pub taus: Vec<f64>,
    pub paths: usize,
    pub start: Vec<f64>,
    pub dt: Option<f64>,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self { flow: cellular_stirring(4), mu: 2, taus: vec![0.005, 0.01, 0.02], paths: 40_000, start: vec![0.1, 0.1], dt: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Mean-zero advection-diffusion.
    Linear,
    KellerSegel,
    Ignition,
}

/// A single run of any model from any initial profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomConfig {
    pub model: Model,
    pub profile: InitialProfile,
    pub flow: FlowSpec,
    pub horizon: f64,
    pub sample_every: f64,
    pub snapshot_times: Vec<f64>,
    pub chi: f64,
    pub alpha0: f64,
    pub rate: f64,
}

impl Default for CustomConfig {
    fn default() -> Self {
        Self {
            model: Model::Linear,
            profile: InitialProfile::RandomBandlimited { seed: 0, kmax: 6, l2: 1.0, mean: 0.0 },
            flow: cellular_stirring(2),
            horizon: 0.05,
            sample_every: 1e-3,
            snapshot_times: Vec::new(),
            chi: 1.0,
            alpha0: 0.5,
            rate: 1.0,
        }
    }
}

/// Cartesian product over dotted config keys, e.g. `"tau.amplitude" = [1.0, 2.0]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub ranges: BTreeMap<String, Vec<toml::Value>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<KsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rd: Option<RdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusivity: Option<DiffusivityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<OccupancyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn positive(what: &str, x: f64) -> Result<(), SchemaError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        schema(format!("{what} must be positive and finite, got {x}"))
    }
}

fn flow_ok(what: &str, flow: &FlowSpec, dim: usize) -> Result<(), SchemaError> {
    flow.realize(dim).map(|_| ()).map_err(|e| SchemaError(format!("{what}: {e}")))
}

fn profile_ok(what: &str, p: &InitialProfile, dim: usize) -> Result<(), SchemaError> {
    p.validate(dim).map_err(|e| SchemaError(format!("{what}: {e}")))
}

impl ExperimentConfig {
    /// Bare config of the given kind with its section at defaults.
    pub fn new(experiment: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment,
            seed: 0,
            out: default_out(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            ks: None,
            rd: None,
            tau: None,
            diffusivity: None,
            occupancy: None,
            custom: None,
            sweep: None,
        };
        cfg.fill_section();
        cfg
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self, SchemaError> {
        let value: toml::Table = toml::from_str(text).map_err(|e| SchemaError(e.to_string()))?;
        Self::from_table(value)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, SchemaError> {
        let mut cfg: Self = table.try_into().map_err(|e: toml::de::Error| SchemaError(e.to_string()))?;
        cfg.fill_section();
        cfg.validate()?;
        Ok(cfg)
    }

    fn fill_section(&mut self) {
        match self.experiment {
            ExperimentKind::KsSuppression => drop(self.ks.get_or_insert_with(Default::default)),
            ExperimentKind::RdQuench => drop(self.rd.get_or_insert_with(Default::default)),
            ExperimentKind::TauVsNu => drop(self.tau.get_or_insert_with(Default::default)),
            ExperimentKind::DVsA => drop(self.diffusivity.get_or_insert_with(Default::default)),
            ExperimentKind::Occupancy => drop(self.occupancy.get_or_insert_with(Default::default)),
            ExperimentKind::Custom => drop(self.custom.get_or_insert_with(Default::default)),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let canonical = Self { out: PathBuf::new(), ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("configs serialize to JSON");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if i64::try_from(self.seed).is_err() {
            return Err(SchemaError(format!("seed {} exceeds the TOML integer range", self.seed)));
        }
        let dim = self.grid.dim;
        Grid::new(dim, self.grid.n).map_err(|e| SchemaError(format!("grid: {e}")))?;
        self.solver.validate().map_err(|e| SchemaError(format!("solver: {e}")))?;
        let present = [
            ("ks", self.ks.is_some()),
            ("rd", self.rd.is_some()),
            ("tau", self.tau.is_some()),
            ("diffusivity", self.diffusivity.is_some()),
            ("occupancy", self.occupancy.is_some()),
            ("custom", self.custom.is_some()),
        ];
        let wanted = self.experiment.section();
        for (name, here) in present {
            if here && name != wanted {
                return schema(format!("section [{name}] does not apply to experiment {}", self.experiment.name()));
            }
        }
        if let Some(s) = &self.sweep {
            for key in s.ranges.keys() {
                if key.is_empty() || key.split('.').any(str::is_empty) {
                    return schema(format!("malformed sweep key {key:?}"));
                }
                if key.starts_with("sweep") || key == "experiment" {
                    return schema(format!("sweep key {key:?} cannot be swept"));
                }
            }
        }
        match self.experiment {
            ExperimentKind::KsSuppression => self.validate_ks(dim),
            ExperimentKind::RdQuench => self.validate_rd(dim),
            ExperimentKind::TauVsNu => self.validate_tau(dim),
            ExperimentKind::DVsA => self.validate_diffusivity(dim),
            ExperimentKind::Occupancy => self.validate_occupancy(dim),
            ExperimentKind::Custom => self.validate_custom(dim),
        }
    }

    fn validate_ks(&self, dim: usize) -> Result<(), SchemaError> {
        let k = self.ks.as_ref().expect("filled");
        if !(k.chi >= 0.0 && k.chi.is_finite()) {
            return schema(format!("ks.chi must be >= 0, got {}", k.chi));
        }
        for (w, x) in [
            ("ks.horizon", k.horizon),
            ("ks.sample_every", k.sample_every),
            ("ks.still_horizon", k.still_horizon),
            ("ks.still_sample_every", k.still_sample_every),
            ("ks.max_drift", k.max_drift),
        ] {
            positive(w, x)?;
        }
        profile_ok("ks.profile", &k.profile, dim)?;
        flow_ok("ks.flow", &k.flow, dim)
    }

    fn validate_rd(&self, dim: usize) -> Result<(), SchemaError> {
        let r = self.rd.as_ref().expect("filled");
        if !(r.alpha0 > 0.0 && r.alpha0 < 1.0) {
            return schema(format!("rd.alpha0 must lie in (0, 1), got {}", r.alpha0));
        }
        for (w, x) in [("rd.rate", r.rate), ("rd.horizon", r.horizon), ("rd.sample_every", r.sample_every), ("rd.c_d", r.c_d)] {
            positive(w, x)?;
        }
        if r.steps_per_sample == Some(0) {
            return schema("rd.steps_per_sample must be at least 1");
        }
        profile_ok("rd.profile", &r.profile, dim)?;
        if let Some(m) = r.mean {
            let InitialProfile::HotSpot { peak, .. } = r.profile else {
                return schema("rd.mean applies only to a hot-spot profile");
            };
            if !(m >= 0.0 && m < peak) {
                return schema(format!("rd.mean must lie in [0, peak), got {m}"));
            }
        }
        flow_ok("rd.flow", &r.flow, dim)
    }

    fn validate_tau(&self, dim: usize) -> Result<(), SchemaError> {
        let t = self.tau.as_ref().expect("filled");
        if t.family == FlowFamily::CustomStream {
            return schema("tau.family cannot be custom-stream");
        }
        if t.nus.is_empty() || t.nus.contains(&0) {
            return schema("tau.nus must be a non-empty list of positive integers");
        }
        if t.n_per_cell == 0 {
            return schema("tau.n_per_cell must be positive");
        }
        if !(t.tol > 0.0 && t.tol < 1.0) {
            return schema(format!("tau.tol must lie in (0, 1), got {}", t.tol));
        }
        for &nu in &t.nus {
            flow_ok("tau", &FlowSpec::new(t.family, t.amplitude, nu), dim)?;
        }
        Ok(())
    }

    fn validate_diffusivity(&self, dim: usize) -> Result<(), SchemaError> {
        let d = self.diffusivity.as_ref().expect("filled");
        if d.family == FlowFamily::CustomStream {
            return schema("diffusivity.family cannot be custom-stream");
        }
        if d.direction.len() != dim || d.direction.iter().all(|&v| v == 0.0) {
            return schema(format!("diffusivity.direction must be a nonzero {dim}-vector"));
        }
        positive("diffusivity.tol", d.tol)?;
        for &a in &d.amplitudes {
            flow_ok("diffusivity", &FlowSpec::new(d.family, a, d.cells_per_side), dim)?;
        }
        if let Some(mc) = &d.monte_carlo {
            if mc.paths < 2 {
                return schema("diffusivity.monte_carlo.paths must be at least 2");
            }
            positive("diffusivity.monte_carlo.horizon", mc.horizon)?;
            if let Some(dt) = mc.dt {
                positive("diffusivity.monte_carlo.dt", dt)?;
            }
        }
        Ok(())
    }

    fn validate_occupancy(&self, dim: usize) -> Result<(), SchemaError> {
        let o = self.occupancy.as_ref().expect("filled");
        flow_ok("occupancy.flow", &o.flow, dim)?;
        let nu = o.flow.cells_per_side;
        if o.mu == 0 || nu % o.mu != 0 {
            return schema(format!("occupancy.mu = {} must divide the cell count {nu}", o.mu));
        }
        if o.start.len() != dim {
            return schema(format!("occupancy.start must have {dim} coordinates"));
        }
        if o.paths == 0 {
            return schema("occupancy.paths must be positive");
        }
        if o.taus.is_empty() {
            return schema("occupancy.taus must be non-empty");
        }
        for &t in &o.taus {
            positive("occupancy.taus", t)?;
        }
        if let Some(dt) = o.dt {
            positive("occupancy.dt", dt)?;
        }
        Ok(())
    }

    fn validate_custom(&self, dim: usize) -> Result<(), SchemaError> {
        let c = self.custom.as_ref().expect("filled");
        positive("custom.horizon", c.horizon)?;
        positive("custom.sample_every", c.sample_every)?;
        profile_ok("custom.profile", &c.profile, dim)?;
        flow_ok("custom.flow", &c.flow, dim)?;
        match c.model {
            Model::Linear => Ok(()),
            Model::KellerSegel if !(c.chi >= 0.0) => schema(format!("custom.chi must be >= 0, got {}", c.chi)),
            Model::KellerSegel => Ok(()),
            Model::Ignition => {
                positive("custom.rate", c.rate)?;
                if !(c.alpha0 > 0.0 && c.alpha0 < 1.0) {
                    return schema(format!("custom.alpha0 must lie in (0, 1), got {}", c.alpha0));
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_the_selected_section() {
        let cfg = ExperimentConfig::from_toml_str("experiment = \"tau-vs-nu\"").unwrap();
        assert_eq!(cfg.tau, Some(TauConfig::default()));
        assert!(cfg.ks.is_none());
    }

    #[test]
    fn unknown_keys_and_foreign_sections_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("experiment = \"tau-vs-nu\"\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"tau-vs-nu\"\n[tau]\nnu = [1]").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"tau-vs-nu\"\n[ks]\nchi = 1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"warp\"").is_err());
    }

    #[test]
    fn semantic_checks_run_before_compute() {
        assert!(ExperimentConfig::from_toml_str("experiment = \"tau-vs-nu\"\n[grid]\nn = 48").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"occupancy\"\n[occupancy]\nmu = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"rd-quench\"\n[rd]\nalpha0 = 1.5").is_err());
    }

    #[test]
    fn hash_ignores_output_directory_and_round_trips() {
        let a = ExperimentConfig::new(ExperimentKind::RdQuench);
        let b = ExperimentConfig { out: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), ExperimentConfig { seed: 1, ..a.clone() }.hash());
        let back = ExperimentConfig::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.hash(), a.hash());
    }
}
