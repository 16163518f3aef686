use std::path::{Path, PathBuf};

use serde::Deserialize;

use peridyn_kv::evolution::{Scheme, TimeGrid};
use peridyn_kv::geometry::{Domain, Grid};
use peridyn_kv::kernels::{Kernel, MassCalibration, Profile};
use peridyn_kv::lab::{AnalyticField, FieldKind, LevelSpec, SweepPlan};
use peridyn_kv::local::ElasticTensors;
use peridyn_kv::nonlocal::MaterialParams;

use crate::CliError;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    pub material: MaterialConfig,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    pub simulate: SimulateConfig,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Width of the clamped layer; defaults to the horizon.
    pub collar: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub profile: String,
    pub power: Option<f64>,
    pub width: Option<f64>,
    pub horizon: f64,
    pub horizons: Vec<f64>,
    pub ratio: f64,
    pub calibration: String,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt: f64,
    pub scheme: String,
    /// Implicitness for `scheme = "theta"`.
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub field: String,
    pub amplitude: f64,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// `nonlocal`, `local`, or `scalar` (a one-dof diagnostic system).
    pub model: String,
    /// Finite element cells per axis for the local model.
    pub cells: usize,
    /// Largest admissible `max_t |EDE residual| / E(0)`.
    pub residual_tolerance: f64,
    /// Write a field snapshot every this many steps (0: first and last only).
    pub snapshot_every: usize,
    pub scalar_mass: f64,
    pub scalar_stiffness: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub reference_factor: usize,
    pub sample_every: usize,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Random matrix pairs and random fields per randomized check.
    pub samples: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            collar: None,
        }
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            profile: "indicator".into(),
            power: None,
            width: None,
            horizon: 0.1,
            horizons: vec![0.2, 0.1, 0.05],
            ratio: 4.0,
            calibration: "lattice".into(),
        }
    }
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self { alpha: 2.0, beta: 1.0 }
    }
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            dt: 1e-3,
            scheme: "implicit-euler".into(),
            theta: None,
        }
    }
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            field: "sine-squared".into(),
            amplitude: 1.0,
            center: None,
            radius: None,
        }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: "nonlocal".into(),
            cells: 64,
            residual_tolerance: 1e-2,
            snapshot_every: 0,
            scalar_mass: 1.0,
            scalar_stiffness: 1.0,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            reference_factor: 2,
            sample_every: 1,
        }
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { samples: 20 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output: None,
            seed: None,
            threads: None,
            domain: DomainConfig::default(),
            kernel: KernelConfig::default(),
            material: MaterialConfig::default(),
            time: TimeConfig::default(),
            initial: InitialConfig::default(),
            simulate: SimulateConfig::default(),
            sweep: SweepConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config_err(format!("{name} must be positive, got {v}")))
    }
}

pub const DEFAULT_OUTPUT: &str = "peridyn-kv-out";
pub const DEFAULT_SEED: u64 = 7;

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn dim(&self) -> Result<usize, CliError> {
        let d = self.domain.dim;
        if d != 2 && d != 3 {
            return Err(config_err(format!("domain.dim must be 2 or 3, got {d}")));
        }
        if self.domain.lower.len() != d || self.domain.upper.len() != d {
            return Err(config_err(format!("domain.lower and domain.upper need {d} entries")));
        }
        Ok(d)
    }

    pub fn profile(&self) -> Result<Profile, CliError> {
        let k = &self.kernel;
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| config_err(format!("kernel.{name} is required for profile '{}'", k.profile)))
        };
        Ok(match k.profile.as_str() {
            "indicator" => Profile::Indicator,
            "conic" => Profile::Conic,
            "polynomial-decay" => Profile::PolynomialDecay {
                power: need("power", k.power)?,
            },
            "gaussian" => Profile::TruncatedGaussian {
                width: positive("kernel.width", need("width", k.width)?)?,
            },
            "monomial" => Profile::Monomial {
                power: need("power", k.power)?,
            },
            other => {
                return Err(config_err(format!(
                    "kernel.profile: unknown profile '{other}' (indicator, conic, polynomial-decay, gaussian, monomial)"
                )))
            }
        })
    }

    pub fn calibration(&self) -> Result<MassCalibration, CliError> {
        match self.kernel.calibration.as_str() {
            "lattice" => Ok(MassCalibration::Lattice),
            "analytic" => Ok(MassCalibration::Analytic),
            other => Err(config_err(format!("kernel.calibration: unknown value '{other}' (lattice, analytic)"))),
        }
    }

    pub fn params(&self) -> Result<MaterialParams, CliError> {
        positive("material.alpha", self.material.alpha)?;
        positive("material.beta", self.material.beta)?;
        let p = MaterialParams::new(self.material.alpha, self.material.beta)?;
        ElasticTensors::from_params(&p, self.dim()?)?;
        Ok(p)
    }

    pub fn tensors(&self) -> Result<ElasticTensors, CliError> {
        Ok(ElasticTensors::from_params(&self.params()?, self.dim()?)?)
    }

    pub fn scheme(&self) -> Result<Scheme, CliError> {
        match self.time.scheme.as_str() {
            "implicit-euler" => Ok(Scheme::ImplicitEuler),
            "crank-nicolson" => Ok(Scheme::crank_nicolson()),
            "theta" => {
                let t = self
                    .time
                    .theta
                    .ok_or_else(|| config_err("time.theta is required for scheme 'theta'"))?;
                if !(0.5..=1.0).contains(&t) {
                    return Err(config_err(format!("time.theta must lie in [0.5, 1], got {t}")));
                }
                Ok(Scheme::Theta(t))
            }
            other => Err(config_err(format!(
                "time.scheme: unknown scheme '{other}' (implicit-euler, crank-nicolson, theta)"
            ))),
        }
    }

    /// `None` when `t_final = 0`.
    pub fn time_grid(&self) -> Result<Option<TimeGrid>, CliError> {
        let scheme = self.scheme()?;
        if self.time.t_final == 0.0 {
            return Ok(None);
        }
        positive("time.t_final", self.time.t_final)?;
        positive("time.dt", self.time.dt)?;
        Ok(Some(TimeGrid::new(self.time.t_final, self.time.dt, scheme)?))
    }

    pub fn field_kind(&self) -> Result<FieldKind, CliError> {
        let mut kind: FieldKind = self
            .initial
            .field
            .parse()
            .map_err(|_| config_err(format!("initial.field: unknown field '{}'", self.initial.field)))?;
        if let FieldKind::Bump { center, radius } = &mut kind {
            if let Some(c) = &self.initial.center {
                if c.len() != self.dim()? {
                    return Err(config_err(format!("initial.center needs {} entries", self.dim()?)));
                }
                center[..c.len()].copy_from_slice(c);
            }
            if let Some(r) = self.initial.radius {
                *radius = positive("initial.radius", r)?;
            }
        } else if self.initial.center.is_some() || self.initial.radius.is_some() {
            return Err(config_err("initial.center and initial.radius apply only to the bump field"));
        }
        if !self.initial.amplitude.is_finite() {
            return Err(config_err("initial.amplitude must be finite"));
        }
        Ok(kind)
    }

    pub fn omega(&self) -> Result<Domain, CliError> {
        Ok(Domain::new(self.dim()?, &self.domain.lower, &self.domain.upper, 0.0)?)
    }

    pub fn field(&self) -> Result<AnalyticField, CliError> {
        Ok(AnalyticField::new(self.field_kind()?, &self.omega()?, self.initial.amplitude))
    }

    /// Kernel at the single configured horizon; inadmissible profiles are
    /// kept so the verify suite can report them.
    pub fn kernel_unchecked(&self) -> Result<Kernel, CliError> {
        let h = positive("kernel.horizon", self.kernel.horizon)?;
        Ok(Kernel::unchecked(self.profile()?, self.dim()?, h)?)
    }

    pub fn kernel(&self) -> Result<Kernel, CliError> {
        let h = positive("kernel.horizon", self.kernel.horizon)?;
        Ok(Kernel::new(self.profile()?, self.dim()?, h)?)
    }

    /// Grid over `Ω̃` for the single configured horizon.
    pub fn grid(&self) -> Result<Grid, CliError> {
        let h = positive("kernel.horizon", self.kernel.horizon)?;
        let ratio = positive("kernel.ratio", self.kernel.ratio)?;
        let collar = positive("domain.collar", self.domain.collar.unwrap_or(h))?;
        let domain = Domain::new(self.dim()?, &self.domain.lower, &self.domain.upper, collar)?;
        Ok(Grid::new(domain, h / ratio)?)
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan, CliError> {
        if self.domain.collar.is_some() {
            return Err(config_err("domain.collar cannot be set for sweeps; each level uses a one-horizon collar"));
        }
        let spec = LevelSpec {
            dim: self.dim()?,
            lower: self.domain.lower.clone(),
            upper: self.domain.upper.clone(),
            profile: self.profile()?,
            ratio: positive("kernel.ratio", self.kernel.ratio)?,
            params: self.params()?,
            calibration: self.calibration()?,
        };
        let plan = SweepPlan {
            spec,
            horizons: self.kernel.horizons.clone(),
            field: self.field_kind()?,
            amplitude: self.initial.amplitude,
            time: self.time_grid()?,
            reference_factor: self.sweep.reference_factor,
            sample_every: self.sweep.sample_every,
        };
        plan.validate().map_err(|e| match e {
            peridyn_kv::Error::Config(m) => config_err(m),
            other => config_err(other.to_string()),
        })?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = RunConfig::parse("[kernel]\nhorizon = 0.1\nhorizen = 0.2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("horizen"), "{msg}");
        assert!(matches!(RunConfig::parse("[kernal]\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn wrong_types_are_rejected() {
        let err = RunConfig::parse("[material]\nalpha = \"two\"\n").unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");
    }

    #[test]
    fn physical_quantities_must_be_positive() {
        let mut c = RunConfig::default();
        c.material.alpha = -1.0;
        assert!(c.params().is_err());
        let mut c = RunConfig::default();
        c.time.dt = 0.0;
        assert!(c.time_grid().is_err());
        let mut c = RunConfig::default();
        c.kernel.horizon = 0.0;
        assert!(c.grid().is_err());
    }

    #[test]
    fn zero_final_time_means_no_evolution() {
        let mut c = RunConfig::default();
        c.time.t_final = 0.0;
        assert_eq!(c.time_grid().unwrap(), None);
    }

    #[test]
    fn profiles_and_schemes_parse() {
        let c = RunConfig::parse("[kernel]\nprofile = \"polynomial-decay\"\npower = 2.0\n[time]\nscheme = \"theta\"\ntheta = 0.75\n")
            .unwrap();
        assert_eq!(c.profile().unwrap(), Profile::PolynomialDecay { power: 2.0 });
        assert_eq!(c.scheme().unwrap(), Scheme::Theta(0.75));
        let c = RunConfig::parse("[kernel]\nprofile = \"polynomial-decay\"\n").unwrap();
        assert!(c.profile().is_err());
    }

    #[test]
    fn bump_parameters_apply_only_to_bump() {
        let c = RunConfig::parse("[initial]\nfield = \"bump\"\ncenter = [0.4, 0.6]\nradius = 0.2\n").unwrap();
        assert_eq!(
            c.field_kind().unwrap(),
            FieldKind::Bump {
                center: [0.4, 0.6, 0.5],
                radius: 0.2
            }
        );
        let c = RunConfig::parse("[initial]\nradius = 0.2\n").unwrap();
        assert!(c.field_kind().is_err());
    }

    #[test]
    fn default_sweep_plan_is_valid() {
        let plan = RunConfig::default().sweep_plan().unwrap();
        assert_eq!(plan.horizons, vec![0.2, 0.1, 0.05]);
        let mut c = RunConfig::default();
        c.kernel.horizons = vec![0.2, 0.1];
        assert!(matches!(c.sweep_plan(), Err(CliError::Config(_))));
    }
}
