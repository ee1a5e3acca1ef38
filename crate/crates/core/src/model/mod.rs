//! Control functions, process parameters, lattice geometry and the named
//! special cases of the patchy restrained process.

mod control;
mod geometry;
pub mod series;

pub use control::{ControlProducts, ControlSpec, ControlTable, Probability, TailStructure};
pub use geometry::{Boundary, Geometry, GeometrySpec};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid control function: {0}")]
    InvalidControl(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("preset {0:?} requires `{1}`")]
    MissingPresetArgument(Preset, &'static str),
}

/// `c(i)` for the given family.
pub fn eval_control(control: &ControlSpec, i: u64) -> f64 {
    control.eval(i)
}

/// `c!(n) = prod_{l=0}^{n} c(l)`.
pub fn control_product(control: &ControlSpec, n: u64) -> f64 {
    control.product(n)
}

/// Full parameterisation of one process. The death rate is fixed at 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Inter-patch breeding rate, per particle and per neighbouring patch.
    pub lambda: f64,
    /// Intra-patch breeding rate per particle.
    pub phi: f64,
    pub d: usize,
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    pub control: ControlSpec,
    /// Also count the own patch in the inter-patch sum. Off by default.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub lambda_includes_own_patch: bool,
}

impl Params {
    pub fn new(lambda: f64, phi: f64, d: usize, n: usize, control: ControlSpec) -> Result<Self, ModelError> {
        let params = Self {
            lambda,
            phi,
            d,
            n,
            control,
            lambda_includes_own_patch: false,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [("lambda", self.lambda), ("phi", self.phi)] {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidParams(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if self.d == 0 {
            return Err(ModelError::InvalidParams("d must be >= 1".into()));
        }
        if self.n == 0 {
            return Err(ModelError::InvalidParams("N must be >= 1".into()));
        }
        self.control.validate()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    pub fn with_phi(&self, phi: f64) -> Self {
        Self { phi, ..self.clone() }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }
}

/// Named special cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// Contact process: `phi = 0`, at most one particle per site.
    #[serde(rename = "CP")]
    ContactProcess,
    /// Biparametric contact process: `c = delta_0`.
    #[serde(rename = "BCP")]
    Biparametric,
    /// Logistic individual-recovery process: `N = 1`, `c(i) = max(0, 1 - i/kappa)`.
    #[serde(rename = "LogisticIRP")]
    LogisticIrp,
    /// Self-regulating individual-recovery process: `N = 1`, arbitrary `c`.
    #[serde(rename = "SelfRegIRP")]
    SelfRegulatingIrp,
    /// Individual-recovery process: `N = 1`, `c = 1` on `{0, ..., kappa-1}`.
    #[serde(rename = "IRP")]
    Irp,
}

#[derive(Clone, Debug, Default)]
pub struct PresetArgs {
    pub lambda: f64,
    pub phi: f64,
    pub d: usize,
    /// Patch size; ignored by the single-site presets.
    pub n: Option<usize>,
    pub kappa: Option<u64>,
    pub control: Option<ControlSpec>,
}

pub fn preset(name: Preset, args: &PresetArgs) -> Result<Params, ModelError> {
    let kappa = || args.kappa.ok_or(ModelError::MissingPresetArgument(name, "kappa"));
    let d = args.d.max(1);
    match name {
        Preset::ContactProcess => Params::new(args.lambda, 0.0, d, args.n.unwrap_or(1), ControlSpec::AllOne),
        Preset::Biparametric => Params::new(args.lambda, args.phi, d, args.n.unwrap_or(1), ControlSpec::delta0()),
        Preset::Irp => Params::new(args.lambda, args.phi, d, 1, ControlSpec::Indicator { kappa: kappa()? }),
        Preset::LogisticIrp => Params::new(args.lambda, args.phi, d, 1, ControlSpec::Logistic { kappa: kappa()? }),
        Preset::SelfRegulatingIrp => {
            let control = args
                .control
                .clone()
                .ok_or(ModelError::MissingPresetArgument(name, "control"))?;
            Params::new(args.lambda, args.phi, d, 1, control)
        }
    }
}
