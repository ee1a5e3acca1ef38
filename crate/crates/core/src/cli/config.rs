//! Flat JSON run configuration.
//!
//! A config file and the command-line flags describe the same flat set of
//! keys; flags win over the file. Parsing reports every unknown key, every
//! ill-typed value and every violated invariant in one diagnostic.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::criticality::Axis;
use crate::meanfield::Flavor;
use crate::model::{preset, Boundary, ControlSpec, Geometry, Params, Preset, PresetArgs};
use crate::simulator::{IntraMode, Stopping};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Meanfield,
    Chain,
    Brw,
    Sweep,
    Critical,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Meanfield => "meanfield",
            Command::Chain => "chain",
            Command::Brw => "brw",
            Command::Sweep => "sweep",
            Command::Critical => "critical",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FlavorName {
    Logistic,
    Selfreg,
}

/// Every key a config may contain. All optional at parse time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,

    // Process parameters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(rename = "N", alias = "n", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_includes_own_patch: Option<bool>,
    /// A full control object, as an alternative to the flat keys below.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<Value>,

    // Geometry and stopping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pop_cap: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intra_mode: Option<IntraMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,

    // meanfield
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flavor: Option<FlavorName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,

    // chain
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<u64>,

    // brw
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode: Option<bool>,
    /// BRW tail tolerance, or bracket width for `critical`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,

    // sweep
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phis: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,

    // critical
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
}

/// Every problem found while reading a config, one per line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.problems.len())?;
        for p in &self.problems {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn known_keys() -> Vec<String> {
    // Serialising a config with every field set lists the canonical names.
    let full = serde_json::to_value(Config::everything()).expect("serialisable");
    let mut keys: Vec<String> = full.as_object().expect("object").keys().cloned().collect();
    keys.push("n".into());
    keys
}

impl Config {
    fn everything() -> Self {
        Config {
            command: Some(Command::Simulate),
            seed: Some(0),
            replicas: Some(0),
            out: Some(PathBuf::new()),
            format: Some(Format::Csv),
            preset: Some(Preset::ContactProcess),
            lambda: Some(0.0),
            phi: Some(0.0),
            d: Some(0),
            n: Some(0),
            lambda_includes_own_patch: Some(false),
            control: Some(ControlSpec::AllOne),
            family: Some(String::new()),
            kappa: Some(0),
            p: Some(Value::Null),
            values: Some(vec![]),
            tail: Some(Value::Null),
            offset: Some(0),
            limit: Some(Value::Null),
            side: Some(0),
            boundary: Some(Boundary::Periodic),
            t_max: Some(0.0),
            pop_cap: Some(0),
            intra_mode: Some(IntraMode::Exact),
            events: Some(PathBuf::new()),
            flavor: Some(FlavorName::Logistic),
            t_end: Some(0.0),
            dt: Some(0.0),
            truncation: Some(0),
            state: Some(vec![]),
            height: Some(0),
            t: Some(0.0),
            n_max: Some(0),
            radius: Some(0),
            ode: Some(false),
            tolerance: Some(0.0),
            lambdas: Some(vec![]),
            phis: Some(vec![]),
            ns: Some(vec![]),
            axis: Some(Axis::Lambda),
            lo: Some(0.0),
            hi: Some(0.0),
            threshold: Some(0.0),
            budget: Some(0),
            max_value: Some(0.0),
            log: Some(PathBuf::new()),
        }
    }

    /// Reads `file` (if any), applies `overrides` key by key, then validates.
    pub fn load(file: Option<&Path>, overrides: Map<String, Value>) -> Result<Config, ConfigError> {
        let mut map = Map::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
                problems: vec![format!("cannot read {}: {e}", path.display())],
            })?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => map = m,
                Ok(_) => {
                    return Err(ConfigError {
                        problems: vec![format!("{}: top level must be a JSON object", path.display())],
                    })
                }
                Err(e) => {
                    return Err(ConfigError {
                        problems: vec![format!("{}: not valid JSON: {e}", path.display())],
                    })
                }
            }
        }
        // `n` and `N` name the same key; the later source wins.
        for (k, v) in overrides {
            if k == "N" {
                map.remove("n");
            }
            map.insert(k, v);
        }
        let config = Config::from_map(map)?;
        config.validate()?;
        Ok(config)
    }

    /// Type-checks each key on its own so that all problems are reported.
    pub fn from_map(map: Map<String, Value>) -> Result<Config, ConfigError> {
        let known = known_keys();
        let mut problems = Vec::new();
        for (k, v) in &map {
            if !known.contains(k) {
                problems.push(format!("unknown key `{k}`"));
                continue;
            }
            let mut single = Map::new();
            single.insert(k.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<Config>(Value::Object(single)) {
                problems.push(format!("key `{k}`: {e}"));
            }
        }
        if map.contains_key("n") && map.contains_key("N") {
            problems.push("keys `n` and `N` both given".into());
        }
        if !problems.is_empty() {
            return Err(ConfigError { problems });
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| ConfigError {
            problems: vec![e.to_string()],
        })
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config is serialisable")
    }

    pub fn command(&self) -> Command {
        self.command.expect("validated")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Explicit format, else the extension of `out`, else a per-command default.
    pub fn format(&self) -> Format {
        let from_ext = self.out.as_ref().and_then(|p| match p.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        });
        self.format.or(from_ext).unwrap_or(match self.command {
            Some(Command::Sweep) | Some(Command::Simulate) => Format::Csv,
            _ => Format::Json,
        })
    }

    pub fn replicas(&self) -> u64 {
        self.replicas.unwrap_or(match self.command {
            Some(Command::Critical) => 500,
            _ => 100,
        })
    }

    pub fn d(&self) -> usize {
        self.d.unwrap_or(1)
    }

    pub fn patch_size(&self) -> usize {
        self.n.unwrap_or(1)
    }

    pub fn stopping(&self) -> Stopping {
        let def = Stopping::default();
        Stopping {
            t_max: self.t_max.unwrap_or(def.t_max),
            pop_cap: self.pop_cap.unwrap_or(def.pop_cap),
        }
    }

    pub fn geometry_for(&self, n: usize) -> Result<Geometry, String> {
        Geometry::new(
            self.d(),
            self.side.unwrap_or(50),
            n,
            self.boundary.unwrap_or_default(),
        )
        .map_err(|e| e.to_string())
    }

    /// The control function from `control` or from the flat keys.
    pub fn control_spec(&self) -> Result<Option<ControlSpec>, String> {
        if let Some(c) = &self.control {
            if self.family.is_some() {
                return Err("give either `control` or `family`, not both".into());
            }
            return Ok(Some(c.clone()));
        }
        let Some(family) = &self.family else {
            return Ok(None);
        };
        if family == "delta0" {
            return Ok(Some(ControlSpec::delta0()));
        }
        let mut obj = Map::new();
        obj.insert("family".into(), Value::String(family.clone()));
        let extras: [(&str, Option<Value>); 6] = [
            ("kappa", self.kappa.map(Value::from)),
            ("p", self.p.clone()),
            ("values", self.values.clone().map(Value::Array)),
            ("tail", self.tail.clone()),
            ("offset", self.offset.map(Value::from)),
            ("limit", self.limit.clone()),
        ];
        for (k, v) in extras {
            if let Some(v) = v {
                obj.insert(k.into(), v);
            }
        }
        serde_json::from_value::<ControlSpec>(Value::Object(obj))
            .map(Some)
            .map_err(|e| format!("control `{family}`: {e}"))
    }

    /// Parameters of the simulated process; `lambda`/`phi` may be replaced by the caller.
    pub fn params(&self, lambda: f64, phi: f64, n: usize) -> Result<Params, String> {
        if let Some(name) = self.preset {
            let args = PresetArgs {
                lambda,
                phi,
                d: self.d(),
                n: Some(n),
                kappa: self.kappa,
                control: self.control_spec()?,
            };
            return preset(name, &args).map_err(|e| e.to_string());
        }
        let control = self.control_spec()?.ok_or("missing required key `family` (or `control`)")?;
        let p = Params {
            lambda,
            phi,
            d: self.d(),
            n,
            control,
            lambda_includes_own_patch: self.lambda_includes_own_patch.unwrap_or(false),
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn flavor(&self) -> Result<Flavor, String> {
        match self.flavor {
            Some(FlavorName::Logistic) => Ok(Flavor::Logistic {
                kappa: self.kappa.ok_or("logistic flavor needs `kappa`")?,
            }),
            Some(FlavorName::Selfreg) => Ok(Flavor::SelfReg {
                control: self.control_spec()?.ok_or("selfreg flavor needs `family` (or `control`)")?,
            }),
            None => Err("missing required key `flavor` (logistic or selfreg)".into()),
        }
    }

    /// Checks the invariants for the selected command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let Some(command) = self.command else {
            return Err(ConfigError {
                problems: vec![
                    "missing required key `command` (simulate, meanfield, chain, brw, sweep or critical)".into(),
                ],
            });
        };
        let mut need = |key: &str, present: bool| {
            if !present {
                problems.push(format!("missing required key `{key}` for `{}`", command.name()));
            }
        };
        let preset = self.preset.is_some();
        let has_control = self.control.is_some() || self.family.is_some();
        match command {
            Command::Simulate => {
                need("lambda", self.lambda.is_some());
                need("phi", self.phi.is_some() || matches!(self.preset, Some(Preset::ContactProcess)));
                need("family", has_control || preset);
            }
            Command::Meanfield => {
                need("flavor", self.flavor.is_some());
                need("lambda", self.lambda.is_some());
                need("phi", self.phi.is_some());
            }
            Command::Chain => {
                need("phi", self.phi.is_some());
                need("family", has_control);
            }
            Command::Brw => {
                need("lambda", self.lambda.is_some());
                need("phi", self.phi.is_some());
                need("t", self.t.is_some());
            }
            Command::Sweep => {
                need("lambdas", self.lambdas.is_some() || self.lambda.is_some());
                need("phis", self.phis.is_some() || self.phi.is_some() || matches!(self.preset, Some(Preset::ContactProcess)));
                need("family", has_control || preset);
            }
            Command::Critical => match self.axis.unwrap_or(Axis::Lambda) {
                Axis::Lambda => {
                    need("phi", self.phi.is_some() || matches!(self.preset, Some(Preset::ContactProcess)));
                    need("family", has_control || preset);
                }
                Axis::Phi => {
                    need("lambda", self.lambda.is_some());
                    need("family", has_control || preset);
                }
            },
        }
        for (key, v) in [
            ("lambda", self.lambda),
            ("phi", self.phi),
            ("t", self.t),
            ("lo", self.lo),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    problems.push(format!("`{key}` = {v} must be finite and >= 0"));
                }
            }
        }
        for (key, v) in [
            ("t_max", self.t_max),
            ("t_end", self.t_end.filter(|_| command == Command::Meanfield).map(|t| t + 1.0)),
            ("dt", self.dt),
            ("tolerance", self.tolerance),
            ("hi", self.hi),
            ("max_value", self.max_value),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    problems.push(format!("`{key}` = {v} must be finite and > 0"));
                }
            }
        }
        if let Some(th) = self.threshold {
            if !(th > 0.0 && th < 1.0) {
                problems.push(format!("`threshold` = {th} must lie in (0, 1)"));
            }
        }
        for (key, v) in [("d", self.d), ("N", self.n)] {
            if v == Some(0) {
                problems.push(format!("`{key}` must be >= 1"));
            }
        }
        if self.pop_cap == Some(0) {
            problems.push("`pop_cap` must be >= 1".into());
        }
        if self.replicas == Some(0) {
            problems.push("`replicas` must be >= 1".into());
        }
        for (key, list) in [("lambdas", &self.lambdas), ("phis", &self.phis)] {
            if let Some(list) = list {
                if list.is_empty() || list.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    problems.push(format!("`{key}` must be a nonempty list of finite values >= 0"));
                }
            }
        }
        if let Some(ns) = &self.ns {
            if ns.is_empty() || ns.contains(&0) {
                problems.push("`ns` must be a nonempty list of integers >= 1".into());
            }
        }
        if let (Some(lo), Some(hi)) = (self.lo, self.hi) {
            if lo >= hi {
                problems.push(format!("`lo` = {lo} must be below `hi` = {hi}"));
            }
        }
        match self.control_spec() {
            Ok(Some(c)) => {
                if let Err(e) = c.validate() {
                    problems.push(e.to_string());
                }
            }
            Ok(None) => {}
            Err(e) => problems.push(e),
        }
        if let Err(e) = self.geometry_for(self.patch_size()) {
            problems.push(e);
        }
        if command == Command::Chain {
            if let Some(state) = &self.state {
                if state.is_empty() {
                    problems.push("`state` must have at least one coordinate".into());
                } else if self.n.is_some_and(|n| n != state.len()) {
                    problems.push(format!("`state` has {} coordinates but N = {}", state.len(), self.patch_size()));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems })
        }
    }
}
