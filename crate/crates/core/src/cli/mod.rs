//! The `prp` command line.
//!
//! `prp <command> [--config FILE] [flags]`. Every flag mirrors a key of the
//! flat JSON config (see [`Config`]); flags override the file. Exit codes:
//! 0 on success, 1 for configuration errors, 2 for numerical failures.

mod config;
mod exec;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use serde_json::{Map, Value};

pub use config::{Command, Config, ConfigError, FlavorName, Format};
pub use exec::{execute, read_config_line, CliError, Report};

use crate::criticality::Axis;
use crate::model::Boundary;

#[derive(Debug, Parser)]
#[command(name = "prp", version, about = "Simulate and analyse the patchy restrained process")]
pub struct Cli {
    /// Command to run; may instead come from the config file.
    #[arg(value_enum)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Default, clap::Args)]
pub struct Flags {
    /// Flat JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicas per point [default: 100, critical: 500].
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Output artifact path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Artifact format [default: from the --out extension, else csv for
    /// simulate and sweep, json otherwise].
    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// CP, BCP, LogisticIRP, SelfRegIRP or IRP.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    /// Lattice dimension [default: 1].
    #[arg(long)]
    pub d: Option<usize>,
    /// Patch size N [default: 1].
    #[arg(short = 'N', long = "patch-size")]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda_includes_own_patch: bool,
    /// indicator, logistic, constant, table, square_ratio, all_one or delta0.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub kappa: Option<u64>,
    /// Constant value; a decimal or a ratio such as 1/2.
    #[arg(long)]
    pub p: Option<String>,
    /// Comma separated table values.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<String>>,
    #[arg(long)]
    pub tail: Option<String>,
    #[arg(long)]
    pub offset: Option<u64>,
    #[arg(long)]
    pub limit: Option<String>,

    /// Half-width L of the box {-L..L}^d [default: 50].
    #[arg(long)]
    pub side: Option<usize>,
    /// [default: periodic]
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryArg>,
    /// Time cap of a run [default: 200].
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Population cap of a run [default: 2000].
    #[arg(long)]
    pub pop_cap: Option<u64>,
    /// exact or with_rejections [default: exact].
    #[arg(long)]
    pub intra_mode: Option<String>,
    /// CSV event log of the first replica.
    #[arg(long)]
    pub events: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub flavor: Option<FlavorName>,
    /// Integrate the mean-field ODE up to this time.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Step size [default: 0.01 for meanfield, 0.001 for the BRW ODE].
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub truncation: Option<usize>,

    /// Start state of the walk, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub state: Option<Vec<u64>>,
    /// Truncation height [default: smallest with stationary tail below 1e-10].
    #[arg(long)]
    pub height: Option<u64>,

    #[arg(long)]
    pub t: Option<f64>,
    /// Series cutoff [default: smallest meeting --tolerance].
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Box radius of the BRW ODE [default: n_max].
    #[arg(long)]
    pub radius: Option<usize>,
    /// Also integrate the BRW expectation ODE.
    #[arg(long)]
    pub ode: bool,
    /// BRW tail tolerance [default: 1e-10] or bracket width for critical [default: 0.01].
    #[arg(long)]
    pub tolerance: Option<f64>,

    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub phis: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,

    /// Bisection axis [default: lambda].
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,
    /// Lower end of the initial bracket [default: 0].
    #[arg(long)]
    pub lo: Option<f64>,
    /// Upper end of the initial bracket [default: 1].
    #[arg(long)]
    pub hi: Option<f64>,
    /// Survival threshold [default: 0.05].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Largest number of survival estimates [default: 40].
    #[arg(long)]
    pub budget: Option<usize>,
    /// Auto-bracketing stops past this value [default: 64].
    #[arg(long)]
    pub max_value: Option<f64>,
    /// JSON-lines log of bisection probes.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum BoundaryArg {
    Periodic,
    Absorbing,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum AxisArg {
    Lambda,
    Phi,
}

/// Numbers stay numbers; anything else (such as `1/3`) is passed as a string.
fn number_or_string(s: &str) -> Value {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Value::from(v),
        _ => Value::String(s.to_string()),
    }
}

impl Flags {
    /// The flags that were given, as config keys.
    pub fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| Value::String(p.display().to_string()));
        put("seed", self.seed.map(Value::from));
        put("replicas", self.replicas.map(Value::from));
        put("out", path(&self.out));
        put("format", self.format.map(|f| serde_json::to_value(f).expect("enum")));
        put("preset", self.preset.clone().map(Value::String));
        put("lambda", self.lambda.map(Value::from));
        put("phi", self.phi.map(Value::from));
        put("d", self.d.map(Value::from));
        put("N", self.n.map(Value::from));
        put("lambda_includes_own_patch", self.lambda_includes_own_patch.then_some(Value::Bool(true)));
        put("family", self.family.clone().map(Value::String));
        put("kappa", self.kappa.map(Value::from));
        put("p", self.p.as_deref().map(number_or_string));
        put(
            "values",
            self.values.as_ref().map(|v| Value::Array(v.iter().map(|s| number_or_string(s)).collect())),
        );
        put("tail", self.tail.as_deref().map(number_or_string));
        put("offset", self.offset.map(Value::from));
        put("limit", self.limit.as_deref().map(number_or_string));
        put("side", self.side.map(Value::from));
        put(
            "boundary",
            self.boundary.map(|b| {
                serde_json::to_value(match b {
                    BoundaryArg::Periodic => Boundary::Periodic,
                    BoundaryArg::Absorbing => Boundary::Absorbing,
                })
                .expect("enum")
            }),
        );
        put("t_max", self.t_max.map(Value::from));
        put("pop_cap", self.pop_cap.map(Value::from));
        put("intra_mode", self.intra_mode.clone().map(Value::String));
        put("events", path(&self.events));
        put("flavor", self.flavor.map(|f| serde_json::to_value(f).expect("enum")));
        put("t_end", self.t_end.map(Value::from));
        put("dt", self.dt.map(Value::from));
        put("truncation", self.truncation.map(Value::from));
        put("state", self.state.clone().map(Value::from));
        put("height", self.height.map(Value::from));
        put("t", self.t.map(Value::from));
        put("n_max", self.n_max.map(Value::from));
        put("radius", self.radius.map(Value::from));
        put("ode", self.ode.then_some(Value::Bool(true)));
        put("tolerance", self.tolerance.map(Value::from));
        put("lambdas", self.lambdas.clone().map(Value::from));
        put("phis", self.phis.clone().map(Value::from));
        put("ns", self.ns.clone().map(Value::from));
        put(
            "axis",
            self.axis.map(|a| {
                serde_json::to_value(match a {
                    AxisArg::Lambda => Axis::Lambda,
                    AxisArg::Phi => Axis::Phi,
                })
                .expect("enum")
            }),
        );
        put("lo", self.lo.map(Value::from));
        put("hi", self.hi.map(Value::from));
        put("threshold", self.threshold.map(Value::from));
        put("budget", self.budget.map(Value::from));
        put("max_value", self.max_value.map(Value::from));
        put("log", path(&self.log));
        m
    }
}

/// Parses the command line and resolves the config.
pub fn resolve(cli: &Cli) -> Result<Config, ConfigError> {
    let mut overrides = cli.flags.overrides();
    if let Some(c) = cli.command {
        overrides.insert("command".into(), serde_json::to_value(c).expect("enum"));
    }
    Config::load(cli.flags.config.as_deref(), overrides)
}

/// Caps the rayon pool at `PRP_THREADS` when set.
fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("PRP_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("PRP_THREADS must be a positive integer, got `{value}`"))?;
    // A second call in the same process fails harmlessly.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 1;
    }
    let config = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprint!("error: {e}");
            return 1;
        }
    };
    match execute(&config) {
        Ok(report) => {
            println!("{}", report.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
