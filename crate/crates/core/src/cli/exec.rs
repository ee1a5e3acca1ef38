use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Command, Config, ConfigError, Format};
use crate::brw::{brw_expectation_field, brw_expectation_ode, n_max_for};
use crate::chain::{
    classify, escape_probability_converged, expected_absorption_time, expected_absorption_time_kac,
    total_mass, write_bounds_csv, BoundRow, ChainClass,
};
use crate::criticality::{
    bisect_critical, monotonicity_flags, sweep, write_sweep_csv, Axis, BisectionConfig, CriticalityError, Experiment,
    SweepGrid,
};
use crate::meanfield::{
    integrate_meanfield, residual, stationary_profile, u0, write_profiles_csv, Integration, MeanFieldProfile,
    Stationary,
};
use crate::model::series::SeriesSum;
use crate::model::{ControlSpec, Preset};
use crate::numeric::{wilson_interval, Z95};
use crate::rng;
use crate::simulator::{CsvEventLog, LatticeState, Outcome, Simulator};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn config_error(problem: impl Into<String>) -> CliError {
    CliError::Config(ConfigError {
        problems: vec![problem.into()],
    })
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Outcome of one command: the printed summary and the structured result.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub summary: String,
    pub result: Value,
}

/// Runs the command selected by a validated config and writes its artifact.
pub fn execute(config: &Config) -> Result<Report, CliError> {
    match config.command() {
        Command::Simulate => simulate(config),
        Command::Meanfield => meanfield(config),
        Command::Chain => chain(config),
        Command::Brw => brw(config),
        Command::Sweep => run_sweep(config),
        Command::Critical => critical(config),
    }
}

fn header(config: &Config) -> String {
    format!("# config: {}\n", config.to_json())
}

/// Writes `{config, seed, result}` as JSON, or the config line followed by `csv`.
fn write_artifact(config: &Config, result: &Value, csv: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let Some(path) = &config.out else {
        return Ok(());
    };
    let mut out = BufWriter::new(File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?);
    match config.format() {
        Format::Json => {
            let doc = json!({ "config": config.to_json(), "seed": config.seed(), "result": result });
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| CliError::Io(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Format::Csv => {
            out.write_all(header(config).as_bytes())?;
            csv(&mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results are serialisable")
}

fn lambda_phi(config: &Config) -> (f64, f64) {
    (config.lambda.unwrap_or(0.0), config.phi.unwrap_or(0.0))
}

fn simulate(config: &Config) -> Result<Report, CliError> {
    let (lambda, phi) = lambda_phi(config);
    let params = config.params(lambda, phi, config.patch_size()).map_err(config_error)?;
    let geometry = config.geometry_for(params.n).map_err(config_error)?;
    let stopping = config.stopping();
    let mode = config.intra_mode.unwrap_or_default();
    let seed = config.seed();
    let replicas = config.replicas();
    let make = || {
        Simulator::with_mode(params.clone(), geometry.clone(), LatticeState::single_particle(&geometry), mode)
            .map_err(|e| config_error(e.to_string()))
    };
    make()?;

    let mut first = None;
    if let Some(path) = &config.events {
        let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut log = CsvEventLog::new(BufWriter::new(file))?;
        let outcome = make()?
            .run_logged(&stopping, &mut rng::stream(seed, 0), &mut log)
            .map_err(|e| CliError::Io(e.to_string()))?;
        log.into_inner().flush()?;
        first = Some(outcome);
    }
    let outcomes: Vec<Outcome> = (0..replicas)
        .into_par_iter()
        .map(|i| match (i, first) {
            (0, Some(o)) => o,
            _ => make()
                .expect("checked above")
                .run(&stopping, &mut rng::stream(seed, i)),
        })
        .collect();
    let survivors = outcomes.iter().filter(|o| o.survived()).count() as u64;
    let (ci_lo, ci_hi) = wilson_interval(survivors, replicas, Z95);
    let estimate = survivors as f64 / replicas as f64;
    let result = json!({
        "params": params,
        "replicas": replicas,
        "survivors": survivors,
        "estimate": estimate,
        "ci_lo": ci_lo,
        "ci_hi": ci_hi,
        "outcomes": outcomes,
    });
    write_artifact(config, &result, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replica", "seed", "status", "extinction_time", "final_time", "events", "peak_population", "final_population"])?;
        for (i, o) in outcomes.iter().enumerate() {
            let (status, ext) = match o.status {
                crate::simulator::Status::Extinct { time } => ("extinct", time.to_string()),
                crate::simulator::Status::TimeCapReached => ("time_cap", String::new()),
                crate::simulator::Status::PopulationCapReached => ("population_cap", String::new()),
            };
            w.write_record([
                i.to_string(),
                rng::replica_seed(seed, i as u64).to_string(),
                status.to_string(),
                ext,
                o.final_time.to_string(),
                o.events.to_string(),
                o.peak_population.to_string(),
                o.final_population.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(Report {
        summary: format!("survivors={survivors}/{replicas} estimate={estimate} ci=[{ci_lo},{ci_hi}]"),
        result,
    })
}

fn meanfield(config: &Config) -> Result<Report, CliError> {
    let (lambda, phi) = lambda_phi(config);
    let flavor = config.flavor().map_err(config_error)?;
    let u0 = u0(&flavor, lambda, phi).map_err(numerical)?;
    let stationary = stationary_profile(&flavor, lambda, phi).map_err(numerical)?;
    let mut summary = format!("u0={u0}");
    let profile = match &stationary {
        Stationary::Endemic(p) => {
            let r = residual(&flavor, lambda, phi, &p.u);
            summary += &format!(" endemic=true K={} mass={} residual={r:e}", p.truncation(), p.mass());
            p.clone()
        }
        Stationary::NoEndemicEquilibrium { .. } => {
            summary += " endemic=false";
            MeanFieldProfile {
                flavor: flavor.clone(),
                u: vec![u0],
            }
        }
    };
    let mut result = json!({ "u0": u0, "stationary": stationary });
    if let Some(t_end) = config.t_end {
        let k = config.truncation.unwrap_or(profile.truncation().max(1));
        let mut init = vec![0.0; k + 1];
        // Half the patches empty and half holding one particle.
        init[0] = 0.5;
        init[1] = 0.5;
        let opts = Integration {
            t_end,
            dt: config.dt.unwrap_or(Integration::default().dt),
            ..Integration::default()
        };
        let traj = integrate_meanfield(&flavor, lambda, phi, &init, &opts).map_err(numerical)?;
        let last = traj.last().to_vec();
        summary += &format!(" u0(t_end)={}", last[0]);
        result["trajectory"] = to_value(&traj);
    }
    write_artifact(config, &result, |out| {
        write_profiles_csv(out, &[(lambda, phi, &profile)])?;
        Ok(())
    })?;
    Ok(Report { summary, result })
}

fn chain(config: &Config) -> Result<Report, CliError> {
    let phi = config.phi.unwrap_or(0.0);
    let control = config.control_spec().map_err(config_error)?.expect("validated");
    let n = config.state.as_ref().map_or(config.patch_size(), Vec::len);
    let d = config.d();
    let start = config.state.clone().unwrap_or_else(|| {
        let mut s = vec![0; n];
        s[0] = 1;
        s
    });
    let class = classify(phi, &control);
    let mass = total_mass(phi, &control, n).map_err(numerical)?;
    let mut result = json!({ "phi": phi, "N": n, "d": d, "class": class, "start": start });
    result["total_mass"] = match mass {
        SeriesSum::Finite(m) => Value::from(m),
        SeriesSum::Infinite => Value::from("inf"),
    };
    let mut row = BoundRow {
        phi,
        family: control.family_name().to_string(),
        class: class.clone(),
        lambda_star: None,
        e_tau0: None,
    };
    let summary = match &class {
        ChainClass::Transient => {
            if n == 1 {
                let esc = escape_probability_converged(phi, &control, 16, 1e-5).map_err(numerical)?;
                result["escape_probability"] = to_value(&esc);
            }
            result["lambda_cr"] = Value::from(0.0);
            "class=Transient lambda_cr=0".to_string()
        }
        ChainClass::PositiveRecurrent => {
            let e = expected_absorption_time(phi, &control, &start, config.height).map_err(numerical)?;
            let mut e1 = vec![0; n];
            e1[0] = 1;
            let e_e1 = if start == e1 {
                e.clone()
            } else {
                expected_absorption_time(phi, &control, &e1, config.height).map_err(numerical)?
            };
            let lambda_star = (1.0 + phi) / (2.0 * d as f64 * e_e1.value);
            let kac = expected_absorption_time_kac(phi, &control, n).map_err(numerical)?;
            row.lambda_star = Some(lambda_star);
            row.e_tau0 = Some(e_e1.value);
            result["E_tau0"] = to_value(&e);
            result["E_tau0_kac"] = to_value(&kac.finite());
            result["lambda_star"] = Value::from(lambda_star);
            format!(
                "class=PositiveRecurrent E_tau0={} sensitivity={:e} lambda_star={lambda_star}",
                e.value,
                e.sensitivity()
            )
        }
        ChainClass::Inconclusive { reason } => format!("class=Inconclusive reason={reason:?}"),
    };
    write_artifact(config, &result, |out| {
        write_bounds_csv(out, &[row])?;
        Ok(())
    })?;
    Ok(Report { summary, result })
}

fn brw(config: &Config) -> Result<Report, CliError> {
    let (lambda, phi) = lambda_phi(config);
    let d = config.d();
    let t = config.t.unwrap_or(0.0);
    let tol = config.tolerance.unwrap_or(1e-10);
    let n_max = config.n_max.unwrap_or_else(|| n_max_for(phi, lambda, d, t, tol));
    let series = brw_expectation_field(phi, lambda, d, t, n_max, tol).map_err(numerical)?;
    let origin = *series.field.get(&vec![0; d]).expect("origin");
    let total = series.field.total();
    let mut summary = format!(
        "E(0,t)={origin} total={total} exact_total={} tail_bound={:e} n_max={n_max}",
        ((phi + 2.0 * d as f64 * lambda - 1.0) * t).exp(),
        series.tail_bound
    );
    let mut result = json!({ "series": series });
    if config.ode == Some(true) {
        let radius = config.radius.unwrap_or(n_max);
        let dt = config.dt.unwrap_or(1e-3);
        let ode = brw_expectation_ode(phi, lambda, d, radius, t, dt, 1e-8).map_err(numerical)?;
        let diff = series
            .field
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| ode.get(&series.field.coordinates(i)).map(|o| (v - o).abs()))
            .fold(0.0, f64::max);
        summary += &format!(" ode_max_abs_diff={diff:e}");
        result["ode"] = to_value(&ode);
    }
    write_artifact(config, &result, |out| {
        series.field.write_csv(out)?;
        Ok(())
    })?;
    Ok(Report { summary, result })
}

fn criticality_error(e: CriticalityError) -> CliError {
    match e {
        CriticalityError::Io(e) => CliError::Io(e.to_string()),
        CriticalityError::Csv(e) => CliError::Io(e.to_string()),
        CriticalityError::Json(e) => CliError::Io(e.to_string()),
        CriticalityError::Invalid(m) => config_error(m),
        other => numerical(other),
    }
}

fn sweep_control(config: &Config) -> Result<ControlSpec, CliError> {
    let (lambda, phi) = lambda_phi(config);
    let n = config.ns.as_ref().and_then(|v| v.first().copied()).unwrap_or(config.patch_size());
    Ok(config.params(lambda, phi, n).map_err(config_error)?.control)
}

fn run_sweep(config: &Config) -> Result<Report, CliError> {
    let cp = config.preset == Some(Preset::ContactProcess);
    let grid = SweepGrid {
        lambdas: config.lambdas.clone().unwrap_or_else(|| vec![config.lambda.unwrap_or(0.0)]),
        phis: if cp {
            vec![0.0]
        } else {
            config.phis.clone().unwrap_or_else(|| vec![config.phi.unwrap_or(0.0)])
        },
        ns: config.ns.clone().unwrap_or_else(|| vec![config.patch_size()]),
        controls: vec![sweep_control(config)?],
        d: config.d(),
        side: config.side.unwrap_or(50),
        boundary: config.boundary.unwrap_or_default(),
    };
    let stopping = config.stopping();
    let csv_out = match (&config.out, config.format()) {
        (Some(path), Format::Csv) => Some(path.as_path()),
        _ => None,
    };
    if let Some(path) = csv_out {
        if !path.exists() {
            std::fs::write(path, header(config))?;
        }
    }
    let rows = sweep(&grid, &stopping, config.replicas(), config.seed(), csv_out).map_err(criticality_error)?;
    let flags = monotonicity_flags(&rows);
    let result = json!({ "rows": rows, "monotonicity_flags": flags });
    if csv_out.is_none() {
        write_artifact(config, &result, |out| {
            write_sweep_csv(out, &rows).map_err(criticality_error)
        })?;
    }
    Ok(Report {
        summary: format!("points={} monotonicity_flags={}", rows.len(), flags.len()),
        result,
    })
}

fn critical(config: &Config) -> Result<Report, CliError> {
    let (lambda, phi) = lambda_phi(config);
    let params = config.params(lambda, phi, config.patch_size()).map_err(config_error)?;
    let geometry = config.geometry_for(params.n).map_err(config_error)?;
    let exp = Experiment::new(params, geometry, config.stopping());
    let def = BisectionConfig::default();
    let cfg = BisectionConfig {
        axis: config.axis.unwrap_or(Axis::Lambda),
        threshold: config.threshold.unwrap_or(def.threshold),
        tolerance: config.tolerance.unwrap_or(def.tolerance),
        replicas: config.replicas(),
        budget: config.budget.unwrap_or(def.budget),
        lo: config.lo.unwrap_or(def.lo),
        hi: config.hi.unwrap_or(def.hi),
        max_value: config.max_value.unwrap_or(def.max_value),
    };
    let mut log_file = match &config.log {
        Some(path) => Some(BufWriter::new(
            File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        )),
        None => None,
    };
    let bracket = bisect_critical(&exp, &cfg, config.seed(), log_file.as_mut().map(|w| w as &mut dyn Write));
    if let Some(mut w) = log_file {
        w.flush()?;
    }
    let bracket = bracket.map_err(criticality_error)?;
    let (ci_lo, ci_hi) = bracket.confidence_interval();
    let result = json!({
        "estimate": bracket.estimate(),
        "ci_lo": ci_lo,
        "ci_hi": if ci_hi.is_finite() { Value::from(ci_hi) } else { Value::from("inf") },
        "bracket": bracket,
    });
    write_artifact(config, &result, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["axis_value", "replicas", "survivors", "estimate", "ci_lo", "ci_hi", "above"])?;
        for p in &bracket.probes {
            w.write_record([
                p.value.to_string(),
                p.survival.replicas.to_string(),
                p.survival.survivors.to_string(),
                p.survival.estimate.to_string(),
                p.survival.ci_lo.to_string(),
                p.survival.ci_hi.to_string(),
                p.above.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let name = match cfg.axis {
        Axis::Lambda => "lambda_hat",
        Axis::Phi => "phi_hat",
    };
    Ok(Report {
        summary: format!(
            "{name}={} bracket=[{},{}] ci=[{ci_lo},{ci_hi}] probes={}",
            bracket.estimate(),
            bracket.lo,
            bracket.hi,
            bracket.probes.len()
        ),
        result,
    })
}

/// Reads back the `# config:` line of a CSV artifact.
pub fn read_config_line(path: &Path) -> Option<Value> {
    let text = std::fs::read_to_string(path).ok()?;
    let line = text.lines().next()?;
    serde_json::from_str(line.strip_prefix("# config: ")?).ok()
}
