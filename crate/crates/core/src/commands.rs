//! The `run`, `verify`, `ensemble` and `sweep` commands, callable without the CLI.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    check_corollary2, check_theorem1, condition_table, corollary2_threshold, derive_bound_params, BoundParams,
    ConditionRow, FlockingMonitor, FlockingVerdict, Theorem1Verdict,
};
use crate::config::{ConfigError, SimConfig};
use crate::dynamics::to_relative;
use crate::ensemble::{run_ensemble, EnsembleError, EnsembleReport};
use crate::error::FlockError;
use crate::output::{fmt_f64, TrajectoryCsv};
use crate::rng::RngStream;
use crate::simulation::Simulation;
use crate::state::{FlockState, Frame};
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invariant breach: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Read { .. }) | CliError::Io { .. } => 3,
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Invariant(_) => 4,
        }
    }
}

impl From<FlockError> for CliError {
    fn from(e: FlockError) -> Self {
        match e {
            FlockError::InvariantBreach(_) | FlockError::NonFinite(_) => CliError::Invariant(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Replica { replica, source } => match CliError::from(source) {
                CliError::Invariant(m) => CliError::Invariant(format!("replica {replica}: {m}")),
                other => CliError::Usage(format!("replica {replica}: {other}")),
            },
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| io_err(path)(e.into()))?;
    writeln!(f).and_then(|_| f.flush()).map_err(io_err(path))
}

/// Directory from `--out`, then `[output] dir`, then `out`.
pub fn output_dir(cfg: &SimConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub k: usize,
    pub h: f64,
    pub horizon: u64,
    pub seed: u64,
    pub frame: Frame,
    /// Leader state at `t = 0`; add `x_1[0] + t h v_1[0]` back to recover
    /// absolute coordinates from relative output.
    pub leader_initial_position: Vec3,
    pub leader_initial_velocity: Vec3,
    pub final_sup_velocity: f64,
    pub final_sup_position: f64,
    pub flocking: Option<FlockingVerdict>,
    pub bound_params: Option<BoundParams>,
    pub theorem1: Option<Theorem1Verdict>,
    pub notes: Vec<String>,
    pub trajectory_file: PathBuf,
}

#[derive(Serialize)]
struct JsonRow<'a> {
    t: u64,
    x: &'a [Vec3],
    v: &'a [Vec3],
    sup_v: f64,
    sup_x: f64,
}

enum TrajectorySink {
    Csv(TrajectoryCsv<BufWriter<File>>),
    Json { out: BufWriter<File>, first: bool },
}

impl TrajectorySink {
    fn open(path: &Path, format: Format, k: usize) -> Result<Self, CliError> {
        let mut f = create(path)?;
        Ok(match format {
            Format::Csv => TrajectorySink::Csv(TrajectoryCsv::new(f, k).map_err(io_err(path))?),
            Format::Json => {
                f.write_all(b"[").map_err(io_err(path))?;
                TrajectorySink::Json { out: f, first: true }
            }
        })
    }

    fn write(&mut self, s: &FlockState) -> io::Result<()> {
        match self {
            TrajectorySink::Csv(w) => w.write(s),
            TrajectorySink::Json { out, first } => {
                if !*first {
                    out.write_all(b",")?;
                }
                *first = false;
                let row = JsonRow {
                    t: s.t(),
                    x: s.positions(),
                    v: s.velocities(),
                    sup_v: s.sup_velocity(),
                    sup_x: s.sup_position(),
                };
                writeln!(out)?;
                serde_json::to_writer(&mut *out, &row).map_err(io::Error::from)
            }
        }
    }

    fn finish(self) -> io::Result<()> {
        match self {
            TrajectorySink::Csv(w) => w.finish().map(|_| ()),
            TrajectorySink::Json { mut out, .. } => {
                out.write_all(b"\n]\n")?;
                out.flush()
            }
        }
    }
}

/// Simulate replica `replica` and stream its trajectory to `path`.
pub fn write_trajectory(
    cfg: &SimConfig,
    replica: u64,
    frame: Frame,
    path: &Path,
    format: Format,
) -> Result<RunSummary, CliError> {
    let sc = cfg.scenario()?;
    let rng = RngStream::new(cfg.seed, replica);
    let abs0 = sc.initial_state(&rng, Frame::Absolute)?;
    let mut sim = Simulation::new(&sc, rng, frame)?;
    let relative = |s: &FlockState| if s.frame() == Frame::Relative { Ok(s.clone()) } else { to_relative(s) };

    let det = cfg.detection();
    let mut notes = Vec::new();
    let rel0 = relative(sim.state())?;
    let (bound_params, theorem1) = match derive_bound_params(&rel0, &sc.hierarchy, sc.h, sc.model.certificate()) {
        Ok(bp) => {
            let verdict = check_theorem1(&bp, sc.k());
            (Some(bp), Some(verdict))
        }
        Err(e) => {
            notes.push(format!("bound constants unavailable: {e}"));
            (None, None)
        }
    };
    let mut monitor = FlockingMonitor::new(det.epsilon_v, det.window, sc.h)?;

    let mut sink = TrajectorySink::open(path, format, sc.k())?;
    sink.write(sim.state()).map_err(io_err(path))?;
    monitor.push(&rel0)?;
    for _ in 0..cfg.horizon {
        sim.advance()?;
        sink.write(sim.state()).map_err(io_err(path))?;
        monitor.push(&relative(sim.state())?)?;
    }
    sink.finish().map_err(io_err(path))?;

    let flocking = match monitor.verdict() {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("flocking not assessed: {e}"));
            None
        }
    };
    let last = sim.state();
    Ok(RunSummary {
        k: sc.k(),
        h: sc.h,
        horizon: cfg.horizon,
        seed: cfg.seed,
        frame,
        leader_initial_position: abs0.positions()[0],
        leader_initial_velocity: abs0.velocities()[0],
        final_sup_velocity: last.sup_velocity(),
        final_sup_position: last.sup_position(),
        flocking,
        bound_params,
        theorem1,
        notes,
        trajectory_file: path.to_path_buf(),
    })
}

/// `run`: writes `trajectory.{csv,json}` and `summary.json` under `out_dir`.
pub fn cmd_run(cfg: &SimConfig, out_dir: &Path, format: Format, absolute: bool) -> Result<RunSummary, CliError> {
    let frame = if absolute { Frame::Absolute } else { Frame::Relative };
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let summary = write_trajectory(cfg, 0, frame, &out_dir.join(format!("trajectory.{ext}")), format)?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub k: usize,
    pub h: f64,
    pub p: f64,
    pub alpha: f64,
    pub x0: f64,
    pub v0: f64,
    pub theorem1: Theorem1Verdict,
    pub corollary2: bool,
    pub corollary2_threshold: f64,
    /// Birds whose leaders all start at its own position (`w0 = 0`).
    pub degenerate_birds: Vec<usize>,
    pub conditions: Vec<ConditionRow>,
    pub bound_params: BoundParams,
}

/// `verify`: decide the guarantees from the initial state of replica 0.
pub fn cmd_verify(cfg: &SimConfig) -> Result<VerifyReport, CliError> {
    let sc = cfg.scenario()?;
    let initial = sc.initial_state(&RngStream::new(cfg.seed, 0), Frame::Relative)?;
    let cert = sc.model.certificate();
    let bp = derive_bound_params(&initial, &sc.hierarchy, sc.h, cert)?;
    let k = sc.k();
    Ok(VerifyReport {
        k,
        h: sc.h,
        p: cert.p,
        alpha: cert.alpha,
        x0: bp.x0,
        v0: bp.v0,
        theorem1: check_theorem1(&bp, k),
        corollary2: check_corollary2(bp.v0, cert.p, k),
        corollary2_threshold: corollary2_threshold(cert.p, k),
        degenerate_birds: bp.birds.iter().filter(|b| b.w0 == 0.0).map(|b| b.bird).collect(),
        conditions: condition_table(&bp, k),
        bound_params: bp,
    })
}

pub fn write_condition_table(report: &VerifyReport, path: &Path) -> Result<(), CliError> {
    let mut f = create(path)?;
    let mut body = String::from("bird,gamma,threshold,satisfied,infinite_gamma\n");
    for r in &report.conditions {
        let gamma = if r.infinite_gamma { "inf".to_string() } else { fmt_f64(r.gamma) };
        body.push_str(&format!("{},{gamma},{},{},{}\n", r.bird, fmt_f64(r.threshold), r.satisfied, r.infinite_gamma));
    }
    f.write_all(body.as_bytes()).and_then(|_| f.flush()).map_err(io_err(path))
}

#[derive(Debug, Clone, Default)]
pub struct EnsembleOptions {
    pub replicas: Option<usize>,
    pub horizon: Option<u64>,
    pub serial: bool,
    /// Also write one trajectory per replica under `replicas/`.
    pub per_replica: bool,
}

/// `ensemble`: writes `ensemble.json` (or `ensemble_series.csv`) under `out_dir`.
pub fn cmd_ensemble(
    cfg: &SimConfig,
    out_dir: &Path,
    format: Format,
    opts: &EnsembleOptions,
) -> Result<EnsembleReport, CliError> {
    let mut spec = cfg.ensemble_spec(opts.replicas, opts.horizon)?;
    spec.parallel = !opts.serial;
    let report = run_ensemble(&spec)?;
    match format {
        Format::Json => write_json(&out_dir.join("ensemble.json"), &report)?,
        Format::Csv => {
            let path = out_dir.join("ensemble_series.csv");
            let mut f = create(&path)?;
            let mut body = String::from("series,bird,t,mean,se\n");
            for s in &report.series {
                let bird = s.bird.map_or(String::new(), |b| b.to_string());
                for (t, (m, e)) in s.mean.iter().zip(&s.se).enumerate() {
                    body.push_str(&format!("{},{bird},{t},{},{}\n", s.name, fmt_f64(*m), fmt_f64(*e)));
                }
            }
            f.write_all(body.as_bytes()).and_then(|_| f.flush()).map_err(io_err(&path))?;
            write_json(&out_dir.join("ensemble.json"), &report)?;
        }
    }
    if opts.per_replica {
        let mut c = cfg.clone();
        c.horizon = spec.horizon;
        for r in 0..spec.replicas as u64 {
            let path = out_dir.join("replicas").join(format!("replica_{r:05}.csv"));
            write_trajectory(&c, r, Frame::Relative, &path, Format::Csv)?;
        }
    }
    Ok(report)
}

/// A sweep axis: parameter name and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

impl std::str::FromStr for GridAxis {
    type Err = String;

    /// `name=v1,v2,...`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, vals) = s.split_once('=').ok_or_else(|| format!("expected name=v1,v2,... in {s:?}"))?;
        let values = vals
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad value {v:?} for {name}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(format!("no values for {name}"));
        }
        Ok(GridAxis { name: name.trim().to_string(), values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: Vec<(String, f64)>,
    pub replicas: usize,
    pub horizon: u64,
    pub flocking_fraction: f64,
    pub final_mean_sup_velocity: f64,
}

/// Every point of the grid, last axis fastest.
pub fn grid_points(axes: &[GridAxis]) -> Vec<Vec<(String, f64)>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((axis.name.clone(), v));
                    q
                })
            })
            .collect();
    }
    points
}

/// `sweep`: one ensemble per grid point, written as `sweep.csv` or `sweep.json`.
pub fn cmd_sweep(
    cfg: &SimConfig,
    axes: &[GridAxis],
    out_dir: &Path,
    format: Format,
    opts: &EnsembleOptions,
) -> Result<Vec<SweepRow>, CliError> {
    if axes.is_empty() {
        return Err(CliError::Usage("sweep needs at least one --grid axis".into()));
    }
    let mut rows = Vec::new();
    for point in grid_points(axes) {
        let mut c = cfg.clone();
        for (name, v) in &point {
            c = c.with_param(name, *v)?;
        }
        let mut spec = c.ensemble_spec(opts.replicas, opts.horizon)?;
        spec.parallel = !opts.serial;
        spec.product_windows.clear();
        spec.speed_bound_times.clear();
        let report = run_ensemble(&spec)?;
        rows.push(SweepRow {
            params: point,
            replicas: report.replicas,
            horizon: report.horizon,
            flocking_fraction: report.flocking.fraction,
            final_mean_sup_velocity: report.final_mean_sup_velocity,
        });
    }
    match format {
        Format::Json => write_json(&out_dir.join("sweep.json"), &rows)?,
        Format::Csv => {
            let path = out_dir.join("sweep.csv");
            let mut f = create(&path)?;
            let mut body: String = axes.iter().map(|a| format!("{},", a.name)).collect();
            body.push_str("replicas,horizon,flocking_fraction,final_mean_sup_v\n");
            for r in &rows {
                for (_, v) in &r.params {
                    body.push_str(&format!("{},", fmt_f64(*v)));
                }
                body.push_str(&format!(
                    "{},{},{},{}\n",
                    r.replicas,
                    r.horizon,
                    fmt_f64(r.flocking_fraction),
                    fmt_f64(r.final_mean_sup_velocity)
                ));
            }
            f.write_all(body.as_bytes()).and_then(|_| f.flush()).map_err(io_err(&path))?;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_axis_parse() {
        let a: GridAxis = "p=0.2, 0.4".parse().unwrap();
        assert_eq!(a, GridAxis { name: "p".into(), values: vec![0.2, 0.4] });
        assert!("p".parse::<GridAxis>().is_err());
        assert!("p=x".parse::<GridAxis>().is_err());
    }

    #[test]
    fn grid_order() {
        let axes = vec![
            GridAxis { name: "a".into(), values: vec![1.0, 2.0] },
            GridAxis { name: "b".into(), values: vec![3.0, 4.0, 5.0] },
        ];
        let pts = grid_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![("a".to_string(), 1.0), ("b".to_string(), 4.0)]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(FlockError::InvariantBreach("x".into())).exit_code(), 4);
        assert_eq!(CliError::from(FlockError::InvalidParameter("x".into())).exit_code(), 2);
        let io = CliError::Io { path: "a".into(), source: io::Error::other("x") };
        assert_eq!(io.exit_code(), 3);
    }
}
