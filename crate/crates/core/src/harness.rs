//! Metrics, sweeps, ensemble averaging, and the run driver behind the CLI.
//!
//! Everything here is concrete in `f64`: this is the artifact-emission layer,
//! and the CSV/JSON outputs are specified in double precision.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{exact_trajectory, short_time_trajectory, BlochTrajectory, SampleFlag};
use crate::markovian::{
    cg_generator, cg_trajectory, default_horizon, default_tau_grid, optimize_tau,
};
use crate::model::{
    make_time_grid, sample_random_bath, thermal_weights, BathSpec, BlochVector, EnsembleSpec,
    GridScale, InverseTemperature, ThermalWeights, TimeGrid, GENERATOR_NAME,
};
use crate::postmarkov::{pm_trajectory, KernelSpec};
use crate::projection::{nz2_trajectory, nz_trajectory, tcl_trajectory};

/// Qubit trace distance: half the Euclidean distance between Bloch vectors.
pub fn trace_distance(a: BlochVector<f64>, b: BlochVector<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    0.5 * (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Mean trace distance over all shared samples with `alpha_t <= horizon`.
pub fn avg_trace_distance(
    a: &BlochTrajectory<f64>,
    b: &BlochTrajectory<f64>,
    horizon: f64,
) -> Result<f64> {
    if a.grid.samples() != b.grid.samples() {
        return Err(Error::GridMismatch);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &t) in a.grid.samples().iter().enumerate() {
        if t <= horizon {
            total += trace_distance(a.points[i], b.points[i]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::GridMismatch);
    }
    Ok(total / count as f64)
}

/// A solver selection, as named on the CLI and in config files.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Exact,
    ShortTime,
    Nz(usize),
    Tcl(usize),
    Cg { tau: Option<f64> },
    Pm(KernelSpec<f64>),
}

impl MethodSpec {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "exact" => MethodSpec::Exact,
            "short-time" => MethodSpec::ShortTime,
            "nz2" => MethodSpec::Nz(2),
            "nz3" => MethodSpec::Nz(3),
            "nz4" => MethodSpec::Nz(4),
            "tcl2" => MethodSpec::Tcl(2),
            "tcl3" => MethodSpec::Tcl(3),
            "tcl4" => MethodSpec::Tcl(4),
            "cg" => MethodSpec::Cg { tau: None },
            "pm-optimal" => MethodSpec::Pm(KernelSpec::Optimal),
            "pm-nz2" => MethodSpec::Pm(KernelSpec::Nz2),
            "pm-second-order" => MethodSpec::Pm(KernelSpec::SecondOrder),
            other => return Err(Error::UnknownMethod(other.into())),
        })
    }

    /// Stable name used in the CSV `method` column.
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Exact => "exact".into(),
            MethodSpec::ShortTime => "short-time".into(),
            MethodSpec::Nz(o) => format!("nz{o}"),
            MethodSpec::Tcl(o) => format!("tcl{o}"),
            MethodSpec::Cg { .. } => "cg".into(),
            MethodSpec::Pm(k) => format!("pm-{}", k.name().replace('_', "-")),
        }
    }
}

/// Runs one method on one bath.
pub fn run_method(
    spec: &BathSpec<f64>,
    weights: &ThermalWeights<f64>,
    method: &MethodSpec,
    v0: BlochVector<f64>,
    grid: &TimeGrid<f64>,
) -> Result<BlochTrajectory<f64>> {
    let corr = crate::correlations::correlation_set_with_weights(spec, weights);
    match method {
        MethodSpec::Exact => Ok(exact_trajectory(spec, weights, v0, grid)),
        MethodSpec::ShortTime => Ok(short_time_trajectory(spec, weights, v0, grid)),
        MethodSpec::Nz(2) => Ok(nz2_trajectory(spec, &corr, v0, grid)),
        MethodSpec::Nz(o) => nz_trajectory(spec, &corr, v0, grid, *o),
        MethodSpec::Tcl(o) => tcl_trajectory(spec, weights, &corr, v0, grid, *o),
        MethodSpec::Cg { tau } => {
            let tau = match tau {
                Some(tau) => *tau,
                None => {
                    if corr.q2 <= 0.0 {
                        return Err(Error::MethodUnavailable(
                            "cg".into(),
                            "second moment vanishes; no decoherence to coarse-grain".into(),
                        ));
                    }
                    let horizon = default_horizon(corr.q2);
                    let taus = default_tau_grid(horizon);
                    optimize_tau(spec, weights, v0, Some(horizon), &taus)?.tau_star
                }
            };
            let gen = cg_generator(spec, weights, tau)?;
            Ok(cg_trajectory(&gen, v0, grid, spec.digest()))
        }
        MethodSpec::Pm(kernel) => pm_trajectory(spec, weights, kernel, v0, grid),
    }
}

/// Pointwise mean trajectory across ensemble members, reduced in index order
/// for bit-determinism. Members are evaluated on worker threads.
pub fn ensemble_average(
    ensemble: &EnsembleSpec<f64>,
    method: &MethodSpec,
    v0: BlochVector<f64>,
    grid: &TimeGrid<f64>,
) -> Result<BlochTrajectory<f64>> {
    if matches!(method, MethodSpec::Cg { tau: None }) {
        return Err(Error::MethodUnavailable(
            "cg".into(),
            "ensemble averaging requires a fixed coarse-graining window".into(),
        ));
    }
    let members = run_members(ensemble, method, v0, grid)?;
    let n = members.len() as f64;
    let mut traj = members[0].clone();
    for i in 0..grid.len() {
        let mut x = 0.0;
        let mut y = 0.0;
        let mut z = 0.0;
        for m in &members {
            x += m.points[i].x;
            y += m.points[i].y;
            z += m.points[i].z;
        }
        traj.points[i] = BlochVector::new(x / n, y / n, z / n);
        traj.flags[i] = members
            .iter()
            .map(|m| m.flags[i])
            .find(|f| *f != SampleFlag::Ok)
            .unwrap_or(SampleFlag::Ok);
    }
    traj.provenance = format!(
        "ensemble(seed={}, members={}, generator={})",
        ensemble.seed, ensemble.member_count, GENERATOR_NAME
    );
    Ok(traj)
}

/// Evaluates every member trajectory, in parallel, returned in index order.
fn run_members(
    ensemble: &EnsembleSpec<f64>,
    method: &MethodSpec,
    v0: BlochVector<f64>,
    grid: &TimeGrid<f64>,
) -> Result<Vec<BlochTrajectory<f64>>> {
    let workers = thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(ensemble.member_count)
        .max(1);
    let results: Vec<std::sync::Mutex<Option<Result<BlochTrajectory<f64>>>>> =
        (0..ensemble.member_count).map(|_| None.into()).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= ensemble.member_count {
                    break;
                }
                let out = sample_random_bath(ensemble, i).and_then(|spec| {
                    let weights = thermal_weights(&spec);
                    run_method(&spec, &weights, method, v0, grid)
                });
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().unwrap())
        .collect()
}

/// One row of a temperature sweep.
#[derive(Debug, Clone, Serialize)]
pub struct BetaSweepRow {
    pub beta: f64,
    pub method: String,
    pub vx: f64,
}

/// Evaluates `v_x(alpha_t_fixed)` for each (beta, method) pair. Beta points
/// run in parallel; rows come back in (beta, method) input order.
pub fn beta_sweep(
    template: &BathSpec<f64>,
    v0: BlochVector<f64>,
    alpha_t_fixed: f64,
    beta_values: &[f64],
    methods: &[MethodSpec],
) -> Result<Vec<BetaSweepRow>> {
    if methods.is_empty() {
        return Err(Error::EmptyMethodList);
    }
    let grid = make_time_grid(0.0, alpha_t_fixed, 2, GridScale::Linear)?;
    let slots: Vec<std::sync::Mutex<Option<Result<Vec<BetaSweepRow>>>>> =
        beta_values.iter().map(|_| None.into()).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(beta_values.len())
        .max(1);
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let bi = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if bi >= beta_values.len() {
                    break;
                }
                let beta = beta_values[bi];
                let out = (|| {
                    let spec = BathSpec::new(
                        template.couplings().to_vec(),
                        template.frequencies().to_vec(),
                        InverseTemperature::Finite(beta),
                        template.alpha(),
                    )?;
                    let weights = thermal_weights(&spec);
                    let mut local = Vec::new();
                    for method in methods {
                        let traj = run_method(&spec, &weights, method, v0, &grid)?;
                        local.push(BetaSweepRow {
                            beta,
                            method: method.label(),
                            vx: traj.points[grid.len() - 1].x,
                        });
                    }
                    Ok(local)
                })();
                *slots[bi].lock().unwrap() = Some(out);
            });
        }
    });
    let mut rows = Vec::with_capacity(beta_values.len() * methods.len());
    for slot in slots {
        rows.extend(slot.into_inner().unwrap().unwrap()?);
    }
    Ok(rows)
}

/// JSON run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_spins: usize,
    pub couplings: ArraySpec,
    pub frequencies: ArraySpec,
    pub beta: BetaSpec,
    pub alpha: f64,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    pub initial_bloch: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
}

/// Coupling/frequency lists: explicit values, `"uniform:1"`, or `"random"`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ArraySpec {
    Values(Vec<f64>),
    Tag(String),
}

/// Inverse temperature: a float or `"inf"`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum BetaSpec {
    Value(f64),
    Tag(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub scale: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub count: usize,
    pub seed: u64,
}

impl BetaSpec {
    pub fn resolve(&self) -> Result<InverseTemperature<f64>> {
        match self {
            BetaSpec::Value(b) => Ok(InverseTemperature::Finite(*b)),
            BetaSpec::Tag(t) if t == "inf" => Ok(InverseTemperature::Zero),
            BetaSpec::Tag(t) => Err(Error::Config(format!("unknown beta value `{t}`"))),
        }
    }
}

impl ArraySpec {
    fn resolve(&self, n: usize, field: &str) -> Result<Option<Vec<f64>>> {
        match self {
            ArraySpec::Values(v) => {
                if v.len() != n {
                    return Err(Error::Config(format!(
                        "{field} has {} entries, expected n_spins = {n}",
                        v.len()
                    )));
                }
                Ok(Some(v.clone()))
            }
            ArraySpec::Tag(t) if t == "uniform:1" => Ok(Some(vec![1.0; n])),
            ArraySpec::Tag(t) if t == "random" => Ok(None),
            ArraySpec::Tag(t) => Err(Error::Config(format!("unknown {field} value `{t}`"))),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, ArraySpec::Tag(t) if t == "random")
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid<f64>> {
        let scale = match self.scale.as_str() {
            "lin" => GridScale::Linear,
            "log" => GridScale::Logarithmic,
            other => return Err(Error::Config(format!("unknown grid scale `{other}`"))),
        };
        make_time_grid(self.min, self.max, self.count, scale)
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Resolved method list; defaults to the full comparison set.
    pub fn method_specs(&self) -> Result<Vec<MethodSpec>> {
        let names: Vec<String> = match &self.methods {
            Some(list) => list.clone(),
            None => ["exact", "nz2", "nz3", "nz4", "tcl2", "tcl3", "tcl4", "pm-optimal"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        };
        if names.is_empty() {
            return Err(Error::EmptyMethodList);
        }
        names.iter().map(|n| MethodSpec::parse(n)).collect()
    }

    /// The fixed bath described by the config, if it is not a random one.
    pub fn fixed_bath(&self) -> Result<Option<BathSpec<f64>>> {
        let g = self.couplings.resolve(self.n_spins, "couplings")?;
        let w = self.frequencies.resolve(self.n_spins, "frequencies")?;
        match (g, w) {
            (Some(g), Some(w)) => Ok(Some(BathSpec::new(
                g,
                w,
                self.beta.resolve()?,
                self.alpha,
            )?)),
            _ => Ok(None),
        }
    }

    pub fn ensemble_spec(&self) -> Result<Option<EnsembleSpec<f64>>> {
        match &self.ensemble {
            None => {
                if self.couplings.is_random() || self.frequencies.is_random() {
                    return Err(Error::Config(
                        "random couplings/frequencies require an ensemble section".into(),
                    ));
                }
                Ok(None)
            }
            Some(e) => {
                if !(self.couplings.is_random() && self.frequencies.is_random()) {
                    return Err(Error::Config(
                        "ensemble runs require couplings and frequencies set to \"random\"".into(),
                    ));
                }
                if e.count == 0 {
                    return Err(Error::Config("ensemble count must be >= 1".into()));
                }
                Ok(Some(EnsembleSpec {
                    member_count: e.count,
                    seed: e.seed,
                    n_spins: self.n_spins,
                    inv_temperature: self.beta.resolve()?,
                    coupling_strength: self.alpha,
                }))
            }
        }
    }

    pub fn initial(&self) -> BlochVector<f64> {
        BlochVector::new(
            self.initial_bloch[0],
            self.initial_bloch[1],
            self.initial_bloch[2],
        )
    }
}

/// Per-method outcome inside a comparison run.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub label: String,
    pub trajectory: BlochTrajectory<f64>,
    /// D(t) against the exact reference, aligned to the shared grid.
    pub distances: Vec<f64>,
    /// Mean of `distances` over the whole grid.
    pub dbar: f64,
    /// Ensemble runs only: D-bar of the averaged trajectories.
    pub dist_of_mean: Option<f64>,
    /// Ensemble runs only: mean over members of the per-member D-bar.
    pub mean_of_dist: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMetadata {
    pub digest: String,
    pub seed: Option<u64>,
    pub generator: &'static str,
    pub timestamp: String,
    pub config: RunConfig,
}

#[derive(Debug)]
pub struct ComparisonReport {
    pub results: Vec<MethodResult>,
    pub metadata: ReportMetadata,
    pub csv_path: PathBuf,
    pub report_path: PathBuf,
}

/// 17-significant-digit decimal serialization; round-trips f64 bit-exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn distances_between(a: &BlochTrajectory<f64>, b: &BlochTrajectory<f64>) -> Vec<f64> {
    a.points
        .iter()
        .zip(&b.points)
        .map(|(&p, &q)| trace_distance(p, q))
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Executes every requested method on the shared grid, writes
/// `trajectories.csv` and `report.json` into `out_dir`, and returns the
/// in-memory report.
pub fn run_comparison(config: &RunConfig, out_dir: &Path) -> Result<ComparisonReport> {
    let methods = config.method_specs()?;
    run_comparison_methods(config, out_dir, &methods)
}

/// `run_comparison` with the method list resolved by the caller, so methods
/// carrying extra parameters (a fixed cg window) can be injected.
pub fn run_comparison_methods(
    config: &RunConfig,
    out_dir: &Path,
    methods: &[MethodSpec],
) -> Result<ComparisonReport> {
    if methods.is_empty() {
        return Err(Error::EmptyMethodList);
    }
    let grid = config.grid.build()?;
    let v0 = config.initial();
    if !v0.is_physical() {
        return Err(Error::Config("initial_bloch leaves the Bloch sphere".into()));
    }

    let ensemble = config.ensemble_spec()?;
    let (results, digest, seed) = match (&ensemble, config.fixed_bath()?) {
        (Some(ens), _) => {
            let exact_mean = ensemble_average(ens, &MethodSpec::Exact, v0, &grid)?;
            let mut results = Vec::new();
            for method in methods {
                let mean_traj = ensemble_average(ens, method, v0, &grid)?;
                let distances = distances_between(&mean_traj, &exact_mean);
                let dist_of_mean = mean(&distances);
                // per-member distances, averaged member-wise then grid-wise
                let member_refs = run_members(ens, &MethodSpec::Exact, v0, &grid)?;
                let member_runs = run_members(ens, method, v0, &grid)?;
                let per_member: Vec<f64> = member_runs
                    .iter()
                    .zip(&member_refs)
                    .map(|(m, r)| mean(&distances_between(m, r)))
                    .collect();
                results.push(MethodResult {
                    label: method.label(),
                    trajectory: mean_traj,
                    distances,
                    dbar: dist_of_mean,
                    dist_of_mean: Some(dist_of_mean),
                    mean_of_dist: Some(mean(&per_member)),
                });
            }
            let digest = format!("ensemble-{:016x}", ens.seed);
            (results, digest, Some(ens.seed))
        }
        (None, Some(bath)) => {
            let weights = thermal_weights(&bath);
            let exact = exact_trajectory(&bath, &weights, v0, &grid);
            let mut results = Vec::new();
            for method in methods {
                let traj = run_method(&bath, &weights, method, v0, &grid)?;
                let distances = distances_between(&traj, &exact);
                let dbar = mean(&distances);
                results.push(MethodResult {
                    label: method.label(),
                    trajectory: traj,
                    distances,
                    dbar,
                    dist_of_mean: None,
                    mean_of_dist: None,
                });
            }
            let digest = bath.digest();
            (results, digest, None)
        }
        (None, None) => unreachable!("ensemble_spec already rejected this"),
    };

    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("trajectories.csv");
    let report_path = out_dir.join("report.json");
    write_trajectory_csv(&csv_path, &grid, &results)?;
    let metadata = ReportMetadata {
        digest,
        seed,
        generator: GENERATOR_NAME,
        timestamp: unix_timestamp(),
        config: config.clone(),
    };
    write_report_json(&report_path, &results, &metadata)?;
    Ok(ComparisonReport {
        results,
        metadata,
        csv_path,
        report_path,
    })
}

fn unix_timestamp() -> String {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_else(|_| "0".into())
}

/// Emits the long-format CSV: one row per (sample, method).
pub fn write_trajectory_csv(
    path: &Path,
    grid: &TimeGrid<f64>,
    results: &[MethodResult],
) -> Result<()> {
    let mut out = String::from("alpha_t,method,vx,vy,vz,flag\n");
    for result in results {
        for (i, &t) in grid.samples().iter().enumerate() {
            let p = result.trajectory.points[i];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(t),
                result.label,
                fmt17(p.x),
                fmt17(p.y),
                fmt17(p.z),
                result.trajectory.flags[i].as_str()
            ));
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub alpha_t: f64,
    pub method: String,
    pub v: BlochVector<f64>,
    pub flag: String,
}

/// Parses a file emitted by `write_trajectory_csv`; round-trips bit-exactly.
pub fn parse_trajectory_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("alpha_t,method,vx,vy,vz,flag") => {}
        _ => return Err(Error::Config("bad CSV header".into())),
    }
    let mut rows = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Config(format!("bad CSV row `{line}`")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad CSV number `{s}`")))
        };
        rows.push(CsvRow {
            alpha_t: num(parts[0])?,
            method: parts[1].to_string(),
            v: BlochVector::new(num(parts[2])?, num(parts[3])?, num(parts[4])?),
            flag: parts[5].to_string(),
        });
    }
    Ok(rows)
}

fn write_report_json(
    path: &Path,
    results: &[MethodResult],
    metadata: &ReportMetadata,
) -> Result<()> {
    let summary: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "method": r.label,
                "dbar": r.dbar,
                "dist_of_mean": r.dist_of_mean,
                "mean_of_dist": r.mean_of_dist,
                "flag_counts": flag_counts(&r.trajectory),
            })
        })
        .collect();
    let doc = serde_json::json!({
        "summary": summary,
        "metadata": metadata,
    });
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, &doc)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn flag_counts(traj: &BlochTrajectory<f64>) -> serde_json::Value {
    let mut ok = 0;
    let mut left = 0;
    let mut tcl = 0;
    let mut cp = 0;
    for f in &traj.flags {
        match f {
            SampleFlag::Ok => ok += 1,
            SampleFlag::LeftBlochSphere => left += 1,
            SampleFlag::TclInvalid => tcl += 1,
            SampleFlag::CpViolation => cp += 1,
        }
    }
    serde_json::json!({"ok": ok, "left_bloch_sphere": left, "tcl_invalid": tcl, "cp_violation": cp})
}
