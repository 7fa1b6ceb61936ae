use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use radial_nls::classify::{classify_run, coercivity_ball, holder_bridge_excess, threshold_report, ThresholdReport, Verdict};
use radial_nls::evolve::{evolve_run, Drift, Termination, Trajectory, WallReport};
use radial_nls::ground_state::{GroundStateResiduals, INVARIANT_TOL};
use radial_nls::morawetz::{evacuation_scan, morawetz_bound, EvacuationEntry};
use radial_nls::{constants, find_ground_state, make_grid, VariationalConstants};

use crate::artifacts::{run_id, series_csv, write_json, write_snapshots, SUMMARY_SCHEMA};
use crate::config::{RunConfig, SweepParameter};
use crate::CliError;

/// Grid on which the variational constants are computed for threshold
/// reports; they are properties of Q, not of the run grid.
const REFERENCE_GRID: (f64, usize) = (50.0, 4095);

pub fn reference_constants(tol: f64) -> Result<VariationalConstants, CliError> {
    let g = make_grid(REFERENCE_GRID.0, REFERENCE_GRID.1)?;
    Ok(constants(&find_ground_state(&g, tol)?))
}

#[derive(Serialize)]
pub struct GroundStateReport {
    pub schema_version: u32,
    pub grid_fingerprint: String,
    pub length: f64,
    pub n: usize,
    pub tol: f64,
    pub b_star: f64,
    pub bracket: (f64, f64),
    pub mass: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub energy: f64,
    pub tail_radius: f64,
    pub residuals: GroundStateResiduals,
    pub constants: VariationalConstants,
    pub pq_identity_residual: f64,
    pub me_identity_residual: f64,
    pub passes: bool,
}

pub fn ground_state(config: &RunConfig, out: Option<&Path>) -> Result<GroundStateReport, CliError> {
    let grid = config.base_grid()?;
    let tol = config.ground_state.tol;
    let gs = find_ground_state(&grid, tol).map_err(|e| CliError::Invariant(e.to_string()))?;
    let residuals = gs.residuals();
    let vc = constants(&gs);
    let report = GroundStateReport {
        schema_version: SUMMARY_SCHEMA,
        grid_fingerprint: grid.fingerprint(),
        length: grid.length(),
        n: grid.len(),
        tol,
        b_star: gs.b_star,
        bracket: gs.bracket,
        mass: gs.mass,
        kinetic: gs.kinetic,
        potential: gs.potential,
        energy: gs.energy(),
        tail_radius: gs.tail_radius,
        residuals,
        constants: vc,
        pq_identity_residual: vc.pq_identity_residual(),
        me_identity_residual: vc.me_identity_residual(),
        passes: residuals.passes(INVARIANT_TOL)
            && vc.pq_identity_residual() <= INVARIANT_TOL
            && vc.me_identity_residual() <= INVARIANT_TOL,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("ground_state.json"), &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct CoercivitySummary {
    pub radius: f64,
    pub delta: f64,
    pub snapshots: usize,
    pub all_pass: bool,
    pub min_delta_prime: f64,
    pub max_ibp_residual: f64,
}

#[derive(Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub run_id: String,
    pub grid_fingerprint: String,
    pub length: f64,
    pub n: usize,
    pub verdict: Verdict,
    pub threshold: ThresholdReport,
    pub termination: Termination,
    pub wall: WallReport,
    pub drift: Drift,
    pub steps: u64,
    pub min_dt: f64,
    pub samples: usize,
    pub snapshots: usize,
    pub morawetz_sup: Option<f64>,
    pub morawetz_bound: Option<f64>,
    pub holder_excess: Option<f64>,
    pub coercivity: Option<CoercivitySummary>,
}

pub struct EvolveOutcome {
    pub dir: PathBuf,
    pub summary: RunSummary,
}

fn simulate(config: &RunConfig) -> Result<(Trajectory, ThresholdReport, VariationalConstants), CliError> {
    config.validate()?;
    let grid = config.run_grid(config.run.horizon)?;
    config.check_radii(&grid)?;
    let u0 = config.initial_data()?.build(&grid)?;
    let vc = reference_constants(config.ground_state.tol)?;
    let threshold = threshold_report(&u0, &vc)?;
    let traj = evolve_run(&u0, &config.settings())?;
    Ok((traj, threshold, vc))
}

fn summarize(config: &RunConfig, id: String, traj: &Trajectory, threshold: ThresholdReport, vc: &VariationalConstants) -> Result<RunSummary, CliError> {
    let verdict = classify_run(traj, &config.gates());
    let coercivity = match config.diagnostics.coercivity_radius {
        Some(radius) if !traj.snapshots.is_empty() => {
            let delta = config.diagnostics.delta;
            let mut s = CoercivitySummary {
                radius,
                delta,
                snapshots: traj.snapshots.len(),
                all_pass: true,
                min_delta_prime: f64::INFINITY,
                max_ibp_residual: 0.0,
            };
            for snap in &traj.snapshots {
                let r = coercivity_ball(&snap.field, radius, vc, delta)?;
                s.all_pass &= r.passes;
                s.min_delta_prime = s.min_delta_prime.min(r.delta_prime);
                s.max_ibp_residual = s.max_ibp_residual.max(r.ibp_residual);
            }
            Some(s)
        }
        _ => None,
    };
    let bound = morawetz_bound(traj);
    Ok(RunSummary {
        schema_version: SUMMARY_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION"),
        run_id: id,
        grid_fingerprint: traj.grid.fingerprint(),
        length: traj.grid.length(),
        n: traj.grid.len(),
        verdict,
        threshold,
        termination: traj.termination,
        wall: traj.wall,
        drift: traj.drift,
        steps: traj.steps,
        min_dt: traj.min_dt,
        samples: traj.samples.len(),
        snapshots: traj.snapshots.len(),
        morawetz_sup: bound.map(|b| b.0),
        morawetz_bound: bound.map(|b| b.1),
        holder_excess: (!traj.settings.ball_radii.is_empty()).then(|| holder_bridge_excess(traj)),
        coercivity,
    })
}

/// Runs one configuration and writes `<out>/runs/<id>/`.
pub fn evolve(config: &RunConfig, out: &Path) -> Result<EvolveOutcome, CliError> {
    let (traj, threshold, vc) = simulate(config)?;
    let id = run_id(config);
    let summary = summarize(config, id.clone(), &traj, threshold, &vc)?;
    let dir = out.join("runs").join(&id);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("config.json"), config)?;
    fs::write(dir.join("series.csv"), series_csv(&traj))?;
    write_snapshots(&dir.join("snapshots"), &traj.snapshots)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(EvolveOutcome { dir, summary })
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub index: usize,
    pub parameter: SweepParameter,
    pub value: f64,
    pub result: Result<SweepPoint, String>,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub run_id: String,
    pub verdict: String,
    pub blowup_t: Option<f64>,
    pub below_me: bool,
    pub below_pq: bool,
    pub me_product: f64,
    pub pq_product: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
}

pub const MANIFEST_HEADER: &str =
    "index,parameter,value,status,run_id,verdict,blowup_t,below_me,below_pq,me_product,pq_product,mass_drift,energy_drift,message";

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn manifest_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for row in rows {
        let head = format!("{},{},{}", row.index, row.parameter.name(), row.value);
        match &row.result {
            Ok(p) => writeln!(
                out,
                "{head},completed,{},{},{},{},{},{},{},{},{},",
                p.run_id,
                p.verdict,
                p.blowup_t.map(|t| t.to_string()).unwrap_or_default(),
                p.below_me,
                p.below_pq,
                p.me_product,
                p.pq_product,
                p.mass_drift,
                p.energy_drift
            ),
            Err(msg) => writeln!(out, "{head},failed,,,,,,,,,,{}", csv_text(msg)),
        }
        .unwrap();
    }
    out
}

/// One run per sweep value on a pool of `workers` threads. Rows come back
/// in parameter order whatever order the points finish in.
pub fn sweep(config: &RunConfig, out: &Path, workers: usize) -> Result<Vec<SweepRow>, CliError> {
    let Some(sweep) = &config.sweep else {
        return Err(CliError::Config("sweep needs a [sweep] section".into()));
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let points: Vec<(usize, f64)> = sweep.values.iter().copied().enumerate().collect();
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .map(|&(index, value)| {
                let result = config
                    .with_parameter(sweep.parameter, value)
                    .and_then(|c| evolve(&c, out))
                    .map(|o| {
                        let s = o.summary;
                        SweepPoint {
                            run_id: s.run_id,
                            verdict: format!("{:?}", s.verdict.kind),
                            blowup_t: match s.termination {
                                Termination::Blowup { t, .. } => Some(t),
                                Termination::Completed => None,
                            },
                            below_me: s.threshold.below_me,
                            below_pq: s.threshold.below_pq,
                            me_product: s.threshold.me_product,
                            pq_product: s.threshold.pq_product,
                            mass_drift: s.drift.mass,
                            energy_drift: s.drift.energy,
                        }
                    })
                    .map_err(|e| e.to_string());
                SweepRow {
                    index,
                    parameter: sweep.parameter,
                    value,
                    result,
                }
            })
            .collect()
    });
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.csv"), manifest_csv(&rows))?;
    Ok(rows)
}

#[derive(Serialize)]
pub struct EvacuationSummary {
    pub schema_version: u32,
    pub entries: Vec<EvacuationEntry>,
    pub slope: Option<f64>,
    pub slope_status: &'static str,
    pub aborted: Option<Termination>,
    pub verdict: Option<&'static str>,
}

pub fn evacuation(config: &RunConfig, out: &Path) -> Result<EvacuationSummary, CliError> {
    config.validate()?;
    let scan = config.evacuation.clone().unwrap_or_default();
    let init = config.initial_data()?;
    let settings = config.settings();
    let report = evacuation_scan(
        &init,
        &scan.horizons,
        &settings,
        |t| {
            let grid = match scan.dr {
                Some(dr) => radial_nls::evolve::wall_safe_grid(&init, t, dr),
                None => make_grid(config.grid.length, config.grid.n),
            }?;
            if t.cbrt() >= grid.length() {
                return Err(radial_nls::Error::Config(format!("ball radius T^(1/3) = {} not below L", t.cbrt())));
            }
            Ok(grid)
        },
        config.run.execution,
    )?;
    let summary = EvacuationSummary {
        schema_version: SUMMARY_SCHEMA,
        slope_status: if report.slope.is_some() { "fitted" } else { "unavailable" },
        slope: report.slope,
        verdict: report.aborted.map(|_| "Blowup"),
        aborted: report.aborted,
        entries: report.entries,
    };
    fs::create_dir_all(out)?;
    let mut csv = String::from("T,R,average,wall_clean\n");
    for e in &summary.entries {
        writeln!(csv, "{},{},{},{}", e.horizon, e.radius, e.average, e.wall_clean).unwrap();
    }
    fs::write(out.join("evacuation.csv"), csv)?;
    write_json(&out.join("evacuation.json"), &summary)?;
    Ok(summary)
}
