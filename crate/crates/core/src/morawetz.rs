//! Hybrid virial/Morawetz weight and the quantities built on it.
//!
//! The weight is radial with
//!
//! ```text
//! a'(r) = 2r, a'' = 2, Δa = 6        for r ≤ R/2,
//! a'(r) = R,  a'' = 0, Δa = 2R/r     for r > R/2,
//! ```
//!
//! i.e. |x|² near the origin and R|x| (up to a constant) outside. It is
//! C^{1,1}: a' is continuous at R/2, a'' and Δa jump there, so every
//! integral below is split at R/2 and each side is integrated with its own
//! smooth branch.
//!
//! For radial u = v/r the Morawetz quantity and its time derivative are
//!
//! ```text
//! M(t)  = 2 Im ∫ ū a' ∂_r u dx = 8π ∫ a' Im(v̄ v') dr,
//! dM/dt = 4 ∫ a'' |∂_r u|² dx - ∫ Δa |u|⁴ dx - ∫ Δa Δ(|u|²) dx,
//! ```
//!
//! the last term being the weak form of ∫ ΔΔa |u|² dx.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::evolve::{evolve_run, InitialData, RunSettings, Termination, Trajectory};
use crate::exec::Execution;
use crate::grid::{Derivatives, RadialField, RadialGrid, SpectralWorkspace};
use crate::Complex64;

const FOUR_PI: f64 = 4.0 * PI;

/// Minimum number of samples for a time average.
pub const MIN_AVERAGE_SAMPLES: usize = 8;

/// The hybrid weight sampled on a grid.
#[derive(Clone, Debug)]
pub struct MorawetzWeight {
    grid: RadialGrid,
    radius: f64,
    /// a'(r_j)
    pub a1: Vec<f64>,
    /// a''(r_j)
    pub a2: Vec<f64>,
    /// Δa(r_j)
    pub lap: Vec<f64>,
}

pub fn make_weight(grid: &RadialGrid, radius: f64) -> Result<MorawetzWeight> {
    if !(radius > 0.0 && radius < grid.length()) {
        return Err(config_err(format!(
            "Morawetz radius {radius} outside (0, {})",
            grid.length()
        )));
    }
    let half = 0.5 * radius;
    let n = grid.len();
    let (mut a1, mut a2, mut lap) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for r in grid.nodes() {
        // interface node takes the inner branch
        if r <= half {
            a1.push(2.0 * r);
            a2.push(2.0);
            lap.push(6.0);
        } else {
            a1.push(radius);
            a2.push(0.0);
            lap.push(2.0 * radius / r);
        }
    }
    Ok(MorawetzWeight {
        grid: grid.clone(),
        radius,
        a1,
        a2,
        lap,
    })
}

impl MorawetzWeight {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    fn half(&self) -> f64 {
        0.5 * self.radius
    }

    /// ∫_0^{R/2} f_in + ∫_{R/2}^L f_out for node arrays of length n+2.
    fn split(&self, inner: &[f64], outer: &[f64]) -> f64 {
        let g = &self.grid;
        let h = self.half();
        g.quad_nodes_upto(inner, h) + g.quad_nodes(outer) - g.quad_nodes_upto(outer, h)
    }
}

/// The three pieces of dM/dt.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MorawetzRhs {
    /// 4 ∫ a'' |∂_r u|² dx (non-negative).
    pub hessian: f64,
    /// -∫ Δa |u|⁴ dx.
    pub potential: f64,
    /// -∫ Δa Δ(|u|²) dx.
    pub bilaplacian: f64,
}

impl MorawetzRhs {
    pub fn total(&self) -> f64 {
        self.hessian + self.potential + self.bilaplacian
    }
}

/// Evaluates M and dM/dt for fields on one grid, reusing transform buffers.
pub struct MorawetzProbe {
    weight: MorawetzWeight,
    ws: SpectralWorkspace,
}

impl MorawetzProbe {
    pub fn new(weight: MorawetzWeight) -> Self {
        let ws = weight.grid.workspace();
        Self { weight, ws }
    }

    pub fn weight(&self) -> &MorawetzWeight {
        &self.weight
    }

    pub fn evaluate(&mut self, f: &RadialField) -> Result<(f64, MorawetzRhs)> {
        self.weight.grid.check_same(f.grid())?;
        let d = Derivatives::of(f, &mut self.ws);
        let m = quantity_from(&self.weight, &d);
        let rhs = rhs_from(&self.weight, f, &d, &mut self.ws);
        Ok((m, rhs))
    }
}

fn quantity_from(w: &MorawetzWeight, d: &Derivatives) -> f64 {
    let g = &w.grid;
    let n = g.len();
    let flux: Vec<f64> = (0..n).map(|i| (d.v[i].conj() * d.dv[i]).im).collect();
    let inner: Vec<f64> = flux.iter().enumerate().map(|(i, h)| 2.0 * g.node(i) * h).collect();
    let outer: Vec<f64> = flux.iter().map(|h| w.radius * h).collect();
    8.0 * PI * w.split(&g.with_ends(0.0, &inner, 0.0), &g.with_ends(0.0, &outer, 0.0))
}

fn rhs_from(w: &MorawetzWeight, f: &RadialField, d: &Derivatives, ws: &mut SpectralWorkspace) -> MorawetzRhs {
    let g = &w.grid;
    let n = g.len();
    let zeros = vec![0.0; n + 2];

    // 4 a'' |∂_r u|² r² with a'' = 2 inside, 0 outside
    let rdu = d.r_du(g);
    let grad: Vec<f64> = rdu.iter().map(|z| z.norm_sqr()).collect();
    let wall_grad = d.dv[n].norm_sqr();
    let hessian = FOUR_PI * 8.0 * w.split(&g.with_ends(0.0, &grad, wall_grad), &zeros);

    // |u|⁴ r² inside (weight 6), |u|⁴ r outside (weight 2R)
    let dens = f.norm_sqr();
    let q_in: Vec<f64> = dens.iter().enumerate().map(|(i, &p)| {
        let r = g.node(i);
        6.0 * p * p * r * r
    }).collect();
    let q_out: Vec<f64> = dens.iter().enumerate().map(|(i, &p)| 2.0 * w.radius * p * p * g.node(i)).collect();
    let potential = -FOUR_PI * w.split(&g.with_ends(0.0, &q_in, 0.0), &g.with_ends(0.0, &q_out, 0.0));

    // Δ(|u|²) = (1/r) ∂_r² (r|u|²); integrands r·(r|u|²)'' inside, (r|u|²)'' outside
    let wfun: Vec<Complex64> = dens
        .iter()
        .enumerate()
        .map(|(i, &p)| Complex64::new(g.node(i) * p, 0.0))
        .collect();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut w2 = vec![Complex64::new(0.0, 0.0); n];
    ws.forward_v(&wfun, &mut c);
    ws.d2v_dr2(&c, &mut w2);
    let b_in: Vec<f64> = w2.iter().enumerate().map(|(i, z)| 6.0 * z.re * g.node(i)).collect();
    let b_out: Vec<f64> = w2.iter().map(|z| 2.0 * w.radius * z.re).collect();
    let bilaplacian = -FOUR_PI * w.split(&g.with_ends(0.0, &b_in, 0.0), &g.with_ends(0.0, &b_out, 0.0));

    MorawetzRhs {
        hessian,
        potential,
        bilaplacian,
    }
}

/// M = 2 Im ∫ ū ∇u·∇a dx.
pub fn morawetz_quantity(f: &RadialField, w: &MorawetzWeight) -> Result<f64> {
    w.grid.check_same(f.grid())?;
    let mut ws = w.grid.workspace();
    let d = Derivatives::of(f, &mut ws);
    Ok(quantity_from(w, &d))
}

/// dM/dt from the Morawetz identity, split into its three pieces.
pub fn morawetz_rhs_parts(f: &RadialField, w: &MorawetzWeight) -> Result<MorawetzRhs> {
    w.grid.check_same(f.grid())?;
    let mut ws = w.grid.workspace();
    let d = Derivatives::of(f, &mut ws);
    Ok(rhs_from(w, f, &d, &mut ws))
}

pub fn morawetz_rhs(f: &RadialField, w: &MorawetzWeight) -> Result<f64> {
    morawetz_rhs_parts(f, w).map(|r| r.total())
}

/// Centered differences of a sampled series; `None` at the two ends.
pub fn centered_differences(times: &[f64], values: &[f64]) -> Vec<Option<f64>> {
    let n = times.len().min(values.len());
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 >= n {
                None
            } else {
                Some((values[i + 1] - values[i - 1]) / (times[i + 1] - times[i - 1]))
            }
        })
        .collect()
}

/// (1/T) ∫_0^T y dt by the trapezoid rule over samples with t ≤ T.
pub fn time_average(times: &[f64], values: &[f64], horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(config_err("averaging horizon must be positive"));
    }
    let slack = 1e-9 * horizon;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t <= horizon + slack)
        .map(|(&t, &y)| (t, y))
        .collect();
    if pts.len() < MIN_AVERAGE_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples in [0, {horizon}], need {MIN_AVERAGE_SAMPLES}",
            pts.len()
        )));
    }
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    if t0.abs() > slack || (t1 - horizon).abs() > slack {
        return Err(Error::InsufficientData(format!(
            "samples cover [{t0}, {t1}], not [0, {horizon}]"
        )));
    }
    let integral: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(integral / horizon)
}

/// (1/T) ∫_0^T ∫_{|x|≤R} |u|⁴ dx dt from a recorded trajectory.
pub fn averaged_ball_l4(traj: &Trajectory, radius: f64, horizon: f64) -> Result<f64> {
    if radius >= traj.grid.length() {
        return Err(config_err(format!("ball radius {radius} not inside the grid")));
    }
    let col = traj.ball_index(radius).ok_or_else(|| {
        config_err(format!("trajectory has no ball monitor at R = {radius}"))
    })?;
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let vals: Vec<f64> = traj.samples.iter().map(|s| s.ball_l4[col]).collect();
    time_average(&times, &vals, horizon)
}

/// sup_t |M(t)| and the Cauchy–Schwarz bound 2R·sup‖u‖₂·sup‖∇u‖₂ over a
/// trajectory recorded with a Morawetz monitor.
pub fn morawetz_bound(traj: &Trajectory) -> Option<(f64, f64)> {
    let radius = traj.settings.morawetz_radius?;
    let mut sup_m = 0.0f64;
    let (mut sup_l2, mut sup_grad) = (0.0f64, 0.0f64);
    for s in &traj.samples {
        sup_m = sup_m.max(s.morawetz?.abs());
        sup_l2 = sup_l2.max(s.mass.sqrt());
        sup_grad = sup_grad.max(s.kinetic.sqrt());
    }
    Some((sup_m, 2.0 * radius * sup_l2 * sup_grad))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvacuationEntry {
    pub horizon: f64,
    pub radius: f64,
    pub average: f64,
    pub wall_clean: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvacuationReport {
    pub entries: Vec<EvacuationEntry>,
    /// Least-squares slope of log(average) against log(T); `None` when fewer
    /// than two positive averages are available.
    pub slope: Option<f64>,
    /// Set when a constituent run blew up; the scan is then aborted.
    pub aborted: Option<Termination>,
}

/// Fit log y = a + s log x; `None` if fewer than two usable points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Runs one evolution per horizon T with ball radius R = T^{1/3} and
/// averages the localized potential energy over [0, T]. `grid_for` supplies
/// the grid for each horizon so callers can size the domain per run.
pub fn evacuation_scan<G>(
    initial: &InitialData,
    horizons: &[f64],
    settings: &RunSettings,
    grid_for: G,
    exec: Execution,
) -> Result<EvacuationReport>
where
    G: Fn(f64) -> Result<RadialGrid> + Sync + Send,
{
    if horizons.iter().any(|t| !(*t > 0.0)) {
        return Err(config_err("evacuation horizons must be positive"));
    }
    let runs = exec.map(horizons, |&horizon| -> Result<(f64, f64, Trajectory)> {
        let grid = grid_for(horizon)?;
        let radius = horizon.cbrt();
        let u0 = initial.build(&grid)?;
        let mut s = settings.clone();
        s.horizon = horizon;
        s.ball_radii = vec![radius];
        s.morawetz_radius = None;
        s.snapshot_every = None;
        let traj = evolve_run(&u0, &s)?;
        Ok((horizon, radius, traj))
    });
    let mut entries = Vec::with_capacity(runs.len());
    for run in runs {
        let (horizon, radius, traj) = run?;
        if let Termination::Blowup { .. } = traj.termination {
            return Ok(EvacuationReport {
                entries,
                slope: None,
                aborted: Some(traj.termination),
            });
        }
        entries.push(EvacuationEntry {
            horizon,
            radius,
            average: averaged_ball_l4(&traj, radius, horizon)?,
            wall_clean: traj.wall.clean,
        });
    }
    let xs: Vec<f64> = entries.iter().map(|e| e.horizon).collect();
    let ys: Vec<f64> = entries.iter().map(|e| e.average).collect();
    Ok(EvacuationReport {
        slope: loglog_slope(&xs, &ys),
        entries,
        aborted: None,
    })
}
