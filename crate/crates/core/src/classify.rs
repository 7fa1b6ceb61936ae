//! Threshold conditions, coercivity on balls, and the per-run verdict.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::evolve::{Snapshot, Termination, Trajectory};
use crate::exec::Execution;
use crate::grid::{gauss_panels, gradient_sq, integrate_power, RadialField, SeriesEvaluator};
use crate::ground_state::VariationalConstants;

/// Minimum number of samples in the tail window.
pub const MIN_TAIL_SAMPLES: usize = 16;
/// Minimum number of snapshots for the scattering residual.
pub const MIN_TAIL_SNAPSHOTS: usize = 4;
/// Fraction of the run, counted from the end, used as "t → ∞".
pub const TAIL_FRACTION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// M(u0)E(u0)
    pub me_product: f64,
    /// ‖u0‖₂‖u0‖_{Ḣ¹}
    pub pq_product: f64,
    pub me_threshold: f64,
    pub pq_threshold: f64,
    pub below_me: bool,
    pub below_pq: bool,
    /// 1 - ME/ME_threshold clamped to [0, 1].
    pub delta_margin: f64,
}

impl ThresholdReport {
    pub fn below_threshold(&self) -> bool {
        self.below_me && self.below_pq
    }
}

pub fn threshold_report(u0: &RadialField, vc: &VariationalConstants) -> Result<ThresholdReport> {
    let m = integrate_power(u0, 2)?;
    let p = integrate_power(u0, 4)?;
    let k = gradient_sq(u0);
    let me_product = m * (0.5 * k - 0.25 * p);
    let pq_product = (m * k).sqrt();
    Ok(ThresholdReport {
        me_product,
        pq_product,
        me_threshold: vc.me_threshold,
        pq_threshold: vc.pq_threshold,
        below_me: me_product < vc.me_threshold,
        below_pq: pq_product < vc.pq_threshold,
        delta_margin: (1.0 - me_product / vc.me_threshold).clamp(0.0, 1.0),
    })
}

/// Profile of the fixed cutoff: 1 on [0, 1], 0 on [2, ∞), C² quintic bridge.
pub fn cutoff(x: f64) -> f64 {
    let s = x - 1.0;
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

fn cutoff_d1(x: f64) -> f64 {
    let s = x - 1.0;
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        -30.0 * s * s * (1.0 - s) * (1.0 - s)
    }
}

fn cutoff_d2(x: f64) -> f64 {
    let s = x - 1.0;
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
    }
}

/// max |χ'|, attained at the middle of the bridge.
pub const CUTOFF_SLOPE: f64 = 30.0 / 16.0;

/// χ_R(r) and Δχ_R(r).
fn cutoff_r(r: f64, radius: f64) -> (f64, f64) {
    let x = r / radius;
    let lap = cutoff_d2(x) / (radius * radius) + 2.0 * cutoff_d1(x) / (radius * r);
    (cutoff(x), lap)
}

/// ∫ χ_R |u|² dx.
pub fn smooth_ball_mass(f: &RadialField, radius: f64) -> Result<f64> {
    check_radius(f, radius)?;
    f.ensure_finite()?;
    let g = f.grid();
    let dens: Vec<f64> = f.norm_sqr().iter().enumerate().map(|(i, d)| cutoff(g.node(i) / radius) * d).collect();
    Ok(g.radial_integral(&dens))
}

fn check_radius(f: &RadialField, radius: f64) -> Result<()> {
    let length = f.grid().length();
    if !(radius > 0.0 && radius <= length) {
        return Err(config_err(format!("cutoff radius {radius} outside (0, {length}]")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityBall {
    pub radius: f64,
    pub delta: f64,
    /// ‖χ_R f‖₂‖χ_R f‖_{Ḣ¹}
    pub pq_product: f64,
    /// (1-δ)·PQ_threshold
    pub gate: f64,
    /// ‖χ_R f‖²_{Ḣ¹} - ¾‖χ_R f‖⁴₄
    pub functional: f64,
    /// ‖χ_R f‖⁴₄
    pub potential: f64,
    /// functional / potential (0 for the zero field).
    pub delta_prime: f64,
    pub passes: bool,
    /// Relative residual of ∫χ²|∇f|² = ∫|∇(χf)|² + ∫χΔχ|f|².
    pub ibp_residual: f64,
}

pub fn coercivity_ball(f: &RadialField, radius: f64, vc: &VariationalConstants, delta: f64) -> Result<CoercivityBall> {
    check_radius(f, radius)?;
    f.ensure_finite()?;
    if !(0.0..1.0).contains(&delta) {
        return Err(config_err(format!("delta {delta} outside [0, 1)")));
    }
    // Δχ_R has derivative jumps at R and 2R; panels break there so every
    // integrand is smooth on each panel. Fields are read off their sine series.
    let g = f.grid();
    let top = (2.0 * radius).min(g.length());
    let ev = SeriesEvaluator::new(f);
    let h = 2.0 * g.dr();
    let mut pts = gauss_panels(0.0, radius.min(top), h);
    pts.extend(gauss_panels(radius, top, h));
    let terms = Execution::default().map(&pts, |&(r, w)| {
        let (u, du) = ev.u_at(r);
        let (c, lap) = cutoff_r(r, radius);
        let c1 = cutoff_d1(r / radius) / radius;
        let d = u.norm_sqr();
        let vol = 4.0 * std::f64::consts::PI * r * r * w;
        [
            vol * c * c * d,
            vol * (u * c1 + du * c).norm_sqr(),
            vol * (c * c * d).powi(2),
            vol * c * c * du.norm_sqr(),
            vol * c * lap * d,
        ]
    });
    let mut sums = [0.0; 5];
    for t in &terms {
        for (s, x) in sums.iter_mut().zip(t) {
            *s += x;
        }
    }
    let [m, k, p, lhs, corr] = sums;
    let functional = k - 0.75 * p;
    let rhs = k + corr;
    let ibp_residual = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { (lhs - rhs).abs() / lhs.abs().max(rhs.abs()) };

    let pq_product = (m * k).sqrt();
    let gate = (1.0 - delta) * vc.pq_threshold;
    Ok(CoercivityBall {
        radius,
        delta,
        pq_product,
        gate,
        functional,
        potential: p,
        delta_prime: if p > 0.0 { functional / p } else { 0.0 },
        passes: pq_product < gate,
        ibp_residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaoReport {
    pub epsilon: f64,
    pub radius: f64,
    pub window_start: f64,
    pub samples: usize,
    /// inf of the ball mass over the tail window.
    pub infimum: f64,
    pub satisfied: bool,
}

/// Smallness of mass in the ball |x| ≤ R over the tail half of the run.
pub fn tao_criterion(traj: &Trajectory, epsilon: f64, radius: f64) -> Result<TaoReport> {
    if !(epsilon > 0.0) {
        return Err(config_err("epsilon must be positive"));
    }
    let col = traj
        .ball_index(radius)
        .ok_or_else(|| config_err(format!("trajectory has no ball monitor at R = {radius}")))?;
    let end = traj.samples.last().map_or(0.0, |s| s.t);
    let window_start = (1.0 - TAIL_FRACTION) * end;
    let tail: Vec<f64> = traj
        .samples
        .iter()
        .filter(|s| s.t >= window_start)
        .map(|s| s.ball_mass[col])
        .collect();
    if tail.len() < MIN_TAIL_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples in the tail window, need {MIN_TAIL_SAMPLES}",
            tail.len()
        )));
    }
    let infimum = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(TaoReport {
        epsilon,
        radius,
        window_start,
        samples: tail.len(),
        infimum,
        satisfied: infimum <= epsilon * epsilon,
    })
}

/// Snapshots in the tail window of a trajectory.
pub fn tail_snapshots(traj: &Trajectory) -> &[Snapshot] {
    let end = traj.snapshots.last().map_or(0.0, |s| s.t);
    let start = (1.0 - TAIL_FRACTION) * end;
    let first = traj.snapshots.iter().position(|s| s.t >= start).unwrap_or(traj.snapshots.len());
    &traj.snapshots[first..]
}

/// max_i ‖φ(t_{i+1}) - φ(t_i)‖_{H¹} with φ(t) = e^{-itΔ}u(t).
pub fn scattering_residual(snapshots: &[Snapshot]) -> Result<f64> {
    if snapshots.len() < MIN_TAIL_SNAPSHOTS {
        return Err(Error::InsufficientData(format!(
            "{} snapshots, need {MIN_TAIL_SNAPSHOTS}",
            snapshots.len()
        )));
    }
    let grid = snapshots[0].field.grid().clone();
    let mut ws = grid.workspace();
    let mut prev = None;
    let mut worst = 0.0f64;
    for s in snapshots {
        grid.check_same(s.field.grid())?;
        s.field.ensure_finite()?;
        let phi = s.field.to_spectral_with(&mut ws).propagate(-s.t);
        if let Some(p) = prev {
            worst = worst.max(phi.sub(&p)?.h1_norm());
        }
        prev = Some(phi);
    }
    Ok(worst)
}

/// For every sample, ball mass - (4πR³/3)^{1/2}(ball L⁴)^{1/2}; Hölder says
/// this is never positive. Returns the largest value found.
pub fn holder_bridge_excess(traj: &Trajectory) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for s in &traj.samples {
        for (i, &r) in traj.settings.ball_radii.iter().enumerate() {
            let vol = 4.0 * std::f64::consts::PI * r.powi(3) / 3.0;
            worst = worst.max(s.ball_mass[i] - (vol * s.ball_l4[i]).sqrt());
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gates {
    pub tao_epsilon: f64,
    pub tao_radius: f64,
    /// Scattering residual gate relative to ‖u0‖_{H¹}.
    pub residual_rel: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Self {
            tao_epsilon: 0.1,
            tao_radius: 10.0,
            residual_rel: 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    Scatter,
    Blowup,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub gates: Gates,
    pub termination: Termination,
    pub wall_clean: bool,
    pub h1_initial: f64,
    pub h1_max: f64,
    pub tao: Option<TaoReport>,
    pub scattering_residual: Option<f64>,
    /// Why a diagnostic could not be evaluated.
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub evidence: Evidence,
}

pub fn classify_run(traj: &Trajectory, gates: &Gates) -> Verdict {
    let h1_initial = traj.samples.first().map_or(0.0, |s| s.h1);
    let h1_max = traj.samples.iter().map(|s| s.h1).fold(0.0, f64::max);
    let mut notes = Vec::new();
    let tao = match tao_criterion(traj, gates.tao_epsilon, gates.tao_radius) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("tao criterion: {e}"));
            None
        }
    };
    let scattering_residual = match scattering_residual(tail_snapshots(traj)) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("scattering residual: {e}"));
            None
        }
    };
    let kind = if traj.termination.is_blowup() {
        VerdictKind::Blowup
    } else {
        let tao_ok = tao.is_some_and(|t| t.satisfied);
        let res_ok = scattering_residual.is_some_and(|r| r <= gates.residual_rel * h1_initial);
        if !traj.wall.clean {
            notes.push("run is wall-contaminated".into());
        }
        if tao_ok && res_ok && traj.wall.clean {
            VerdictKind::Scatter
        } else {
            VerdictKind::Undetermined
        }
    };
    Verdict {
        kind,
        evidence: Evidence {
            gates: *gates,
            termination: traj.termination,
            wall_clean: traj.wall.clean,
            h1_initial,
            h1_max,
            tao,
            scattering_residual,
            notes,
        },
    }
}
