//! Strang-split sine-spectral time stepping for radial data.
//!
//! One step of size τ is `phase(τ/2) ∘ linear(τ) ∘ phase(τ/2)` where
//! `linear` is the exact flow e^{iτΔ} on the sine modes and `phase` is the
//! exact nonlinear flow u ↦ u·e^{i|u|²s}. Both pieces are unitary, so mass is
//! conserved up to transform rounding. Consecutive half phases are merged and
//! only closed at sample times.
//!
//! Near incipient blowup the step is halved (down to `dt_min`) whenever the
//! nonlinear phase per step `dt·max|u|²` would exceed `phase_cap`. Step
//! levels are tracked on an integer tick clock so sample times stay exact.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::exec::Execution;
use crate::grid::{ball_integral, integrate_power, RadialField, RadialGrid, SeriesEvaluator, SpectralWorkspace};
use crate::ground_state::find_ground_state;
use crate::morawetz::{make_weight, MorawetzProbe, MorawetzRhs};
use crate::Complex64;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_DT_MIN: f64 = 1e-7;
pub const DEFAULT_BLOWUP_FACTOR: f64 = 25.0;
/// Largest nonlinear phase rotation allowed in one step before halving.
pub const DEFAULT_PHASE_CAP: f64 = 0.01;
/// Bisection tolerance used when soliton data are built on a grid.
pub const SOLITON_TOL: f64 = 1e-12;

/// Mass fraction allowed outside the support radius.
const SUPPORT_TAIL: f64 = 1e-12;
/// Kinetic-energy quantile used for the group-velocity estimate.
const ENERGY_QUANTILE: f64 = 0.99;
/// Wall distance, in units of v_max·T, required for a clean run.
const WALL_TRANSITS: f64 = 4.0;
/// Relative slack when checking that times are multiples of dt.
const TICK_SLACK: f64 = 1e-9;

/// Initial data library.
#[derive(Clone, Debug)]
pub enum InitialData {
    /// A·e^{-r²/w²}
    Gaussian { amplitude: f64, width: f64 },
    /// λ·Q
    SolitonMultiple { lambda: f64 },
    /// A field already sampled on the run grid.
    Field(RadialField),
}

impl InitialData {
    pub fn gaussian(amplitude: f64, width: f64) -> Self {
        Self::Gaussian { amplitude, width }
    }

    pub fn soliton_multiple(lambda: f64) -> Self {
        Self::SolitonMultiple { lambda }
    }

    pub fn build(&self, grid: &RadialGrid) -> Result<RadialField> {
        match self {
            Self::Gaussian { amplitude, width } => {
                if !(amplitude.is_finite() && *width > 0.0 && width.is_finite()) {
                    return Err(config_err(format!("bad gaussian parameters A={amplitude}, w={width}")));
                }
                let (a, w2) = (*amplitude, width * width);
                Ok(RadialField::from_real_fn(grid, |r| a * (-r * r / w2).exp()))
            }
            Self::SolitonMultiple { lambda } => {
                if !lambda.is_finite() {
                    return Err(config_err("soliton multiple must be finite"));
                }
                Ok(find_ground_state(grid, SOLITON_TOL)?.multiple(*lambda))
            }
            Self::Field(f) => {
                grid.check_same(f.grid())?;
                f.ensure_finite()?;
                Ok(f.clone())
            }
        }
    }
}

/// A point on a trajectory.
#[derive(Clone, Debug)]
pub struct SimState {
    pub field: RadialField,
    pub t: f64,
    pub step_count: u64,
    pub dt_current: f64,
}

impl SimState {
    pub fn new(field: RadialField) -> Self {
        Self {
            field,
            t: 0.0,
            step_count: 0,
            dt_current: 0.0,
        }
    }
}

fn apply_phase(values: &mut [Complex64], s: f64) {
    for z in values {
        *z *= Complex64::from_polar(1.0, z.norm_sqr() * s);
    }
}

/// One Strang step of size `dt`.
pub fn step_strang(s: &SimState, dt: f64) -> Result<SimState> {
    step_strang_with(s, dt, true)
}

/// [`step_strang`] with the nonlinear substeps optionally switched off.
#[doc(hidden)]
pub fn step_strang_with(s: &SimState, dt: f64, nonlinear: bool) -> Result<SimState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(config_err(format!("time step must be positive, got {dt}")));
    }
    s.field.ensure_finite()?;
    let grid = s.field.grid().clone();
    let mut ws = grid.workspace();
    let mut u = s.field.values().to_vec();
    if nonlinear {
        apply_phase(&mut u, 0.5 * dt);
    }
    let half = RadialField::new(&grid, u)?;
    let mut u = half.to_spectral_with(&mut ws).propagate(dt).to_field_with(&mut ws).into_values();
    if nonlinear {
        apply_phase(&mut u, 0.5 * dt);
    }
    let field = RadialField::new(&grid, u)?;
    if !field.is_finite() {
        return Err(Error::Numeric(format!("non-finite field after step at t = {}", s.t + dt)));
    }
    Ok(SimState {
        field,
        t: s.t + dt,
        step_count: s.step_count + 1,
        dt_current: dt,
    })
}

/// Everything sampled along a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    /// ‖∇u‖₂²
    pub kinetic: f64,
    /// ‖u‖₄⁴
    pub potential: f64,
    /// ‖u‖₂ + ‖∇u‖₂
    pub h1: f64,
    /// ‖u‖₂·‖∇u‖₂
    pub pq_product: f64,
    /// ∫_{|x|≤R} |u|² per monitored radius.
    pub ball_mass: Vec<f64>,
    /// ∫_{|x|≤R} |u|⁴ per monitored radius.
    pub ball_l4: Vec<f64>,
    pub morawetz: Option<f64>,
    pub morawetz_rhs: Option<MorawetzRhs>,
    /// ∫_0^t ‖u(s)‖₅⁵ ds
    pub l5_accum: f64,
}

impl Observables {
    /// Observables of a single field (the time integral is supplied by the caller).
    pub fn of(
        f: &RadialField,
        t: f64,
        ball_radii: &[f64],
        probe: Option<&mut MorawetzProbe>,
        l5_accum: f64,
    ) -> Result<Self> {
        let mass = integrate_power(f, 2)?;
        let potential = integrate_power(f, 4)?;
        let kinetic = f.to_spectral().kinetic();
        let mut ball_mass = Vec::with_capacity(ball_radii.len());
        let mut ball_l4 = Vec::with_capacity(ball_radii.len());
        for &r in ball_radii {
            ball_mass.push(ball_integral(f, 2, r)?);
            ball_l4.push(ball_integral(f, 4, r)?);
        }
        let (morawetz, morawetz_rhs) = match probe {
            Some(p) => {
                let (m, rhs) = p.evaluate(f)?;
                (Some(m), Some(rhs))
            }
            None => (None, None),
        };
        Ok(Self {
            t,
            mass,
            energy: 0.5 * kinetic - 0.25 * potential,
            kinetic,
            potential,
            h1: mass.sqrt() + kinetic.sqrt(),
            pq_product: (mass * kinetic).sqrt(),
            ball_mass,
            ball_l4,
            morawetz,
            morawetz_rhs,
            l5_accum,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub horizon: f64,
    pub dt: f64,
    pub sample_every: f64,
    #[serde(default)]
    pub ball_radii: Vec<f64>,
    #[serde(default)]
    pub morawetz_radius: Option<f64>,
    /// Keep full fields at this cadence (a multiple of `sample_every`).
    #[serde(default)]
    pub snapshot_every: Option<f64>,
    pub blowup_factor: f64,
    pub dt_min: f64,
    pub phase_cap: f64,
    #[serde(default)]
    pub execution: Execution,
    /// Test hook: drop the nonlinear substeps.
    #[doc(hidden)]
    #[serde(skip)]
    pub linear_only: bool,
}

impl RunSettings {
    pub fn new(horizon: f64, dt: f64, sample_every: f64) -> Self {
        Self {
            horizon,
            dt,
            sample_every,
            ball_radii: Vec::new(),
            morawetz_radius: None,
            snapshot_every: None,
            blowup_factor: DEFAULT_BLOWUP_FACTOR,
            dt_min: DEFAULT_DT_MIN,
            phase_cap: DEFAULT_PHASE_CAP,
            execution: Execution::default(),
            linear_only: false,
        }
    }

    pub fn with_balls(mut self, radii: &[f64]) -> Self {
        self.ball_radii = radii.to_vec();
        self
    }

    pub fn with_morawetz(mut self, radius: f64) -> Self {
        self.morawetz_radius = Some(radius);
        self
    }

    pub fn with_snapshots(mut self, every: f64) -> Self {
        self.snapshot_every = Some(every);
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.execution = exec;
        self
    }

    fn plan(&self, grid: &RadialGrid) -> Result<Plan> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.horizon) {
            return Err(config_err(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !pos(self.dt) {
            return Err(config_err(format!("dt must be positive, got {}", self.dt)));
        }
        if !pos(self.sample_every) || self.dt > self.sample_every * (1.0 + TICK_SLACK) {
            return Err(config_err("need 0 < dt <= sample_every"));
        }
        if !pos(self.dt_min) || self.dt_min > self.dt {
            return Err(config_err("need 0 < dt_min <= dt"));
        }
        if !(self.blowup_factor > 1.0) {
            return Err(config_err("blowup factor must exceed 1"));
        }
        if !pos(self.phase_cap) {
            return Err(config_err("phase cap must be positive"));
        }
        let steps_in = |x: f64, what: &str| -> Result<u64> {
            let k = (x / self.dt).round();
            if k < 1.0 || (k * self.dt - x).abs() > TICK_SLACK * x {
                return Err(config_err(format!("{what} = {x} is not a multiple of dt = {}", self.dt)));
            }
            Ok(k as u64)
        };
        let total = steps_in(self.horizon, "horizon")?;
        let sample = steps_in(self.sample_every, "sample_every")?;
        let snapshot = match self.snapshot_every {
            None => None,
            Some(s) => {
                let k = steps_in(s, "snapshot_every")?;
                if k % sample != 0 {
                    return Err(config_err("snapshot_every must be a multiple of sample_every"));
                }
                Some(k / sample)
            }
        };
        let length = grid.length();
        for &r in &self.ball_radii {
            if !(r > 0.0 && r <= length) {
                return Err(config_err(format!("ball radius {r} outside (0, {length}]")));
            }
        }
        let kmax = (self.dt / self.dt_min).log2().floor().max(0.0) as u32;
        if kmax > 40 {
            return Err(config_err("dt / dt_min too large"));
        }
        Ok(Plan {
            total,
            sample,
            snapshot,
            kmax,
        })
    }
}

struct Plan {
    total: u64,
    sample: u64,
    /// Snapshot every this many samples.
    snapshot: Option<u64>,
    kmax: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupReason {
    /// ‖u‖_{H¹} exceeded blowup_factor times its initial value.
    NormGrowth,
    /// The step safeguard hit dt_min while ‖u‖_{H¹} was above its initial value.
    StepFloor,
    /// Non-finite values appeared.
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Blowup { t: f64, reason: BlowupReason },
}

impl Termination {
    pub fn is_blowup(&self) -> bool {
        matches!(self, Termination::Blowup { .. })
    }
}

/// Wall-contamination estimate made from the initial data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallReport {
    /// Radius outside which at most 1e-12 of the mass lives.
    pub support_radius: f64,
    /// Twice the wavenumber below which 99% of the kinetic energy lies.
    pub max_speed: f64,
    pub required_length: f64,
    pub clean: bool,
}

pub fn wall_report(u0: &RadialField, horizon: f64) -> WallReport {
    let grid = u0.grid();
    let n = grid.len();
    let dens = u0.norm_sqr();
    let shell: Vec<f64> = (0..n).map(|i| dens[i] * grid.node(i).powi(2)).collect();
    let total: f64 = shell.iter().sum();
    let mut support_radius = 0.0;
    if total > 0.0 {
        let mut tail = 0.0;
        for i in (0..n).rev() {
            tail += shell[i];
            if tail > SUPPORT_TAIL * total {
                support_radius = grid.node(i);
                break;
            }
        }
    }
    let c = u0.to_spectral();
    let k = grid.wavenumbers();
    let energy: Vec<f64> = c.coeffs().iter().zip(k).map(|(z, k)| k * k * z.norm_sqr()).collect();
    let e_total: f64 = energy.iter().sum();
    let mut max_speed = 0.0;
    if e_total > 0.0 {
        let mut acc = 0.0;
        for (i, e) in energy.iter().enumerate() {
            acc += e;
            if acc >= ENERGY_QUANTILE * e_total {
                max_speed = 2.0 * k[i];
                break;
            }
        }
    }
    let required_length = support_radius + WALL_TRANSITS * max_speed * horizon;
    WallReport {
        support_radius,
        max_speed,
        required_length,
        clean: grid.length() >= required_length,
    }
}

/// A grid with spacing `dr` long enough for a wall-clean run of `initial` to
/// time `horizon`. The node count is chosen so the transform length is a
/// power of two.
pub fn wall_safe_grid(initial: &InitialData, horizon: f64, dr: f64) -> Result<RadialGrid> {
    if !(dr > 0.0 && horizon > 0.0) {
        return Err(config_err("need positive dr and horizon"));
    }
    let probe_cells = (64.0 / dr).ceil().max(16.0) as usize;
    let probe = RadialGrid::new(probe_cells as f64 * dr, probe_cells - 1)?;
    let report = wall_report(&initial.build(&probe)?, horizon);
    let cells = ((report.required_length / dr).ceil() as usize).max(probe_cells).next_power_of_two();
    RadialGrid::new(cells as f64 * dr, cells - 1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    /// max_t |m(t) - m(0)| / m(0)
    pub mass: f64,
    /// max_t |E(t) - E(0)| / |E(0)|
    pub energy: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub field: RadialField,
}

/// Output of [`evolve_run`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: RadialGrid,
    pub settings: RunSettings,
    pub samples: Vec<Observables>,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    pub wall: WallReport,
    pub drift: Drift,
    /// Field at the last step taken (after closing the pending phase).
    pub final_field: RadialField,
    pub steps: u64,
    /// Smallest step actually used.
    pub min_dt: f64,
}

impl Trajectory {
    pub fn ball_index(&self, radius: f64) -> Option<usize> {
        self.settings
            .ball_radii
            .iter()
            .position(|&r| (r - radius).abs() <= 1e-12 * radius.max(1.0))
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn initial(&self) -> &Observables {
        &self.samples[0]
    }
}

fn drift_of(samples: &[Observables]) -> Drift {
    let Some(first) = samples.first() else {
        return Drift::default();
    };
    let rel = |x: f64, x0: f64| {
        let d = (x - x0).abs();
        if d == 0.0 {
            0.0
        } else {
            d / x0.abs()
        }
    };
    samples.iter().fold(Drift::default(), |acc, s| Drift {
        mass: acc.mass.max(rel(s.mass, first.mass)),
        energy: acc.energy.max(rel(s.energy, first.energy)),
    })
}

/// Stepping state on v = r·u.
struct Stepper {
    grid: RadialGrid,
    ws: SpectralWorkspace,
    v: Vec<Complex64>,
    spec: Vec<Complex64>,
    inv_r2: Vec<f64>,
    weights: Vec<f64>,
    /// e^{-iκ² dt_k}·2/(n+1), built on first use.
    tables: Vec<Option<Vec<Complex64>>>,
    dt: f64,
    pending: f64,
    exec: Execution,
    nonlinear: bool,
}

impl Stepper {
    fn new(u0: &RadialField, dt: f64, kmax: u32, exec: Execution, nonlinear: bool) -> Self {
        let grid = u0.grid().clone();
        let n = grid.len();
        Self {
            ws: grid.workspace(),
            v: u0.v(),
            spec: vec![Complex64::new(0.0, 0.0); n],
            inv_r2: grid.nodes().map(|r| 1.0 / (r * r)).collect(),
            weights: grid.volume_weights(),
            tables: vec![None; kmax as usize + 1],
            dt,
            pending: 0.0,
            exec,
            nonlinear,
            grid,
        }
    }

    fn level_dt(&self, k: u32) -> f64 {
        self.dt / (1u64 << k) as f64
    }

    /// (max |u|², ∫|u|⁵)
    fn density(&self) -> (f64, f64) {
        let mut max = 0.0f64;
        let mut l5 = 0.0;
        for ((z, ir2), w) in self.v.iter().zip(&self.inv_r2).zip(&self.weights) {
            let d = z.norm_sqr() * ir2;
            if d.is_nan() {
                return (f64::NAN, f64::NAN);
            }
            max = max.max(d);
            l5 += w * d * d * d.sqrt();
        }
        (max, l5)
    }

    fn phase(&mut self, s: f64) {
        if !self.nonlinear || s == 0.0 {
            return;
        }
        let inv_r2 = &self.inv_r2;
        self.exec.for_each_indexed(&mut self.v, |i, z| {
            *z *= Complex64::from_polar(1.0, z.norm_sqr() * inv_r2[i] * s);
        });
    }

    /// Exact linear flow over dt_k; returns ‖u‖_{H¹} when asked.
    fn linear(&mut self, k: u32, want_h1: bool) -> Option<f64> {
        let idx = k as usize;
        if self.tables[idx].is_none() {
            let tau = self.level_dt(k);
            let scale = 2.0 / (self.grid.len() + 1) as f64;
            self.tables[idx] = Some(
                self.grid
                    .wavenumbers()
                    .iter()
                    .map(|&kap| Complex64::from_polar(scale, -kap * kap * tau))
                    .collect(),
            );
        }
        self.ws.sine_sum(&self.v, &mut self.spec);
        let h1 = want_h1.then(|| {
            let c2 = 0.5 * self.grid.length() * (2.0 / (self.grid.len() + 1) as f64).powi(2);
            let (mut m, mut kin) = (0.0, 0.0);
            for (s, kap) in self.spec.iter().zip(self.grid.wavenumbers()) {
                let a = s.norm_sqr();
                m += a;
                kin += kap * kap * a;
            }
            (4.0 * PI * c2 * m).sqrt() + (4.0 * PI * c2 * kin).sqrt()
        });
        let table = self.tables[idx].as_ref().expect("table built above");
        for (s, p) in self.spec.iter_mut().zip(table) {
            *s *= p;
        }
        self.ws.sine_sum(&self.spec, &mut self.v);
        h1
    }

    fn close(&mut self) {
        let s = self.pending;
        self.phase(s);
        self.pending = 0.0;
    }

    fn field(&self) -> RadialField {
        RadialField::from_v(&self.grid, &self.v)
    }
}

/// Evolve `u0` to `settings.horizon`, sampling observables along the way.
/// Blowup ends the run early and is reported in `termination`, not as an error.
pub fn evolve_run(u0: &RadialField, settings: &RunSettings) -> Result<Trajectory> {
    let grid = u0.grid().clone();
    let plan = settings.plan(&grid)?;
    u0.ensure_finite()?;
    let mut probe = match settings.morawetz_radius {
        Some(r) => Some(MorawetzProbe::new(make_weight(&grid, r)?)),
        None => None,
    };
    let wall = wall_report(u0, settings.horizon);
    let radii = &settings.ball_radii;

    let first = Observables::of(u0, 0.0, radii, probe.as_mut(), 0.0)?;
    let h1_0 = first.h1;
    let mut samples = vec![first];
    let mut snapshots = Vec::new();
    if plan.snapshot.is_some() {
        snapshots.push(Snapshot { t: 0.0, field: u0.clone() });
    }

    let kmax = plan.kmax;
    let base = 1u64 << kmax;
    let end_tick = plan.total * base;
    let sample_ticks = plan.sample * base;
    let tick_dt = settings.dt / base as f64;
    let mut st = Stepper::new(u0, settings.dt, kmax, settings.execution, !settings.linear_only);

    let mut tick = 0u64;
    let mut steps = 0u64;
    let mut l5_accum = 0.0;
    let mut min_dt = settings.dt;
    let mut termination = Termination::Completed;

    while tick < end_tick {
        let t_now = tick as f64 * tick_dt;
        let (maxsq, l5) = st.density();
        if !maxsq.is_finite() {
            termination = Termination::Blowup { t: t_now, reason: BlowupReason::NonFinite };
            break;
        }
        let need = if maxsq * settings.dt <= settings.phase_cap {
            0
        } else {
            (maxsq * settings.dt / settings.phase_cap).log2().ceil() as u32
        };
        let floored = need > kmax;
        let align = if tick == 0 { 0 } else { kmax.saturating_sub(tick.trailing_zeros()) };
        let k = need.min(kmax).max(align);
        let tau = st.level_dt(k);
        min_dt = min_dt.min(tau);

        let s = st.pending + 0.5 * tau;
        st.phase(s);
        l5_accum += l5 * tau;
        let h1 = st.linear(k, floored);
        st.pending = 0.5 * tau;
        tick += 1u64 << (kmax - k);
        steps += 1;

        let t = tick as f64 * tick_dt;
        let at_floor = matches!(h1, Some(h) if h > h1_0 || !h.is_finite());
        if at_floor || tick.is_multiple_of(sample_ticks) || tick == end_tick {
            st.close();
            let f = st.field();
            if !f.is_finite() {
                termination = Termination::Blowup { t, reason: BlowupReason::NonFinite };
                break;
            }
            let obs = Observables::of(&f, t, radii, probe.as_mut(), l5_accum)?;
            let grown = !(obs.h1 <= settings.blowup_factor * h1_0);
            let on_grid = tick.is_multiple_of(sample_ticks) || tick == end_tick;
            if on_grid || grown || at_floor {
                if let Some(every) = plan.snapshot {
                    if on_grid && (tick / sample_ticks).is_multiple_of(every) {
                        snapshots.push(Snapshot { t, field: f });
                    }
                }
                samples.push(obs);
            }
            if grown {
                termination = Termination::Blowup { t, reason: BlowupReason::NormGrowth };
                break;
            }
            if at_floor {
                termination = Termination::Blowup { t, reason: BlowupReason::StepFloor };
                break;
            }
        }
    }
    st.close();
    let final_field = st.field();
    let drift = drift_of(&samples);
    Ok(Trajectory {
        grid,
        settings: settings.clone(),
        samples,
        snapshots,
        termination,
        wall,
        drift,
        final_field,
        steps,
        min_dt,
    })
}

/// x ↦ λ·u0(λx) on the compatible grid (L/λ, n). Nodes map onto nodes, so
/// the transport is exact.
pub fn scaling_transport(u0: &RadialField, lambda: f64) -> Result<RadialField> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(config_err(format!("scaling factor must be positive, got {lambda}")));
    }
    let grid = RadialGrid::new(u0.grid().length() / lambda, u0.grid().len())?;
    RadialField::new(&grid, u0.values().iter().map(|z| z * lambda).collect())
}

/// x ↦ λ·u0(λx) sampled on an arbitrary target grid by evaluating the sine
/// series of u0. Fails if u0 carries mass beyond λ·L_target.
pub fn scaling_transport_to(u0: &RadialField, lambda: f64, target: &RadialGrid) -> Result<RadialField> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(config_err(format!("scaling factor must be positive, got {lambda}")));
    }
    let src = u0.grid();
    let reach = lambda * target.length();
    if reach < src.length() {
        let total = integrate_power(u0, 2)?;
        let inside = ball_integral(u0, 2, reach)?;
        if total - inside > SUPPORT_TAIL * total.max(f64::MIN_POSITIVE) {
            return Err(config_err(format!(
                "support overflow: data extend past r = {reach} covered by the target grid"
            )));
        }
    }
    let ev = SeriesEvaluator::new(u0);
    let nodes: Vec<f64> = target.nodes().collect();
    let values = Execution::default().map(&nodes, |&r| {
        let x = lambda * r;
        if x >= src.length() {
            Complex64::new(0.0, 0.0)
        } else {
            lambda * ev.u_at(x).0
        }
    });
    RadialField::new(target, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{free_propagate, make_grid};

    fn l2_diff(a: &RadialField, b: &RadialField) -> f64 {
        a.sub(b).unwrap().l2_norm()
    }

    #[test]
    fn zero_field_stays_zero() {
        let g = make_grid(20.0, 255).unwrap();
        let s = step_strang(&SimState::new(RadialField::zeros(&g)), 1e-3).unwrap();
        assert!(s.field.is_zero());
        assert_eq!(s.step_count, 1);

        let traj = evolve_run(&RadialField::zeros(&g), &RunSettings::new(0.1, 1e-3, 0.01).with_balls(&[2.0]).with_morawetz(5.0)).unwrap();
        assert_eq!(traj.samples.len(), 11);
        for s in &traj.samples {
            assert_eq!((s.mass, s.energy, s.kinetic, s.potential, s.h1, s.l5_accum), (0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
            assert_eq!(s.ball_mass, vec![0.0]);
            assert_eq!(s.morawetz, Some(0.0));
        }
        assert_eq!(traj.termination, Termination::Completed);
    }

    #[test]
    fn linear_only_step_is_free_flow() {
        let g = make_grid(30.0, 1023).unwrap();
        let f = RadialField::from_real_fn(&g, |r| (-r * r).exp());
        let s = step_strang_with(&SimState::new(f.clone()), 0.1, false).unwrap();
        let exact = free_propagate(&f, 0.1);
        assert!(l2_diff(&s.field, &exact) < 1e-12);
    }

    #[test]
    fn step_rejects_bad_dt() {
        let g = make_grid(20.0, 63).unwrap();
        let s = SimState::new(RadialField::zeros(&g));
        assert!(step_strang(&s, 0.0).is_err());
        assert!(step_strang(&s, f64::NAN).is_err());
    }

    #[test]
    fn soliton_local_error_is_third_order() {
        // Richardson-style oracle: the one-step error against e^{i dt}Q drops by ~8 per halving.
        let g = make_grid(50.0, 4095).unwrap();
        let q = find_ground_state(&g, SOLITON_TOL).unwrap().profile;
        let err = |dt: f64| {
            let s = step_strang(&SimState::new(q.clone()), dt).unwrap();
            l2_diff(&s.field, &q.scale(Complex64::from_polar(1.0, dt)))
        };
        let (e1, e2) = (err(4e-3), err(2e-3));
        let ratio = e1 / e2;
        assert!(ratio > 6.0 && ratio < 10.0, "ratio {ratio}");
        let c = e2 / (2e-3f64.powi(3) * q.l2_norm());
        let e3 = err(1e-3);
        assert!(e3 <= 1.5 * c * 1e-9 * q.l2_norm(), "{e3} vs C = {c}");
    }

    #[test]
    fn strang_step_conserves_mass() {
        let g = make_grid(30.0, 1023).unwrap();
        let f = RadialField::from_fn(&g, |r| Complex64::from_polar(1.2 * (-r * r / 2.0).exp(), 0.3 * r * r));
        let m0 = integrate_power(&f, 2).unwrap();
        let mut s = SimState::new(f);
        for _ in 0..50 {
            s = step_strang(&s, 1e-2).unwrap();
        }
        let m1 = integrate_power(&s.field, 2).unwrap();
        assert!((m1 - m0).abs() < 1e-12 * m0);
        assert!((s.t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fused_run_matches_plain_steps() {
        let g = make_grid(30.0, 1023).unwrap();
        let f = RadialField::from_real_fn(&g, |r| 0.8 * (-r * r).exp());
        let mut s = SimState::new(f.clone());
        for _ in 0..100 {
            s = step_strang(&s, 1e-3).unwrap();
        }
        for exec in [Execution::Sequential, Execution::Parallel] {
            let traj = evolve_run(&f, &RunSettings::new(0.1, 1e-3, 0.02).with_execution(exec)).unwrap();
            assert!(l2_diff(&traj.final_field, &s.field) < 1e-12);
            assert_eq!(traj.steps, 100);
            assert_eq!(traj.samples.len(), 6);
        }
    }

    #[test]
    fn observables_match_definitions() {
        let g = make_grid(40.0, 2047).unwrap();
        let f = RadialField::from_real_fn(&g, |r| 0.5 * (-r * r).exp());
        let traj = evolve_run(&f, &RunSettings::new(0.5, 1e-3, 0.1).with_snapshots(0.5)).unwrap();
        assert_eq!(traj.snapshots.len(), 2);
        let last = traj.samples.last().unwrap();
        let u = &traj.snapshots[1].field;
        assert!((last.t - 0.5).abs() < 1e-12);
        let m = integrate_power(u, 2).unwrap();
        let k = crate::grid::gradient_sq(u);
        let p = integrate_power(u, 4).unwrap();
        assert!((last.mass - m).abs() <= 1e-12 * m);
        assert!((last.energy - (0.5 * k - 0.25 * p)).abs() <= 1e-12 * last.energy.abs());
        assert!(traj.drift.mass < 1e-10);
        assert!(last.l5_accum > 0.0);
    }

    #[test]
    fn energy_drift_is_second_order() {
        let g = make_grid(30.0, 1023).unwrap();
        let f = RadialField::from_real_fn(&g, |r| 1.0 * (-r * r).exp());
        let run = |dt: f64| evolve_run(&f, &RunSettings::new(0.5, dt, 0.05)).unwrap().drift.energy;
        let (a, b) = (run(2e-3), run(1e-3));
        assert!(b <= 1e-7 * 10.0);
        let ratio = a / b;
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn settings_validation() {
        let g = make_grid(20.0, 63).unwrap();
        let f = RadialField::zeros(&g);
        for s in [
            RunSettings::new(0.0, 1e-3, 0.1),
            RunSettings::new(1.0, 0.2, 0.1),
            RunSettings::new(1.0, 3e-3, 0.1001),
            RunSettings::new(1.0, 1e-3, 0.1).with_balls(&[25.0]),
            RunSettings::new(1.0, 1e-3, 0.1).with_snapshots(0.15),
            RunSettings::new(1.0, 1e-3, 0.1).with_morawetz(20.0),
        ] {
            assert!(matches!(evolve_run(&f, &s), Err(Error::Config(_))), "{s:?}");
        }
    }

    #[test]
    fn scaling_transport_laws() {
        let g = make_grid(30.0, 2047).unwrap();
        let f = RadialField::from_real_fn(&g, |r| (-r * r).exp());
        assert_eq!(scaling_transport(&f, 1.0).unwrap(), f);
        let s = scaling_transport(&f, 2.0).unwrap();
        let (m, k) = (integrate_power(&f, 2).unwrap(), crate::grid::gradient_sq(&f));
        assert!((integrate_power(&s, 2).unwrap() - m / 2.0).abs() < 1e-8);
        assert!((crate::grid::gradient_sq(&s) - 2.0 * k).abs() < 1e-8);
        assert!(scaling_transport(&f, 0.0).is_err());
    }

    #[test]
    fn scaling_transport_to_other_grid() {
        let g = make_grid(30.0, 2047).unwrap();
        let f = RadialField::from_real_fn(&g, |r| (-r * r).exp());
        let target = make_grid(20.0, 1500).unwrap();
        let s = scaling_transport_to(&f, 2.0, &target).unwrap();
        let exact = RadialField::from_real_fn(&target, |r| 2.0 * (-4.0 * r * r).exp());
        assert!(l2_diff(&s, &exact) < 1e-10);
        let small = make_grid(1.0, 100).unwrap();
        assert!(matches!(scaling_transport_to(&f, 1.0, &small), Err(Error::Config(_))));
    }

    #[test]
    fn wall_policy_flags_short_domains() {
        let g = make_grid(40.0, 1023).unwrap();
        let f = RadialField::from_real_fn(&g, |r| 0.5 * (-r * r).exp());
        let w = wall_report(&f, 1.0);
        assert!(w.support_radius > 3.0 && w.support_radius < 8.0, "{w:?}");
        assert!(w.max_speed > 4.0 && w.max_speed < 12.0, "{w:?}");
        assert!(w.clean);
        assert!(!wall_report(&f, 50.0).clean);
        let big = wall_safe_grid(&InitialData::gaussian(0.5, 1.0), 50.0, 0.2).unwrap();
        assert!((big.dr() - 0.2).abs() < 1e-12);
        assert!((big.len() + 1).is_power_of_two());
        let u = InitialData::gaussian(0.5, 1.0).build(&big).unwrap();
        assert!(wall_report(&u, 50.0).clean);
    }

    #[test]
    fn initial_data_library() {
        let g = make_grid(20.0, 255).unwrap();
        assert!(InitialData::gaussian(1.0, 0.0).build(&g).is_err());
        let f = InitialData::gaussian(2.0, 1.0).build(&g).unwrap();
        assert!((f.values()[0].re - 2.0 * (-g.dr().powi(2)).exp()).abs() < 1e-15);
        let other = make_grid(20.0, 127).unwrap();
        assert_eq!(InitialData::Field(f).build(&other), Err(Error::GridMismatch));
    }
}
