//! Ground state Q of -ΔQ + Q - Q³ = 0 by shooting on the radial ODE
//!
//! ```text
//! Q'' + (2/r) Q' - Q + Q³ = 0,   Q(0) = b,  Q'(0) = 0,
//! ```
//!
//! and the variational constants built from its integrals
//! m = ‖Q‖₂², K = ‖∇Q‖₂², P = ‖Q‖₄⁴.
//!
//! The shooting amplitude b* is bracketed between an undershoot (Q turns
//! back up while positive) and an overshoot (Q crosses zero) and bisected.
//! The profile is then sampled on the evolution grid by integrating from b*
//! with four RK4 substeps per grid cell. Beyond the radius where the
//! bracketing trajectories separate (or Q has decayed below 1e-6 b*), the
//! profile continues with the linear tail A e^{-r}/r, which solves
//! -Δq + q = 0 exactly and drops only the O(Q³) term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{gradient_sq, integrate_power, laplacian, RadialField, RadialGrid};
use crate::Complex64;

/// Tolerance on the Pohozaev ratios and the elliptic residual.
pub const INVARIANT_TOL: f64 = 1e-6;

/// Integration horizon used while bisecting.
const BISECTION_HORIZON: f64 = 80.0;
/// Relative separation of the bracketing trajectories at which the tail takes over.
const TRAJECTORY_AGREEMENT: f64 = 1e-7;
/// Q/b* below which the tail takes over.
const TAIL_SWITCH: f64 = 1e-6;
const BRACKET_LO: f64 = 0.1;
const BRACKET_HI: f64 = 20.0;
const DEFAULT_STEP: f64 = 2.5e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShotVerdict {
    /// Q reaches zero.
    CrossesZero,
    /// Q turns upward while still positive (or never decays).
    DivergesPositive,
    /// Q and Q' both fall below the decay tolerance with Q > 0.
    Decays,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShotOutcome {
    pub verdict: ShotVerdict,
    pub event_radius: f64,
}

/// Fixed-step RK4 integrator for the ground-state ODE.
#[derive(Clone, Copy, Debug)]
pub struct Shooter {
    step: f64,
    launch: f64,
}

#[derive(Clone, Copy, Debug)]
struct OdeState {
    r: f64,
    q: f64,
    p: f64,
}

#[inline]
fn accel(r: f64, q: f64, p: f64) -> f64 {
    -2.0 * p / r + q - q * q * q
}

impl Shooter {
    /// Step `step`, Taylor launch at `launch` (a multiple of the step).
    pub fn new(step: f64, launch: f64) -> Result<Self> {
        if !(step.is_finite() && step > 1e-12) {
            return Err(Error::Solver(format!("step size {step} underflows")));
        }
        Ok(Self { step, launch })
    }

    /// Integrator matched to a grid: launch at the first node, four substeps per cell.
    pub fn for_grid(grid: &RadialGrid) -> Result<Self> {
        Self::new(grid.dr() / 4.0, grid.dr())
    }

    fn start(&self, b: f64) -> OdeState {
        let a2 = (b - b * b * b) / 6.0;
        let a4 = a2 * (1.0 - 3.0 * b * b) / 20.0;
        let a6 = (a4 * (1.0 - 3.0 * b * b) - 3.0 * b * a2 * a2) / 42.0;
        let r = self.launch;
        let r2 = r * r;
        OdeState {
            r,
            q: b + r2 * (a2 + r2 * (a4 + r2 * a6)),
            p: r * (2.0 * a2 + r2 * (4.0 * a4 + r2 * 6.0 * a6)),
        }
    }

    #[inline]
    fn rk4(&self, s: OdeState) -> OdeState {
        let h = self.step;
        let (r, q, p) = (s.r, s.q, s.p);
        let k1q = p;
        let k1p = accel(r, q, p);
        let k2q = p + 0.5 * h * k1p;
        let k2p = accel(r + 0.5 * h, q + 0.5 * h * k1q, k2q);
        let k3q = p + 0.5 * h * k2p;
        let k3p = accel(r + 0.5 * h, q + 0.5 * h * k2q, k3q);
        let k4q = p + h * k3p;
        let k4p = accel(r + h, q + h * k3q, k4q);
        OdeState {
            r: r + h,
            q: q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
            p: p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        }
    }

    /// Classify the trajectory launched from amplitude `b`. A `tol` of zero
    /// disables the decay verdict.
    pub fn shoot(&self, b: f64, r_max: f64, tol: f64) -> Result<ShotOutcome> {
        if !(b > 0.0) {
            return Err(Error::Domain(format!("shooting amplitude must be positive, got {b}")));
        }
        let mut s = self.start(b);
        while s.r < r_max {
            s = self.rk4(s);
            if !(s.q.is_finite() && s.p.is_finite()) {
                return Err(Error::Solver(format!("non-finite ODE state at r = {}", s.r)));
            }
            if s.q <= 0.0 {
                return Ok(ShotOutcome { verdict: ShotVerdict::CrossesZero, event_radius: s.r });
            }
            if s.p > 0.0 || s.q > 2.0 * b {
                return Ok(ShotOutcome { verdict: ShotVerdict::DivergesPositive, event_radius: s.r });
            }
            if tol > 0.0 && s.q < tol && s.p.abs() < tol {
                return Ok(ShotOutcome { verdict: ShotVerdict::Decays, event_radius: s.r });
            }
        }
        Ok(ShotOutcome { verdict: ShotVerdict::DivergesPositive, event_radius: s.r.min(r_max) })
    }
}

/// Shoot with the default fine step.
pub fn shoot(b: f64, r_max: f64, tol: f64) -> Result<ShotOutcome> {
    if r_max < 20.0 || !(tol > 0.0) {
        return Err(Error::Config(format!("shoot needs r_max >= 20 and tol > 0, got {r_max}, {tol}")));
    }
    Shooter::new(DEFAULT_STEP, 4.0 * DEFAULT_STEP)?.shoot(b, r_max, tol)
}

/// Bracket and bisect the shooting amplitude. Returns (lo, hi) with lo an
/// undershoot and hi an overshoot, hi - lo ≤ tol or adjacent floats.
pub fn bisect_amplitude(shooter: &Shooter, tol: f64, exec: Execution) -> Result<(f64, f64)> {
    let scan: Vec<f64> = std::iter::once(BRACKET_LO)
        .chain((1..=40).map(|i| 0.5 * i as f64))
        .collect();
    let verdicts = exec.map(&scan, |&b| shooter.shoot(b, BISECTION_HORIZON, 0.0));
    let mut bracket = None;
    for i in 1..scan.len() {
        let prev = verdicts[i - 1].as_ref().map_err(Clone::clone)?.verdict;
        let cur = verdicts[i].as_ref().map_err(Clone::clone)?.verdict;
        if prev == ShotVerdict::DivergesPositive && cur == ShotVerdict::CrossesZero {
            bracket = Some((scan[i - 1], scan[i]));
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::Solver(format!("no shooting bracket in [{BRACKET_LO}, {BRACKET_HI}]"))
    })?;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shooter.shoot(mid, BISECTION_HORIZON, 0.0)?.verdict {
            ShotVerdict::CrossesZero => hi = mid,
            _ => lo = mid,
        }
    }
    Ok((lo, hi))
}

/// The ground state sampled on an evolution grid, with its integrals.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub profile: RadialField,
    /// Q(0).
    pub b_star: f64,
    /// Final bisection bracket.
    pub bracket: (f64, f64),
    /// m = ‖Q‖₂².
    pub mass: f64,
    /// K = ‖∇Q‖₂².
    pub kinetic: f64,
    /// P = ‖Q‖₄⁴.
    pub potential: f64,
    /// Radius beyond which the e^{-r}/r tail is used.
    pub tail_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStateResiduals {
    /// |K/m - 3|
    pub kinetic_ratio: f64,
    /// |P/m - 4|
    pub potential_ratio: f64,
    /// ‖-ΔQ + Q - Q³‖₂ / ‖Q‖₂
    pub elliptic: f64,
    /// |K - ¾P| / P
    pub virial_null: f64,
    /// Profile positive and decreasing down to 1e-10 of its peak.
    pub monotone: bool,
}

impl GroundStateResiduals {
    pub fn passes(&self, tol: f64) -> bool {
        self.kinetic_ratio <= tol
            && self.potential_ratio <= tol
            && self.elliptic <= tol
            && self.virial_null <= tol
            && self.monotone
    }
}

pub fn find_ground_state(grid: &RadialGrid, tol: f64) -> Result<GroundState> {
    find_ground_state_with(grid, tol, Execution::default())
}

pub fn find_ground_state_with(grid: &RadialGrid, tol: f64, exec: Execution) -> Result<GroundState> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("bisection tolerance must be positive, got {tol}")));
    }
    let shooter = Shooter::for_grid(grid)?;
    let (lo, hi) = bisect_amplitude(&shooter, tol, exec)?;
    let b_star = 0.5 * (lo + hi);
    let (values, tail_radius) = sample_profile(grid, &shooter, lo, b_star, hi);
    let profile = real_field(grid, values);
    let mass = integrate_power(&profile, 2)?;
    let kinetic = gradient_sq(&profile);
    let potential = integrate_power(&profile, 4)?;
    Ok(GroundState {
        profile,
        b_star,
        bracket: (lo, hi),
        mass,
        kinetic,
        potential,
        tail_radius,
    })
}

fn sample_profile(grid: &RadialGrid, shooter: &Shooter, lo: f64, mid: f64, hi: f64) -> (Vec<f64>, f64) {
    let n = grid.len();
    let mut out = Vec::with_capacity(n);
    let (mut s_lo, mut s_mid, mut s_hi) = (shooter.start(lo), shooter.start(mid), shooter.start(hi));
    out.push(s_mid.q);
    let mut cut = None;
    for i in 1..n {
        for _ in 0..4 {
            s_lo = shooter.rk4(s_lo);
            s_mid = shooter.rk4(s_mid);
            s_hi = shooter.rk4(s_hi);
        }
        let q = s_mid.q;
        let spread = (s_hi.q - s_lo.q).abs();
        if !(q > 0.0) || q < TAIL_SWITCH * mid || spread > TRAJECTORY_AGREEMENT * q {
            cut = Some(i - 1);
            break;
        }
        out.push(q);
    }
    let Some(last) = cut else {
        return (out, grid.length());
    };
    let rc = grid.node(last);
    let amp = out[last] * rc * rc.exp();
    for i in last + 1..n {
        let r = grid.node(i);
        out.push(amp * (-r).exp() / r);
    }
    (out, rc)
}

fn real_field(grid: &RadialGrid, values: Vec<f64>) -> RadialField {
    let values = values.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
    RadialField::new(grid, values).expect("profile length matches grid")
}

impl GroundState {
    pub fn grid(&self) -> &RadialGrid {
        self.profile.grid()
    }

    /// E(Q) = K/2 - P/4.
    pub fn energy(&self) -> f64 {
        0.5 * self.kinetic - 0.25 * self.potential
    }

    pub fn residuals(&self) -> GroundStateResiduals {
        let q = &self.profile;
        let lap = laplacian(q);
        let res: Vec<Complex64> = q
            .values()
            .iter()
            .zip(lap.values())
            .map(|(&u, &l)| -l + u - u * u.norm_sqr())
            .collect();
        let res_field = RadialField::new(q.grid(), res).expect("same grid");
        let elliptic = (integrate_power(&res_field, 2).unwrap_or(f64::INFINITY) / self.mass).sqrt();
        let peak = self.b_star;
        let vals = q.values();
        let mut monotone = vals.iter().all(|z| z.re > 0.0 || z.re.abs() < 1e-10 * peak);
        for w in vals.windows(2) {
            if w[0].re < 1e-10 * peak {
                break;
            }
            monotone &= w[1].re < w[0].re;
        }
        GroundStateResiduals {
            kinetic_ratio: (self.kinetic / self.mass - 3.0).abs(),
            potential_ratio: (self.potential / self.mass - 4.0).abs(),
            elliptic,
            virial_null: (self.kinetic - 0.75 * self.potential).abs() / self.potential,
            monotone,
        }
    }

    pub fn validate(&self) -> Result<GroundStateResiduals> {
        let r = self.residuals();
        if r.passes(INVARIANT_TOL) {
            Ok(r)
        } else {
            Err(Error::Numeric(format!("ground-state invariants violated: {r:?}")))
        }
    }

    /// λQ on the same grid.
    pub fn multiple(&self, lambda: f64) -> RadialField {
        self.profile.scale(Complex64::new(lambda, 0.0))
    }
}

/// Sharp Gagliardo–Nirenberg constant and the thresholds it fixes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalConstants {
    /// C₀ = P / (√m K^{3/2}).
    pub c0: f64,
    /// M(Q) E(Q).
    pub me_threshold: f64,
    /// ‖Q‖₂ ‖∇Q‖₂.
    pub pq_threshold: f64,
    /// E(Q).
    pub energy: f64,
}

impl VariationalConstants {
    /// |PQ·C₀ - 4/3|
    pub fn pq_identity_residual(&self) -> f64 {
        (self.pq_threshold * self.c0 - 4.0 / 3.0).abs()
    }

    /// |ME·C₀² - 8/27|
    pub fn me_identity_residual(&self) -> f64 {
        (self.me_threshold * self.c0 * self.c0 - 8.0 / 27.0).abs()
    }
}

pub fn constants(gs: &GroundState) -> VariationalConstants {
    let (m, k, p) = (gs.mass, gs.kinetic, gs.potential);
    let energy = gs.energy();
    VariationalConstants {
        c0: p / (m.sqrt() * k.powf(1.5)),
        me_threshold: m * energy,
        pq_threshold: (m * k).sqrt(),
        energy,
    }
}

/// ‖f‖₄⁴ / (‖f‖₂ ‖∇f‖₂³).
pub fn gn_ratio(f: &RadialField) -> Result<f64> {
    if f.is_zero() {
        return Err(Error::Domain("Gagliardo–Nirenberg ratio of the zero field".into()));
    }
    let p = integrate_power(f, 4)?;
    let m = integrate_power(f, 2)?;
    let k = gradient_sq(f);
    Ok(p / (m.sqrt() * k.powf(1.5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::sync::OnceLock;

    fn standard() -> &'static GroundState {
        static GS: OnceLock<GroundState> = OnceLock::new();
        GS.get_or_init(|| {
            let grid = make_grid(50.0, 4096).unwrap();
            find_ground_state(&grid, 1e-12).unwrap()
        })
    }

    #[test]
    fn small_amplitude_undershoots() {
        assert_eq!(shoot(0.5, 40.0, 1e-8).unwrap().verdict, ShotVerdict::DivergesPositive);
    }

    #[test]
    fn large_amplitude_overshoots() {
        assert_eq!(shoot(10.0, 40.0, 1e-8).unwrap().verdict, ShotVerdict::CrossesZero);
    }

    #[test]
    fn bisected_amplitude_decays() {
        let gs = standard();
        let shooter = Shooter::for_grid(gs.grid()).unwrap();
        let out = shooter.shoot(gs.b_star, 40.0, 1e-6).unwrap();
        assert_eq!(out.verdict, ShotVerdict::Decays);
        assert!(out.event_radius <= 40.0);
    }

    #[test]
    fn verdicts_switch_once() {
        let shooter = Shooter::new(DEFAULT_STEP, 4.0 * DEFAULT_STEP).unwrap();
        let bs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0];
        let v: Vec<_> = bs
            .iter()
            .map(|&b| shooter.shoot(b, BISECTION_HORIZON, 0.0).unwrap().verdict)
            .collect();
        let switches = v.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(switches, 1, "{v:?}");
        assert_eq!(v[0], ShotVerdict::DivergesPositive);
        assert_eq!(v[7], ShotVerdict::CrossesZero);
    }

    #[test]
    fn shoot_preconditions() {
        assert!(matches!(shoot(1.0, 10.0, 1e-8), Err(Error::Config(_))));
        assert!(matches!(shoot(-1.0, 30.0, 1e-8), Err(Error::Domain(_))));
        assert!(matches!(Shooter::new(0.0, 0.1), Err(Error::Solver(_))));
    }

    #[test]
    fn amplitude_in_expected_window() {
        let gs = standard();
        assert!(gs.b_star > 4.0 && gs.b_star < 5.0, "{}", gs.b_star);
        assert!(gs.bracket.1 - gs.bracket.0 <= 1e-12);
    }

    #[test]
    fn pohozaev_and_residuals() {
        let r = standard().validate().unwrap();
        assert!(r.kinetic_ratio <= 1e-6);
        assert!(r.potential_ratio <= 1e-6);
        assert!(r.elliptic <= 1e-6, "{r:?}");
    }

    #[test]
    fn energy_is_half_mass() {
        let gs = standard();
        assert!((gs.energy() / (0.5 * gs.mass) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn constants_match_closed_forms() {
        let gs = standard();
        let vc = constants(gs);
        let m = gs.mass;
        assert!(vc.pq_identity_residual() <= 1e-6);
        assert!(vc.me_identity_residual() <= 1e-6);
        assert!((vc.c0 * 3f64.sqrt() * m - 4.0 / 3.0).abs() <= 1e-6);
        assert!((vc.me_threshold / (0.5 * m * m) - 1.0).abs() <= 1e-6);
        assert!((vc.pq_threshold / (3f64.sqrt() * m) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn gn_ratio_at_optimizer_and_multiples() {
        let gs = standard();
        let c0 = constants(gs).c0;
        assert!((gn_ratio(&gs.profile).unwrap() / c0 - 1.0).abs() <= 1e-4);
        assert!((gn_ratio(&gs.multiple(2.0)).unwrap() / c0 - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn gn_ratio_gaussian_is_subsharp() {
        let gs = standard();
        let c0 = constants(gs).c0;
        let g = RadialField::from_real_fn(gs.grid(), |r| (-r * r).exp());
        assert!(gn_ratio(&g).unwrap() < c0);
    }

    #[test]
    fn gn_ratio_of_zero_is_domain_error() {
        let grid = make_grid(10.0, 63).unwrap();
        assert!(matches!(gn_ratio(&RadialField::zeros(&grid)), Err(Error::Domain(_))));
    }

    #[test]
    fn grid_robust_amplitude() {
        let coarse = make_grid(30.0, 2048).unwrap();
        let gs = find_ground_state(&coarse, 1e-12).unwrap();
        assert!((gs.b_star - standard().b_star).abs() <= 1e-8, "{} {}", gs.b_star, standard().b_star);
    }

    #[test]
    fn bisection_tolerance_convergence() {
        let grid = make_grid(50.0, 4096).unwrap();
        let loose = find_ground_state(&grid, 1e-10).unwrap();
        assert!((loose.b_star - standard().b_star).abs() <= 1e-9);
    }

    #[test]
    fn truncated_domain_fails_residuals() {
        let grid = make_grid(12.0, 1023).unwrap();
        let gs = find_ground_state(&grid, 1e-12).unwrap();
        assert!(gs.validate().is_err());
    }
}
