//! Quick invariant suite behind `radial-nls verify`.

use serde::Serialize;

use radial_nls::classify::{coercivity_ball, holder_bridge_excess};
use radial_nls::evolve::{evolve_run, RunSettings};
use radial_nls::families::{bump_family, calibrate_radial_sobolev, gn_scan, sobolev_ratio, ShellRanges};
use radial_nls::ground_state::INVARIANT_TOL;
use radial_nls::morawetz::{centered_differences, make_weight, morawetz_bound, morawetz_quantity, morawetz_rhs};
use radial_nls::{constants, find_ground_state, gn_ratio, make_grid, Complex64, RadialField};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

fn at_most(name: &'static str, value: f64, limit: f64) -> Check {
    Check {
        name,
        value,
        limit,
        pass: value <= limit,
    }
}

#[derive(Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passes: bool,
}

pub fn verify(config: &RunConfig) -> Result<VerifyReport, CliError> {
    config.validate()?;
    let exec = config.run.execution;
    let grid = config.base_grid()?;
    let mut checks = Vec::new();

    let gs = find_ground_state(&grid, config.ground_state.tol).map_err(|e| CliError::Invariant(e.to_string()))?;
    let res = gs.residuals();
    let vc = constants(&gs);
    checks.push(at_most("ground_state.kinetic_ratio", res.kinetic_ratio, INVARIANT_TOL));
    checks.push(at_most("ground_state.potential_ratio", res.potential_ratio, INVARIANT_TOL));
    checks.push(at_most("ground_state.elliptic", res.elliptic, INVARIANT_TOL));
    checks.push(at_most("ground_state.virial_null", res.virial_null, INVARIANT_TOL));
    checks.push(at_most("ground_state.monotone", if res.monotone { 0.0 } else { 1.0 }, 0.0));
    checks.push(at_most("constants.pq_identity", vc.pq_identity_residual(), INVARIANT_TOL));
    checks.push(at_most("constants.me_identity", vc.me_identity_residual(), INVARIANT_TOL));

    let family = bump_family(&grid, 100, config.seed, &ShellRanges::default());
    let worst = gn_scan(&family, exec)?.into_iter().fold(0.0, f64::max);
    checks.push(at_most("gn.family_max_over_c0", worst / vc.c0, 1.0 + 1e-6));
    let q_ratio = gn_ratio(&gs.profile)?;
    checks.push(at_most("gn.q_relative_gap", (q_ratio / vc.c0 - 1.0).abs(), 1e-4));

    let cal = calibrate_radial_sobolev(&grid, exec);
    let sob = bump_family(&grid, 50, config.seed.wrapping_add(1), &ShellRanges::default())
        .iter()
        .map(sobolev_ratio)
        .fold(0.0, f64::max);
    checks.push(at_most("sobolev.family_max_over_constant", sob / cal.constant, 1.05));

    let ibp = family
        .iter()
        .take(20)
        .map(|f| coercivity_ball(f, 10.0, &vc, 0.05).map(|r| r.ibp_residual))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(at_most("cutoff.ibp_residual", ibp, 1e-8));

    let radius = 40.0f64.min(0.8 * grid.length());
    let w = make_weight(&grid, radius)?;
    let rhs_q = morawetz_rhs(&gs.profile, &w)?.abs() / gs.mass;
    checks.push(at_most("morawetz.rhs_at_q_over_mass", rhs_q, 1e-5));
    let m_q = morawetz_quantity(&gs.profile.scale(Complex64::from_polar(1.0, 0.7)), &w)?.abs();
    checks.push(at_most("morawetz.quantity_at_phased_q", m_q, 1e-10));

    let g = make_grid(60.0, 2047)?;
    let f = RadialField::from_real_fn(&g, |r| 0.5 * (-r * r).exp());
    let s = RunSettings::new(2.0, 1e-3, 1e-2)
        .with_morawetz(10.0)
        .with_balls(&[5.0])
        .with_execution(exec);
    let traj = evolve_run(&f, &s)?;
    checks.push(at_most("evolve.mass_drift", traj.drift.mass, 1e-10));
    checks.push(at_most("evolve.energy_drift", traj.drift.energy, 1e-7));
    let mut half = s.clone();
    half.dt = 5e-4;
    half.morawetz_radius = None;
    let finer = evolve_run(&f, &half)?;
    let ratio = traj.drift.energy / finer.drift.energy;
    checks.push(Check {
        name: "evolve.energy_drift_halving_ratio",
        value: ratio,
        limit: 3.0,
        pass: ratio >= 3.0,
    });
    let t = traj.times();
    let m: Vec<f64> = traj.samples.iter().map(|o| o.morawetz.unwrap_or(f64::NAN)).collect();
    let fd = centered_differences(&t, &m)
        .into_iter()
        .zip(&traj.samples)
        .filter_map(|(d, o)| {
            let rhs = o.morawetz_rhs?.total();
            d.map(|d| (d - rhs).abs() / (1.0 + rhs.abs()))
        })
        .fold(0.0, f64::max);
    checks.push(at_most("morawetz.finite_difference", fd, 1e-3));
    if let Some((sup, bound)) = morawetz_bound(&traj) {
        checks.push(at_most("morawetz.sup_over_bound", sup / bound, 1.0));
    }
    checks.push(at_most("classify.holder_excess", holder_bridge_excess(&traj), 1e-10));

    let passes = checks.iter().all(|c| c.pass);
    Ok(VerifyReport {
        seed: config.seed,
        checks,
        passes,
    })
}
