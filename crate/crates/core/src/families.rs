//! Seeded families of smooth radial test fields.
//!
//! Each member is a sum of one to three even shells
//!
//! ```text
//! a·e^{iθ}·(e^{-(r-c)²/w²} + e^{-(r+c)²/w²})·e^{iβr²}
//! ```
//!
//! which are smooth at the origin as functions on R³.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Execution;
use crate::grid::{radial_sup_weighted, RadialField, RadialGrid};
use crate::ground_state::gn_ratio;
use crate::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub amplitude: f64,
    pub phase: f64,
    pub center: f64,
    pub width: f64,
    pub chirp: f64,
}

impl Shell {
    pub fn plain(center: f64, width: f64) -> Self {
        Self {
            amplitude: 1.0,
            phase: 0.0,
            center,
            width,
            chirp: 0.0,
        }
    }

    pub fn eval(&self, r: f64) -> Complex64 {
        let w2 = self.width * self.width;
        let g = (-(r - self.center).powi(2) / w2).exp() + (-(r + self.center).powi(2) / w2).exp();
        Complex64::from_polar(self.amplitude * g, self.phase + self.chirp * r * r)
    }
}

/// Ranges the random shells are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellRanges {
    pub amplitude: (f64, f64),
    pub center: (f64, f64),
    pub width: (f64, f64),
    pub chirp: (f64, f64),
    pub max_shells: usize,
}

impl Default for ShellRanges {
    fn default() -> Self {
        Self {
            amplitude: (0.2, 2.0),
            center: (0.0, 6.0),
            width: (0.4, 2.5),
            chirp: (-0.5, 0.5),
            max_shells: 3,
        }
    }
}

pub fn random_shells(rng: &mut impl Rng, ranges: &ShellRanges) -> Vec<Shell> {
    let count = rng.random_range(1..=ranges.max_shells.max(1));
    (0..count)
        .map(|_| Shell {
            amplitude: rng.random_range(ranges.amplitude.0..=ranges.amplitude.1),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            center: rng.random_range(ranges.center.0..=ranges.center.1),
            width: rng.random_range(ranges.width.0..=ranges.width.1),
            chirp: rng.random_range(ranges.chirp.0..=ranges.chirp.1),
        })
        .collect()
}

pub fn shells_field(grid: &RadialGrid, shells: &[Shell]) -> RadialField {
    RadialField::from_fn(grid, |r| shells.iter().map(|s| s.eval(r)).sum())
}

/// `count` members drawn from a ChaCha8 stream seeded with `seed`.
pub fn bump_family(grid: &RadialGrid, count: usize, seed: u64, ranges: &ShellRanges) -> Vec<RadialField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| shells_field(grid, &random_shells(&mut rng, ranges)))
        .collect()
}

/// Gagliardo–Nirenberg ratio of every member.
pub fn gn_scan(family: &[RadialField], exec: Execution) -> Result<Vec<f64>> {
    exec.map(family, gn_ratio).into_iter().collect()
}

/// max_j r_j|f(r_j)| / ‖f‖_{H¹}.
pub fn sobolev_ratio(f: &RadialField) -> f64 {
    let h1 = f.h1_norm();
    if h1 == 0.0 {
        0.0
    } else {
        radial_sup_weighted(f) / h1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevCalibration {
    /// Largest ratio found by the scan.
    pub constant: f64,
    pub center: f64,
    pub width: f64,
    pub evaluated: usize,
}

/// Dense scan over single plain shells (center 0..=12 step 0.25, width
/// 0.2..=4 geometric in 40 steps) for the largest weighted-sup ratio.
pub fn calibrate_radial_sobolev(grid: &RadialGrid, exec: Execution) -> SobolevCalibration {
    let mut params = Vec::new();
    for i in 0..=48 {
        let center = 0.25 * i as f64;
        for j in 0..40 {
            let width = 0.2 * 20f64.powf(j as f64 / 39.0);
            params.push((center, width));
        }
    }
    let ratios = exec.map(&params, |&(c, w)| sobolev_ratio(&shells_field(grid, &[Shell::plain(c, w)])));
    let (best, &constant) = ratios
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("scan is non-empty");
    SobolevCalibration {
        constant,
        center: params[best].0,
        width: params[best].1,
        evaluated: params.len(),
    }
}
