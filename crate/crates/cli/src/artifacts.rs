//! On-disk run artifacts: run ids, the series CSV and binary snapshots.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use radial_nls::evolve::{Snapshot, Trajectory};
use radial_nls::morawetz::centered_differences;
use radial_nls::{Complex64, RadialField, RadialGrid};

use crate::config::RunConfig;
use crate::CliError;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"RNLSNAP1";
pub const SNAPSHOT_HEADER: usize = 32;
pub const SUMMARY_SCHEMA: u32 = 1;

/// First 16 hex digits of SHA-256 over the tool version and the config.
pub fn run_id(config: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(h.finalize())[..16].to_string()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn series_header(ball_radii: &[f64]) -> String {
    let mut cols = vec![
        "t".to_string(),
        "mass".into(),
        "energy".into(),
        "kinetic".into(),
        "potential".into(),
        "H1".into(),
        "PQ_product".into(),
        "M_t".into(),
        "dMdt_formula".into(),
        "dMdt_fd".into(),
    ];
    for r in ball_radii {
        cols.push(format!("mass_ball_{r}"));
        cols.push(format!("l4_ball_{r}"));
    }
    cols.push("l5_accum".into());
    cols.join(",")
}

/// Series CSV with a fixed column order. Floats use the shortest
/// round-trip representation, so identical runs give identical bytes.
pub fn series_csv(traj: &Trajectory) -> String {
    let mut out = series_header(&traj.settings.ball_radii);
    out.push('\n');
    let times = traj.times();
    let fd: Vec<Option<f64>> = if traj.settings.morawetz_radius.is_some() {
        let m: Vec<f64> = traj.samples.iter().map(|s| s.morawetz.unwrap_or(f64::NAN)).collect();
        centered_differences(&times, &m)
    } else {
        vec![None; times.len()]
    };
    for (s, d) in traj.samples.iter().zip(fd) {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.t,
            s.mass,
            s.energy,
            s.kinetic,
            s.potential,
            s.h1,
            s.pq_product,
            opt(s.morawetz),
            opt(s.morawetz_rhs.map(|r| r.total())),
            opt(d)
        )
        .unwrap();
        for (m, l4) in s.ball_mass.iter().zip(&s.ball_l4) {
            write!(out, ",{m},{l4}").unwrap();
        }
        writeln!(out, ",{}", s.l5_accum).unwrap();
    }
    out
}

pub fn encode_snapshot(snap: &Snapshot) -> Vec<u8> {
    let grid = snap.field.grid();
    let mut out = Vec::with_capacity(SNAPSHOT_HEADER + 8 * grid.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(grid.len() as u64).to_le_bytes());
    out.extend_from_slice(&grid.length().to_le_bytes());
    out.extend_from_slice(&snap.t.to_le_bytes());
    for z in snap.field.values() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

fn read_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().unwrap())
}

/// Decodes a snapshot; the header must match `grid`.
pub fn decode_snapshot(bytes: &[u8], grid: &RadialGrid) -> Result<Snapshot, CliError> {
    if bytes.len() < SNAPSHOT_HEADER || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(CliError::Config("not a snapshot file".into()));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let length = read_f64(&bytes[16..24]);
    let t = read_f64(&bytes[24..32]);
    if n != grid.len() || (length - grid.length()).abs() > 1e-12 * grid.length() {
        return Err(CliError::Config(format!(
            "snapshot grid (L={length}, n={n}) does not match configured grid (L={}, n={})",
            grid.length(),
            grid.len()
        )));
    }
    let body = &bytes[SNAPSHOT_HEADER..];
    if body.len() != 8 * n {
        return Err(CliError::Config("truncated snapshot".into()));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok(Snapshot {
        t,
        field: RadialField::new(grid, values)?,
    })
}

pub fn read_snapshot(path: &Path, grid: &RadialGrid) -> Result<Snapshot, CliError> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Config(format!("cannot read snapshot {}: {e}", path.display())))?;
    decode_snapshot(&bytes, grid)
}

pub fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (i, s) in snapshots.iter().enumerate() {
        let mut f = fs::File::create(dir.join(format!("snap_{i:05}.bin")))?;
        f.write_all(&encode_snapshot(s))?;
    }
    Ok(())
}
