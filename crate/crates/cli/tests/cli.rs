use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_radial-nls"))
}

fn run(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(dir);
    if let Some(text) = config {
        let path = dir.join("config.toml");
        fs::create_dir_all(dir).unwrap();
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn only_run_dir(out: &Path) -> PathBuf {
    let mut dirs: Vec<_> = fs::read_dir(out.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs.pop().unwrap()
}

const SMALL_GAUSSIAN: &str = "[grid]\nlength = 40.0\nn = 511\n\
    [initial]\nkind = \"gaussian\"\namplitude = 0.5\nwidth = 1.0\n\
    [run]\nhorizon = 1.0\ndt = 0.01\nsample_every = 0.05\nsnapshot_every = 0.25\n\
    [diagnostics]\nball_radii = [2.0, 5.0]\nmorawetz_radius = 10.0\ncoercivity_radius = 10.0\n";

#[test]
fn ground_state_default_and_truncated() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["ground-state"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["pq_identity_residual"].as_f64().unwrap() <= 1e-6);
    assert!(report["passes"].as_bool().unwrap());
    assert_eq!(json(t.path().join("ground_state.json")), report);

    let short = TempDir::new().unwrap();
    let o = run(short.path(), &["ground-state"], Some("[grid]\nlength = 12.0\nn = 1024\n"));
    assert_eq!(code(&o), 2);
}

#[test]
fn ground_state_tolerance_convergence() {
    let t = TempDir::new().unwrap();
    let b = |tol: &str| {
        let o = run(&t.path().join(tol), &["ground-state"], Some(&format!("[ground_state]\ntol = {tol}\n")));
        assert_eq!(code(&o), 0);
        serde_json::from_slice::<Value>(&o.stdout).unwrap()["b_star"].as_f64().unwrap()
    };
    assert!((b("1e-12") - b("1e-10")).abs() <= 1e-9);
}

#[test]
fn config_errors_exit_64() {
    let t = TempDir::new().unwrap();
    for (i, text) in [
        "[run]\nhorizn = 1.0\n",
        "[run]\ndt = 0.5\nsample_every = 0.1\n",
        "[diagnostics]\nball_radii = [80.0]\n",
        "[initial]\nkind = \"gaussian\"\namplitude = 1.0\nwidth = -1.0\n",
        "[initial]\nkind = \"triangle\"\n",
    ]
    .iter()
    .enumerate()
    {
        let o = run(&t.path().join(i.to_string()), &["evolve"], Some(text));
        assert_eq!(code(&o), 64, "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = bin().args(["evolve", "--bogus"]).output().unwrap();
    assert_eq!(code(&o), 64);
}

#[test]
fn evolve_writes_run_directory() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["evolve"], Some(SMALL_GAUSSIAN));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = only_run_dir(t.path());
    let csv = fs::read_to_string(dir.join("series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,mass,energy,kinetic,potential,H1,PQ_product,M_t,dMdt_formula,dMdt_fd,mass_ball_2,l4_ball_2,mass_ball_5,l4_ball_5,l5_accum"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r.len() == 15));
    assert_eq!(rows[0][9], "");
    assert_ne!(rows[1][9], "");

    let summary = json(dir.join("summary.json"));
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["run_id"].as_str().unwrap(), dir.file_name().unwrap().to_str().unwrap());
    assert!(summary["drift"]["mass"].as_f64().unwrap() <= 1e-10);
    assert!(summary["threshold"]["below_me"].as_bool().unwrap());
    assert!(summary["coercivity"]["all_pass"].as_bool().unwrap());
    assert!(summary["morawetz_sup"].as_f64().unwrap() <= summary["morawetz_bound"].as_f64().unwrap());
    assert!(json(dir.join("config.json")).is_object());

    let mut snaps: Vec<_> = fs::read_dir(dir.join("snapshots")).unwrap().map(|e| e.unwrap().path()).collect();
    snaps.sort();
    assert_eq!(snaps.len(), 5);
    let bytes = fs::read(&snaps[4]).unwrap();
    assert_eq!(bytes.len(), 32 + 8 * 511);
    assert_eq!(&bytes[..8], b"RNLSNAP1");
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 511);
    assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 40.0);
    assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1.0);

    // restart from the last snapshot
    let restart = TempDir::new().unwrap();
    let text = SMALL_GAUSSIAN.replace(
        "kind = \"gaussian\"\namplitude = 0.5\nwidth = 1.0\n",
        &format!("kind = \"file\"\npath = {:?}\n", snaps[4].to_str().unwrap()),
    );
    let o = run(restart.path(), &["evolve"], Some(&text));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn evolve_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&run(a.path(), &["evolve"], Some(SMALL_GAUSSIAN))), 0);
    assert_eq!(code(&run(b.path(), &["evolve"], Some(SMALL_GAUSSIAN))), 0);
    let (da, db) = (only_run_dir(a.path()), only_run_dir(b.path()));
    assert_eq!(da.file_name(), db.file_name());
    assert_eq!(fs::read(da.join("series.csv")).unwrap(), fs::read(db.join("series.csv")).unwrap());
}

#[test]
fn zero_data_gives_zero_series() {
    let t = TempDir::new().unwrap();
    let text = SMALL_GAUSSIAN.replace("amplitude = 0.5", "amplitude = 0.0");
    assert_eq!(code(&run(t.path(), &["evolve"], Some(&text))), 0);
    let csv = fs::read_to_string(only_run_dir(t.path()).join("series.csv")).unwrap();
    for line in csv.lines().skip(1) {
        for v in line.split(',').skip(1).filter(|v| !v.is_empty()) {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{line}");
        }
    }
}

const SOLITON: &str = "[grid]\nlength = 50.0\nn = 4095\n\
    [initial]\nkind = \"soliton_multiple\"\nlambda = 1.0\n\
    [run]\nhorizon = 2.0\nsample_every = 0.05\nsnapshot_every = 0.25\n";

#[test]
fn soliton_and_supercritical_runs() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(t.path(), &["evolve"], Some(SOLITON))), 0);
    let s = json(only_run_dir(t.path()).join("summary.json"));
    assert_eq!(s["verdict"]["kind"], "Undetermined");
    assert!(s["drift"]["mass"].as_f64().unwrap() <= 1e-10);

    let hot = TempDir::new().unwrap();
    let text = SOLITON.replace("lambda = 1.0", "lambda = 1.5");
    let o = run(hot.path(), &["evolve"], Some(&text));
    assert_eq!(code(&o), 0);
    let s = json(only_run_dir(hot.path()).join("summary.json"));
    assert_eq!(s["verdict"]["kind"], "Blowup");
    let trip = s["termination"]["t"].as_f64().unwrap();
    assert!(trip > 0.0 && trip < 1.0, "{trip}");
}

#[test]
fn sweep_manifest() {
    let t = TempDir::new().unwrap();
    let text = format!("{}[sweep]\nparameter = \"lambda\"\nvalues = [1.5, 0.5, 0.9]\n", SOLITON.replace("horizon = 2.0", "horizon = 1.0"));
    let o = run(t.path(), &["sweep", "--workers", "2"], Some(&text));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(t.path().join("manifest.csv")).unwrap();
    let rows: Vec<Vec<&str>> = manifest.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r[2]).collect::<Vec<_>>(), ["1.5", "0.5", "0.9"]);
    assert!(rows.iter().all(|r| r[3] == "completed"));
    assert_eq!(rows[0][5], "Blowup");
    for r in &rows[1..] {
        assert!(r[5] == "Scatter" || r[5] == "Undetermined");
        assert_eq!(r[7], "true");
    }
    assert_eq!(fs::read_dir(t.path().join("runs")).unwrap().count(), 3);

    let bad = TempDir::new().unwrap();
    let text = format!("{SOLITON}[sweep]\nparameter = \"width\"\nvalues = [1.0, 2.0]\n");
    assert_eq!(code(&run(bad.path(), &["sweep"], Some(&text))), 0);
    let manifest = fs::read_to_string(bad.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.contains(",failed,")).count(), 2);

    let empty = TempDir::new().unwrap();
    let text = format!("{SOLITON}[sweep]\nparameter = \"lambda\"\nvalues = []\n");
    assert_eq!(code(&run(empty.path(), &["sweep"], Some(&text))), 0);
    assert_eq!(fs::read_to_string(empty.path().join("manifest.csv")).unwrap().lines().count(), 1);
}

#[test]
fn evacuation_reports() {
    let t = TempDir::new().unwrap();
    let text = "[grid]\nlength = 60.0\nn = 1023\n[run]\nsample_every = 0.05\n[evacuation]\nhorizons = [2.0]\n";
    let o = run(t.path(), &["evacuation"], Some(text));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(t.path().join("evacuation.json"));
    assert_eq!(s["slope_status"], "unavailable");
    assert!(s["slope"].is_null());
    assert_eq!(s["entries"].as_array().unwrap().len(), 1);
    let csv = fs::read_to_string(t.path().join("evacuation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let hot = TempDir::new().unwrap();
    let text = "[grid]\nlength = 50.0\nn = 4095\n[initial]\nkind = \"soliton_multiple\"\nlambda = 1.5\n\
                [run]\nsample_every = 0.05\n[evacuation]\nhorizons = [1.0]\n";
    assert_eq!(code(&run(hot.path(), &["evacuation"], Some(text))), 0);
    let s = json(hot.path().join("evacuation.json"));
    assert_eq!(s["verdict"], "Blowup");
    assert_eq!(s["aborted"]["kind"], "blowup");
}

#[test]
fn verify_suite_passes() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["verify", "--seed", "5"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(t.path().join("verify.json"));
    assert_eq!(r["seed"], 5);
    assert!(r["passes"].as_bool().unwrap());
}
