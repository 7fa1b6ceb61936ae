use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use radial_nls::evolve::{evolve_run, RunSettings};
use radial_nls::families::{bump_family, calibrate_radial_sobolev, gn_scan, ShellRanges};
use radial_nls::{make_grid, Execution, RadialField};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn evolve_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolve_100_steps");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for n in [4095usize, 32767] {
        let g = make_grid(0.1 * (n + 1) as f64, n).unwrap();
        let u0 = RadialField::from_real_fn(&g, |r| 0.5 * (-r * r).exp());
        for (name, exec) in MODES {
            let s = RunSettings::new(0.1, 1e-3, 0.1).with_balls(&[5.0]).with_execution(exec);
            group.bench_with_input(BenchmarkId::new(name, n), &u0, |b, u0| {
                b.iter(|| evolve_run(black_box(u0), &s).unwrap())
            });
        }
    }
    group.finish();
}

fn family_scan(c: &mut Criterion) {
    let g = make_grid(50.0, 4095).unwrap();
    let family = bump_family(&g, 32, 7, &ShellRanges::default());
    let mut group = c.benchmark_group("gn_scan_32");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| gn_scan(black_box(&family), exec).unwrap()));
    }
    group.finish();
}

fn sobolev_scan(c: &mut Criterion) {
    let g = make_grid(50.0, 2047).unwrap();
    let mut group = c.benchmark_group("sobolev_calibration");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| calibrate_radial_sobolev(black_box(&g), exec)));
    }
    group.finish();
}

criterion_group!(benches, evolve_steps, family_scan, sobolev_scan);
criterion_main!(benches);
