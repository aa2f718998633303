//! Acceptance run: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use skypattern_core::dataio::read_pattern;
use skypattern_core::geometry::{
    enu_to_geodetic, link_angles, wrap_deg, Attitude, EnuVector, GeodeticPosition,
};
use skypattern_core::link_budget::fspl_db;
use skypattern_core::pattern::{complete_grid, PatternGrid};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let work = tempfile::tempdir().expect("scratch dir");
    let mut failed = 0;
    let mut report = |id: u32, name: &str, limit_s: Option<f64>, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let mut o = f();
        let secs = t0.elapsed().as_secs_f64();
        if let Some(limit) = limit_s {
            if secs >= limit {
                o.pass = false;
                o.detail
                    .push_str(&format!("; took {secs:.2} s, limit {limit} s"));
            }
        }
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id} ({name}) [{secs:.2} s]: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    };

    report(1, "fspl", Some(0.1), &mut criterion_fspl);
    report(2, "angle identity", Some(1.0), &mut criterion_angles);
    report(3, "completion oracle", Some(5.0), &mut criterion_completion);

    let run1 = work.path().join("run1");
    let mut s4 = None;
    let mut s5 = None;
    let mut s6 = None;
    report(4, "noise-free round trip", Some(10.0), &mut || {
        let (o, files) = criterion_round_trip(&run1);
        s4 = Some(files);
        o
    });
    report(5, "noisy estimator", Some(30.0), &mut || {
        let (o, files) = criterion_noisy(&run1);
        s5 = Some(files);
        o
    });
    report(6, "directionality surrogate", None, &mut || {
        let (o, files) = criterion_directionality(&run1);
        s6 = Some(files);
        o
    });
    let eval_dirs: Vec<PathBuf> = [s4, s5, s6].into_iter().flatten().collect();
    report(7, "arithmetic identity", None, &mut || {
        criterion_identity(&run1, &eval_dirs)
    });
    report(8, "determinism", None, &mut || {
        criterion_determinism(&run1, &work.path().join("run2"))
    });

    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------

fn criterion_fspl() -> Outcome {
    // 20 log10(4 pi d f / c), evaluated in one product so the constant term
    // is never split out
    let c = 299_792_458.0f64;
    let oracle = |d: f64, freq: f64| 20.0 * (4.0 * PI * d * freq / c).log10();
    let got = fspl_db(1000.0, 3.32e9).unwrap();
    let step = fspl_db(2000.0, 3.32e9).unwrap() - got;
    let exact_step = 20.0 * 2f64.log10();
    let mut worst_step = 0.0f64;
    for d in [1.0, 37.5, 1000.0, 12_345.0] {
        let s = fspl_db(2.0 * d, 3.32e9).unwrap() - fspl_db(d, 3.32e9).unwrap();
        worst_step = worst_step.max((s - exact_step).abs());
    }
    let pass = (got - 102.870).abs() <= 1e-3
        && (got - oracle(1000.0, 3.32e9)).abs() < 1e-9
        && (step - 6.0206).abs() < 1e-4
        && (step - exact_step).abs() <= 1e-9
        && worst_step <= 1e-9;
    outcome(
        pass,
        format!(
            "fspl(1000 m, 3.32 GHz) = {got:.6} dB (oracle {:.6}); doubling adds {step:.10} dB",
            oracle(1000.0, 3.32e9)
        ),
    )
}

fn criterion_angles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bad = 0;
    for _ in 0..1000 {
        let station = GeodeticPosition {
            latitude: rng.random_range(-70.0..70.0),
            longitude: rng.random_range(-180.0..180.0),
            altitude: rng.random_range(0.0..500.0),
        };
        let v = EnuVector::new(
            rng.random_range(-5000.0..5000.0),
            rng.random_range(-5000.0..5000.0),
            rng.random_range(1.0..1000.0),
        );
        let uav = enu_to_geodetic(&v, &station);
        let a = link_angles(&uav, &Attitude::level(), &station, 5.0).unwrap();
        if a.theta_u != a.theta_g || a.phi_u != wrap_deg(a.phi_g + 180.0) {
            bad += 1;
        }
    }
    outcome(
        bad == 0,
        format!("{bad} of 1000 random placements violate the identities"),
    )
}

fn neighbors(i: usize, j: usize, n_az: usize, n_el: usize) -> [(usize, usize); 4] {
    [
        ((i + n_az - 1) % n_az, j),
        ((i + 1) % n_az, j),
        (i, if j + 1 < n_el { j + 1 } else { j }),
        (i, if j > 0 { j - 1 } else { j }),
    ]
}

fn dense_oracle(grid: &PatternGrid) -> Vec<f64> {
    let (n_az, n_el) = (grid.n_az(), grid.n_el());
    let unknown: Vec<(usize, usize)> = (0..n_az)
        .flat_map(|i| (0..n_el).map(move |j| (i, j)))
        .filter(|&(i, j)| grid.gain(i, j).is_none())
        .collect();
    let n = unknown.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (r, &(i, j)) in unknown.iter().enumerate() {
        a[(r, r)] += 4.0;
        for nb in neighbors(i, j, n_az, n_el) {
            match grid.gain(nb.0, nb.1) {
                Some(g) => b[r] += g,
                None => a[(r, unknown.iter().position(|&u| u == nb).unwrap())] -= 1.0,
            }
        }
    }
    let x = a.lu().solve(&b).unwrap();
    let mut out: Vec<f64> = grid.gains().iter().map(|g| g.unwrap_or(f64::NAN)).collect();
    for (r, &(i, j)) in unknown.iter().enumerate() {
        out[grid.index(i, j)] = x[r];
    }
    out
}

fn criterion_completion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut worst_default = 0.0f64;
    let mut violations = 0;
    let mut unconverged = 0;
    for _ in 0..20 {
        let mut g = PatternGrid::empty(45.0, 45.0).unwrap();
        let (i0, w) = (rng.random_range(0..8), rng.random_range(1..6));
        let (j0, h) = (rng.random_range(0..4), rng.random_range(1..4));
        for i in 0..8usize {
            for j in 0..4usize {
                let in_block = (0..w).any(|d| (i0 + d) % 8 == i) && j >= j0 && j < j0 + h;
                if !in_block && rng.random_bool(0.85) {
                    g.set_cell(i, j, Some(rng.random_range(-30.0..10.0)), 1, None);
                }
            }
        }
        if g.missing_count() == g.len() {
            g.set_cell(0, 0, Some(0.0), 1, None);
        }
        let c = complete_grid(&g, 1e-9, 50_000).unwrap();
        if !c.converged {
            unconverged += 1;
        }
        let oracle = dense_oracle(&g);
        let loose = complete_grid(&g, 1e-6, 50_000).unwrap();
        for (k, v) in loose.grid.gains().iter().enumerate() {
            worst_default = worst_default.max((v.unwrap() - oracle[k]).abs());
        }
        let known: Vec<f64> = g.gains().iter().flatten().copied().collect();
        let lo = known.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = known.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (k, v) in c.grid.gains().iter().enumerate() {
            let v = v.unwrap();
            worst = worst.max((v - oracle[k]).abs());
            if v < lo - 1e-12 || v > hi + 1e-12 {
                violations += 1;
            }
        }
    }
    outcome(
        worst <= 1e-6 && violations == 0 && unconverged == 0,
        format!(
            "20 grids at update tol 1e-9: worst |GS - dense| = {worst:.2e} dB \
             (default tol 1e-6 gives {worst_default:.2e} dB), {violations} maximum-principle violations, \
             {unconverged} unconverged"
        ),
    )
}

// ---------------------------------------------------------------------------
// Pipeline scenarios. Every command runs with `root` as its working
// directory and relative paths, so a rerun elsewhere writes identical
// manifests.

fn sim(root: &Path, traj: &str, station: &str, truth: &str, out: &str, noise: f64, seed: u64) {
    let noise = noise.to_string();
    let seed = seed.to_string();
    run_ok(
        root,
        &[
            "simulate",
            "--trajectory",
            traj,
            "--station",
            station,
            "--truth",
            truth,
            "--noise-sigma-db",
            &noise,
            "--seed",
            &seed,
            "--out-dir",
            out,
        ],
    );
}

/// Bin index of an angle on a `w_az` x `w_el` grid.
fn bin(phi: f64, theta: f64, w_az: f64, w_el: f64) -> (usize, usize) {
    let n_el = (180.0 / w_el).round() as usize;
    let i = (phi / w_az).floor() as usize;
    let j = (((theta + 90.0) / w_el).floor() as usize).min(n_el - 1);
    (i, j)
}

/// Visited bins (count > 0) of a variance file.
fn visited(path: &Path, w_az: f64, w_el: f64) -> BTreeMap<(usize, usize), u64> {
    csv_rows(path)
        .iter()
        .filter(|r| f(&r[2]) > 0.0)
        .map(|r| (bin(f(&r[0]), f(&r[1]), w_az, w_el), f(&r[2]) as u64))
        .collect()
}

fn criterion_round_trip(root: &Path) -> (Outcome, PathBuf) {
    write_json(&root.join("station.json"), &station_json(json!({})));
    write_json(&root.join("c4/truth.json"), &parametric(-3.0, 6.0, 2.0));
    write_json(
        &root.join("c4/lawn.json"),
        &lawnmower(400.0, 10.0, 60.0, 2.0),
    );
    write_json(&root.join("c4/orbit.json"), &orbit(150.0, 60.0, 1.0, 2.0));
    sim(
        root,
        "c4/lawn.json",
        "station.json",
        "c4/truth.json",
        "c4/train",
        0.0,
        4,
    );
    sim(
        root,
        "c4/orbit.json",
        "station.json",
        "c4/truth.json",
        "c4/test",
        0.0,
        40,
    );
    run_ok(
        root,
        &[
            "learn",
            "--log",
            "c4/train/flight_log.csv",
            "--station",
            "station.json",
            "--az-bin-deg",
            "5",
            "--el-bin-deg",
            "2",
            "--out-dir",
            "c4/learned",
        ],
    );
    run_ok(
        root,
        &[
            "evaluate",
            "--log",
            "c4/test/flight_log.csv",
            "--station",
            "station.json",
            "--grid",
            "c4/learned/pattern_completed.csv",
            "--out-dir",
            "c4/eval",
        ],
    );
    let trained = visited(&root.join("c4/learned/variance.csv"), 5.0, 2.0);
    let rows = csv_rows(&root.join("c4/eval/residuals_learned.csv"));
    let mut checked = 0;
    let mut worst = 0.0f64;
    for r in &rows {
        if trained.contains_key(&bin(f(&r[2]), f(&r[3]), 5.0, 2.0)) {
            checked += 1;
            worst = worst.max(f(&r[6]));
        }
    }
    let o = outcome(
        checked > 0 && worst <= 0.1,
        format!("{checked} of {} orbit samples in bins visited by both flights, max |error| = {worst:.4} dB", rows.len()),
    );
    (o, root.join("c4/eval"))
}

fn criterion_noisy(root: &Path) -> (Outcome, PathBuf) {
    let (g0, g1, e) = (-3.0, 6.0, 2.0);
    write_json(&root.join("c5/truth.json"), &parametric(g0, g1, e));
    let altitude = 60.0;
    let mut logs = Vec::new();
    // orbit elevations sit on 2-degree bin centers
    for (k, theta) in [31.0f64, 45.0, 61.0].into_iter().enumerate() {
        let radius = altitude / theta.to_radians().tan();
        let step = 5.0 / 10.0;
        let laps = (140.0 * 72.0 * step / (2.0 * PI * radius)).ceil();
        let name = format!("c5/orbit{k}.json");
        write_json(&root.join(&name), &orbit(radius, altitude, laps, 10.0));
        let out = format!("c5/train{k}");
        sim(
            root,
            &name,
            "station.json",
            "c5/truth.json",
            &out,
            2.0,
            500 + k as u64,
        );
        logs.push(format!("{out}/flight_log.csv"));
    }
    let mut args = vec!["learn"];
    for l in &logs {
        args.extend(["--log", l.as_str()]);
    }
    args.extend([
        "--station",
        "station.json",
        "--k-min",
        "100",
        "--out-dir",
        "c5/learned",
    ]);
    run_ok(root, &args);
    run_ok(
        root,
        &[
            "evaluate",
            "--log",
            &logs[1],
            "--station",
            "station.json",
            "--grid",
            "c5/learned/pattern_completed.csv",
            "--out-dir",
            "c5/eval",
        ],
    );

    let truth = |theta: f64| g0 + g1 * theta.to_radians().sin().powf(e);
    let mut populated = 0;
    let mut within = 0;
    let mut worst = 0.0f64;
    for r in csv_rows(&root.join("c5/learned/pattern_observed.csv")) {
        if r[2].is_empty() {
            continue;
        }
        populated += 1;
        let err = (f(&r[2]) - truth(f(&r[1]))).abs();
        worst = worst.max(err);
        if err <= 0.6 {
            within += 1;
        }
    }
    let frac = within as f64 / populated.max(1) as f64;
    let o = outcome(
        populated == 3 * 72 && frac >= 0.99,
        format!("{within} of {populated} bins with >= 100 samples within 0.6 dB ({:.2}%), worst {worst:.3} dB", 100.0 * frac),
    );
    (o, root.join("c5/eval"))
}

/// Signed azimuth offset in (-180, 180].
fn signed(phi: f64) -> f64 {
    let w = wrap_deg(phi);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

fn uav_pattern(phi: f64, theta: f64) -> f64 {
    1.5 * (2.0 * phi.to_radians()).cos() - 4.0 * theta.to_radians().sin().powi(2)
}

fn gs_pattern(phi: f64, theta: f64) -> f64 {
    let d = signed(phi) / 65.0;
    (8.0 - 12.0 * d * d).max(-12.0) - 6.0 * theta.to_radians().sin().powi(2)
}

/// Raised-cosine step from 0 at `a` to 1 at `b`.
fn ramp(x: f64, a: f64, b: f64) -> f64 {
    if x <= a {
        0.0
    } else if x >= b {
        1.0
    } else {
        0.5 - 0.5 * (PI * (x - a) / (b - a)).cos()
    }
}

/// +15 dB over mid elevations, -10 dB near the horizon.
fn lobe(theta: f64) -> f64 {
    15.0 * ramp(theta, 15.0, 25.0) * (1.0 - ramp(theta, 75.0, 85.0))
        - 10.0 * (1.0 - ramp(theta, 5.0, 12.0))
}

fn grid_file(path: &Path, label: &str, gain: impl Fn(f64, f64) -> f64) {
    let mut s = format!("# frequency_hz={FREQUENCY_HZ}\n# az_bin_deg=5\n# el_bin_deg=2\n# label={label}\naz_deg,el_deg,gain_db,count,variance_db2\n");
    for i in 0..72 {
        for j in 0..90 {
            let (az, el) = (2.5 + 5.0 * i as f64, -89.0 + 2.0 * j as f64);
            let _ = writeln!(s, "{az},{el},{},1,", gain(az, el));
        }
    }
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, s).unwrap();
}

fn criterion_directionality(root: &Path) -> (Outcome, PathBuf) {
    let boresight = 30.0;
    grid_file(
        &root.join("c6/uav_anechoic.csv"),
        "uav anechoic",
        uav_pattern,
    );
    grid_file(&root.join("c6/gs_anechoic.csv"), "gs anechoic", gs_pattern);
    // level flight with zero yaw: the station sees the UAV at phi_u - 180
    grid_file(&root.join("c6/truth_grid.csv"), "truth", |phi_u, theta| {
        uav_pattern(phi_u, theta) + gs_pattern(phi_u - 180.0 - boresight, theta) + lobe(theta)
    });
    write_json(
        &root.join("c6/station.json"),
        &station_json(json!({
            "boresight_azimuth_deg": boresight,
            "anechoic_uav_pattern": "uav_anechoic.csv",
            "anechoic_gs_pattern": "gs_anechoic.csv"
        })),
    );
    write_json(
        &root.join("c6/truth.json"),
        &json!({"kind": "grid", "path": "truth_grid.csv"}),
    );
    write_json(
        &root.join("c6/train.json"),
        &lawnmower(800.0, 20.0, 100.0, 2.0),
    );
    write_json(
        &root.join("c6/heldout.json"),
        &lawnmower(400.0, 20.0, 120.0, 1.0),
    );
    sim(
        root,
        "c6/train.json",
        "c6/station.json",
        "c6/truth.json",
        "c6/a4",
        2.0,
        601,
    );
    sim(
        root,
        "c6/train.json",
        "c6/station.json",
        "c6/truth.json",
        "c6/a5",
        2.0,
        602,
    );
    sim(
        root,
        "c6/heldout.json",
        "c6/station.json",
        "c6/truth.json",
        "c6/a1",
        2.0,
        603,
    );
    run_ok(
        root,
        &[
            "learn",
            "--log",
            "c6/a4/flight_log.csv",
            "--log",
            "c6/a5/flight_log.csv",
            "--station",
            "c6/station.json",
            "--out-dir",
            "c6/learned",
        ],
    );
    let out = run_ok(
        root,
        &[
            "evaluate",
            "--log",
            "c6/a1/flight_log.csv",
            "--station",
            "c6/station.json",
            "--grid",
            "c6/learned/pattern_completed.csv",
            "--test-label",
            "A1",
            "--train-label",
            "A4+A5",
            "--out-dir",
            "c6/eval",
        ],
    );
    let cmp: serde_json::Value =
        serde_json::from_slice(&fs::read(root.join("c6/eval/compare.json")).unwrap()).unwrap();
    let learned = cmp["mae_a_db"].as_f64().unwrap();
    let anechoic = cmp["mae_b_db"].as_f64().unwrap();
    let table = String::from_utf8_lossy(&out.stdout);
    let row = table.lines().nth(1).unwrap_or("").to_string();
    let o = outcome(
        anechoic - learned >= 8.0 && cmp["mae_winner"] == "a",
        format!("held-out MAE learned {learned:.2} dB vs anechoic {anechoic:.2} dB, improvement {:.2} dB; table row `{row}`", anechoic - learned),
    );
    (o, root.join("c6/eval"))
}

// ---------------------------------------------------------------------------

fn criterion_identity(root: &Path, eval_dirs: &[PathBuf]) -> Outcome {
    if eval_dirs.len() != 3 {
        return outcome(false, "scenarios 4-6 did not all produce outputs");
    }
    let mut rows_checked = 0;
    let mut bad = 0;
    let mut files = 0;
    for dir in eval_dirs {
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
        let grid_path = manifest["inputs"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["role"] == "grid")
            .map(|r| root.join(r["path"].as_str().unwrap()))
            .unwrap();
        let grid = read_pattern(&grid_path).unwrap();
        for tag in ["learned", "anechoic"] {
            let pred_path = dir.join(format!("predictions_{tag}.csv"));
            if !pred_path.exists() {
                continue;
            }
            files += 2;
            let preds = csv_rows(&pred_path);
            let res = csv_rows(&dir.join(format!("residuals_{tag}.csv")));
            if preds.len() != res.len() {
                bad += 1;
                continue;
            }
            for (p, r) in preds.iter().zip(&res) {
                rows_checked += 1;
                let (tx, fspl, gain, rsrp) = (f(&p[1]), f(&p[2]), f(&p[3]), f(&p[4]));
                let mut ok = (rsrp - (tx - fspl + gain)).to_bits() == 0f64.to_bits()
                    && rsrp.to_bits() == f(&r[5]).to_bits()
                    && fspl.to_bits() == fspl_db(f(&r[1]), FREQUENCY_HZ).unwrap().to_bits();
                if tag == "learned" {
                    let g = grid.interpolate(f(&r[2]), f(&r[3])).unwrap();
                    ok &= g.to_bits() == gain.to_bits();
                }
                if !ok {
                    bad += 1;
                }
            }
        }
    }
    outcome(
        bad == 0 && rows_checked > 0,
        format!(
            "{rows_checked} predictions across {files} prediction/residual files, {bad} mismatches"
        ),
    )
}

fn collect_files(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            collect_files(&p, base, out);
        } else {
            out.insert(
                p.strip_prefix(base).unwrap().to_path_buf(),
                fs::read(&p).unwrap(),
            );
        }
    }
}

fn criterion_determinism(run1: &Path, run2: &Path) -> Outcome {
    let _ = criterion_round_trip(run2);
    let _ = criterion_noisy(run2);
    let _ = criterion_directionality(run2);
    let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
    collect_files(run1, run1, &mut a);
    collect_files(run2, run2, &mut b);
    let artifacts = |name: &str| {
        name.starts_with("pattern_")
            || name.starts_with("residuals_")
            || name.starts_with("report_")
            || name.starts_with("predictions_")
            || name == "manifest.json"
            || name == "flight_log.csv"
    };
    let mut compared = 0;
    let mut differing = Vec::new();
    for (path, bytes) in &a {
        let name = path.file_name().unwrap().to_string_lossy();
        if !artifacts(&name) {
            continue;
        }
        compared += 1;
        if b.get(path) != Some(bytes) {
            differing.push(path.display().to_string());
        }
    }
    let same_tree = a.keys().eq(b.keys());
    let everything_equal = a == b;
    outcome(
        same_tree && differing.is_empty() && compared > 0,
        format!(
            "{compared} pattern/residual/report/prediction/manifest files compared, {} differ{}; all {} output files identical: {everything_equal}",
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.join(", ")) },
            a.len()
        ),
    )
}
