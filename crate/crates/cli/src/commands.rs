use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use skypattern_core::dataio::{
    load_anechoic, read_flight_log, read_json, read_pattern, read_residuals, read_station_config,
    write_atomic, write_flight_log, write_json, write_pattern, write_predictions, write_report,
    write_residuals, write_variance, FlightLog, FlightSample, GroundStation, PredictionRow,
    Residual,
};
use skypattern_core::eval::{
    compare, predict_all, render_plots, report_from_residuals, EvalReport, Predictor,
};
use skypattern_core::geometry::validate_fixed_orientation;
use skypattern_core::link_budget::GainSource;
use skypattern_core::pattern::{apply_min_count, complete_grid, PatternError, PatternGrid};
use skypattern_core::pipeline::{self, LearnOptions};
use skypattern_core::sim::{generate_flight, TrajectorySpec, TruthSpec};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{CompleteArgs, EvaluateArgs, LearnArgs, PredictArgs, ReportArgs, SimulateArgs};

pub const FLIGHT_LOG_NAME: &str = "flight_log.csv";
pub const OBSERVED_NAME: &str = "pattern_observed.csv";
pub const COMPLETED_NAME: &str = "pattern_completed.csv";
pub const VARIANCE_NAME: &str = "variance.csv";
pub const REJECTED_NAME: &str = "rejected_samples.csv";

/// Short file-name tag of a predictor.
fn tag(source: GainSource) -> &'static str {
    match source {
        GainSource::CombinedLearned => "learned",
        GainSource::AnechoicPair => "anechoic",
    }
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::new("Io", format!("{}: {e}", dir.display())))
}

fn finish(mut manifest: RunManifest, out_dir: &Path, outputs: &[PathBuf]) -> Result<(), CliError> {
    manifest.outputs(outputs)?;
    let path = manifest.write(out_dir)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn read_log(path: &Path) -> Result<FlightLog, CliError> {
    let log = read_flight_log(path)?;
    for r in &log.rejected {
        warn!("{}:{}: row rejected: {}", path.display(), r.line, r.reason);
    }
    for w in &log.warnings {
        warn!("{}: {w}", path.display());
    }
    Ok(log)
}

// ---------------------------------------------------------------------------

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("simulate");
    m.input("trajectory", &a.trajectory)?;
    m.input("station", &a.station)?;
    m.input("truth", &a.truth)?;

    let mut spec: TrajectorySpec = read_json(&a.trajectory)?;
    if let Some(seed) = a.seed {
        spec.rng_seed = seed;
    }
    let station = read_station_config(&a.station)?;
    let truth_spec: TruthSpec = read_json(&a.truth)?;
    let truth_dir = a.truth.parent().unwrap_or(Path::new("."));
    if let TruthSpec::Grid { path } = &truth_spec {
        m.input("truth_grid", &truth_dir.join(path))?;
    }
    let truth = truth_spec.load(truth_dir)?;

    m.param("trajectory", &spec);
    m.param("seed", spec.rng_seed);
    m.param("noise_sigma_db", a.noise_sigma_db);

    let samples = generate_flight(&spec, &station, &truth, a.noise_sigma_db)?;
    m.note("samples", samples.len());

    prepare_out_dir(&a.out_dir)?;
    let out = a.out_dir.join(FLIGHT_LOG_NAME);
    write_flight_log(&samples, &out)?;
    finish(m, &a.out_dir, &[out])
}

// ---------------------------------------------------------------------------

pub fn learn(a: &LearnArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("learn");
    let station = read_station_config(&a.station)?;
    m.input("station", &a.station)?;
    let mut flights = Vec::with_capacity(a.logs.len());
    let mut bad_rows = 0;
    for (k, path) in a.logs.iter().enumerate() {
        m.input(&format!("log{k}"), path)?;
        let log = read_log(path)?;
        bad_rows += log.rejected.len();
        flights.push(log.samples);
    }
    let opts = LearnOptions {
        az_bin_deg: a.bins.az_bin_deg,
        el_bin_deg: a.bins.el_bin_deg,
        k_min: a.k_min,
        tol_db: a.tol_db,
        max_iters: a.max_iters,
        orientation_tol_deg: a.orientation_tol_deg,
    };
    m.param("az_bin_deg", opts.az_bin_deg);
    m.param("el_bin_deg", opts.el_bin_deg);
    m.param("k_min", opts.k_min);
    m.param("tol_db", opts.tol_db);
    m.param("max_iters", opts.max_iters);
    m.param("orientation_tol_deg", opts.orientation_tol_deg);
    m.param("expected_uav_yaw_deg", station.expected_uav_yaw_deg);

    if a.k_min == 0 {
        return Err(CliError::new(
            "InvalidArgument",
            "--k-min must be at least 1",
        ));
    }
    let out = pipeline::learn(&flights, &station, &opts)?;
    for (index, e) in &out.geometry_failures {
        warn!("sample {index} skipped: {e}");
    }
    if !out.completion.converged {
        warn!(
            "completion stopped after {} sweeps with max update {} dB",
            out.completion.iterations, out.completion.max_update
        );
    }
    m.note("rows_rejected", bad_rows);
    m.note("orientation_rejected", out.rejected_orientation.len());
    m.note("geometry_skipped", out.geometry_failures.len());
    m.note("observations", out.n_observations);
    m.note(
        "bins_observed",
        out.observed.len() - out.observed.missing_count(),
    );
    m.note(
        "bins_anchored",
        out.filtered.len() - out.filtered.missing_count(),
    );
    m.note("completion_converged", out.completion.converged);
    m.note("completion_iterations", out.completion.iterations);
    m.note("completion_max_update_db", out.completion.max_update);

    prepare_out_dir(&a.out_dir)?;
    let observed = a.out_dir.join(OBSERVED_NAME);
    let completed = a.out_dir.join(COMPLETED_NAME);
    let variance = a.out_dir.join(VARIANCE_NAME);
    let rejected = a.out_dir.join(REJECTED_NAME);
    write_pattern(&out.filtered, &observed)?;
    write_pattern(&out.completion.grid, &completed)?;
    write_variance(&out.observed, &variance)?;
    let mut rej = String::from("sample_index,timestamp_s,reasons\n");
    for r in &out.rejected_orientation {
        let reasons: Vec<&str> = r.reasons.iter().map(|x| x.as_str()).collect();
        let _ = writeln!(
            rej,
            "{},{},{}",
            r.index,
            r.sample.timestamp_s,
            reasons.join(";")
        );
    }
    write_atomic(&rejected, rej.as_bytes())?;
    finish(m, &a.out_dir, &[observed, completed, variance, rejected])
}

// ---------------------------------------------------------------------------

pub fn complete(a: &CompleteArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("complete");
    m.input("grid", &a.grid)?;
    m.param("k_min", a.k_min);
    m.param("tol_db", a.tol_db);
    m.param("max_iters", a.max_iters);

    let mut grid = read_pattern(&a.grid)?;
    if let Some(k) = a.k_min {
        if k == 0 {
            return Err(CliError::new(
                "InvalidArgument",
                "--k-min must be at least 1",
            ));
        }
        grid = apply_min_count(&grid, k);
    }
    let c = complete_grid(&grid, a.tol_db, a.max_iters)?;
    if !c.converged {
        warn!("completion stopped after {} sweeps", c.iterations);
    }
    let mut out_grid = c.grid;
    let params = &mut out_grid.meta.params;
    params.insert("completion_tol_db".into(), a.tol_db.to_string());
    params.insert("completion_iterations".into(), c.iterations.to_string());
    params.insert("completion_converged".into(), c.converged.to_string());
    m.note("cells_filled", grid.missing_count());
    m.note("completion_converged", c.converged);
    m.note("completion_iterations", c.iterations);
    m.note("completion_max_update_db", c.max_update);

    prepare_out_dir(&a.out_dir)?;
    let out = a.out_dir.join(COMPLETED_NAME);
    write_pattern(&out_grid, &out)?;
    finish(m, &a.out_dir, &[out])
}

// ---------------------------------------------------------------------------

/// Loaded test inputs shared by `predict` and `evaluate`.
struct TestSet {
    station: GroundStation,
    samples: Vec<FlightSample>,
    combined: Option<PatternGrid>,
    baseline: Option<(PatternGrid, PatternGrid)>,
}

impl TestSet {
    fn predictors(&self) -> Vec<Predictor<'_>> {
        let mut out = Vec::new();
        if let Some(g) = &self.combined {
            out.push(Predictor::Combined(g));
        }
        if let Some((uav, gs)) = &self.baseline {
            out.push(Predictor::Baseline { uav, gs });
        }
        out
    }
}

fn load_test_set(
    m: &mut RunManifest,
    log: &Path,
    station_path: &Path,
    grid: Option<&Path>,
    uav: Option<&Path>,
    gs: Option<&Path>,
    orientation_tol_deg: f64,
) -> Result<TestSet, CliError> {
    m.input("test_log", log)?;
    m.input("station", station_path)?;
    let station = read_station_config(station_path)?;
    m.param("orientation_tol_deg", orientation_tol_deg);
    m.param("expected_uav_yaw_deg", station.expected_uav_yaw_deg);

    let combined = match grid {
        Some(p) => {
            m.input("grid", p)?;
            let g = read_pattern(p)?;
            if !g.is_complete() {
                return Err(PatternError::IncompleteGrid {
                    missing: g.missing_count(),
                }
                .into());
            }
            Some(g)
        }
        None => None,
    };
    let uav = uav
        .map(Path::to_path_buf)
        .or_else(|| station.anechoic_uav_pattern.clone());
    let gs = gs
        .map(Path::to_path_buf)
        .or_else(|| station.anechoic_gs_pattern.clone());
    let baseline = match (uav, gs) {
        (Some(u), Some(g)) => {
            m.input("uav_pattern", &u)?;
            m.input("gs_pattern", &g)?;
            Some((load_anechoic(&u)?, load_anechoic(&g)?))
        }
        _ => None,
    };

    let parsed = read_log(log)?;
    let (samples, rejected) = validate_fixed_orientation(
        &parsed.samples,
        station.expected_uav_yaw_deg,
        orientation_tol_deg,
    );
    if samples.is_empty() {
        return Err(CliError::new(
            "NoAcceptedSamples",
            format!(
                "no test samples passed the fixed-orientation check ({} rejected)",
                rejected.len()
            ),
        ));
    }
    m.note("rows_rejected", parsed.rejected.len());
    m.note("orientation_rejected", rejected.len());
    m.note("test_samples", samples.len());
    Ok(TestSet {
        station,
        samples,
        combined,
        baseline,
    })
}

/// Writes predictions and residuals for one predictor.
fn run_predictor(
    set: &TestSet,
    predictor: &Predictor<'_>,
    orientation_tol_deg: f64,
    out_dir: &Path,
    outputs: &mut Vec<PathBuf>,
) -> Result<Vec<Residual>, CliError> {
    let (preds, residuals) =
        predict_all(&set.samples, &set.station, predictor, orientation_tol_deg)?;
    let t = tag(predictor.source());
    let rows: Vec<PredictionRow> = set
        .samples
        .iter()
        .zip(&preds)
        .map(|(s, p)| PredictionRow::new(s.timestamp_s, p))
        .collect();
    let pred_path = out_dir.join(format!("predictions_{t}.csv"));
    let res_path = out_dir.join(format!("residuals_{t}.csv"));
    write_predictions(&rows, &pred_path)?;
    write_residuals(&residuals, &res_path)?;
    outputs.push(pred_path);
    outputs.push(res_path);
    Ok(residuals)
}

pub fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("predict");
    let set = load_test_set(
        &mut m,
        &a.log,
        &a.station,
        a.grid.as_deref(),
        a.uav_pattern.as_deref(),
        a.gs_pattern.as_deref(),
        a.orientation_tol_deg,
    )?;
    prepare_out_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    for p in set.predictors() {
        run_predictor(&set, &p, a.orientation_tol_deg, &a.out_dir, &mut outputs)?;
    }
    finish(m, &a.out_dir, &outputs)
}

fn write_report_files(
    report: &EvalReport,
    t: &str,
    m: &RunManifest,
    out_dir: &Path,
    outputs: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let path = out_dir.join(format!("report_{t}.json"));
    write_report(&report.to_file(), &path)?;
    outputs.push(path);
    outputs.extend(render_plots(report, out_dir, t, &m.provenance())?);
    Ok(())
}

fn write_comparison(
    learned: &EvalReport,
    anechoic: &EvalReport,
    test_label: &str,
    train_label: &str,
    out_dir: &Path,
    outputs: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let c = compare(learned, "learned", anechoic, "anechoic")?;
    let table = c.summary_table(test_label, train_label);
    print!("{table}");
    let json_path = out_dir.join("compare.json");
    let csv_path = out_dir.join("compare.csv");
    write_json(&c, &json_path)?;
    write_atomic(&csv_path, table.as_bytes())?;
    outputs.push(json_path);
    outputs.push(csv_path);
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("evaluate");
    let set = load_test_set(
        &mut m,
        &a.log,
        &a.station,
        Some(&a.grid),
        a.uav_pattern.as_deref(),
        a.gs_pattern.as_deref(),
        a.orientation_tol_deg,
    )?;
    let test_label = a.test_label.clone().unwrap_or_else(|| {
        a.log
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "test".into())
    });
    m.param("el_bin_deg", a.el_bin_deg);
    m.param("test_label", &test_label);
    m.param("train_label", &a.train_label);

    prepare_out_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    for p in set.predictors() {
        let residuals = run_predictor(&set, &p, a.orientation_tol_deg, &a.out_dir, &mut outputs)?;
        let r = report_from_residuals(residuals, a.el_bin_deg)?;
        let t = tag(p.source());
        write_report_files(&r, t, &m, &a.out_dir, &mut outputs)?;
        m.note(&format!("mae_{t}_db"), r.mae);
        m.note(&format!("rmse_{t}_db"), r.rmse);
        reports.push(r);
    }
    if let [learned, anechoic] = reports.as_slice() {
        write_comparison(
            learned,
            anechoic,
            &test_label,
            &a.train_label,
            &a.out_dir,
            &mut outputs,
        )?;
    }
    finish(m, &a.out_dir, &outputs)
}

// ---------------------------------------------------------------------------

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("report");
    m.param("el_bin_deg", a.el_bin_deg);
    m.param("test_label", &a.test_label);
    m.param("train_label", &a.train_label);
    let mut reports = Vec::new();
    for (k, path) in a.residuals.iter().enumerate() {
        m.input(&format!("residuals{k}"), path)?;
        let rows = read_residuals(path)?;
        reports.push(report_from_residuals(rows, a.el_bin_deg)?);
    }
    let tags: Vec<&str> = reports
        .iter()
        .map(|r| r.predictor().map(tag).unwrap_or("unknown"))
        .collect();
    if tags.len() == 2 && tags[0] == tags[1] {
        return Err(CliError::new(
            "InvalidArgument",
            "both residual files come from the same predictor",
        ));
    }

    prepare_out_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    for (r, t) in reports.iter().zip(&tags) {
        write_report_files(r, t, &m, &a.out_dir, &mut outputs)?;
        m.note(&format!("mae_{t}_db"), r.mae);
    }
    if reports.len() == 2 {
        let (learned, anechoic) = if tags[0] == "learned" {
            (&reports[0], &reports[1])
        } else {
            (&reports[1], &reports[0])
        };
        write_comparison(
            learned,
            anechoic,
            &a.test_label,
            &a.train_label,
            &a.out_dir,
            &mut outputs,
        )?;
    }
    finish(m, &a.out_dir, &outputs)
}
