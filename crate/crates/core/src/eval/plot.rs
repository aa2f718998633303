//! Self-contained SVG renderings of an evaluation report, each with a CSV
//! holding exactly the plotted numbers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{out_path, EvalError, EvalReport};
use crate::dataio::write_atomic;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

/// Writes the distance-vs-RSRP scatter, the absolute-error CDF and the
/// per-elevation MAE profile as SVG plus backing CSV files into `out_dir`.
/// `provenance` pairs (input name, content hash) are embedded as comments.
/// Nothing is written when the report has no residuals.
pub fn render_plots(
    report: &EvalReport,
    out_dir: &Path,
    prefix: &str,
    provenance: &[(String, String)],
) -> Result<Vec<PathBuf>, EvalError> {
    if report.residuals.is_empty() || report.error_cdf.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    let files = [
        ("scatter.csv", scatter_csv(report)),
        ("scatter.svg", scatter_svg(report, provenance)),
        ("error_cdf.csv", cdf_csv(report)),
        ("error_cdf.svg", cdf_svg(report, provenance)),
        ("elevation_mae.csv", elevation_csv(report)),
        ("elevation_mae.svg", elevation_svg(report, provenance)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out_path(out_dir, prefix, name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn scatter_csv(r: &EvalReport) -> String {
    let mut s = String::from("d3d_m,rsrp_meas_dbm,rsrp_pred_dbm\n");
    for row in &r.residuals {
        let _ = writeln!(
            s,
            "{},{},{}",
            row.d3d_m, row.rsrp_meas_dbm, row.rsrp_pred_dbm
        );
    }
    s
}

fn cdf_csv(r: &EvalReport) -> String {
    let mut s = String::from("abs_err_db,cum_prob\n");
    for p in &r.error_cdf {
        let _ = writeln!(s, "{},{}", p.abs_err_db, p.cum_prob);
    }
    s
}

fn elevation_csv(r: &EvalReport) -> String {
    let mut s = String::from("el_lo_deg,el_hi_deg,mae_db,density\n");
    for b in &r.per_elevation {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            b.el_lo_deg, b.el_hi_deg, b.mae_db, b.density
        );
    }
    s
}

/// Linear axis mapping data coordinates onto the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (x0, x1) = pad(x);
        let (y0, y1) = pad(y);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn header(title: &str, provenance: &[(String, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    for (name, hash) in provenance {
        let _ = writeln!(
            s,
            "<!-- input {} sha256={} -->",
            name.replace("--", "-"),
            hash
        );
    }
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        title
    );
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r) = (LEFT, WIDTH - RIGHT);
    let (t, b) = (TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        s,
        r#"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for x in ticks(f.x0, f.x1) {
        let px = f.px(x);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.1}" y1="{b:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            b + 5.0,
            b + 18.0,
            fmt_tick(x)
        );
    }
    for y in ticks(f.y0, f.y1) {
        let py = f.py(y);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{l:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            l - 5.0,
            l - 8.0,
            py + 4.0,
            fmt_tick(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{ylabel}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0
    );
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    for (k, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * k as f64;
        let x = WIDTH - RIGHT - 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{label}</text>"#,
            y - 9.0,
            x + 15.0,
            y
        );
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn scatter_svg(r: &EvalReport, provenance: &[(String, String)]) -> String {
    let (x0, x1) = min_max(r.residuals.iter().map(|p| p.d3d_m));
    let (y0, y1) = min_max(
        r.residuals
            .iter()
            .flat_map(|p| [p.rsrp_meas_dbm, p.rsrp_pred_dbm]),
    );
    let f = Frame::new((x0, x1), (y0, y1));
    let mut s = header("3D distance vs RSRP", provenance);
    axes(&mut s, &f, "3D distance (m)", "RSRP (dBm)");
    s.push_str("<g fill=\"#888888\" fill-opacity=\"0.5\">\n");
    for p in &r.residuals {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#,
            f.px(p.d3d_m),
            f.py(p.rsrp_meas_dbm)
        );
    }
    s.push_str("</g>\n<g fill=\"#1f77b4\">\n");
    for p in &r.residuals {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.2"/>"#,
            f.px(p.d3d_m),
            f.py(p.rsrp_pred_dbm)
        );
    }
    s.push_str("</g>\n");
    legend(&mut s, &[("measured", "#888888"), ("predicted", "#1f77b4")]);
    s.push_str("</svg>\n");
    s
}

fn cdf_svg(r: &EvalReport, provenance: &[(String, String)]) -> String {
    let max_err = r.error_cdf.last().map(|p| p.abs_err_db).unwrap_or(0.0);
    let f = Frame::new((0.0, max_err), (0.0, 1.0));
    let mut s = header("CDF of absolute error", provenance);
    axes(&mut s, &f, "absolute error (dB)", "cumulative probability");
    let mut path = format!("M{:.2},{:.2}", f.px(0.0), f.py(0.0));
    let mut prev = 0.0;
    for p in &r.error_cdf {
        let x = f.px(p.abs_err_db);
        let _ = write!(
            path,
            " L{x:.2},{:.2} L{x:.2},{:.2}",
            f.py(prev),
            f.py(p.cum_prob)
        );
        prev = p.cum_prob;
    }
    let _ = writeln!(
        s,
        "<path d=\"{path}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>"
    );
    s.push_str("</svg>\n");
    s
}

fn elevation_svg(r: &EvalReport, provenance: &[(String, String)]) -> String {
    let bins = &r.per_elevation;
    let x0 = bins.first().map(|b| b.el_lo_deg).unwrap_or(0.0).min(0.0);
    let (_, max_mae) = min_max(bins.iter().map(|b| b.mae_db));
    let (_, max_density) = min_max(bins.iter().map(|b| b.density));
    let f = Frame::new((x0, 90.0), (0.0, max_mae.max(1e-9) * 1.1));
    let mut s = header("Elevation angle vs mean absolute error", provenance);

    // density band on a secondary scale spanning the full plot height
    let dscale = (HEIGHT - TOP - BOTTOM) / max_density.max(1e-12);
    let base = HEIGHT - BOTTOM;
    let mut band = format!("M{:.2},{base:.2}", f.px(bins[0].el_lo_deg));
    for b in bins {
        let h = base - b.density * dscale;
        let _ = write!(
            band,
            " L{:.2},{h:.2} L{:.2},{h:.2}",
            f.px(b.el_lo_deg),
            f.px(b.el_hi_deg)
        );
    }
    let _ = write!(
        band,
        " L{:.2},{base:.2} Z",
        f.px(bins[bins.len() - 1].el_hi_deg)
    );
    let _ = writeln!(
        s,
        "<path d=\"{band}\" fill=\"#ff7f0e\" fill-opacity=\"0.25\" stroke=\"none\"/>"
    );

    axes(
        &mut s,
        &f,
        "elevation angle (deg)",
        "mean absolute error (dB)",
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(90 {:.1} {:.1})">sample density (max {:.3})</text>"#,
        WIDTH - 20.0,
        (TOP + base) / 2.0,
        WIDTH - 20.0,
        (TOP + base) / 2.0,
        max_density
    );
    let pts: Vec<String> = bins
        .iter()
        .map(|b| {
            format!(
                "{:.2},{:.2}",
                f.px(0.5 * (b.el_lo_deg + b.el_hi_deg)),
                f.py(b.mae_db)
            )
        })
        .collect();
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>",
        pts.join(" ")
    );
    for p in &pts {
        let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
        let _ = writeln!(
            s,
            "<circle cx=\"{x}\" cy=\"{y}\" r=\"2.5\" fill=\"#1f77b4\"/>"
        );
    }
    legend(
        &mut s,
        &[("MAE", "#1f77b4"), ("elevation density", "#ff7f0e")],
    );
    s.push_str("</svg>\n");
    s
}
