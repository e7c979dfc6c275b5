//! Figure-style outputs: CSV tables plus plain SVG line charts, bar charts
//! and heatmaps, all derived from `summary.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{state_labels, MeanSem, Summary};
use crate::error::{AppError, Result};
use crate::formats::{self, curves_csv, matrix_csv, write_atomic};
use crate::pipeline::{CLASSIFIER_FILE, RBM_FILE, READOUT_FILE, SUMMARY_FILE, TRAJECTORIES_FILE};

/// Stage name and the file proving it ran.
pub const STAGES: [(&str, &str); 5] = [
    ("train-rbm", RBM_FILE),
    ("train-classifier", CLASSIFIER_FILE),
    ("train-readout", READOUT_FILE),
    ("generate", TRAJECTORIES_FILE),
    ("analyze", SUMMARY_FILE),
];

pub fn missing_stages(results: &Path) -> Vec<&'static str> {
    STAGES
        .iter()
        .filter(|(_, f)| !results.join(f).is_file())
        .map(|(s, _)| *s)
        .collect()
}

/// Writes the report for `results` into `out`; returns the files written.
pub fn write_report(results: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let missing = missing_stages(results);
    if !missing.is_empty() {
        return Err(AppError::data(format!(
            "{} is incomplete; missing stages: {}",
            results.display(),
            missing.join(", ")
        )));
    }
    let path = results.join(SUMMARY_FILE);
    let summary: Summary = serde_json::from_slice(&formats::read_file(&path)?)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    let mut written = Vec::new();
    for (name, bytes) in render(&summary) {
        let p = out.join(name);
        write_atomic(&p, &bytes)?;
        written.push(p);
    }
    Ok(written)
}

/// Every report file as `(name, contents)`.
pub fn render(s: &Summary) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut add = |name: &str, bytes: Vec<u8>| files.push((name.to_string(), bytes));

    let singles: Vec<_> = s.conditions.iter().filter(|c| c.kind == "single").collect();
    let groups: Vec<(&String, _)> = s.groups.iter().collect();

    // Accuracy: one curve per single digit plus each group's mean.
    let mut names: Vec<String> = singles.iter().map(|c| format!("digit {}", c.target)).collect();
    let mut series: Vec<Vec<f64>> = singles.iter().map(|c| c.accuracy.clone()).collect();
    for (g, st) in &groups {
        names.push(format!("{g} mean"));
        series.push(st.accuracy.clone());
    }
    add("accuracy_curves.csv", curves_csv(&names, &series));
    add(
        "accuracy_curves.svg",
        line_chart("Classifier accuracy per step", "step", "accuracy", &names, &series, Some((0.0, 1.0))).into_bytes(),
    );

    if let Some(g) = s.groups.get("single") {
        let names = vec!["mean entropy".to_string(), "mean accuracy".to_string()];
        let series = vec![g.entropy.clone(), g.accuracy.clone()];
        add("entropy_curve.csv", curves_csv(&names, &series));
        add(
            "entropy_curve.svg",
            line_chart("Single-digit entropy and accuracy", "step", "value", &names, &series, None).into_bytes(),
        );
    }

    let (names, series): (Vec<String>, Vec<Vec<f64>>) = groups
        .iter()
        .filter_map(|(g, st)| st.active_fraction.clone().map(|a| (g.to_string(), a)))
        .unzip();
    if !names.is_empty() {
        add("active_fraction_curves.csv", curves_csv(&names, &series));
        add(
            "active_fraction_curves.svg",
            line_chart("Active hidden units", "step", "active %", &names, &series, None).into_bytes(),
        );
    }

    let metrics: [(&str, fn(&crate::analysis::GroupStats) -> MeanSem); 3] = [
        ("visited_states", |g| g.visited_states),
        ("transitions", |g| g.transitions),
        ("non_digit_time", |g| g.non_digit_time),
    ];
    let mut csv = String::from("group,metric,mean,sem,n\n");
    for (g, st) in &groups {
        for (m, f) in metrics {
            let v = f(st);
            let sem = v.sem.map_or(String::new(), |x| x.to_string());
            let _ = writeln!(csv, "{g},{m},{},{sem},{}", v.mean, v.n);
        }
    }
    add("visited_states.csv", csv.into_bytes());
    let bars: Vec<(String, MeanSem)> = groups.iter().map(|(g, st)| (g.to_string(), st.visited_states)).collect();
    add(
        "visited_states.svg",
        bar_chart("Visited states per trajectory", "states", &bars).into_bytes(),
    );

    if !singles.is_empty() {
        let rows: Vec<Vec<f64>> = singles.iter().map(|c| c.state_time.clone()).collect();
        let row_labels: Vec<String> = singles.iter().map(|c| c.target.clone()).collect();
        let mut csv = String::from("bias");
        for l in state_labels() {
            let _ = write!(csv, ",{l}");
        }
        csv.push('\n');
        for (l, r) in row_labels.iter().zip(&rows) {
            csv.push_str(l);
            for v in r {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
        add("state_time.csv", csv.into_bytes());
        add(
            "state_time.svg",
            heatmap("Mean steps per state (single-digit bias)", &row_labels, &state_labels(), &rows).into_bytes(),
        );
    }

    for (g, st) in &groups {
        if let Some(m) = &st.transition_matrix {
            add(&format!("transition_matrix_{g}.csv"), matrix_csv(&state_labels(), &m.probabilities));
            add(
                &format!("transition_matrix_{g}.svg"),
                heatmap(
                    &format!("Transition probabilities ({g})"),
                    &state_labels(),
                    &state_labels(),
                    &m.probabilities,
                )
                .into_bytes(),
            );
        }
    }
    files
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str, w: f64, h: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, x_label: &str, y_label: &str, y_lo: f64, y_hi: f64) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(s, r#"<path d="M{x0} {y1}V{y0}H{x1}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * f64::from(i) / 4.0;
        let y = y0 - (y0 - y1) * f64::from(i) / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            y + 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    let t = format!("{v:.3}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" { "0".to_string() } else { t.to_string() }
}

fn range(series: &[Vec<f64>]) -> (f64, f64) {
    let vals = series.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let lo = lo.min(0.0);
    if hi - lo < 1e-12 {
        (lo, lo + 1.0)
    } else {
        (lo, hi + 0.05 * (hi - lo))
    }
}

pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    names: &[String],
    series: &[Vec<f64>],
    y_range: Option<(f64, f64)>,
) -> String {
    let (lo, hi) = y_range.unwrap_or_else(|| range(series));
    let mut s = open(title, W, H);
    axes(&mut s, x_label, y_label, lo, hi);
    let n = series.iter().map(Vec::len).max().unwrap_or(0);
    let x = |i: usize| LEFT + (W - RIGHT - LEFT) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let y = |v: f64| (H - BOTTOM) - (H - BOTTOM - TOP) * ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    for (k, (name, ys)) in names.iter().zip(series).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let dash = if k >= PALETTE.len() { r#" stroke-dasharray="6 3""# } else { "" };
        let mut d = String::new();
        for (i, &v) in ys.iter().enumerate().filter(|(_, v)| v.is_finite()) {
            let _ = write!(d, "{}{:.1} {:.1}", if d.is_empty() { "M" } else { "L" }, x(i), y(v));
        }
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#
        );
        let ly = TOP + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT + 10.0,
            W - RIGHT + 30.0,
            W - RIGHT + 34.0,
            ly + 4.0,
            escape(name)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="{:.1}" text-anchor="middle">1</text><text x="{:.1}" y="{:.1}" text-anchor="middle">{n}</text>"#,
        H - BOTTOM + 16.0,
        W - RIGHT,
        H - BOTTOM + 16.0
    );
    s.push_str("</svg>\n");
    s
}

/// Bars of means with SEM whiskers.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, MeanSem)]) -> String {
    let tops: Vec<f64> = bars.iter().map(|(_, m)| m.mean + m.sem.unwrap_or(0.0)).collect();
    let (lo, hi) = range(&[tops]);
    let mut s = open(title, W, H);
    axes(&mut s, "", y_label, lo, hi);
    let y = |v: f64| (H - BOTTOM) - (H - BOTTOM - TOP) * ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    let slot = (W - RIGHT - LEFT) / bars.len().max(1) as f64;
    for (k, (name, m)) in bars.iter().enumerate() {
        let cx = LEFT + slot * (k as f64 + 0.5);
        let bw = slot * 0.6;
        let top = y(m.mean);
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{top:.1}" width="{bw:.1}" height="{:.1}" fill="{}"/>"#,
            cx - bw / 2.0,
            (H - BOTTOM) - top,
            PALETTE[k % PALETTE.len()]
        );
        if let Some(e) = m.sem {
            let _ = writeln!(
                s,
                r#"<path d="M{cx:.1} {:.1}V{:.1}M{:.1} {:.1}H{:.1}M{:.1} {:.1}H{:.1}" stroke="black"/>"#,
                y(m.mean - e),
                y(m.mean + e),
                cx - 6.0,
                y(m.mean + e),
                cx + 6.0,
                cx - 6.0,
                y(m.mean - e),
                cx + 6.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 16.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grey-to-blue heatmap with cell values printed.
pub fn heatmap<R: AsRef<[f64]>>(title: &str, row_labels: &[String], col_labels: &[String], rows: &[R]) -> String {
    let cell = 40.0;
    let (x0, y0) = (90.0, 90.0);
    let w = x0 + cell * col_labels.len() as f64 + 20.0;
    let h = y0 + cell * row_labels.len() as f64 + 20.0;
    let max = rows
        .iter()
        .flat_map(|r| r.as_ref().iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let mut s = open(title, w.max(320.0), h);
    for (j, l) in col_labels.iter().enumerate() {
        let cx = x0 + cell * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="start" transform="rotate(-45 {cx:.1} {:.1})">{}</text>"#,
            y0 - 6.0,
            y0 - 6.0,
            escape(l)
        );
    }
    for (i, (l, r)) in row_labels.iter().zip(rows).enumerate() {
        let y = y0 + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            y + cell / 2.0 + 4.0,
            escape(l)
        );
        for (j, &v) in r.as_ref().iter().enumerate() {
            let t = if max > 0.0 && v.is_finite() { v / max } else { 0.0 };
            let shade = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
            let fill = format!("#{:02x}{:02x}{:02x}", shade(245.0, 8.0), shade(245.0, 48.0), shade(245.0, 107.0));
            let ink = if t > 0.5 { "white" } else { "black" };
            let x = x0 + cell * j as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{fill}"/><text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10" fill="{ink}">{}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                if v.is_finite() { format!("{v:.2}") } else { "-".to_string() }
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
