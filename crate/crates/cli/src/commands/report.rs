use std::fmt::Write as _;
use std::fs;

use serde::Deserialize;
use serde_json::json;

use bwp_core::influence::{read_score_table, TradeInfluenceScore};

use crate::config::{scores_hash, RunConfig};
use crate::meta::{verify_meta, write_meta};
use crate::CliError;

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 360.0;
const MARGIN_L: f64 = 55.0;
const MARGIN_R: f64 = 15.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;
const INK_BLUE: &str = "#4878a8";
const INK_RUST: &str = "#c06038";

struct Stats {
    count: usize,
    max: f64,
    min: f64,
    mean: f64,
    std: f64,
    median: f64,
}

fn stats_of(mut v: Vec<f64>) -> Stats {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    Stats { count: n, max: v[n - 1], min: v[0], mean, std, median }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}" font-family="sans-serif" font-size="12">"#
    );
    s.push('\n');
    let _ = writeln!(s, r##"<rect width="{PLOT_W}" height="{PLOT_H}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{title}</text>"##,
        PLOT_W / 2.0
    );
    // Axis frame around the plot area.
    let _ = writeln!(
        s,
        r##"<path d="M {l} {t} L {l} {b} L {r} {b}" fill="none" stroke="#404040"/>"##,
        l = MARGIN_L,
        t = MARGIN_T,
        b = PLOT_H - MARGIN_B,
        r = PLOT_W - MARGIN_R
    );
    s
}

fn svg_histogram(values: &[f64], title: &str) -> String {
    let n_bins = 30usize;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let b = (((v - lo) / (hi - lo) * n_bins as f64) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = PLOT_W - MARGIN_L - MARGIN_R;
    let plot_h = PLOT_H - MARGIN_T - MARGIN_B;
    let bin_w = plot_w / n_bins as f64;

    let mut s = svg_open(title);
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let bar_h = plot_h * c as f64 / peak;
        let x = MARGIN_L + bin_w * i as f64;
        let y = MARGIN_T + plot_h - bar_h;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{bar_h:.2}" fill="{INK_BLUE}"/>"#,
            (bin_w - 1.0).max(0.5)
        );
    }
    let base = PLOT_H - MARGIN_B;
    let _ = writeln!(s, r#"<text x="{MARGIN_L:.1}" y="{:.1}">{lo:.4}</text>"#, base + 16.0);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{hi:.4}</text>"#,
        PLOT_W - MARGIN_R,
        base + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
        MARGIN_L - 6.0,
        MARGIN_T + 4.0,
        peak as usize
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">0</text>"#, MARGIN_L - 6.0, base + 4.0);
    s.push_str("</svg>\n");
    s
}

/// One line on a chart: legend label, stroke color, (x, y) points.
type Series<'a> = (&'a str, &'a str, Vec<(f64, f64)>);

fn svg_curves(title: &str, series: &[Series]) -> String {
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    for (_, _, pts) in series {
        for &(x, _) in pts {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
        }
    }
    if !x_lo.is_finite() || !x_hi.is_finite() {
        x_lo = 0.0;
        x_hi = 1.0;
    }
    if x_lo == x_hi {
        x_hi += 1.0;
    }
    let plot_w = PLOT_W - MARGIN_L - MARGIN_R;
    let plot_h = PLOT_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + plot_w * (x - x_lo) / (x_hi - x_lo);
    let sy = |y: f64| MARGIN_T + plot_h * (1.0 - y.clamp(0.0, 1.0));

    let mut s = svg_open(title);
    for (k, (label, color, pts)) in series.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        let ly = MARGIN_T + 14.0 * (k as f64 + 1.0);
        let lx = PLOT_W - MARGIN_R - 110.0;
        let _ = writeln!(s, r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{color}"/>"#, ly - 9.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{label}</text>"#, lx + 14.0);
    }
    let base = PLOT_H - MARGIN_B;
    let _ = writeln!(s, r#"<text x="{MARGIN_L:.1}" y="{:.1}">{x_lo:.0}</text>"#, base + 16.0);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{x_hi:.0}</text>"#,
        PLOT_W - MARGIN_R,
        base + 16.0
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1.0</text>"#, MARGIN_L - 6.0, MARGIN_T + 4.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">0.0</text>"#, MARGIN_L - 6.0, base + 4.0);
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Deserialize)]
struct HistoryRow {
    epoch: usize,
    #[allow(dead_code)]
    train_loss: f64,
    train_acc: f64,
    #[allow(dead_code)]
    val_loss: Option<f64>,
    val_acc: Option<f64>,
}

fn write_label_summary(path: &std::path::Path, scores: &[TradeInfluenceScore]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["predicted_label", "count", "max", "min", "mean", "std", "median"])?;
    let groups: [(&str, Option<u8>); 3] = [
        ("predicted_negative", Some(0)),
        ("predicted_positive", Some(1)),
        ("overall", None),
    ];
    for (name, label) in groups {
        let vals: Vec<f64> = scores
            .iter()
            .filter(|s| label.is_none_or(|l| s.predicted_label == l))
            .map(|s| s.scaled_score)
            .collect();
        if vals.is_empty() {
            continue;
        }
        let st = stats_of(vals);
        w.write_record([
            name.to_string(),
            st.count.to_string(),
            st.max.to_string(),
            st.min.to_string(),
            st.mean.to_string(),
            st.std.to_string(),
            st.median.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_top_trades(path: &std::path::Path, scores: &[TradeInfluenceScore], k: usize) -> Result<(), CliError> {
    let mut ranked: Vec<&TradeInfluenceScore> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.scaled_score
            .total_cmp(&a.scaled_score)
            .then(a.window_id.cmp(&b.window_id))
            .then(a.trade_id.cmp(&b.trade_id))
    });
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window_id", "trade_id", "position_i", "position_j", "scaled_score", "predicted_label"])?;
    for s in ranked.into_iter().take(k) {
        w.write_record([
            s.window_id.to_string(),
            s.trade_id.to_string(),
            s.position_i.to_string(),
            s.position_j.to_string(),
            s.scaled_score.to_string(),
            s.predicted_label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let hash = scores_hash(cfg);
    verify_meta(&cfg.paths.scores, &hash)?;
    let scores = read_score_table(&cfg.paths.scores)?;
    if scores.is_empty() {
        return Err(CliError::Config("the score table is empty; run `explain` first".into()));
    }

    let dir = &cfg.paths.report_dir;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let scaled: Vec<f64> = scores.iter().map(|s| s.scaled_score).collect();
    let hist_path = dir.join("score_histogram.svg");
    fs::write(&hist_path, svg_histogram(&scaled, "scaled influence score"))?;
    written.push("score_histogram.svg".to_string());

    write_label_summary(&dir.join("label_summary.csv"), &scores)?;
    written.push("label_summary.csv".into());
    write_top_trades(&dir.join("top_trades.csv"), &scores, 50)?;
    written.push("top_trades.csv".into());

    if cfg.paths.history.exists() {
        let mut rdr = csv::Reader::from_path(&cfg.paths.history)?;
        let mut train_pts = Vec::new();
        let mut val_pts = Vec::new();
        for row in rdr.deserialize::<HistoryRow>() {
            let row = row?;
            train_pts.push((row.epoch as f64, row.train_acc));
            if let Some(v) = row.val_acc {
                val_pts.push((row.epoch as f64, v));
            }
        }
        if !train_pts.is_empty() {
            let svg = svg_curves(
                "accuracy by epoch",
                &[("train", INK_BLUE, train_pts), ("val1", INK_RUST, val_pts)],
            );
            fs::write(dir.join("training_curves.svg"), svg)?;
            written.push("training_curves.svg".into());
        }
    }

    write_meta(&hist_path, "report", &hash)?;

    Ok(json!({
        "command": "report",
        "rows": scores.len(),
        "out_dir": dir.display().to_string(),
        "files": written,
        "config_hash": hash,
    }))
}
