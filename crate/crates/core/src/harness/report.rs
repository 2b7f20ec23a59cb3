//! Report emission: per-ticker result CSVs, a best-model summary table, and
//! AUC-vs-fraction charts as standalone SVG files.
//!
//! Charts draw one line per (model, window): color encodes the model, dash
//! pattern the window. Cells with undefined AUC (single-class test labels)
//! render as gaps, never as zeros. The x axis carries a tick for every
//! fraction present in the results.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::features::Direction;

use super::{sort_rows, HarnessError, ModelKind, ResultRow};

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    /// one chart per (ticker, direction, model) with a line per window,
    /// instead of one chart per (ticker, direction) with model*window lines
    pub facet_per_model: bool,
}

/// Writes all report artifacts into `outdir` and returns the file inventory.
pub fn emit_report(
    rows: &[ResultRow],
    outdir: &Path,
    options: &ReportOptions,
) -> Result<Vec<PathBuf>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Results {
            path: outdir.display().to_string(),
            message: "no result rows to report".into(),
        });
    }
    fs::create_dir_all(outdir)
        .map_err(|source| HarnessError::Io { path: outdir.display().to_string(), source })?;

    let mut written = Vec::new();
    let tickers: BTreeSet<&str> = rows.iter().map(|r| r.ticker.as_str()).collect();

    for ticker in &tickers {
        let mut subset: Vec<ResultRow> =
            rows.iter().filter(|r| r.ticker == *ticker).cloned().collect();
        sort_rows(&mut subset);

        let csv_path = outdir.join(format!("{}_results.csv", sanitize(ticker)));
        super::write_results_csv(&subset, &csv_path)?;
        written.push(csv_path);

        for direction in [Direction::Positive, Direction::Negative] {
            let dir_rows: Vec<&ResultRow> =
                subset.iter().filter(|r| r.direction == direction).collect();
            if dir_rows.is_empty() {
                continue;
            }
            if options.facet_per_model {
                let models: BTreeSet<ModelKind> = dir_rows.iter().map(|r| r.model).collect();
                for model in models {
                    let model_rows: Vec<&ResultRow> =
                        dir_rows.iter().filter(|r| r.model == model).copied().collect();
                    let path = outdir.join(format!(
                        "{}_{}_{}_auc.svg",
                        sanitize(ticker),
                        direction_label(direction),
                        model.name()
                    ));
                    let svg = render_chart(ticker, direction, &model_rows, true);
                    fs::write(&path, svg).map_err(|source| HarnessError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    written.push(path);
                }
            } else {
                let path = outdir.join(format!(
                    "{}_{}_auc.svg",
                    sanitize(ticker),
                    direction_label(direction)
                ));
                let svg = render_chart(ticker, direction, &dir_rows, false);
                fs::write(&path, svg).map_err(|source| HarnessError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                written.push(path);
            }
        }
    }

    let summary_path = outdir.join("summary.csv");
    fs::write(&summary_path, summary_csv(rows))
        .map_err(|source| HarnessError::Io { path: summary_path.display().to_string(), source })?;
    written.push(summary_path);

    Ok(written)
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn direction_label(direction: Direction) -> &'static str {
    match direction {
        Direction::Positive => "positive",
        Direction::Negative => "negative",
    }
}

/// Best defined AUC per grid cell; cells where every model's AUC is
/// undefined keep an empty best column.
pub fn summary_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("ticker,direction,window,fraction,best_model,best_auc\n");
    let mut cells: Vec<(String, Direction, usize, f64)> = rows
        .iter()
        .map(|r| (r.ticker.clone(), r.direction, r.window, r.fraction))
        .collect();
    cells.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(direction_label(a.1).cmp(direction_label(b.1)))
            .then(a.2.cmp(&b.2))
            .then(a.3.partial_cmp(&b.3).expect("finite fraction"))
    });
    cells.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1 && a.2 == b.2 && a.3 == b.3);

    for (ticker, direction, window, fraction) in cells {
        let best = rows
            .iter()
            .filter(|r| {
                r.ticker == ticker
                    && r.direction == direction
                    && r.window == window
                    && r.fraction == fraction
            })
            .filter_map(|r| r.auc.map(|a| (r.model, a)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite auc"));
        match best {
            Some((model, auc)) => out.push_str(&format!(
                "{ticker},{},{window},{fraction},{},{auc:.6}\n",
                direction_label(direction),
                model.name()
            )),
            None => out.push_str(&format!(
                "{ticker},{},{window},{fraction},,\n",
                direction_label(direction)
            )),
        }
    }
    out
}

const PLOT_LEFT: f64 = 72.0;
const PLOT_RIGHT: f64 = 630.0;
const PLOT_TOP: f64 = 48.0;
const PLOT_BOTTOM: f64 = 500.0;
const CANVAS_W: u32 = 880;
const CANVAS_H: u32 = 560;

fn model_color(model: ModelKind) -> &'static str {
    match model {
        ModelKind::Mlp => "#1f77b4",
        ModelKind::Cnn => "#ff7f0e",
        ModelKind::Lstm => "#2ca02c",
        ModelKind::Rf => "#d62728",
        ModelKind::Rsi => "#9467bd",
    }
}

fn window_dash(windows: &[usize], window: usize) -> &'static str {
    const DASHES: [&str; 4] = ["", "7,4", "2,4", "10,4,2,4"];
    let idx = windows.iter().position(|&w| w == window).unwrap_or(0);
    DASHES[idx % DASHES.len()]
}

fn render_chart(
    ticker: &str,
    direction: Direction,
    rows: &[&ResultRow],
    facet: bool,
) -> String {
    let fractions: Vec<f64> = {
        let mut f: Vec<f64> = rows.iter().map(|r| r.fraction).collect();
        f.sort_by(|a, b| a.partial_cmp(b).expect("finite fraction"));
        f.dedup();
        f
    };
    let windows: Vec<usize> = {
        let w: BTreeSet<usize> = rows.iter().map(|r| r.window).collect();
        w.into_iter().collect()
    };
    let models: Vec<ModelKind> = {
        let mut seen = Vec::new();
        for m in [ModelKind::Mlp, ModelKind::Cnn, ModelKind::Lstm, ModelKind::Rf, ModelKind::Rsi] {
            if rows.iter().any(|r| r.model == m) {
                seen.push(m);
            }
        }
        seen
    };

    let (fmin, fmax) = (fractions[0], *fractions.last().expect("non-empty fractions"));
    let x_of = |fraction: f64| -> f64 {
        if (fmax - fmin).abs() < 1e-12 {
            (PLOT_LEFT + PLOT_RIGHT) / 2.0
        } else {
            PLOT_LEFT + (fraction - fmin) / (fmax - fmin) * (PLOT_RIGHT - PLOT_LEFT)
        }
    };
    let y_of = |auc: f64| -> f64 { PLOT_BOTTOM - auc * (PLOT_BOTTOM - PLOT_TOP) };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS_W}\" height=\"{CANVAS_H}\" viewBox=\"0 0 {CANVAS_W} {CANVAS_H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{} — significant {} daily moves: AUC vs threshold fraction</text>\n",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        escape(ticker),
        direction_label(direction),
    ));

    // y gridlines and labels
    for i in 0..=10 {
        let auc = i as f64 / 10.0;
        let y = y_of(auc);
        let stroke = if i == 5 { "#bbbbbb" } else { "#e6e6e6" };
        svg.push_str(&format!(
            "<line x1=\"{PLOT_LEFT:.1}\" y1=\"{y:.1}\" x2=\"{PLOT_RIGHT:.1}\" y2=\"{y:.1}\" stroke=\"{stroke}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{auc:.1}</text>\n",
            PLOT_LEFT - 8.0,
            y + 4.0
        ));
    }
    // x ticks at every configured fraction
    for &fraction in &fractions {
        let x = x_of(fraction);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{PLOT_BOTTOM:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#888888\"/>\n",
            PLOT_BOTTOM + 6.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{fraction}</text>\n",
            PLOT_BOTTOM + 20.0
        ));
    }
    // axes
    svg.push_str(&format!(
        "<line x1=\"{PLOT_LEFT:.1}\" y1=\"{PLOT_TOP:.1}\" x2=\"{PLOT_LEFT:.1}\" y2=\"{PLOT_BOTTOM:.1}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{PLOT_LEFT:.1}\" y1=\"{PLOT_BOTTOM:.1}\" x2=\"{PLOT_RIGHT:.1}\" y2=\"{PLOT_BOTTOM:.1}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">threshold fraction (of training-period sigma)</text>\n",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 40.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 18 {:.1})\" text-anchor=\"middle\">test AUC</text>\n",
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0
    ));

    // series: undefined cells split the polyline into segments (gaps)
    for &model in &models {
        for &window in &windows {
            let color = model_color(model);
            let dash = window_dash(&windows, window);
            let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
            for &fraction in &fractions {
                let cell = rows
                    .iter()
                    .find(|r| r.model == model && r.window == window && r.fraction == fraction);
                match cell.and_then(|r| r.auc) {
                    Some(auc) => segments
                        .last_mut()
                        .expect("segment list non-empty")
                        .push((x_of(fraction), y_of(auc))),
                    None => {
                        if !segments.last().expect("segment list non-empty").is_empty() {
                            segments.push(Vec::new());
                        }
                    }
                }
            }
            for segment in segments.iter().filter(|s| !s.is_empty()) {
                if segment.len() > 1 {
                    let points: Vec<String> =
                        segment.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                    let dash_attr = if dash.is_empty() {
                        String::new()
                    } else {
                        format!(" stroke-dasharray=\"{dash}\"")
                    };
                    svg.push_str(&format!(
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"{dash_attr}/>\n",
                        points.join(" ")
                    ));
                }
                for (x, y) in segment {
                    svg.push_str(&format!(
                        "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"2.5\" fill=\"{color}\"/>\n"
                    ));
                }
            }
        }
    }

    // legend
    let mut ly = PLOT_TOP + 4.0;
    let lx = PLOT_RIGHT + 24.0;
    for &model in &models {
        svg.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"14\" height=\"14\" fill=\"{}\"/>\n",
            ly - 11.0,
            model_color(model)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            lx + 20.0,
            model.name()
        ));
        ly += 20.0;
    }
    ly += 8.0;
    for &window in &windows {
        let dash = window_dash(&windows, window);
        let dash_attr =
            if dash.is_empty() { String::new() } else { format!(" stroke-dasharray=\"{dash}\"") };
        svg.push_str(&format!(
            "<line x1=\"{lx:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#444444\" stroke-width=\"1.6\"{dash_attr}/>\n",
            ly - 5.0,
            lx + 14.0,
            ly - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"12\">p = {window}</text>\n",
            lx + 20.0
        ));
        ly += 20.0;
    }
    if facet {
        svg.push_str(&format!(
            "<text x=\"{lx:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#666666\">single model facet</text>\n",
            ly + 6.0
        ));
    }
    // the RSI score is a derived continuous mapping, not part of the 30/70 rule
    if models.contains(&ModelKind::Rsi) {
        svg.push_str(&format!(
            "<text x=\"{PLOT_LEFT:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#666666\">rsi scored via continuous 30/70-distance mapping</text>\n",
            CANVAS_H as f64 - 12.0
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
