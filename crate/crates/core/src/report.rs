//! Prediction plots, summary plots and model comparison tables.
//!
//! Figures are standalone SVG documents. The same inputs always produce the
//! same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{FitResult, Observation};
use crate::models::FittedModel;
use crate::pipeline::TrainingRecord;

pub const TRAIN: &str = "train";
pub const TEST: &str = "test";
pub const FORWARD: &str = "forward";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub measured: f64,
    pub predicted: f64,
    pub split: String,
}

pub fn prediction_points(model: &FittedModel, obs: &[Observation], split: &str) -> Result<Vec<PredictionPoint>> {
    obs.iter()
        .map(|o| Ok(PredictionPoint { measured: o.y, predicted: model.predict(&o.x)?, split: split.to_string() }))
        .collect()
}

pub fn write_points_csv<W: Write>(out: W, points: &[PredictionPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv<R: Read>(input: R) -> Result<Vec<PredictionPoint>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mark {
    Dots,
    Polyline,
}

#[derive(Debug, Clone, PartialEq)]
struct Series {
    points: Vec<(f64, f64)>,
    mark: Mark,
    color: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x_range: (f64, f64),
    y_range: (f64, f64),
    diagonal: bool,
    series: Vec<Series>,
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const TICKS: usize = 5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    fn px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN + (x - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN - (y - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN)
    }

    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (x0, x1) = (self.px(self.x_range.0), self.px(self.x_range.1));
        let (y0, y1) = (self.py(self.y_range.0), self.py(self.y_range.1));
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for i in 0..=TICKS {
            let t = i as f64 / TICKS as f64;
            let xv = self.x_range.0 + t * (self.x_range.1 - self.x_range.0);
            let yv = self.y_range.0 + t * (self.y_range.1 - self.y_range.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                s,
                r#"<text x="{xp:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
                y0 + 14.0,
                tick_label(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
                x0 - 4.0,
                yp + 3.0,
                tick_label(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.2})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        if self.diagonal {
            let lo = self.x_range.0.max(self.y_range.0);
            let hi = self.x_range.1.min(self.y_range.1);
            let _ = writeln!(
                s,
                r#"<line class="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
                self.px(lo),
                self.py(lo),
                self.px(hi),
                self.py(hi)
            );
        }
        for series in &self.series {
            match series.mark {
                Mark::Dots => {
                    for &(x, y) in &series.points {
                        let _ = writeln!(
                            s,
                            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="2" fill="{}" fill-opacity="0.5"/>"#,
                            self.px(x),
                            self.py(y),
                            series.color
                        );
                    }
                }
                Mark::Polyline => {
                    let coords: Vec<String> =
                        series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                        coords.join(" "),
                        series.color
                    );
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Predicted against measured accuracy on [0, 1] axes with the identity
/// diagonal.
pub fn prediction_plot(points: &[PredictionPoint], title: &str) -> Result<String> {
    if points.is_empty() {
        return Err(Error::config(format!("no points to plot for {title:?}")));
    }
    Ok(Chart {
        title: title.to_string(),
        x_label: "measured accuracy".into(),
        y_label: "predicted accuracy".into(),
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.0),
        diagonal: true,
        series: vec![Series {
            points: points.iter().map(|p| (p.measured, p.predicted)).collect(),
            mark: Mark::Dots,
            color: "steelblue",
        }],
    }
    .render())
}

fn summary_plot(
    records: &[TrainingRecord],
    key: impl Fn(&TrainingRecord) -> u64,
    title: &str,
    x_label: &str,
) -> Result<String> {
    if records.is_empty() {
        return Err(Error::config(format!("no records for {title:?}")));
    }
    let mut groups: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in records {
        let g = groups.entry(key(r)).or_default();
        g.0 += r.accuracy;
        g.1 += 1;
    }
    let max_x = groups.keys().next_back().copied().unwrap_or(1).max(1) as f64;
    Ok(Chart {
        title: title.to_string(),
        x_label: x_label.to_string(),
        y_label: "accuracy".into(),
        x_range: (0.0, max_x),
        y_range: (0.0, 1.0),
        diagonal: false,
        series: vec![
            Series {
                points: records.iter().map(|r| (key(r) as f64, r.accuracy)).collect(),
                mark: Mark::Dots,
                color: "lightgray",
            },
            Series {
                points: groups.iter().map(|(&x, &(sum, n))| (x as f64, sum / n as f64)).collect(),
                mark: Mark::Polyline,
                color: "firebrick",
            },
        ],
    }
    .render())
}

/// Accuracy of every record against its epoch, with the per-epoch mean.
pub fn accuracy_vs_epoch_plot(records: &[TrainingRecord]) -> Result<String> {
    summary_plot(records, |r| r.epoch as u64, "accuracy vs epoch", "epoch")
}

/// Accuracy of every record against its total size, with the per-size mean.
pub fn accuracy_vs_size_plot(records: &[TrainingRecord]) -> Result<String> {
    summary_plot(records, |r| r.total_n, "accuracy vs training set size", "total_n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_r2: f64,
    pub test_r2: f64,
}

/// One row per model, best test r² first (ties keep input order).
pub fn comparison_table(results: &[(String, FitResult)]) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = results
        .iter()
        .map(|(name, r)| TableRow {
            model: name.clone(),
            train_loss: r.train_loss,
            test_loss: r.test_loss,
            train_r2: r.train_r2,
            test_r2: r.test_r2,
        })
        .collect();
    rows.sort_by(|a, b| b.test_r2.total_cmp(&a.test_r2));
    rows
}

// Numbers exactly as the JSON encoder prints them.
fn json_number(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "null".into())
}

pub fn table_csv(rows: &[TableRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "train_loss", "test_loss", "train_r2", "test_r2"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            json_number(r.train_loss),
            json_number(r.test_loss),
            json_number(r.train_r2),
            json_number(r.test_r2),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn table_text(rows: &[TableRow]) -> String {
    let width = rows.iter().map(|r| r.model.len()).chain([5]).max().unwrap_or(5);
    let mut s = format!(
        "{:<width$}  {:>10}  {:>10}  {:>8}  {:>8}\n",
        "model", "train loss", "test loss", "train r2", "test r2"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>10.6}  {:>10.6}  {:>8.4}  {:>8.4}",
            r.model, r.train_loss, r.test_loss, r.train_r2, r.test_r2
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub name: String,
    pub svg: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub prediction_points: Vec<PredictionPoint>,
    pub model_table: Vec<TableRow>,
    pub figures: Vec<Figure>,
}
