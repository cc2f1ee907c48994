//! Deterministic SVG plots drawn from result CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::numeric::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Median excess risk against `n`, log-log.
    RiskVsN,
    /// Median support residual against `n`, log-log.
    ResidualVsN,
    /// Histogram of pairwise frame correlations.
    CoherenceHist,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "risk_vs_n" => Ok(PlotKind::RiskVsN),
            "residual_vs_n" => Ok(PlotKind::ResidualVsN),
            "coherence_hist" => Ok(PlotKind::CoherenceHist),
            other => Err(invalid(format!("unknown plot kind `{other}` (risk_vs_n | residual_vs_n | coherence_hist)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub svg: String,
    pub warnings: Vec<String>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];
/// Values at or below zero are drawn here on log axes.
const LOG_FLOOR: f64 = 1e-6;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if text.trim().is_empty() {
            return Ok(Self { header: Vec::new(), rows: Vec::new() });
        }
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let header = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for r in reader.records() {
            rows.push(r?.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("schema mismatch: no `{name}` column")))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let x = if self.log { x.max(LOG_FLOOR).log10() } else { x };
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let y = if self.log { y.max(LOG_FLOOR).log10() } else { y };
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn span(values: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
    let vals: Vec<f64> = values.map(|v| if log { v.max(LOG_FLOOR).log10() } else { v }).collect();
    if vals.is_empty() {
        return (0.0, 1.0);
    }
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if log {
        (lo.floor(), if hi.ceil() > lo.floor() { hi.ceil() } else { lo.floor() + 1.0 })
    } else if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn axes(svg: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#, fmt(W / 2.0));
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<path d="M{} {} L{} {} L{} {}" fill="none" stroke="black"/>"#,
        fmt(x0),
        fmt(y1),
        fmt(x0),
        fmt(y0),
        fmt(x1),
        fmt(y0)
    );
    let ticks = |lo: f64, hi: f64| -> Vec<f64> {
        if f.log {
            (lo as i64..=hi as i64).map(|e| e as f64).collect()
        } else {
            (0..=4).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect()
        }
    };
    let label = |v: f64| if f.log { format!("1e{}", v as i64) } else { format!("{v:.3}") };
    for t in ticks(f.x.0, f.x.1) {
        let x = LEFT + (t - f.x.0) / (f.x.1 - f.x.0) * (W - LEFT - RIGHT);
        let _ = writeln!(svg, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#, fmt(x), fmt(y0), fmt(y0 + 5.0));
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, fmt(x), fmt(y0 + 18.0), label(t));
    }
    for t in ticks(f.y.0, f.y.1) {
        let y = H - BOTTOM - (t - f.y.0) / (f.y.1 - f.y.0) * (H - TOP - BOTTOM);
        let _ = writeln!(svg, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>"#, fmt(x0 - 5.0), fmt(y), fmt(x0));
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}</text>"#, fmt(x0 - 8.0), fmt(y + 4.0), label(t));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{xlabel}</text>"#, fmt(W / 2.0), fmt(H - 10.0));
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {0})">{ylabel}</text>"#,
        fmt(H / 2.0)
    );
}

fn series_plot(table: &Table, value_col: &str, title: &str, ylabel: &str) -> Result<Plot> {
    let mut warnings = Vec::new();
    let mut series: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    if table.header.is_empty() || table.rows.is_empty() {
        warnings.push("no records; drawing empty axes".to_string());
    }
    if !table.header.is_empty() {
        let cols: Vec<usize> = ["arm", "d", "M", "s", "r", "link", "mode", "n", value_col, "error"]
            .iter()
            .map(|c| table.column(c))
            .collect::<Result<_>>()?;
        let (n_col, v_col, e_col) = (cols[7], cols[8], cols[9]);
        let mut clamped = 0;
        for row in &table.rows {
            if row.len() != table.header.len() || !row[e_col].is_empty() {
                continue;
            }
            let n: u64 = row[n_col].parse().map_err(|_| Error::Parse(format!("bad n `{}`", row[n_col])))?;
            let v: f64 = row[v_col].parse().map_err(|_| Error::Parse(format!("bad value `{}`", row[v_col])))?;
            if !v.is_finite() {
                continue;
            }
            if v <= LOG_FLOOR {
                clamped += 1;
            }
            let label = format!(
                "{} d={} M={} s={} r={} {} {}",
                row[cols[0]], row[cols[1]], row[cols[2]], row[cols[3]], row[cols[4]], row[cols[5]], row[cols[6]]
            );
            series.entry(label).or_default().entry(n).or_default().push(v);
        }
        if clamped > 0 {
            warnings.push(format!("{clamped} values at or below {LOG_FLOOR:e} drawn at the floor"));
        }
    }
    let points: Vec<(String, Vec<(f64, f64)>)> = series
        .into_iter()
        .map(|(label, by_n)| (label, by_n.into_iter().map(|(n, vs)| (n as f64, median(&vs))).collect()))
        .collect();
    let frame = Frame {
        x: span(points.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)), true),
        y: span(points.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)), true),
        log: true,
    };
    let mut svg = String::new();
    axes(&mut svg, &frame, title, "n", ylabel);
    for (k, (label, pts)) in points.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if pts.len() > 1 {
            let path: Vec<String> = pts
                .iter()
                .enumerate()
                .map(|(i, (x, y))| format!("{}{} {}", if i == 0 { "M" } else { "L" }, fmt(frame.px(*x)), fmt(frame.py(*y))))
                .collect();
            let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{color}"/>"#, path.join(" "));
        }
        for (x, y) in pts {
            let _ = writeln!(svg, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, fmt(frame.px(*x)), fmt(frame.py(*y)));
        }
        let ly = TOP + 14.0 * (k as f64 + 1.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="10" fill="{color}">{label}</text>"#, fmt(LEFT + 10.0), fmt(ly));
    }
    svg.push_str("</svg>\n");
    Ok(Plot { svg, warnings })
}

fn histogram(table: &Table) -> Result<Plot> {
    let mut warnings = Vec::new();
    let mut values = Vec::new();
    if table.header.is_empty() || table.rows.is_empty() {
        warnings.push("no records; drawing empty axes".to_string());
    }
    if !table.header.is_empty() {
        let col = table.column("avg_correlation")?;
        for row in &table.rows {
            let v: f64 = row
                .get(col)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse("bad avg_correlation value".into()))?;
            values.push(v);
        }
    }
    const BINS: usize = 20;
    let (lo, hi) = span(values.iter().copied(), false);
    let mut counts = [0usize; BINS];
    for v in &values {
        let b = (((v - lo) / (hi - lo)) * BINS as f64).floor() as usize;
        counts[b.min(BINS - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let frame = Frame { x: (lo, hi), y: (0.0, top * 1.05), log: false };
    let mut svg = String::new();
    axes(&mut svg, &frame, "pairwise average correlation", "average correlation", "count");
    for (b, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x0 = frame.px(lo + (hi - lo) * b as f64 / BINS as f64);
        let x1 = frame.px(lo + (hi - lo) * (b + 1) as f64 / BINS as f64);
        let y = frame.py(c as f64);
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="white"/>"#,
            fmt(x0),
            fmt(y),
            fmt(x1 - x0),
            fmt(frame.py(0.0) - y),
            PALETTE[0]
        );
    }
    svg.push_str("</svg>\n");
    Ok(Plot { svg, warnings })
}

/// Render a plot of `kind` from the CSV at `csv_path`.
pub fn render_plot(csv_path: &Path, kind: PlotKind) -> Result<Plot> {
    let table = Table::read(csv_path)?;
    match kind {
        PlotKind::RiskVsN => series_plot(&table, "excess_risk", "excess risk vs n", "median excess risk"),
        PlotKind::ResidualVsN => series_plot(&table, "support_residual", "support residual vs n", "median residual"),
        PlotKind::CoherenceHist => histogram(&table),
    }
}

/// Render and write the SVG; returns warnings.
pub fn emit_plots(csv_path: &Path, kind: PlotKind, out: &Path) -> Result<Vec<String>> {
    let plot = render_plot(csv_path, kind)?;
    fs::write(out, plot.svg)?;
    Ok(plot.warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::CSV_HEADER;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn empty_csv_gives_empty_axes_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.csv", "");
        let plot = render_plot(&p, PlotKind::RiskVsN).unwrap();
        assert!(!plot.warnings.is_empty());
        assert!(plot.svg.starts_with("<svg") && !plot.svg.contains("<circle"));
        let header_only = write(dir.path(), "h.csv", &format!("{}\n", CSV_HEADER.join(",")));
        assert!(!render_plot(&header_only, PlotKind::ResidualVsN).unwrap().warnings.is_empty());
    }

    #[test]
    fn single_record_is_one_point_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let row = "pruned,256,500,16,16,NaN,1,1,he2,single,0,42,20,0.1,4,0.5,12,,k";
        let p = write(dir.path(), "one.csv", &format!("{}\n{row}\n", CSV_HEADER.join(",")));
        let a = render_plot(&p, PlotKind::RiskVsN).unwrap();
        assert_eq!(a.svg.matches("<circle").count(), 1);
        let out = dir.path().join("o.svg");
        emit_plots(&p, PlotKind::RiskVsN, &out).unwrap();
        let first = fs::read(&out).unwrap();
        emit_plots(&p, PlotKind::RiskVsN, &out).unwrap();
        assert_eq!(first, fs::read(&out).unwrap());
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.csv", "a,b\n1,2\n");
        assert!(render_plot(&p, PlotKind::RiskVsN).is_err());
        assert!(render_plot(&p, PlotKind::CoherenceHist).is_err());
    }

    #[test]
    fn histogram_counts_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "frame_a,frame_b,avg_correlation,max_column_coherence\n1,2,0.1,0.3\n1,3,0.2,0.3\n2,3,0.2,0.4\n");
        let plot = render_plot(&p, PlotKind::CoherenceHist).unwrap();
        assert_eq!(plot.svg.matches("<rect").count(), 1 + 2);
        assert!("coherence_hist".parse::<PlotKind>().is_ok());
        assert!("pie".parse::<PlotKind>().is_err());
    }
}
