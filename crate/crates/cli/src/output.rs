//! Output directory handling: CSV files, the run manifest, and SVG plots
//! drawn from CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use elastica_core::Grid;
use serde::Serialize;
use serde_json::Value;

pub const TOOL: &str = "elastica";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    SolverError,
    NoContraction,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub grid: Option<GridInfo>,
    pub status: RunStatus,
    pub statuses: BTreeMap<String, Value>,
    pub timings_ms: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub audit: Option<Value>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridInfo {
    pub n_cells: usize,
    pub spacing: f64,
}

impl From<Grid> for GridInfo {
    fn from(g: Grid) -> Self {
        Self {
            n_cells: g.n_cells(),
            spacing: g.spacing(),
        }
    }
}

/// An output directory being filled by one command.
pub struct Run {
    dir: PathBuf,
    started: Instant,
    manifest: RunManifest,
}

impl Run {
    pub fn start(dir: &Path, command: &str, config: Value, grid: Option<Grid>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            started: Instant::now(),
            manifest: RunManifest {
                tool: TOOL,
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                config,
                grid: grid.map(GridInfo::from),
                status: RunStatus::Ok,
                statuses: BTreeMap::new(),
                timings_ms: BTreeMap::new(),
                outputs: Vec::new(),
                audit: None,
                error: None,
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Creates `name` in the output directory and records it.
    pub fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> Result<()>,
    ) -> Result<PathBuf> {
        let path = self.path(name);
        let file =
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush()?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn status(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.manifest.statuses.insert(key.to_string(), v);
    }

    pub fn timing(&mut self, key: &str, since: Instant) {
        self.manifest
            .timings_ms
            .insert(key.to_string(), since.elapsed().as_secs_f64() * 1e3);
    }

    pub fn audit(&mut self, value: impl Serialize) {
        self.manifest.audit = serde_json::to_value(value).ok();
    }

    /// Writes `manifest.json` through a temporary file and a rename.
    pub fn finish(mut self, status: RunStatus, error: Option<String>) -> Result<()> {
        self.manifest.status = status;
        self.manifest.error = error;
        self.manifest
            .timings_ms
            .insert("total".into(), self.started.elapsed().as_secs_f64() * 1e3);
        let tmp = self.dir.join(".manifest.json.tmp");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&tmp, text + "\n")?;
        fs::rename(&tmp, self.dir.join("manifest.json"))?;
        Ok(())
    }
}

/// Reads numeric columns by header name.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .with_context(|| format!("{} has no column {n}", path.display()))
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for rec in reader.records() {
        let rec = rec?;
        for (c, &i) in idx.iter().enumerate() {
            let v: f64 = rec[i]
                .trim()
                .parse()
                .with_context(|| format!("bad number {:?} in {}", &rec[i], path.display()))?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dashed: bool,
}

impl Series {
    /// Two columns of a CSV file.
    pub fn from_csv(path: &Path, x: &str, y: &str, label: &str, dashed: bool) -> Result<Self> {
        let mut cols = read_columns(path, &[x, y])?;
        let y = cols.pop().unwrap_or_default();
        let x = cols.pop().unwrap_or_default();
        Ok(Self {
            label: label.to_string(),
            x,
            y,
            dashed,
        })
    }
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    /// Same scale on both axes, for beam shapes.
    pub equal_aspect: bool,
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Renders line plots as a standalone SVG document.
pub fn svg(plot: &Plot, series: &[Series]) -> Result<String> {
    let points = series.iter().flat_map(|s| s.x.iter().zip(&s.y));
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (&x, &y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x0.is_finite() && y0.is_finite()) {
        bail!("nothing to plot");
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1e-9);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (mut x0, mut x1) = pad(x0, x1);
    let (mut y0, mut y1) = pad(y0, y1);
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    if plot.equal_aspect {
        let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        x0 = cx - 0.5 * scale * pw;
        x1 = cx + 0.5 * scale * pw;
        y0 = cy - 0.5 * scale * ph;
        y1 = cy + 0.5 * scale * ph;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )?;
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            sx(xv),
            HEIGHT - MARGIN + 16.0,
            xv
        )?;
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            MARGIN - 6.0,
            sy(yv) + 4.0,
            yv
        )?;
    }
    writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(plot.title)
    )?;
    writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(plot.x_label)
    )?;
    writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(plot.y_label)
    )?;
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> =
            s.x.iter()
                .zip(&s.y)
                .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
        let dash = if s.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#,
            pts.join(" ")
        )?;
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/>"#,
            MARGIN + 10.0,
            MARGIN + 34.0
        )?;
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            MARGIN + 40.0,
            ly + 4.0,
            escape(&s.label)
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_one_polyline_per_series() {
        let s = |label: &str| Series {
            label: label.into(),
            x: vec![0.0, 1.0, 2.0],
            y: vec![0.0, 1.0, 0.5],
            dashed: false,
        };
        let plot = Plot {
            title: "a < b",
            x_label: "x",
            y_label: "y",
            equal_aspect: true,
        };
        let doc = svg(&plot, &[s("one"), s("two")]).unwrap();
        assert_eq!(doc.matches("<polyline").count(), 2);
        assert!(doc.contains("a &lt; b"));
        assert!(svg(&plot, &[]).is_err());
    }
}
