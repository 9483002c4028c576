//! Line plots of CSV files as standalone SVG plus a tidy long-format CSV.
//!
//! Works with the training log, the eval report and per-frame CSVs, and
//! with any CSV whose columns are numeric. Lines starting with `#` are
//! skipped.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use footlift_core::io::{read_bytes, write_atomic};

use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct PlotArgs {
    /// CSV to plot.
    #[arg(long)]
    pub input: PathBuf,
    /// Output prefix: writes `<out>.svg` and `<out>.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// X column (default: epoch, frame, or the first column).
    #[arg(long)]
    pub x: Option<String>,
    /// Y column; repeat for several panels (default: every other numeric column).
    #[arg(long)]
    pub y: Vec<String>,
    /// Column whose values split rows into separate series (default: name
    /// when plotting against frame).
    #[arg(long)]
    pub group: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// 1-based source line of each row.
    pub lines: Vec<usize>,
}

pub fn parse_csv(text: &str, source: &Path) -> CliResult<Table> {
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        match &header {
            None => header = Some(fields),
            Some(h) => {
                if fields.len() != h.len() {
                    return Err(CliError::Data(format!(
                        "{}:{}: expected {} fields, got {}",
                        source.display(),
                        i + 1,
                        h.len(),
                        fields.len()
                    )));
                }
                rows.push(fields);
                lines.push(i + 1);
            }
        }
    }
    let header = header.ok_or_else(|| CliError::Data(format!("{}: no header line", source.display())))?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows after the header", source.display())));
    }
    Ok(Table { header, rows, lines })
}

impl Table {
    fn column(&self, name: &str, source: &Path) -> CliResult<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Usage(format!("{}: no column {name:?} (have {})", source.display(), self.header.join(", ")))
        })
    }

    fn numeric(&self, c: usize) -> bool {
        self.rows.iter().all(|r| r[c].parse::<f64>().is_ok())
    }

    fn value(&self, row: usize, c: usize, source: &Path) -> CliResult<f64> {
        self.rows[row][c].parse::<f64>().map_err(|_| {
            CliError::Data(format!(
                "{}:{}: column {:?} is not a number: {:?}",
                source.display(),
                self.lines[row],
                self.header[c],
                self.rows[row][c]
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
}

/// Chooses columns and groups rows into panels and series.
pub fn build_panels(table: &Table, args: &PlotArgs) -> CliResult<Vec<Panel>> {
    let src = args.input.as_path();
    let has = |n: &str| table.header.iter().any(|h| h == n);
    let x_name = match &args.x {
        Some(x) => x.clone(),
        None if has("epoch") => "epoch".into(),
        None if has("frame") => "frame".into(),
        None => table.header[0].clone(),
    };
    let xc = table.column(&x_name, src)?;
    let x_numeric = table.numeric(xc);
    let group = match &args.group {
        Some(g) => Some(table.column(g, src)?),
        None if x_name == "frame" && has("name") => Some(table.column("name", src)?),
        None => None,
    };
    let ycols: Vec<usize> = if args.y.is_empty() {
        (0..table.header.len()).filter(|&c| c != xc && Some(c) != group && table.numeric(c)).collect()
    } else {
        args.y.iter().map(|y| table.column(y, src)).collect::<CliResult<_>>()?
    };
    if ycols.is_empty() {
        return Err(CliError::Data(format!("{}: no numeric columns to plot", src.display())));
    }
    let mut panels = Vec::with_capacity(ycols.len());
    for &yc in &ycols {
        let mut series: Vec<Series> = Vec::new();
        for r in 0..table.rows.len() {
            let x = if x_numeric { table.value(r, xc, src)? } else { r as f64 };
            let y = table.value(r, yc, src)?;
            let name = group.map(|g| table.rows[r][g].clone()).unwrap_or_else(|| table.header[yc].clone());
            match series.iter_mut().find(|s| s.name == name) {
                Some(s) => s.points.push((x, y)),
                None => series.push(Series { name, points: vec![(x, y)] }),
            }
        }
        panels.push(Panel {
            title: table.header[yc].clone(),
            x_label: if x_numeric { x_name.clone() } else { "row".into() },
            series,
        });
    }
    Ok(panels)
}

pub const PANEL_WIDTH: f64 = 720.0;
pub const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 32.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Stacked panels, one polyline per contiguous run of finite points.
pub fn render_svg(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_WIDTH}" height="{height}" viewBox="0 0 {PANEL_WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let plot_w = PANEL_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    for (i, p) in panels.iter().enumerate() {
        let top = i as f64 * PANEL_HEIGHT + MARGIN_TOP;
        let (x0, x1) = range(p.series.iter().flat_map(|s| s.points.iter().map(|q| q.0)));
        let (y0, y1) = range(p.series.iter().flat_map(|s| s.points.iter().map(|q| q.1)));
        let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * plot_h;
        let _ = writeln!(s, r#"<g class="panel" data-title="{}">"#, escape(&p.title));
        let _ = writeln!(s, r#"<text x="{MARGIN_LEFT}" y="{:.2}" font-weight="bold">{}</text>"#, top - 10.0, escape(&p.title));
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_LEFT}" y="{top:.2}" width="{plot_w}" height="{plot_h}" fill="none" stroke="gray"/>"#
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 4.0, top + 10.0, fmt_num(y1));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 4.0, top + plot_h, fmt_num(y0));
        let base = top + plot_h + 14.0;
        let _ = writeln!(s, r#"<text x="{MARGIN_LEFT}" y="{base:.2}">{}</text>"#, fmt_num(x0));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{base:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT + plot_w, fmt_num(x1));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{base:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            escape(&p.x_label)
        );
        for (k, ser) in p.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
            for &(x, y) in &ser.points {
                if x.is_finite() && y.is_finite() {
                    runs.last_mut().expect("nonempty").push((x, y));
                } else if !runs.last().expect("nonempty").is_empty() {
                    runs.push(Vec::new());
                }
            }
            for run in runs.iter().filter(|r| !r.is_empty()) {
                let pts: Vec<String> = run.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    escape(&ser.name),
                    pts.join(" ")
                );
            }
            if p.series.len() > 1 && k < 12 {
                let ly = top + 12.0 + 12.0 * k as f64;
                let lx = MARGIN_LEFT + plot_w - 110.0;
                let _ = writeln!(s, r#"<text x="{lx:.2}" y="{ly:.2}" fill="{color}">{}</text>"#, escape(&ser.name));
            }
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

pub const TIDY_CSV_HEADER: &str = "panel,series,x,y";

pub fn tidy_csv(panels: &[Panel]) -> String {
    let mut out = String::from(TIDY_CSV_HEADER);
    out.push('\n');
    for p in panels {
        for s in &p.series {
            for (x, y) in &s.points {
                let _ = writeln!(out, "{},{},{x},{y}", p.title, s.name);
            }
        }
    }
    out
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(args: &PlotArgs) -> CliResult<()> {
    let bytes = read_bytes(&args.input)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{}: not UTF-8", args.input.display())))?;
    let table = parse_csv(&text, &args.input)?;
    let panels = build_panels(&table, args)?;
    write_atomic(&with_suffix(&args.out, ".svg"), render_svg(&panels).as_bytes())?;
    write_atomic(&with_suffix(&args.out, ".csv"), tidy_csv(&panels).as_bytes())?;
    Ok(())
}
