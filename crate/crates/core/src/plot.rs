//! Post-hoc CSV-to-SVG plotting: one polyline per input file, a shared
//! axis box, and min/max tick labels. Deliberately minimal; anything fancier
//! belongs in an external notebook.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("{path}: no data rows")]
    Empty { path: String },
    #[error("{path}: row {row} is malformed")]
    BadRow { path: String, row: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A parsed CSV with a header row.
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_csv(path: &Path) -> Result<Csv, PlotError> {
    let text = std::fs::read_to_string(path).map_err(|source| PlotError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows: Vec<Vec<String>> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
        .collect();
    Ok(Csv { header, rows })
}

impl Csv {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn numeric_column(&self, path: &Path, name: &str) -> Result<Vec<f64>, PlotError> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| PlotError::MissingColumn {
                path: path.display().to_string(),
                column: name.to_string(),
            })?;
        if self.rows.is_empty() {
            return Err(PlotError::Empty {
                path: path.display().to_string(),
            });
        }
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.get(idx)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or(PlotError::BadRow {
                        path: path.display().to_string(),
                        row: i + 2,
                    })
            })
            .collect()
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Render one polyline per (file, y-column series) into an SVG document.
pub fn plot_svg(
    series: &[(String, Vec<f64>, Vec<f64>)],
    x_label: &str,
    y_label: &str,
) -> String {
    let (w, h) = (760.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, xs, ys) in series {
        for &x in xs {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        for &y in ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() || x_max <= x_min {
        x_max = x_min + 1.0;
    }
    if !y_min.is_finite() || y_max <= y_min {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_lo, y_hi) = (y_min - pad, y_max + pad);

    let sx = |x: f64| ml + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| mt + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#444\"/>\n"
    ));
    for (i, (label, xs, ys)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for (x, y) in xs.iter().zip(ys) {
            points.push_str(&format!("{:.2},{:.2} ", sx(*x), sy(*y)));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{points}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            ml + 8.0,
            mt + 16.0 + 14.0 * i as f64,
            xml_escape(label)
        ));
    }
    // Axis extremes and labels.
    svg.push_str(&format!(
        "<text x=\"{ml}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\">{x_min}</text>\n",
        h - mb + 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">{x_max}</text>\n",
        w - mr,
        h - mb + 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">{y_lo:.4}</text>\n",
        ml - 6.0,
        h - mb
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">{y_hi:.4}</text>\n",
        ml - 6.0,
        mt + 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
        ml + pw / 2.0,
        h - 12.0,
        xml_escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0,
        xml_escape(y_label)
    ));
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// End-to-end: read CSVs, extract (x, y) columns, emit the SVG file.
pub fn plot_csv_files(
    csv_paths: &[std::path::PathBuf],
    x_column: &str,
    y_column: &str,
    out: &Path,
) -> Result<(), PlotError> {
    let mut series = Vec::new();
    for path in csv_paths {
        let csv = read_csv(path)?;
        let xs = csv.numeric_column(path, x_column)?;
        let ys = csv.numeric_column(path, y_column)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        series.push((label, xs, ys));
    }
    let svg = plot_svg(&series, x_column, y_column);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out, svg)?;
    Ok(())
}
