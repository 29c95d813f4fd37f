//! Rendering of experiment results: aligned text tables, CSV files, and an
//! actual-vs-predicted chart.
//!
//! Every output file embeds the config hash and master seed in `#` comment
//! lines, so results can be traced back to the exact experiment that
//! produced them. All rendering is deterministic.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::harness::{ExperimentConfig, HarnessError, SummaryTable, TrialRecord};

const AXES: [&str; 6] = ["x", "y", "z", "phi", "theta", "psi"];

/// Provenance stamped into report files.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub config_sha256: String,
    pub master_seed: u64,
}

impl ReportMeta {
    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        Self {
            config_sha256: config_hash(cfg),
            master_seed: cfg.master_seed,
        }
    }

    fn comment_lines(&self) -> String {
        format!(
            "# config_sha256 {}\n# master_seed {}\n",
            self.config_sha256, self.master_seed
        )
    }
}

/// SHA-256 of the canonical JSON serialization of a config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Aligned plain-text table in the layout of the published results:
/// one column per axis (translations in cm, rotations in degrees) and one
/// row each for the actual and predicted standard deviations.
pub fn render_text_table(table: &SummaryTable, title: &str) -> String {
    let colw = 13;
    let headers = [
        "std err x (cm)",
        "std err y (cm)",
        "std err z (cm)",
        "std err phi (deg)",
        "std err theta (deg)",
        "std err psi (deg)",
    ];
    let convert = |values: &[f64; 6]| -> Vec<String> {
        (0..6)
            .map(|k| {
                let v = if k < 3 {
                    values[k] * 100.0
                } else {
                    values[k].to_degrees()
                };
                format!("{v:.6}")
            })
            .collect()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<10}", "");
    for h in headers {
        let _ = write!(out, " {h:>colw$}");
    }
    let _ = writeln!(out);
    for (label, values) in [("Actual", &table.actual_sigma), ("Predicted", &table.mean_predicted_sigma)] {
        let _ = write!(out, "{label:<10}");
        for cell in convert(values) {
            let _ = write!(out, " {cell:>colw$}");
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(
        out,
        "{} of {} trials rejected; mean error (m/rad): [{}]",
        table.rejected,
        table.total,
        table
            .mean_error
            .iter()
            .map(|e| format!("{e:+.2e}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    out
}

/// Writes the per-axis summary as CSV (SI units), with provenance comments.
pub fn write_summary_csv(
    path: &Path,
    table: &SummaryTable,
    meta: &ReportMeta,
) -> Result<(), HarnessError> {
    let err = io_err(path);
    let mut w = BufWriter::new(File::create(path).map_err(&err)?);
    write!(w, "{}", meta.comment_lines()).map_err(&err)?;
    writeln!(w, "axis,actual_sigma,mean_predicted_sigma,mean_error").map_err(&err)?;
    for k in 0..6 {
        writeln!(
            w,
            "{},{},{},{}",
            AXES[k], table.actual_sigma[k], table.mean_predicted_sigma[k], table.mean_error[k]
        )
        .map_err(&err)?;
    }
    writeln!(w, "rejected,{},,", table.rejected).map_err(&err)?;
    writeln!(w, "total,{},,", table.total).map_err(&err)?;
    w.flush().map_err(&err)
}

fn opt_fields(values: &Option<[f64; 6]>) -> Vec<String> {
    match values {
        Some(v) => v.iter().map(|x| x.to_string()).collect(),
        None => vec![String::new(); 6],
    }
}

/// Writes one CSV row per trial, with provenance comments.
pub fn write_records_csv(
    path: &Path,
    records: &[TrialRecord],
    meta: &ReportMeta,
) -> Result<(), HarnessError> {
    let err = io_err(path);
    let mut w = BufWriter::new(File::create(path).map_err(&err)?);
    write!(w, "{}", meta.comment_lines()).map_err(&err)?;
    write!(w, "location,trial").map_err(&err)?;
    for group in ["truth", "est", "err", "sigma"] {
        for axis in AXES {
            write!(w, ",{group}_{axis}").map_err(&err)?;
        }
    }
    writeln!(w, ",iterations,converged,rejected,reject_reason").map_err(&err)?;
    for r in records {
        let truth: Vec<String> = r.truth_state.iter().map(|x| x.to_string()).collect();
        let reason = r
            .reject_reason
            .as_deref()
            .unwrap_or("")
            .replace([',', '\n'], ";");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.location,
            r.trial,
            truth.join(","),
            opt_fields(&r.estimated_state).join(","),
            opt_fields(&r.error).join(","),
            opt_fields(&r.predicted_sigma).join(","),
            r.iterations,
            r.converged,
            format_args!("{},{}", r.rejected, reason),
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

fn parse_group(fields: &[&str]) -> Option<[f64; 6]> {
    if fields.iter().all(|f| f.is_empty()) {
        return None;
    }
    let mut out = [0.0; 6];
    for (k, f) in fields.iter().enumerate() {
        out[k] = f.parse().ok()?;
    }
    Some(out)
}

/// Recovers the provenance comments from a records CSV, if present.
pub fn read_records_meta(path: &Path) -> Result<Option<ReportMeta>, HarnessError> {
    let err = io_err(path);
    let reader = BufReader::new(File::open(path).map_err(&err)?);
    let mut hash = None;
    let mut seed = None;
    for line in reader.lines() {
        let line = line.map_err(&err)?;
        let Some(rest) = line.strip_prefix("# ") else {
            break;
        };
        let mut fields = rest.split_whitespace();
        match fields.next() {
            Some("config_sha256") => hash = fields.next().map(str::to_string),
            Some("master_seed") => seed = fields.next().and_then(|s| s.parse().ok()),
            _ => {}
        }
    }
    Ok(match (hash, seed) {
        (Some(config_sha256), Some(master_seed)) => Some(ReportMeta {
            config_sha256,
            master_seed,
        }),
        _ => None,
    })
}

/// Reads a records CSV written by [`write_records_csv`].
pub fn read_records_csv(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    let err = io_err(path);
    let malformed = |detail: String| HarnessError::MalformedRecords {
        path: path.display().to_string(),
        detail,
    };
    let reader = BufReader::new(File::open(path).map_err(&err)?);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(&err)?;
        if line.is_empty() || line.starts_with('#') || line.starts_with("location,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 30 {
            return Err(malformed(format!(
                "line {}: expected 30 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let bad = |what: &str| malformed(format!("line {}: bad {what}", lineno + 1));
        let truth =
            parse_group(&fields[2..8]).ok_or_else(|| bad("truth state"))?;
        records.push(TrialRecord {
            location: fields[0].parse().map_err(|_| bad("location"))?,
            trial: fields[1].parse().map_err(|_| bad("trial"))?,
            truth_state: truth,
            estimated_state: parse_group(&fields[8..14]),
            error: parse_group(&fields[14..20]),
            predicted_sigma: parse_group(&fields[20..26]),
            iterations: fields[26].parse().map_err(|_| bad("iterations"))?,
            converged: fields[27].parse().map_err(|_| bad("converged"))?,
            rejected: fields[28].parse().map_err(|_| bad("rejected"))?,
            reject_reason: (!fields[29].is_empty()).then(|| fields[29].to_string()),
        });
    }
    Ok(records)
}

/// Writes a bar chart of per-axis actual/predicted sigma ratios as SVG.
/// A ratio of 1 (dashed line) means the prediction matches reality.
pub fn write_ratio_chart_svg(
    path: &Path,
    table: &SummaryTable,
    title: &str,
    meta: &ReportMeta,
) -> Result<(), HarnessError> {
    let err = io_err(path);
    let ratios = table.consistency_ratios();
    let (width, height) = (520.0, 300.0);
    let (left, bottom, top) = (50.0, 40.0, 30.0);
    let plot_w = width - left - 20.0;
    let plot_h = height - bottom - top;
    let max_ratio = ratios.iter().cloned().fold(1.5f64, f64::max) * 1.1;
    let bar_w = plot_w / 6.0 * 0.6;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        "<!-- config_sha256 {} master_seed {} -->",
        meta.config_sha256, meta.master_seed
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="13" text-anchor="middle">{title}: actual / predicted sigma</text>"#,
        width / 2.0
    );
    let y_of = |ratio: f64| top + plot_h * (1.0 - ratio / max_ratio);
    // Axes and the ratio = 1 reference line.
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        top + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="gray" stroke-dasharray="4 3"/>"#,
        y_of(1.0),
        left + plot_w
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10">1.0</text>"#,
        left - 24.0,
        y_of(1.0) + 3.0
    );
    for (k, ratio) in ratios.iter().enumerate() {
        let cx = left + plot_w * (k as f64 + 0.5) / 6.0;
        let y = y_of(*ratio);
        let _ = writeln!(
            svg,
            r#"<rect x="{:.4}" y="{:.4}" width="{:.4}" height="{:.4}" fill="steelblue"/>"#,
            cx - bar_w / 2.0,
            y,
            bar_w,
            top + plot_h - y
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.4}" y="{:.4}" font-family="sans-serif" font-size="10" text-anchor="middle">{:.2}</text>"#,
            y - 4.0,
            ratio
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.4}" y="{:.4}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            top + plot_h + 16.0,
            AXES[k]
        );
    }
    let _ = writeln!(svg, "</svg>");
    let mut w = BufWriter::new(File::create(path).map_err(&err)?);
    w.write_all(svg.as_bytes()).map_err(&err)?;
    w.flush().map_err(&err)
}
