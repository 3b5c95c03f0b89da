//! Output files: trajectory and RMS CSVs, SVG figures, and a manifest with
//! SHA-256 checksums of everything written.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::divergence::DivergenceSeries;
use crate::simulation::RunRecord;
use crate::sweep::SweepResult;

/// Environment variable that replaces the default output directory.
pub const OUT_DIR_ENV: &str = "QCORR_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "qcorr-out";

pub const TRAJECTORY_COLUMNS: [&str; 6] = ["member", "t", "x_quantum", "p_quantum", "x_classical", "p_classical"];
pub const RMS_COLUMNS: [&str; 2] = ["t", "rms"];

/// `--out` if given, else `$QCORR_OUT_DIR`, else `qcorr-out`.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUT_DIR),
    }
}

pub fn trajectories_csv<'a, I>(runs: I) -> csv::Result<Vec<u8>>
where
    I: IntoIterator<Item = &'a RunRecord>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_COLUMNS)?;
    for (m, run) in runs.into_iter().enumerate() {
        for ((t, q), c) in run.quantum.iter().zip(&run.classical) {
            w.write_record([
                m.to_string(),
                t.to_string(),
                q.x.to_string(),
                q.p.to_string(),
                c.x.to_string(),
                c.p.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn rms_csv(series: &DivergenceSeries) -> csv::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RMS_COLUMNS)?;
    for (t, d) in &series.samples {
        w.write_record([t.to_string(), d.to_string()])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn sweep_csv(result: &SweepResult) -> csv::Result<Vec<u8>> {
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    Ok(buf)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Linear map from a data interval (with 5% margin) onto pixels.
struct Axis {
    lo: f64,
    hi: f64,
    px0: f64,
    px1: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, px0: f64, px1: f64) -> Axis {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            lo = -1.0;
            hi = 1.0;
        }
        let span = hi - lo;
        let pad = if span > 0.0 { 0.05 * span } else { 0.5 * lo.abs().max(1.0) };
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            px0,
            px1,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.px0 + (v - self.lo) / (self.hi - self.lo) * (self.px1 - self.px0)
    }
}

pub const PORTRAIT_MARKER_RADIUS: f64 = 2.5;

/// Phase portrait: position horizontal, momentum vertical. The classical
/// reference is a solid line; the sampled quantum points are a dashed line
/// with markers.
pub fn phase_portrait_svg(record: &RunRecord) -> String {
    let (w, h, m) = (640.0, 480.0, 56.0);
    let xs = record.classical.iter().map(|c| c.x).chain(record.quantum.iter().map(|q| q.1.x));
    let ps = record.classical.iter().map(|c| c.p).chain(record.quantum.iter().map(|q| q.1.p));
    let ax = Axis::fit(xs, m, w - m / 2.0);
    let ay = Axis::fit(ps, h - m, m / 2.0);
    let points = |pts: &mut dyn Iterator<Item = (f64, f64)>| {
        let mut s = String::new();
        for (x, p) in pts {
            let _ = write!(s, "{:.3},{:.3} ", ax.map(x), ay.map(p));
        }
        s.trim_end().to_string()
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{m}" y="{}" width="{}" height="{}" fill="none" stroke="#444" stroke-width="1"/>"##,
        m / 2.0,
        w - 1.5 * m,
        h - 1.5 * m
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">x</text>"#,
        (m + w - m / 2.0) / 2.0,
        h - 18.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">p</text>"#,
        (h - m + m / 2.0) / 2.0
    );
    for (label, v, x, y) in [
        ("x", ax.lo, m, h - m + 16.0),
        ("x", ax.hi, w - m / 2.0, h - m + 16.0),
        ("p", ay.lo, m - 4.0, h - m),
        ("p", ay.hi, m - 4.0, m / 2.0 + 10.0),
    ] {
        let anchor = if label == "p" { "end" } else { "middle" };
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{v:.3}</text>"#
        );
    }
    if !record.classical.is_empty() {
        let _ = writeln!(
            svg,
            r##"<polyline id="classical" fill="none" stroke="#1f4e99" stroke-width="1.5" points="{}"/>"##,
            points(&mut record.classical.iter().map(|c| (c.x, c.p)))
        );
    }
    if !record.quantum.is_empty() {
        let _ = writeln!(
            svg,
            r##"<polyline id="quantum" fill="none" stroke="#c8432b" stroke-width="1" stroke-dasharray="4 3" points="{}"/>"##,
            points(&mut record.quantum.iter().map(|(_, q)| (q.x, q.p)))
        );
        let _ = writeln!(svg, r##"<g id="samples" fill="#c8432b">"##);
        for (_, q) in &record.quantum {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.3}" cy="{:.3}" r="{PORTRAIT_MARKER_RADIUS}"/>"#,
                ax.map(q.x),
                ay.map(q.p)
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="16" text-anchor="end" font-family="sans-serif" font-size="11"><tspan fill="#1f4e99">classical</tspan> / <tspan fill="#c8432b">measured</tspan> (seed {})</text>"##,
        w - m / 2.0,
        record.seed
    );
    svg.push_str("</svg>\n");
    svg
}

const VIRIDIS: [(u8, u8, u8); 9] = [
    (0x44, 0x01, 0x54),
    (0x48, 0x28, 0x78),
    (0x3e, 0x49, 0x89),
    (0x31, 0x68, 0x8e),
    (0x26, 0x82, 0x8e),
    (0x1f, 0x9e, 0x89),
    (0x35, 0xb7, 0x79),
    (0x6e, 0xce, 0x58),
    (0xfd, 0xe7, 0x25),
];

/// Viridis ramp at `u` in [0, 1], as `#rrggbb`.
pub fn viridis(u: f64) -> String {
    let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.5 };
    let pos = u * (VIRIDIS.len() - 1) as f64;
    let k = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - k as f64;
    let (a, b) = (VIRIDIS[k], VIRIDIS[k + 1]);
    let lerp = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(a.0, b.0), lerp(a.1, b.1), lerp(a.2, b.2))
}

fn short(v: f64) -> String {
    format!("{v:e}")
}

/// Heatmap of log divergence time: hbar horizontal, dt vertical (both log
/// spaced, so cells are uniform). Censored cells are hatched, failed cells
/// are grey with a cross.
pub fn heatmap_svg(result: &SweepResult) -> String {
    let nh = result.hbar_values.len();
    let nd = result.dt_values.len();
    let (left, top, cell) = (80.0, 30.0, (480.0 / nh.max(nd) as f64).clamp(6.0, 60.0));
    let (fw, fh) = (cell * nh as f64, cell * nd as f64);
    let bar_x = left + fw + 30.0;
    let (w, h) = (bar_x + 100.0, top + fh + 60.0);

    let logs: Vec<f64> = result
        .cells
        .iter()
        .filter_map(|c| c.divergence_time)
        .filter(|t| *t > 0.0)
        .map(f64::ln)
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm = |t: f64| if hi > lo { (t.ln() - lo) / (hi - lo) } else { 0.5 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    svg.push_str(concat!(
        r#"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"#,
        r#"<line x1="0" y1="0" x2="0" y2="6" stroke="white" stroke-width="1.5"/></pattern></defs>"#,
        "\n"
    ));
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<g id="cells">"#);
    for c in &result.cells {
        // dt grows upwards
        let x = left + c.i as f64 * cell;
        let y = top + (nd - 1 - c.j) as f64 * cell;
        match c.divergence_time {
            Some(t) => {
                let _ = writeln!(
                    svg,
                    r#"<rect class="cell" data-i="{}" data-j="{}" data-time="{t}" x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}"/>"#,
                    c.i,
                    c.j,
                    viridis(norm(t))
                );
                if c.censored {
                    let _ = writeln!(
                        svg,
                        r#"<rect class="censored" x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="url(#hatch)"/>"#
                    );
                }
            }
            None => {
                let _ = writeln!(
                    svg,
                    r##"<rect class="failed" data-i="{}" data-j="{}" x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="#999"><title>{}</title></rect>"##,
                    c.i,
                    c.j,
                    escape(c.error.as_deref().unwrap_or("failed"))
                );
                let _ = writeln!(
                    svg,
                    r#"<path d="M{x:.2},{y:.2} l{cell:.2},{cell:.2} M{:.2},{y:.2} l-{cell:.2},{cell:.2}" stroke="white"/>"#,
                    x + cell
                );
            }
        }
    }
    let _ = writeln!(svg, "</g>");

    let text = |svg: &mut String, x: f64, y: f64, anchor: &str, class: &str, body: &str| {
        let _ = writeln!(
            svg,
            r#"<text class="{class}" x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{body}</text>"#
        );
    };
    if let (Some(a), Some(b)) = (result.hbar_values.first(), result.hbar_values.last()) {
        text(&mut svg, left + cell / 2.0, top + fh + 16.0, "middle", "tick-x", &short(*a));
        text(&mut svg, left + fw - cell / 2.0, top + fh + 16.0, "middle", "tick-x", &short(*b));
    }
    if let (Some(a), Some(b)) = (result.dt_values.first(), result.dt_values.last()) {
        text(&mut svg, left - 6.0, top + fh - cell / 2.0 + 4.0, "end", "tick-y", &short(*a));
        text(&mut svg, left - 6.0, top + cell / 2.0 + 4.0, "end", "tick-y", &short(*b));
    }
    text(&mut svg, left + fw / 2.0, top + fh + 40.0, "middle", "label", "hbar (log)");
    let _ = writeln!(
        svg,
        r#"<text class="label" x="20" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11" transform="rotate(-90 20 {:.2})">dt (log)</text>"#,
        top + fh / 2.0,
        top + fh / 2.0
    );

    // colorbar, top = longest time
    let steps = 32;
    let bar_h = fh.max(60.0);
    let _ = writeln!(svg, r#"<g id="colorbar">"#);
    for s in 0..steps {
        let u = 1.0 - (s as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{bar_x:.2}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            top + s as f64 * bar_h / steps as f64,
            bar_h / steps as f64 + 0.5,
            viridis(if hi > lo { u } else { 0.5 })
        );
    }
    let _ = writeln!(svg, "</g>");
    let (tmin, tmax) = if lo.is_finite() { (lo.exp(), hi.exp()) } else { (f64::NAN, f64::NAN) };
    text(&mut svg, bar_x + 20.0, top + 10.0, "start", "bar", &format!("{tmax:.3} s"));
    text(&mut svg, bar_x + 20.0, top + bar_h, "start", "bar", &format!("{tmin:.3} s"));
    text(&mut svg, bar_x, top - 10.0, "start", "bar", "divergence time");
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// The config file written next to the outputs; feeding it back with
    /// `--config` reproduces them.
    pub config_file: String,
    pub notes: Vec<String>,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";
pub const CONFIG_SNAPSHOT_NAME: &str = "config.cfg";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Files collected in memory and written together with their manifest.
#[derive(Debug, Default)]
pub struct OutputBundle {
    files: Vec<(String, Vec<u8>, Option<Vec<String>>)>,
}

impl OutputBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into(), None));
    }

    pub fn add_table(&mut self, name: &str, bytes: Vec<u8>, columns: &[&str]) {
        self.files
            .push((name.to_string(), bytes, Some(columns.iter().map(|c| c.to_string()).collect())));
    }

    pub fn write(self, dir: &Path, command: &str, seed: u64, notes: Vec<String>) -> io::Result<Manifest> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for (name, bytes, columns) in &self.files {
            fs::write(dir.join(name), bytes)?;
            entries.push(ManifestEntry {
                name: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
                columns: columns.clone(),
            });
        }
        let manifest = Manifest {
            tool: "qcorr".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_file: CONFIG_SNAPSHOT_NAME.into(),
            notes,
            files: entries,
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
        fs::write(dir.join(MANIFEST_NAME), json)?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> io::Result<Manifest> {
    let text = fs::read(dir.join(MANIFEST_NAME))?;
    serde_json::from_slice(&text).map_err(io::Error::other)
}

/// Recomputes every checksum listed in the manifest. Returns the names of
/// files that are missing or changed.
pub fn verify_manifest(dir: &Path, manifest: &Manifest) -> Vec<String> {
    manifest
        .files
        .iter()
        .filter(|e| match fs::read(dir.join(&e.name)) {
            Ok(b) => sha256_hex(&b) != e.sha256,
            Err(_) => true,
        })
        .map(|e| e.name.clone())
        .collect()
}
