//! Run reports and the files written next to them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{ObservableRecord, VelocityFit};
use crate::model::FieldState;
use crate::residual::{AuditEntry, ChoquardReport, ResidualReport};
use crate::spectral::TRANSFORM_CONVENTION;

/// One pass/fail line, tied to an acceptance criterion by `id`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    pub fn new(id: u8, name: &str, passed: bool, detail: String) -> Self {
        Self { id, name: name.into(), passed, detail }
    }

    pub fn line(&self) -> String {
        format!("criterion {:>2} [{}] {}: {}", self.id, if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Series {
    pub name: String,
    pub records: Vec<ObservableRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: VelocityFit,
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub status: String,
    pub error: Option<String>,
    pub config: String,
    pub criteria: Vec<Criterion>,
    pub residuals: Vec<ResidualReport>,
    pub audit: Vec<AuditEntry>,
    pub choquard: Option<ChoquardReport>,
    pub velocity_fits: Vec<NamedFit>,
    pub findings: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub steps: usize,
    pub wall_clock_s: f64,
    #[serde(skip)]
    pub series: Vec<Series>,
    #[serde(skip)]
    pub snapshots: Vec<(String, FieldState)>,
    /// Per-run reports of a sweep, in sweep order.
    pub children: Vec<RunReport>,
}

impl RunReport {
    pub fn new(scenario: &str, config: String) -> Self {
        Self {
            scenario: scenario.into(),
            status: "ok".into(),
            error: None,
            config,
            criteria: Vec::new(),
            residuals: Vec::new(),
            audit: Vec::new(),
            choquard: None,
            velocity_fits: Vec::new(),
            findings: Vec::new(),
            metrics: BTreeMap::new(),
            steps: 0,
            wall_clock_s: 0.0,
            series: Vec::new(),
            snapshots: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed) && self.children.iter().all(|c| c.all_passed())
    }

    pub fn criterion(&self, id: u8) -> Vec<&Criterion> {
        self.criteria.iter().filter(|c| c.id == id).collect()
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

pub fn write_series_csv(path: &Path, records: &[ObservableRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "norm", "centroid", "width", "peak_pos", "peak_abs", "phi_min", "valid"])?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.norm.to_string(),
            r.centroid.to_string(),
            r.width.to_string(),
            r.peak_pos.to_string(),
            r.peak_abs.to_string(),
            r.phi_min.to_string(),
            r.valid.to_string(),
        ])?;
    }
    w.flush()
}

fn snapshot_header(state: &FieldState) -> String {
    let g = &state.grid;
    let p = &state.params;
    format!(
        "# dim={} n={} length={} spacing={} t={} {} M={} m={} v={} transverse_k2={}",
        g.dim,
        g.n,
        g.length,
        g.spacing,
        state.t,
        TRANSFORM_CONVENTION,
        p.electron_mass,
        p.higgs_mass,
        p.vev,
        g.transverse_k2()
    )
}

/// 1D: text header then `x, re_psi, im_psi, phi` rows. 3D: text header line,
/// then little-endian f64 triples `(re_psi, im_psi, phi)` in flat index order.
pub fn write_snapshot(path: &Path, state: &FieldState) -> std::io::Result<()> {
    let header = snapshot_header(state);
    if state.grid.dim == 1 {
        let mut f = fs::File::create(path)?;
        writeln!(f, "{header}")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["x", "re_psi", "im_psi", "phi"])?;
        for (x, (z, phi)) in state.grid.coords().iter().zip(state.psi.iter().zip(&state.phi)) {
            w.write_record([x.to_string(), z.re.to_string(), z.im.to_string(), phi.to_string()])?;
        }
        w.flush()
    } else {
        let mut buf = Vec::with_capacity(state.psi.len() * 24 + 256);
        writeln!(buf, "{header} layout=index(ix,iy,iz)=(ix*n+iy)*n+iz fields=re_psi,im_psi,phi f64-le")?;
        for (z, phi) in state.psi.iter().zip(&state.phi) {
            for v in [z.re, z.im, *phi] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, buf)
    }
}

fn plot_script(report: &RunReport, csv_names: &[String]) -> String {
    let mut s = format!("# gnuplot script for {}\nset datafile separator ','\nset key autotitle columnhead\n", report.scenario);
    for name in csv_names {
        let stem = name.trim_end_matches(".csv");
        s.push_str(&format!(
            "set terminal pngcairo size 900,600\nset output '{stem}_width.png'\nset xlabel 't'\nplot '{name}' using 1:4 with lines title 'width'\n\
             set output '{stem}_peak.png'\nplot '{name}' using 1:5 with lines title 'peak position'\n\
             set output '{stem}_norm.png'\nplot '{name}' using 1:2 with lines title 'norm'\n"
        ));
    }
    s
}

/// Write `report.json`, per-series CSVs, snapshots and `plot.gp` into `dir`.
/// A failed run also leaves a `FAILED` marker.
pub fn write_artifacts(report: &RunReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut csv_names = Vec::new();
    for s in &report.series {
        let name = format!("{}.csv", s.name);
        let path = dir.join(&name);
        write_series_csv(&path, &s.records)?;
        csv_names.push(name);
        written.push(path);
    }
    for (name, state) in &report.snapshots {
        let ext = if state.grid.dim == 1 { "csv" } else { "bin" };
        let path = dir.join(format!("{name}.{ext}"));
        write_snapshot(&path, state)?;
        written.push(path);
    }
    if !csv_names.is_empty() {
        let path = dir.join("plot.gp");
        fs::write(&path, plot_script(report, &csv_names))?;
        written.push(path);
    }
    for (k, child) in report.children.iter().enumerate() {
        written.extend(write_artifacts(child, &dir.join(format!("run_{k:03}")))?);
    }
    let path = dir.join("report.json");
    fs::write(&path, report.to_json())?;
    written.push(path);
    let marker = dir.join("FAILED");
    if report.status != "ok" {
        fs::write(&marker, report.error.clone().unwrap_or_default())?;
        written.push(marker);
    } else if marker.exists() {
        fs::remove_file(marker)?;
    }
    Ok(written)
}
