//! File formats: CSV snapshots and time series, PGM heatmaps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use selfmix_core::{mass_density, AlphaField, SpatialGrid, VelocityGrid};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn snapshot_name(step: u64) -> String {
    format!("rho_t{step}.csv")
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn node_label(node: &[f64]) -> String {
    let parts: Vec<String> = node.iter().map(|c| fmt_f64(*c)).collect();
    format!("a({})", parts.join(" "))
}

/// One row per spatial cell: the cell center, then the density at every
/// velocity node. The header names the coordinates and the node vectors.
pub fn write_snapshot(path: &Path, field: &AlphaField, spatial: &SpatialGrid, velocity: &VelocityGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut header: Vec<String> = AXES[..spatial.dim()].iter().map(|s| s.to_string()).collect();
    header.extend(velocity.nodes().map(node_label));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for cell in 0..spatial.n_cells() {
        record.clear();
        record.extend(spatial.center(cell).into_iter().map(fmt_f64));
        record.extend(field.row(cell).iter().map(|v| fmt_f64(*v)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub n_cells: usize,
    pub n_nodes: usize,
    pub centers: Vec<Vec<f64>>,
    pub nodes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

fn parse_node_label(label: &str) -> Option<Vec<f64>> {
    let inner = label.strip_prefix("a(")?.strip_suffix(')')?;
    inner.split_whitespace().map(|s| s.parse().ok()).collect()
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = r.headers()?.clone();
    let dim = header.iter().take_while(|h| AXES.contains(h)).count();
    if dim == 0 {
        bail!("{}: header has no coordinate columns", path.display());
    }
    let nodes: Vec<Vec<f64>> = header
        .iter()
        .skip(dim)
        .map(|h| parse_node_label(h).with_context(|| format!("{}: bad node column `{h}`", path.display())))
        .collect::<Result<_>>()?;
    let n_nodes = nodes.len();
    let mut centers = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + n_nodes {
            bail!("{}: row {} has {} columns, expected {}", path.display(), line + 2, rec.len(), dim + n_nodes);
        }
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: row {} is not numeric", path.display(), line + 2))?;
        centers.push(nums[..dim].to_vec());
        values.extend_from_slice(&nums[dim..]);
    }
    Ok(Snapshot {
        dim,
        n_cells: centers.len(),
        n_nodes,
        centers,
        nodes,
        values,
    })
}

/// Snapshot files in `dir`, sorted by step.
pub fn list_snapshots(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(step) = name.strip_prefix("rho_t").and_then(|s| s.strip_suffix(".csv")) {
            if let Ok(step) = step.parse() {
                out.push((step, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// A CSV table written row by row.
pub struct Table {
    w: csv::Writer<BufWriter<File>>,
}

impl Table {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(header)?;
        Ok(Self { w })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// Numeric columns of a CSV written by [`Table`], keyed by header.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: non-numeric entry", path.display()))?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .with_context(|| format!("missing column `{name}`"))
}

/// Binary greymap of the mass density, min-max scaled. The `y` axis points
/// up, so the last grid row is the first image row. Returns the bounds.
pub fn write_pgm(path: &Path, field: &AlphaField, spatial: &SpatialGrid, velocity: &VelocityGrid) -> Result<(f64, f64)> {
    let rho = mass_density(field, velocity);
    let lo = rho.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cells = spatial.cells_per_axis();
    let (width, height) = (cells[0], if spatial.dim() > 1 { cells[1] } else { 1 });
    let mut bytes = Vec::with_capacity(width * height + 32);
    write!(bytes, "P5\n{width} {height}\n255\n")?;
    let span = hi - lo;
    for row in (0..height).rev() {
        for col in 0..width {
            let v = rho[row * width + col];
            let g = if span > 0.0 { ((v - lo) / span * 255.0).round() } else { 0.0 };
            bytes.push(g.clamp(0.0, 255.0) as u8);
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    Ok((lo, hi))
}
