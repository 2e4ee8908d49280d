//! The `diagnose` command: re-checks a finished run directory.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use selfmix_core::localization::{localization_forward_check, symmetrization_peak, PairKernelField};
use selfmix_core::AlphaField;

use crate::config::{build_model, parse_config};
use crate::output::{column, list_snapshots, read_snapshot, read_table};
use crate::CliError;

pub const DRIFT_TOL: f64 = 1e-10;
pub const IMPULSE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-15;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const LOCALIZATION_TOL: f64 = 1e-12;
pub const LOCALIZATION_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl CheckResult {
    fn bound(name: &'static str, value: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name,
            verdict: if value <= tolerance { Verdict::Pass } else { Verdict::Fail },
            value: Some(value),
            tolerance: Some(tolerance),
            detail,
        }
    }

    fn skip(name: &'static str, detail: impl Into<String>) -> Self {
        Self {
            name,
            verdict: Verdict::Skip,
            value: None,
            tolerance: None,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        let verdict = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        };
        format!("{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub run_dir: String,
    pub snapshot_step: u64,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct DiagnoseOptions {
    /// Adds this constant to every mixer sample before the kernel checks.
    pub inject_symmetric_defect: Option<f64>,
}

fn max_abs_column(dir: &Path, file: &str, name: &str) -> anyhow::Result<f64> {
    let (header, rows) = read_table(&dir.join(file)).with_context(|| format!("{file} is required"))?;
    let c = column(&header, name).with_context(|| format!("in {file}"))?;
    Ok(rows.iter().fold(0.0, |m, r| m.max(r[c].abs())))
}

pub fn diagnose(dir: &Path, options: &DiagnoseOptions) -> Result<Report, CliError> {
    if !dir.is_dir() {
        return Err(anyhow::anyhow!("{} is not a directory", dir.display()).into());
    }
    let config_path = dir.join("config.json");
    if !config_path.exists() {
        return Err(anyhow::anyhow!("{}: no config.json, not a run directory", dir.display()).into());
    }
    let config = parse_config(&config_path)?;
    let (model, _) = build_model(&config)?;
    let snapshots = list_snapshots(dir)?;
    let Some((step, path)) = snapshots.last() else {
        return Err(anyhow::anyhow!("{}: no snapshots", dir.display()).into());
    };
    let mut checks = Vec::new();

    let drift = max_abs_column(dir, "ledger.csv", "drift")?;
    checks.push(CheckResult::bound(
        "mass_drift",
        drift,
        DRIFT_TOL,
        format!("max relative mass drift {drift:e} (tol {DRIFT_TOL:e})"),
    ));

    if model.params.gravity.iter().all(|g| *g == 0.0) {
        let r = max_abs_column(dir, "ledger.csv", "impulse_residual")?;
        checks.push(CheckResult::bound(
            "impulse_budget",
            r,
            IMPULSE_TOL,
            format!("max relative impulse-budget residual {r:e} (tol {IMPULSE_TOL:e})"),
        ));
    } else {
        checks.push(CheckResult::skip(
            "impulse_budget",
            "body force present; the mass law carries no force, so the budget is off by it",
        ));
    }

    let (header, rows) = read_table(&dir.join("moments.csv")).context("moments.csv is required")?;
    let (lo, hi) = (column(&header, "min_rho")?, column(&header, "max_rho")?);
    let worst = rows
        .iter()
        .filter(|r| r[hi] > 0.0)
        .fold(f64::INFINITY, |m, r| m.min(r[lo] / r[hi]));
    let worst = if worst.is_finite() { worst } else { 0.0 };
    checks.push(CheckResult::bound(
        "positivity",
        -worst,
        POSITIVITY_TOL,
        format!("min rho / max rho = {worst:e} (floor -{POSITIVITY_TOL:e})"),
    ));

    let snap = read_snapshot(path)?;
    if snap.n_cells != model.spatial.n_cells() || snap.n_nodes != model.velocity.len() {
        return Err(anyhow::anyhow!(
            "{}: {} cells x {} nodes, config describes {} x {}",
            path.display(),
            snap.n_cells,
            snap.n_nodes,
            model.spatial.n_cells(),
            model.velocity.len()
        )
        .into());
    }
    // tiny negatives within the solver's tolerance are clipped for the kernel checks
    let values: Vec<f64> = snap.values.iter().map(|v| v.max(0.0)).collect();
    let field = AlphaField::from_values(snap.n_cells, snap.n_nodes, values).map_err(anyhow::Error::from)?;
    let mut kernel = PairKernelField::from_mass_mixer(&field, &model.velocity, &model.params);
    if let Some(a) = options.inject_symmetric_defect {
        kernel.add_symmetric_defect(a);
        kernel.balance_d(&model.velocity);
    }
    let peak = symmetrization_peak(&kernel);
    let fmax = kernel.max_abs_f();
    let rel = if fmax > 0.0 { peak.max_abs / fmax } else { 0.0 };
    checks.push(CheckResult::bound(
        "symmetrization",
        rel,
        SYMMETRY_TOL,
        format!(
            "max |M(a_j,a_k) + M(a_k,a_j)| / max |M| = {rel:e} at cell {}, nodes ({}, {})",
            peak.cell, peak.j, peak.k
        ),
    ));

    match localization_forward_check(&kernel, &model.spatial, &model.velocity, LOCALIZATION_TRIALS, config.seed) {
        Ok(r) => checks.push(CheckResult::bound(
            "localization",
            r.max_relative,
            LOCALIZATION_TOL,
            format!("{} trials, max relative residual {:e}", r.trials, r.max_relative),
        )),
        Err(e) => checks.push(CheckResult {
            name: "localization",
            verdict: Verdict::Fail,
            value: None,
            tolerance: Some(LOCALIZATION_TOL),
            detail: e.to_string(),
        }),
    }

    let report = Report {
        run_dir: dir.display().to_string(),
        snapshot_step: *step,
        checks,
    };
    std::fs::write(dir.join("diagnose.json"), serde_json::to_string_pretty(&report).expect("serializable"))
        .context("cannot write diagnose.json")?;
    Ok(report)
}
