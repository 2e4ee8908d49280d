//! The `simulate` command: run a config and write snapshots, the moment and
//! ledger time series and a summary.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use selfmix_core::{
    angular_momentum, energy_update, field_stats, impulse_budget, run, total_impulse, AlphaField, LedgerEntry, Model,
    SolverState, StepRecord,
};

use crate::config::{OutputFormat, Problem, RunConfig};
use crate::output::{fmt_f64, snapshot_name, write_pgm, write_snapshot, Table};
use crate::{classify, CliError};

/// Number of ledger entries copied into the summary.
pub const LEDGER_TAIL: usize = 10;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LedgerRow {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub boundary_inflow: f64,
    pub drift: f64,
}

impl From<&LedgerEntry> for LedgerRow {
    fn from(e: &LedgerEntry) -> Self {
        Self {
            step: e.step,
            t: e.t,
            dt: e.dt,
            mass: e.mass,
            boundary_inflow: e.boundary_inflow,
            drift: e.drift,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PgmScaling {
    pub step: u64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub laminar: bool,
    pub seed: u64,
    pub n_cells: usize,
    pub n_nodes: usize,
    pub kappa: f64,
    pub steps: u64,
    pub t_final: f64,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub final_mass_drift: f64,
    pub max_mass_drift: f64,
    pub max_impulse_residual: f64,
    pub min_rho_ratio: f64,
    pub snapshots: Vec<u64>,
    pub pgm_scaling: Vec<PgmScaling>,
    pub ledger_tail: Vec<LedgerRow>,
    pub config: RunConfig,
}

struct Writer<'a> {
    dir: &'a Path,
    model: &'a Model,
    every: u64,
    pgm: bool,
    csv: bool,
    moments: Table,
    ledger: Table,
    prev: Option<AlphaField>,
    eps_rho: Vec<f64>,
    snapshots: Vec<u64>,
    pgm_scaling: Vec<PgmScaling>,
    max_impulse: f64,
    min_ratio: f64,
    mass0: f64,
    inflow: f64,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path, config: &RunConfig, model: &'a Model) -> anyhow::Result<Self> {
        let dim = model.spatial.dim();
        let mut header = vec!["t".to_string(), "total_mass".to_string()];
        header.extend(["x", "y"][..dim].iter().map(|a| format!("impulse_{a}")));
        header.extend(
            ["angular_momentum", "min_rho", "max_rho", "energy"]
                .iter()
                .map(|s| s.to_string()),
        );
        let moments = Table::create(&dir.join("moments.csv"), &header)?;
        let ledger_header: Vec<String> = ["step", "t", "dt", "mass", "boundary_inflow", "drift", "impulse_residual"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let ledger = Table::create(&dir.join("ledger.csv"), &ledger_header)?;
        Ok(Self {
            dir,
            model,
            every: config.output.every_n_steps,
            pgm: config.output.formats.contains(&OutputFormat::Pgm),
            csv: config.output.formats.contains(&OutputFormat::Csv),
            moments,
            ledger,
            prev: None,
            eps_rho: vec![0.0; model.spatial.n_cells()],
            snapshots: Vec::new(),
            pgm_scaling: Vec::new(),
            max_impulse: 0.0,
            min_ratio: f64::INFINITY,
            mass0: 0.0,
            inflow: 0.0,
        })
    }

    fn snapshot(&mut self, step: u64, field: &AlphaField) -> anyhow::Result<()> {
        if self.snapshots.last() == Some(&step) {
            return Ok(());
        }
        let m = self.model;
        if self.csv {
            write_snapshot(&self.dir.join(snapshot_name(step)), field, &m.spatial, &m.velocity)?;
        }
        if self.pgm {
            let (min, max) = write_pgm(&self.dir.join(format!("rho_t{step}.pgm")), field, &m.spatial, &m.velocity)?;
            self.pgm_scaling.push(PgmScaling { step, min, max });
        }
        self.snapshots.push(step);
        Ok(())
    }

    fn observe(&mut self, state: &SolverState, record: Option<&StepRecord>) -> anyhow::Result<()> {
        let m = self.model;
        let field = &state.field;
        let stats = field_stats(field, &m.velocity, &m.spatial);
        let mut residual = 0.0;
        match (record, self.prev.as_ref()) {
            (Some(rec), Some(prev)) => {
                self.eps_rho = energy_update(&self.eps_rho, prev, &state.last_increment, rec.dt, m)?;
                let budget = impulse_budget(prev, field, rec, m)?;
                residual = budget.relative;
                self.max_impulse = self.max_impulse.max(residual);
                let w = m.velocity.weights();
                let b: f64 = rec.rates.boundary_inflow.iter().zip(w).map(|(b, w)| b * w).sum();
                self.inflow += rec.dt * m.kappa() * b;
            }
            _ => self.mass0 = stats.total_mass,
        }
        if stats.max > 0.0 {
            self.min_ratio = self.min_ratio.min(stats.min / stats.max);
        }
        let dt = record.map_or(0.0, |r| r.dt);
        let drift = if self.mass0 > 0.0 {
            (stats.total_mass - self.mass0 - self.inflow) / self.mass0
        } else {
            0.0
        };
        self.ledger.row(&[
            state.step_count.to_string(),
            fmt_f64(state.t),
            fmt_f64(dt),
            fmt_f64(stats.total_mass),
            fmt_f64(self.inflow),
            fmt_f64(drift),
            fmt_f64(residual),
        ])?;

        let mut row = vec![fmt_f64(state.t), fmt_f64(stats.total_mass)];
        row.extend(total_impulse(field, &m.spatial, &m.velocity).into_iter().map(fmt_f64));
        row.push(fmt_f64(angular_momentum(field, &m.spatial, &m.velocity)));
        row.push(fmt_f64(stats.min));
        row.push(fmt_f64(stats.max));
        let energy: f64 = self.eps_rho.iter().sum::<f64>() * m.spatial.cell_volume();
        row.push(fmt_f64(energy));
        self.moments.row(&row)?;

        if record.is_none() || (self.every > 0 && state.step_count % self.every == 0) {
            self.snapshot(state.step_count, field)?;
        }
        self.prev = Some(field.clone());
        Ok(())
    }
}

/// Where a run writes: `--out` wins over `output.dir`.
pub fn resolve_out_dir(config: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map_or_else(|| config.output.dir.clone(), Path::to_path_buf)
}

pub fn simulate(config: &RunConfig, out_dir: &Path, seed: u64) -> Result<RunSummary, CliError> {
    let problem = Problem::build(config, seed)?;
    let model = &problem.model;
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;

    let mut echo = config.clone();
    echo.seed = seed;
    echo.output.dir = out_dir.to_path_buf();
    std::fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(&echo).expect("serializable"))
        .context("cannot write config echo")?;

    let mut writer = Writer::new(out_dir, config, model)?;
    let mut io_error: Option<anyhow::Error> = None;
    let mut observer = |state: &SolverState, record: Option<&StepRecord>| match writer.observe(state, record) {
        Ok(()) => Ok(()),
        Err(e) => {
            let msg = format!("{e:#}");
            io_error = Some(e);
            Err(selfmix_core::Error::Precondition(format!("output failed: {msg}")))
        }
    };
    let result = run(problem.initial.clone(), model, &problem.solver, &mut observer);

    let (state, ledger, failure) = match result {
        Ok(out) => (out.state, out.ledger, None),
        Err(f) => (f.state, f.ledger, Some(f.error)),
    };
    let failure = match (failure, io_error) {
        (_, Some(e)) => Some(CliError::Other(e)),
        (Some(e), None) => Some(classify(e)),
        (None, None) => None,
    };
    if failure.is_none() {
        writer.snapshot(state.step_count, &state.field)?;
    }
    let Writer {
        moments,
        ledger: ledger_table,
        snapshots,
        pgm_scaling,
        max_impulse,
        min_ratio,
        ..
    } = writer;
    moments.finish()?;
    ledger_table.finish()?;

    let first = ledger.first().expect("initial ledger entry");
    let last = ledger.last().expect("initial ledger entry");
    let summary = RunSummary {
        status: if failure.is_some() { "failed" } else { "ok" },
        error: failure.as_ref().map(|e| e.to_string()),
        laminar: problem.laminar,
        seed,
        n_cells: model.spatial.n_cells(),
        n_nodes: model.velocity.len(),
        kappa: model.kappa(),
        steps: state.step_count,
        t_final: state.t,
        mass_initial: first.mass,
        mass_final: last.mass,
        final_mass_drift: last.drift,
        max_mass_drift: ledger.iter().fold(0.0, |m, e| m.max(e.drift.abs())),
        max_impulse_residual: max_impulse,
        min_rho_ratio: if min_ratio.is_finite() { min_ratio } else { 0.0 },
        snapshots,
        pgm_scaling,
        ledger_tail: ledger[ledger.len().saturating_sub(LEDGER_TAIL)..]
            .iter()
            .map(LedgerRow::from)
            .collect(),
        config: echo,
    };
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("serializable"))
        .context("cannot write summary")?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
