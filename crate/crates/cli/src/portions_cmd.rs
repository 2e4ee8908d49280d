//! The `portions` command: seed tagged portions in spatial regions, evolve
//! them with the run and record their supports and pairwise overlaps.

use std::path::Path;
use std::str::FromStr;

use anyhow::Context;
use serde::Serialize;

use selfmix_core::{
    covering_set, evolve_tag, overlap_measure, run, seed_portion, PortionTag, SolverState, SpatialGrid, StepRecord,
    SupportSet,
};

use crate::config::{ConfigError, Problem, RunConfig};
use crate::output::{fmt_f64, Table};
use crate::{classify, CliError};

/// A named axis-aligned box in physical coordinates, or the whole domain.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub name: Option<String>,
    /// Half-open `[lo, hi)` per axis; `None` selects every cell.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl FromStr for RegionSpec {
    type Err = String;

    /// `[name=]all` or `[name=]lo:hi[,lo:hi]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, body) = match s.split_once('=') {
            Some((n, b)) if !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') => {
                (Some(n.to_string()), b)
            }
            Some(_) => return Err(format!("bad region name in `{s}`")),
            None => (None, s),
        };
        if body == "all" {
            return Ok(Self { name, bounds: None });
        }
        let mut bounds = Vec::new();
        for part in body.split(',') {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| format!("expected `lo:hi` per axis in `{s}`"))?;
            let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number `{lo}` in `{s}`"))?;
            let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number `{hi}` in `{s}`"))?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(format!("need lo < hi in `{s}`"));
            }
            bounds.push((lo, hi));
        }
        Ok(Self {
            name,
            bounds: Some(bounds),
        })
    }
}

impl RegionSpec {
    pub fn contains(&self, spatial: &SpatialGrid, cell: usize) -> bool {
        match &self.bounds {
            None => true,
            Some(b) => spatial
                .center(cell)
                .iter()
                .zip(b)
                .all(|(x, (lo, hi))| *lo <= *x && *x < *hi),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairOverlap {
    pub a: String,
    pub b: String,
    pub first_positive_t: Option<f64>,
    pub final_overlap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PortionsSummary {
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub laminar: bool,
    pub seed: u64,
    pub steps: u64,
    pub t_final: f64,
    pub regions: Vec<String>,
    pub initial_mass: Vec<f64>,
    pub final_mass: Vec<f64>,
    pub max_tag_drift: f64,
    /// Largest `max(tag - rho, -tag) / max(rho)` seen.
    pub max_domination_violation: f64,
    pub overlaps: Vec<PairOverlap>,
}

struct Tracker<'a> {
    problem: &'a Problem,
    names: Vec<String>,
    tags: Vec<PortionTag>,
    mass0: Vec<f64>,
    tau: f64,
    every: u64,
    supports: Vec<Table>,
    overlap: Table,
    first_positive: Vec<Option<f64>>,
    last_overlap: Vec<f64>,
    max_drift: f64,
    max_violation: f64,
}

impl Tracker<'_> {
    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.tags.len();
        (0..n).flat_map(move |a| (a + 1..n).map(move |b| (a, b)))
    }

    fn write_support(&mut self, k: usize, step: u64, t: f64, set: &SupportSet) -> anyhow::Result<()> {
        let m = &self.problem.model;
        let w = m.velocity.weights();
        let n = m.velocity.len();
        let scale = m.kappa() * m.spatial.cell_volume();
        for &cell in &set.cells {
            let row = &self.tags[k].values[cell * n..(cell + 1) * n];
            let mass: f64 = row.iter().zip(w).map(|(t, w)| t * w).sum::<f64>() * scale;
            let mut rec = vec![step.to_string(), fmt_f64(t), cell.to_string()];
            rec.extend(m.spatial.center(cell).into_iter().map(fmt_f64));
            rec.push(fmt_f64(mass));
            self.supports[k].row(&rec)?;
        }
        Ok(())
    }

    fn observe(&mut self, state: &SolverState, record: Option<&StepRecord>) -> anyhow::Result<()> {
        let m = &self.problem.model;
        if let Some(rec) = record {
            let max = state.field.max();
            for (k, tag) in self.tags.iter_mut().enumerate() {
                *tag = evolve_tag(tag, rec, m)?;
                let (over, neg) = tag.domination_violation(&state.field);
                if max > 0.0 {
                    self.max_violation = self.max_violation.max(over.max(neg) / max);
                }
                if self.mass0[k] > 0.0 {
                    let drift = (tag.mass(&m.spatial, &m.velocity) - self.mass0[k]).abs() / self.mass0[k];
                    self.max_drift = self.max_drift.max(drift);
                }
            }
        }
        let sets: Vec<SupportSet> = self.tags.iter().map(|t| covering_set(t, &m.velocity, self.tau)).collect();
        let mut row = vec![state.step_count.to_string(), fmt_f64(state.t)];
        let pairs: Vec<(usize, usize)> = self.pairs().collect();
        for (p, (a, b)) in pairs.into_iter().enumerate() {
            let v = overlap_measure(&sets[a], &sets[b], &m.spatial);
            if v > 0.0 && self.first_positive[p].is_none() {
                self.first_positive[p] = Some(state.t);
            }
            self.last_overlap[p] = v;
            row.push(fmt_f64(v));
        }
        self.overlap.row(&row)?;
        if record.is_none() || (self.every > 0 && state.step_count % self.every == 0) {
            for (k, set) in sets.iter().enumerate() {
                self.write_support(k, state.step_count, state.t, set)?;
            }
        }
        Ok(())
    }
}

pub fn portions(config: &RunConfig, regions: &[RegionSpec], out_dir: &Path, seed: u64) -> Result<PortionsSummary, CliError> {
    if regions.is_empty() {
        return Err(ConfigError::new("region", "at least one region is required").into());
    }
    let problem = Problem::build(config, seed)?;
    let m = &problem.model;
    let names: Vec<String> = regions
        .iter()
        .enumerate()
        .map(|(i, r)| r.name.clone().unwrap_or_else(|| format!("r{i}")))
        .collect();
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(ConfigError::new("region", format!("duplicate region name `{a}`")).into());
        }
    }
    let mut tags = Vec::new();
    for (r, name) in regions.iter().zip(&names) {
        if let Some(b) = &r.bounds {
            if b.len() != m.spatial.dim() {
                return Err(ConfigError::new(
                    "region",
                    format!("region `{name}` has {} axes, grid has {}", b.len(), m.spatial.dim()),
                )
                .into());
            }
        }
        let tag = seed_portion(&problem.initial, |c| r.contains(&m.spatial, c), None)
            .map_err(|_| ConfigError::new("region", format!("region `{name}` contains no cell centre")))?;
        tags.push(tag);
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;

    let axes = ["x", "y"];
    let mut supports = Vec::new();
    for name in &names {
        let mut header: Vec<String> = ["step", "t", "cell"].iter().map(|s| s.to_string()).collect();
        header.extend(axes[..m.spatial.dim()].iter().map(|s| s.to_string()));
        header.push("tagged_mass".into());
        supports.push(Table::create(&out_dir.join(format!("support_{name}.csv")), &header)?);
    }
    let mut header = vec!["step".to_string(), "t".to_string()];
    let n = names.len();
    for a in 0..n {
        for b in a + 1..n {
            header.push(format!("{}&{}", names[a], names[b]));
        }
    }
    let n_pairs = header.len() - 2;
    let overlap = Table::create(&out_dir.join("overlap.csv"), &header)?;
    let mass0: Vec<f64> = tags.iter().map(|t| t.mass(&m.spatial, &m.velocity)).collect();
    let mut tracker = Tracker {
        problem: &problem,
        names: names.clone(),
        tags,
        mass0: mass0.clone(),
        tau: config.portions.support_threshold,
        every: config.output.every_n_steps,
        supports,
        overlap,
        first_positive: vec![None; n_pairs],
        last_overlap: vec![0.0; n_pairs],
        max_drift: 0.0,
        max_violation: 0.0,
    };

    let mut io_error: Option<anyhow::Error> = None;
    let mut observer = |state: &SolverState, record: Option<&StepRecord>| match tracker.observe(state, record) {
        Ok(()) => Ok(()),
        Err(e) => {
            let msg = format!("{e:#}");
            io_error = Some(e);
            Err(selfmix_core::Error::Precondition(format!("output failed: {msg}")))
        }
    };
    let result = run(problem.initial.clone(), m, &problem.solver, &mut observer);
    let (state, failure) = match result {
        Ok(out) => (out.state, None),
        Err(f) => (f.state, Some(f.error)),
    };
    let failure = match (failure, io_error) {
        (_, Some(e)) => Some(CliError::Other(e)),
        (Some(e), None) => Some(classify(e)),
        (None, None) => None,
    };

    let pairs: Vec<(usize, usize)> = tracker.pairs().collect();
    let overlaps = pairs
        .iter()
        .enumerate()
        .map(|(p, &(a, b))| PairOverlap {
            a: tracker.names[a].clone(),
            b: tracker.names[b].clone(),
            first_positive_t: tracker.first_positive[p],
            final_overlap: tracker.last_overlap[p],
        })
        .collect();
    let summary = PortionsSummary {
        status: if failure.is_some() { "failed" } else { "ok" },
        error: failure.as_ref().map(|e| e.to_string()),
        laminar: problem.laminar,
        seed,
        steps: state.step_count,
        t_final: state.t,
        regions: names,
        initial_mass: mass0,
        final_mass: tracker.tags.iter().map(|t| t.mass(&m.spatial, &m.velocity)).collect(),
        max_tag_drift: tracker.max_drift,
        max_domination_violation: tracker.max_violation,
        overlaps,
    };
    for t in tracker.supports {
        t.finish()?;
    }
    tracker.overlap.finish()?;
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("serializable"))
        .context("cannot write summary")?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
