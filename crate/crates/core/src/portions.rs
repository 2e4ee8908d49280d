//! Tracking of fluid portions through transport and mixing.
//!
//! A portion is a tagged sub-density `0 <= tag <= rho`. Transport and
//! diffusion act on it linearly with the solver's stencils; a mixing transfer
//! between two velocity nodes carries the tagged share of its source node.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::grid::{AlphaField, SpatialGrid, VelocityGrid, MAX_DIM};
use crate::solver::{advection_into, diffusion_into, Integrator, Model, StepRecord};

/// Default relative threshold for support sets.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PortionTag {
    pub values: Vec<f64>,
}

impl PortionTag {
    /// Total tagged mass `kappa * sum w_j h^dim tag`.
    pub fn mass(&self, spatial: &SpatialGrid, velocity: &VelocityGrid) -> f64 {
        let n = velocity.len();
        let sum: f64 = self
            .values
            .chunks(n)
            .map(|row| row.iter().zip(velocity.weights()).map(|(t, w)| t * w).sum::<f64>())
            .sum();
        velocity.kappa() * spatial.cell_volume() * sum
    }

    /// Largest excess of the tag over the total density and largest negative
    /// entry, as `(max(tag - rho), max(-tag))`.
    pub fn domination_violation(&self, field: &AlphaField) -> (f64, f64) {
        self.values
            .iter()
            .zip(field.values())
            .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(over, neg), (t, r)| {
                (over.max(t - r), neg.max(-t))
            })
    }
}

/// Spatial cells carrying a portion, with the threshold that defined them.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub cells: BTreeSet<usize>,
    pub threshold: f64,
}

impl SupportSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.contains(&cell)
    }

    pub fn is_subset(&self, other: &SupportSet) -> bool {
        self.cells.is_subset(&other.cells)
    }

    /// Adds every cell within `radius` cells (max-norm) of a member.
    pub fn dilate(&self, spatial: &SpatialGrid, radius: usize) -> SupportSet {
        let mut cells = self.cells.clone();
        for _ in 0..radius {
            let mut next = cells.clone();
            for &c in &cells {
                let mut frontier = vec![c];
                for axis in 0..spatial.dim() {
                    let mut grown = Vec::with_capacity(frontier.len() * 3);
                    for &f in &frontier {
                        grown.push(f);
                        grown.extend(spatial.neighbor(f, axis, false));
                        grown.extend(spatial.neighbor(f, axis, true));
                    }
                    frontier = grown;
                }
                next.extend(frontier);
            }
            cells = next;
        }
        SupportSet {
            cells,
            threshold: self.threshold,
        }
    }
}

/// `{ j : rho[cell, j] > tau * max(rho) }`, with the maximum over the whole field.
pub fn velocity_support(field: &AlphaField, cell: usize, tau: f64) -> Vec<usize> {
    let cut = tau * field.max().max(0.0);
    field
        .row(cell)
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > cut)
        .map(|(j, _)| j)
        .collect()
}

/// Tags the fluid in `region`, optionally restricted to the velocity nodes
/// accepted by `velocities`.
pub fn seed_portion(
    field: &AlphaField,
    region: impl Fn(usize) -> bool,
    velocities: Option<&dyn Fn(usize) -> bool>,
) -> Result<PortionTag> {
    let n = field.n_nodes();
    let mut any = false;
    let mut values = vec![0.0; field.values().len()];
    for cell in 0..field.n_cells() {
        if !region(cell) {
            continue;
        }
        any = true;
        for j in 0..n {
            if velocities.is_none_or(|accept| accept(j)) {
                values[cell * n + j] = field.get(cell, j);
            }
        }
    }
    if !any {
        return Err(Error::EmptyRegion);
    }
    Ok(PortionTag { values })
}

#[inline]
fn share(tag: f64, rho: f64) -> f64 {
    if rho > 0.0 {
        (tag / rho).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// `d tag / dt` for a total density `rho`: linear transport and diffusion of
/// the tag plus the tagged share of every mixing transfer. Terms are summed
/// in the solver's order, so a tag equal to `rho` reproduces its rates bitwise.
fn tag_rates(tag: &[f64], rho: &[f64], model: &Model) -> Vec<f64> {
    let len = tag.len();
    let n = model.velocity.len();
    let mut adv = vec![0.0; len];
    let mut inflow = vec![0.0; n];
    let mut diff = vec![0.0; len];
    advection_into(tag, &model.spatial, &model.velocity, &mut adv, &mut inflow);
    diffusion_into(tag, &model.spatial, n, model.params.diffusion, &mut diff);
    let kappa = model.kappa();
    let mut mix = vec![0.0; len];
    if kappa > 0.0 {
        let kernel = model.kernel();
        let w = model.velocity.weights();
        for ((row, trow), out) in rho.chunks(n).zip(tag.chunks(n)).zip(mix.chunks_mut(n)) {
            kernel.for_each_pair(row, |j, k, m| {
                // m > 0: node j gains from k, so k is the source
                let s = if m > 0.0 { share(trow[k], row[k]) } else { share(trow[j], row[j]) };
                let flow = m * s;
                out[j] += w[k] * flow;
                out[k] -= w[j] * flow;
            });
            out.iter_mut().for_each(|o| *o *= kappa);
        }
    }
    (0..len).map(|i| (mix[i] + diff[i]) - adv[i]).collect()
}

/// Advances `tag` over the step described by `record`, using the same
/// integrator and the same total-density snapshots as the solver.
pub fn evolve_tag(tag: &PortionTag, record: &StepRecord, model: &Model) -> Result<PortionTag> {
    let len = record.before.len();
    if tag.values.len() != len {
        return Err(Error::ShapeMismatch {
            expected: len,
            actual: tag.values.len(),
        });
    }
    let dt = record.dt;
    let values = match record.integrator {
        Integrator::Euler => {
            let r = tag_rates(&tag.values, &record.before, model);
            tag.values.iter().zip(&r).map(|(t, r)| t + dt * r).collect()
        }
        Integrator::Rk2 => {
            let stage = record
                .stage
                .as_ref()
                .ok_or_else(|| Error::Precondition("rk2 step record without midpoint stage".into()))?;
            let r1 = tag_rates(&tag.values, &record.before, model);
            let mid: Vec<f64> = tag.values.iter().zip(&r1).map(|(t, r)| t + 0.5 * dt * r).collect();
            let r2 = tag_rates(&mid, stage, model);
            tag.values.iter().zip(&r2).map(|(t, r)| t + dt * r).collect()
        }
    };
    Ok(PortionTag { values })
}

/// Cells whose tagged mass exceeds `tau` times the largest tagged cell mass.
pub fn covering_set(tag: &PortionTag, velocity: &VelocityGrid, tau: f64) -> SupportSet {
    let per_cell: Vec<f64> = tag
        .values
        .chunks(velocity.len())
        .map(|row| row.iter().zip(velocity.weights()).map(|(t, w)| t * w).sum())
        .collect();
    let peak = per_cell.iter().copied().fold(0.0, f64::max);
    let cells = if peak > 0.0 {
        per_cell
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > tau * peak)
            .map(|(i, _)| i)
            .collect()
    } else {
        BTreeSet::new()
    };
    SupportSet { cells, threshold: tau }
}

/// Predicted support after a short time `delta`: every cell of `support`
/// shifted by `delta * alpha` for each `alpha` in its velocity set, rasterised
/// to the cells the shifted cell box overlaps. Boxes leaving an outflow
/// domain are cut off.
pub fn predict_set_propagation(
    support: &SupportSet,
    velocity_set: impl Fn(usize) -> Vec<usize>,
    delta: f64,
    spatial: &SpatialGrid,
    velocity: &VelocityGrid,
) -> Result<SupportSet> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(crate::error::invalid("delta", format!("must be positive, got {delta}")));
    }
    let h = spatial.h();
    let dim = spatial.dim();
    let tol = 1e-9;
    let mut cells = BTreeSet::new();
    for &cell in &support.cells {
        let idx = spatial.multi_index(cell);
        for j in velocity_set(cell) {
            let a = velocity.node(j);
            // per-axis range of overlapped cell indices
            let mut ranges = [(0i64, 0i64); MAX_DIM];
            for axis in 0..dim {
                let lo = idx[axis] as f64 + delta * a[axis] / h;
                let first = (lo + tol).floor() as i64;
                let last = (lo + 1.0 - tol).ceil() as i64 - 1;
                ranges[axis] = (first, last);
            }
            let mut cursor = [0i64; MAX_DIM];
            for axis in 0..dim {
                cursor[axis] = ranges[axis].0;
            }
            'outer: loop {
                if let Some(c) = wrap(spatial, &cursor) {
                    cells.insert(c);
                }
                for axis in 0..dim {
                    if cursor[axis] < ranges[axis].1 {
                        cursor[axis] += 1;
                        continue 'outer;
                    }
                    cursor[axis] = ranges[axis].0;
                }
                break;
            }
        }
    }
    Ok(SupportSet {
        cells,
        threshold: support.threshold,
    })
}

fn wrap(spatial: &SpatialGrid, cursor: &[i64; MAX_DIM]) -> Option<usize> {
    let mut idx = [0usize; MAX_DIM];
    for axis in 0..spatial.dim() {
        let n = spatial.cells_per_axis()[axis] as i64;
        let k = cursor[axis];
        idx[axis] = match spatial.boundary() {
            crate::grid::Boundary::Periodic => k.rem_euclid(n) as usize,
            crate::grid::Boundary::Outflow if (0..n).contains(&k) => k as usize,
            crate::grid::Boundary::Outflow => return None,
        };
    }
    Some(spatial.linear_index(&idx))
}

/// `|S1 n S2| * h^dim`.
pub fn overlap_measure(a: &SupportSet, b: &SupportSet, spatial: &SpatialGrid) -> f64 {
    a.cells.intersection(&b.cells).count() as f64 * spatial.cell_volume()
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::mixer::MixerParams;
    use crate::scenario::{two_stream, unit_periodic};
    use crate::solver::{stable_dt, step, SolverConfig, SolverState};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn additive_dominated_and_conserved(seed in 0u64..1000, split in 1usize..63, rk2 in any::<bool>()) {
            let s = unit_periodic(2, 8).unwrap();
            let v = VelocityGrid::build(2, 1.0, 4).unwrap();
            let m = Model::new(s, v, MixerParams::new(2.0, 1e-3, 2).unwrap()).unwrap();
            let integrator = if rk2 { Integrator::Rk2 } else { Integrator::Euler };
            let rho = two_stream(&m, seed);
            let mut a = seed_portion(&rho, |c| c < split, None).unwrap();
            let mut b = seed_portion(&rho, |c| c >= split, None).unwrap();
            let mut ab = seed_portion(&rho, |_| true, None).unwrap();
            let mass_a = a.mass(&m.spatial, &m.velocity);
            let mut state = SolverState::new(rho);
            let dt = stable_dt(&m, &SolverConfig::default()).unwrap();
            for _ in 0..10 {
                let rec = step(&mut state, &m, dt, integrator).unwrap();
                a = evolve_tag(&a, &rec, &m).unwrap();
                b = evolve_tag(&b, &rec, &m).unwrap();
                ab = evolve_tag(&ab, &rec, &m).unwrap();
                let tol = 1e-12 * state.field.max();
                for t in [&a, &b] {
                    let (over, neg) = t.domination_violation(&state.field);
                    prop_assert!(over <= tol && neg <= tol);
                }
            }
            for i in 0..ab.values.len() {
                let sum = a.values[i] + b.values[i];
                prop_assert!((sum - ab.values[i]).abs() <= 1e-14 * state.field.max());
            }
            let drift = (a.mass(&m.spatial, &m.velocity) - mass_a).abs() / mass_a;
            prop_assert!(drift <= 1e-10);
        }
    }
}
