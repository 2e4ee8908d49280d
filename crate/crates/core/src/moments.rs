//! Velocity moments of the alpha-density: the Euler fields, impulse and
//! angular momentum, the mean inner-energy update and the discrete impulse
//! budget of one solver step.

use crate::error::{Error, Result};
use crate::grid::{dot, AlphaField, SpatialGrid, VelocityGrid};
use crate::solver::{advection_into, diffusion_into, Model, StepRecord};

/// Observable fields recovered from the alpha-density.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerFields {
    pub rho: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    /// `epsilon(x) * rho(x)`, the quantity the energy law evolves.
    pub eps_rho: Vec<f64>,
    pub t: f64,
}

impl EulerFields {
    pub fn from_field(field: &AlphaField, velocity: &VelocityGrid, eps_rho: Vec<f64>) -> Self {
        Self {
            rho: mass_density(field, velocity),
            v: mean_velocity(field, velocity),
            eps_rho,
            t: field.t,
        }
    }

    /// Mean inner energy `epsilon(x)`, zero at (near-)vacuum cells.
    pub fn internal_energy(&self) -> Vec<f64> {
        let guard = vacuum_threshold(&self.rho);
        self.rho
            .iter()
            .zip(&self.eps_rho)
            .map(|(r, e)| if *r > guard { e / r } else { 0.0 })
            .collect()
    }
}

fn vacuum_threshold(per_cell: &[f64]) -> f64 {
    1e-14 * per_cell.iter().copied().fold(0.0, f64::max)
}

fn row_mass(row: &[f64], w: &[f64]) -> f64 {
    row.iter().zip(w).map(|(r, w)| r * w).sum()
}

/// `rho(x) = kappa * sum_j w_j rho[x, j]`.
pub fn mass_density(field: &AlphaField, velocity: &VelocityGrid) -> Vec<f64> {
    let k = velocity.kappa();
    field.rows().map(|row| k * row_mass(row, velocity.weights())).collect()
}

/// Mass-weighted mean velocity per cell; zero where the cell is (near) empty.
pub fn mean_velocity(field: &AlphaField, velocity: &VelocityGrid) -> Vec<Vec<f64>> {
    let w = velocity.weights();
    let dim = velocity.dim();
    let masses: Vec<f64> = field.rows().map(|row| row_mass(row, w)).collect();
    let guard = vacuum_threshold(&masses);
    field
        .rows()
        .zip(&masses)
        .map(|(row, m)| {
            let mut v = vec![0.0; dim];
            if *m <= guard || *m == 0.0 {
                return v;
            }
            for (j, r) in row.iter().enumerate() {
                for (vc, a) in v.iter_mut().zip(velocity.node(j)) {
                    *vc += w[j] * a * r;
                }
            }
            v.iter_mut().for_each(|c| *c /= m);
            v
        })
        .collect()
}

/// `kappa * sum_i sum_j w_j h^dim alpha_j rho[i, j]`.
pub fn total_impulse(field: &AlphaField, spatial: &SpatialGrid, velocity: &VelocityGrid) -> Vec<f64> {
    let dim = velocity.dim();
    let mut per_node = vec![0.0; velocity.len()];
    for row in field.rows() {
        for (acc, r) in per_node.iter_mut().zip(row) {
            *acc += r;
        }
    }
    let scale = velocity.kappa() * spatial.cell_volume();
    let mut imp = vec![0.0; dim];
    for (j, m) in per_node.iter().enumerate() {
        for (c, a) in imp.iter_mut().zip(velocity.node(j)) {
            *c += velocity.weight(j) * a * m;
        }
    }
    imp.iter_mut().for_each(|c| *c *= scale);
    imp
}

/// `kappa * sum_i sum_j w_j h^dim (x_i ^ alpha_j) rho[i, j]` with `x` measured
/// from the domain center. Zero in one dimension.
pub fn angular_momentum(field: &AlphaField, spatial: &SpatialGrid, velocity: &VelocityGrid) -> f64 {
    if spatial.dim() != 2 {
        return 0.0;
    }
    let center = spatial.domain_center();
    let mut total = 0.0;
    for (cell, row) in field.rows().enumerate() {
        let x = spatial.center(cell);
        let (x1, x2) = (x[0] - center[0], x[1] - center[1]);
        for (j, r) in row.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let a = velocity.node(j);
            total += velocity.weight(j) * (x1 * a[1] - x2 * a[0]) * r;
        }
    }
    total * velocity.kappa() * spatial.cell_volume()
}

/// Forward-Euler step of the mean inner energy density:
///
/// `d(eps rho)/dt = kappa sum_j w_j [<alpha_j, g> rho - |alpha_j|^2 (adv - diff + (drho/dt)/2)]`
///
/// where `adv` and `diff` are the solver's discrete transport terms evaluated
/// on `before` and `increment` is the per-entry change the solver applied.
pub fn energy_update(
    prev_eps_rho: &[f64],
    before: &AlphaField,
    increment: &[f64],
    dt: f64,
    model: &Model,
) -> Result<Vec<f64>> {
    let n_cells = model.spatial.n_cells();
    let n = model.velocity.len();
    if prev_eps_rho.len() != n_cells {
        return Err(Error::ShapeMismatch {
            expected: n_cells,
            actual: prev_eps_rho.len(),
        });
    }
    if increment.len() != n_cells * n {
        return Err(Error::ShapeMismatch {
            expected: n_cells * n,
            actual: increment.len(),
        });
    }
    before.check_shape(&model.spatial, &model.velocity)?;
    let len = n_cells * n;
    let mut adv = vec![0.0; len];
    let mut inflow = vec![0.0; n];
    let mut diff = vec![0.0; len];
    advection_into(before.values(), &model.spatial, &model.velocity, &mut adv, &mut inflow);
    diffusion_into(before.values(), &model.spatial, n, model.params.diffusion, &mut diff);
    let g = &model.params.gravity;
    let kappa = model.kappa();
    let mut out = prev_eps_rho.to_vec();
    for (cell, eps) in out.iter_mut().enumerate() {
        let mut sum = 0.0;
        for j in 0..n {
            let idx = cell * n + j;
            let a = model.velocity.node(j);
            let speed2 = model.velocity.speed(j).powi(2);
            let force = dot(a, g) * before.values()[idx];
            let kinetic = adv[idx] - diff[idx] + 0.5 * increment[idx] / dt;
            sum += model.velocity.weight(j) * (force - speed2 * kinetic);
        }
        *eps += dt * kappa * sum;
    }
    Ok(out)
}

/// Terms of the discrete impulse balance for one step. Every vector has one
/// entry per spatial dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseBudget {
    /// `[imp(t + dt) - imp(t)] / dt`.
    pub rate: Vec<f64>,
    /// `kappa h^dim sum w_j alpha_j (mixing rate)`: impulse carried by `J = alpha M`.
    pub mixer: Vec<f64>,
    /// Advective flux through the domain boundary plus the diffusive sum.
    pub transport: Vec<f64>,
    /// `kappa h^dim sum w_j g rho`.
    pub force: Vec<f64>,
    pub residual: Vec<f64>,
    /// `max |residual|` over the summed magnitude of all contributions.
    pub relative: f64,
}

/// Checks that the impulse change over a step equals the mixer transfer, the
/// boundary flux and the force term.
///
/// The force term is included as written in the impulse law even though the
/// mass law carries no body force, so with `g != 0` the residual equals
/// minus the force.
pub fn impulse_budget(before: &AlphaField, after: &AlphaField, record: &StepRecord, model: &Model) -> Result<ImpulseBudget> {
    before.check_shape(&model.spatial, &model.velocity)?;
    after.check_shape(&model.spatial, &model.velocity)?;
    let dim = model.spatial.dim();
    let n = model.velocity.len();
    let vol = model.spatial.cell_volume();
    let kappa = model.kappa();
    let dt = record.dt;
    let r = &record.rates;

    let mut rate = vec![0.0; dim];
    let mut mixer = vec![0.0; dim];
    let mut transport = vec![0.0; dim];
    let mut force = vec![0.0; dim];
    let mut scale = 0.0;
    let mut diff_sum = vec![0.0; n];
    let mut mass_before = 0.0;

    for cell in 0..model.spatial.n_cells() {
        for j in 0..n {
            let idx = cell * n + j;
            let w = model.velocity.weight(j);
            let a = model.velocity.node(j);
            let change = (after.values()[idx] - before.values()[idx]) / dt;
            for c in 0..dim {
                rate[c] += w * a[c] * change;
                mixer[c] += w * a[c] * r.mixing[idx];
            }
            let speed = model.velocity.speed(j);
            scale += w * speed * (change.abs() + r.mixing[idx].abs() + r.advection[idx].abs() + r.diffusion[idx].abs());
            diff_sum[j] += r.diffusion[idx];
            mass_before += w * before.values()[idx];
        }
    }
    for j in 0..n {
        let w = model.velocity.weight(j);
        let a = model.velocity.node(j);
        for c in 0..dim {
            transport[c] += w * a[c] * (r.boundary_inflow[j] + vol * diff_sum[j]);
        }
    }
    for c in 0..dim {
        rate[c] *= kappa * vol;
        mixer[c] *= kappa * vol;
        transport[c] *= kappa;
        force[c] = kappa * vol * mass_before * model.params.gravity[c];
    }
    let scale = kappa * vol * scale + force.iter().map(|f| f.abs()).sum::<f64>();
    let residual: Vec<f64> = (0..dim)
        .map(|c| rate[c] - (mixer[c] + transport[c] + force[c]))
        .collect();
    let worst = residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let relative = if scale > 0.0 { worst / scale } else { 0.0 };
    Ok(ImpulseBudget {
        rate,
        mixer,
        transport,
        force,
        residual,
        relative,
    })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::grid::Boundary;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn linear_and_scale_invariant(
            vals in prop::collection::vec(0.0f64..4.0, 16 * 9),
            c in 0.1f64..10.0,
        ) {
            let s = SpatialGrid::uniform(2, 4, 0.5, Boundary::Periodic).unwrap();
            let v = VelocityGrid::build(2, 1.0, 3).unwrap();
            let f = AlphaField::from_values(16, 9, vals).unwrap();
            let mut g = f.clone();
            g.scale(c);
            for (a, b) in mass_density(&f, &v).iter().zip(mass_density(&g, &v)) {
                prop_assert!((c * a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            for (a, b) in total_impulse(&f, &s, &v).iter().zip(total_impulse(&g, &s, &v)) {
                prop_assert!((c * a - b).abs() <= 1e-12 * c.max(1.0) * 10.0);
            }
            let (la, lb) = (angular_momentum(&f, &s, &v), angular_momentum(&g, &s, &v));
            prop_assert!((c * la - lb).abs() <= 1e-12 * c.max(1.0) * 10.0);
            for (a, b) in mean_velocity(&f, &v).iter().zip(mean_velocity(&g, &v)) {
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }
}
