//! Initial alpha-densities for the shipped presets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::{AlphaField, Boundary, SpatialGrid, VelocityGrid};
use crate::mixer::MixerParams;
use crate::solver::Model;

/// Relative amplitude of the seeded perturbation in [`two_stream`].
pub const TWO_STREAM_NOISE: f64 = 0.01;

fn gaussian(r2: f64, width: f64) -> f64 {
    (-0.5 * r2 / (width * width)).exp()
}

/// Two counter-streaming beams at `+-u e_1` with `u = R / 2`, Gaussian in
/// velocity with width `R / 4`. Their spatial weights `0.55 +- 0.45 sin`
/// alternate along the last axis, so in two dimensions the streams form a
/// shear layer. Each entry carries a seeded multiplicative perturbation.
pub fn two_stream(model: &Model, seed: u64) -> AlphaField {
    let s = &model.spatial;
    let v = &model.velocity;
    let dim = s.dim();
    let u = 0.5 * v.radius();
    let width = 0.25 * v.radius();
    let axis = dim - 1;
    let length = s.extent(axis);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = model.zero_field();
    for cell in 0..s.n_cells() {
        let x = s.center(cell);
        let phase = 2.0 * PI * (x[axis] - s.origin()[axis]) / length;
        let plus = 0.55 + 0.45 * phase.sin();
        let minus = 0.55 - 0.45 * phase.sin();
        for j in 0..v.len() {
            let a = v.node(j);
            let rest: f64 = a[1..].iter().map(|c| c * c).sum();
            let gp = gaussian((a[0] - u).powi(2) + rest, width);
            let gm = gaussian((a[0] + u).powi(2) + rest, width);
            let noise = 1.0 + TWO_STREAM_NOISE * rng.gen_range(-1.0..=1.0);
            field.set(cell, j, (plus * gp + minus * gm) * noise);
        }
    }
    field
}

/// Spatial Gaussian of width `width` at the domain center times a
/// zero-mean Gaussian in velocity of width `R / 3`.
pub fn gaussian_blob(model: &Model, width: f64) -> AlphaField {
    let s = &model.spatial;
    let v = &model.velocity;
    let center = s.domain_center();
    let vwidth = v.radius() / 3.0;
    let mut field = model.zero_field();
    for cell in 0..s.n_cells() {
        let x = s.center(cell);
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum();
        let g = gaussian(r2, width);
        for j in 0..v.len() {
            let a2 = v.speed(j).powi(2);
            field.set(cell, j, g * gaussian(a2, vwidth));
        }
    }
    field
}

/// Laminar limit: one velocity node `(speed, 0, ..)`, no mixing, no
/// diffusion. Every fluid portion keeps its identity.
pub fn laminar_model(spatial: SpatialGrid, speed: f64) -> Result<Model> {
    let dim = spatial.dim();
    let mut node = vec![0.0; dim];
    node[0] = speed;
    let velocity = VelocityGrid::from_nodes(dim, node, vec![1.0], speed.abs())?.with_kappa(0.0)?;
    let params = MixerParams::new(1.0, 0.0, dim)?;
    Model::new(spatial, velocity, params)
}

/// Time step that moves the laminar node by exactly one cell.
pub fn laminar_dt(model: &Model) -> f64 {
    model.spatial.h() / model.velocity.max_abs_component()
}

/// Convenience for tests and benches: a periodic square domain of side 1.
pub fn unit_periodic(dim: usize, n: usize) -> Result<SpatialGrid> {
    SpatialGrid::uniform(dim, n, 1.0 / n as f64, Boundary::Periodic)
}
