//! Fixtures shared by the benchmarks in `benches/`.

use selfmix_core::scenario::{two_stream, unit_periodic};
use selfmix_core::{AlphaField, MixerParams, Model, VelocityGrid};

/// Two-stream problem on an `n x n` periodic grid with `nodes` velocity
/// nodes per axis.
pub fn two_stream_problem(n: usize, nodes: usize) -> (Model, AlphaField) {
    let spatial = unit_periodic(2, n).expect("valid grid");
    let velocity = VelocityGrid::build(2, 1.0, nodes).expect("valid velocity grid");
    let params = MixerParams::new(1.0, 1e-3, 2).expect("valid parameters");
    let model = Model::new(spatial, velocity, params).expect("consistent model");
    let field = two_stream(&model, 1);
    (model, field)
}
