//! Discrete checks of the localization theorem and the kernel
//! antisymmetry conditions, plus an independent integrator for spatially
//! homogeneous mixing.
//!
//! The theorem: for `F` antisymmetric in `(alpha, beta)` and
//! `D + kappa int_A F dbeta = 0`, the balance
//! `int_omega int_a [D + kappa int_{A \ a} F dbeta] = 0` holds for every
//! region `omega` and velocity subset `a`; conversely the balance over all
//! `(omega, a)` forces both conditions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{AlphaField, SpatialGrid, VelocityGrid};
use crate::mixer::{mass_mixer, MixerParams};
use crate::solver::Model;

/// Discrete `F(x, alpha_j, alpha_k)` and `D(x, alpha_j)`, each entry a vector
/// of `components` values.
#[derive(Debug, Clone, PartialEq)]
pub struct PairKernelField {
    n_cells: usize,
    n_nodes: usize,
    components: usize,
    f: Vec<f64>,
    d: Vec<f64>,
}

impl PairKernelField {
    pub fn zeros(n_cells: usize, n_nodes: usize, components: usize) -> Self {
        Self {
            n_cells,
            n_nodes,
            components,
            f: vec![0.0; n_cells * n_nodes * n_nodes * components],
            d: vec![0.0; n_cells * n_nodes * components],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn components(&self) -> usize {
        self.components
    }

    #[inline]
    fn fi(&self, cell: usize, j: usize, k: usize) -> usize {
        ((cell * self.n_nodes + j) * self.n_nodes + k) * self.components
    }

    #[inline]
    fn di(&self, cell: usize, j: usize) -> usize {
        (cell * self.n_nodes + j) * self.components
    }

    pub fn f(&self, cell: usize, j: usize, k: usize) -> &[f64] {
        let i = self.fi(cell, j, k);
        &self.f[i..i + self.components]
    }

    pub fn f_mut(&mut self, cell: usize, j: usize, k: usize) -> &mut [f64] {
        let i = self.fi(cell, j, k);
        &mut self.f[i..i + self.components]
    }

    pub fn d(&self, cell: usize, j: usize) -> &[f64] {
        let i = self.di(cell, j);
        &self.d[i..i + self.components]
    }

    pub fn d_mut(&mut self, cell: usize, j: usize) -> &mut [f64] {
        let i = self.di(cell, j);
        &mut self.d[i..i + self.components]
    }

    /// Random scalar `F = G - G^T` with `G` uniform in `[-1, 1]`, and `D`
    /// balancing it.
    pub fn random_antisymmetric(n_cells: usize, velocity: &VelocityGrid, seed: u64) -> Self {
        let n = velocity.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::zeros(n_cells, n, 1);
        for cell in 0..n_cells {
            let g: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            for j in 0..n {
                for k in 0..n {
                    out.f_mut(cell, j, k)[0] = g[j * n + k] - g[k * n + j];
                }
            }
        }
        out.balance_d(velocity);
        out
    }

    /// Samples of the mass mixer on `field`: `F[i, j, k] = M(alpha_j, alpha_k)`.
    /// `D` is set to the balancing value.
    pub fn from_mass_mixer(field: &AlphaField, velocity: &VelocityGrid, params: &MixerParams) -> Self {
        let n = velocity.len();
        let mut out = Self::zeros(field.n_cells(), n, 1);
        for cell in 0..field.n_cells() {
            let row = field.row(cell);
            for j in 0..n {
                for k in 0..n {
                    out.f_mut(cell, j, k)[0] = mass_mixer(row[j], row[k], velocity.node(j), velocity.node(k), params);
                }
            }
        }
        out.balance_d(velocity);
        out
    }

    /// Advective impulse mixer `J = alpha_j M(alpha_j, alpha_k)` (zero
    /// correction), one component per dimension.
    pub fn from_impulse_mixer(field: &AlphaField, velocity: &VelocityGrid, params: &MixerParams) -> Self {
        let n = velocity.len();
        let dim = velocity.dim();
        let mut out = Self::zeros(field.n_cells(), n, dim);
        for cell in 0..field.n_cells() {
            let row = field.row(cell);
            for j in 0..n {
                for k in 0..n {
                    let m = mass_mixer(row[j], row[k], velocity.node(j), velocity.node(k), params);
                    let a = velocity.node(j);
                    for (c, v) in out.f_mut(cell, j, k).iter_mut().enumerate() {
                        *v = a[c] * m;
                    }
                }
            }
        }
        out.balance_d(velocity);
        out
    }

    /// Sets `D = -kappa sum_k w_k F(., k)`.
    pub fn balance_d(&mut self, velocity: &VelocityGrid) {
        let n = self.n_nodes;
        let kappa = velocity.kappa();
        for cell in 0..self.n_cells {
            for j in 0..n {
                let mut acc = vec![0.0; self.components];
                for k in 0..n {
                    for (a, f) in acc.iter_mut().zip(self.f(cell, j, k)) {
                        *a += velocity.weight(k) * f;
                    }
                }
                for (d, a) in self.d_mut(cell, j).iter_mut().zip(&acc) {
                    *d = -kappa * a;
                }
            }
        }
    }

    /// Adds `amplitude` to every `F` entry: a symmetric defect.
    pub fn add_symmetric_defect(&mut self, amplitude: f64) {
        self.f.iter_mut().for_each(|f| *f += amplitude);
    }

    pub fn max_abs_f(&self) -> f64 {
        self.f.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `R[i, j, k] = F[i, j, k] + F[i, k, j]`, flattened like `F`.
pub fn symmetrization_residual(kernel: &PairKernelField) -> Vec<f64> {
    let n = kernel.n_nodes;
    let mut out = vec![0.0; kernel.f.len()];
    for cell in 0..kernel.n_cells {
        for j in 0..n {
            for k in 0..n {
                let base = kernel.fi(cell, j, k);
                for (c, (a, b)) in kernel.f(cell, j, k).iter().zip(kernel.f(cell, k, j)).enumerate() {
                    out[base + c] = a + b;
                }
            }
        }
    }
    out
}

/// Largest entry of a symmetrization residual and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetrizationPeak {
    pub max_abs: f64,
    pub cell: usize,
    pub j: usize,
    pub k: usize,
}

pub fn symmetrization_peak(kernel: &PairKernelField) -> SymmetrizationPeak {
    let r = symmetrization_residual(kernel);
    let n = kernel.n_nodes;
    let c = kernel.components;
    let (idx, max_abs) = r
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    let flat = idx / c;
    SymmetrizationPeak {
        max_abs,
        cell: flat / (n * n),
        j: (flat / n) % n,
        k: flat % n,
    }
}

/// One random `(omega, a)` evaluation of the integral balance.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationTrial {
    /// Inclusive cell-index range per axis.
    pub omega: Vec<(usize, usize)>,
    pub subset: Vec<usize>,
    /// Largest component magnitude of the balance integral.
    pub residual: f64,
    /// Same integral with absolute values inside.
    pub scale: f64,
}

impl LocalizationTrial {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.residual / self.scale
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationReport {
    pub trials: usize,
    pub max_residual: f64,
    pub max_relative: f64,
    /// The trial with the largest relative residual.
    pub worst: LocalizationTrial,
}

fn check_shapes(kernel: &PairKernelField, spatial: &SpatialGrid, velocity: &VelocityGrid) -> Result<()> {
    let expected = spatial.n_cells() * velocity.len();
    if kernel.n_cells != spatial.n_cells() || kernel.n_nodes != velocity.len() {
        return Err(Error::ShapeMismatch {
            expected,
            actual: kernel.n_cells * kernel.n_nodes,
        });
    }
    Ok(())
}

fn evaluate_trial(
    kernel: &PairKernelField,
    spatial: &SpatialGrid,
    velocity: &VelocityGrid,
    omega: Vec<(usize, usize)>,
    subset: Vec<usize>,
) -> LocalizationTrial {
    let n = velocity.len();
    let comps = kernel.components;
    let kappa = velocity.kappa();
    let mut in_a = vec![false; n];
    for &j in &subset {
        in_a[j] = true;
    }
    let mut total = vec![0.0; comps];
    let mut scale = vec![0.0; comps];
    for cell in 0..spatial.n_cells() {
        let idx = spatial.multi_index(cell);
        if !(0..spatial.dim()).all(|a| (omega[a].0..=omega[a].1).contains(&idx[a])) {
            continue;
        }
        for &j in &subset {
            let wj = velocity.weight(j);
            for c in 0..comps {
                let mut outside = 0.0;
                let mut abs_all = 0.0;
                for k in 0..n {
                    let f = kernel.f(cell, j, k)[c];
                    abs_all += velocity.weight(k) * f.abs();
                    if !in_a[k] {
                        outside += velocity.weight(k) * f;
                    }
                }
                let d = kernel.d(cell, j)[c];
                total[c] += wj * (d + kappa * outside);
                scale[c] += wj * (d.abs() + kappa * abs_all);
            }
        }
    }
    let vol = spatial.cell_volume();
    // report the component with the largest relative residual
    let mut residual = 0.0;
    let mut sc = 0.0;
    let mut best = -1.0;
    for (t, s) in total.iter().zip(&scale) {
        let rel = if *s > 0.0 { t.abs() / s } else { 0.0 };
        if rel > best {
            best = rel;
            residual = t.abs() * vol;
            sc = s * vol;
        }
    }
    LocalizationTrial {
        omega,
        subset,
        residual,
        scale: sc,
    }
}

/// Evaluates the balance integral on `trials` random axis-aligned boxes and
/// random velocity subsets, without checking the theorem's hypotheses.
pub fn localization_trials(
    kernel: &PairKernelField,
    spatial: &SpatialGrid,
    velocity: &VelocityGrid,
    trials: usize,
    seed: u64,
) -> Result<Vec<LocalizationTrial>> {
    check_shapes(kernel, spatial, velocity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = velocity.len();
    let mut nodes: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut omega = Vec::with_capacity(spatial.dim());
        for &len in spatial.cells_per_axis() {
            let a = rng.gen_range(0..len);
            let b = rng.gen_range(0..len);
            omega.push((a.min(b), a.max(b)));
        }
        nodes.shuffle(&mut rng);
        let size = rng.gen_range(1..=n);
        let mut subset = nodes[..size].to_vec();
        subset.sort_unstable();
        out.push(evaluate_trial(kernel, spatial, velocity, omega, subset));
    }
    Ok(out)
}

fn summarize(trials: Vec<LocalizationTrial>) -> Result<LocalizationReport> {
    let count = trials.len();
    let max_residual = trials.iter().fold(0.0_f64, |m, t| m.max(t.residual));
    let worst = trials
        .into_iter()
        .max_by(|a, b| a.relative().total_cmp(&b.relative()))
        .ok_or_else(|| Error::Precondition("at least one trial is required".into()))?;
    Ok(LocalizationReport {
        trials: count,
        max_residual,
        max_relative: worst.relative(),
        worst,
    })
}

/// Max balance residual over random trials, without hypothesis checks. Used
/// to exhibit counterexamples when a hypothesis is broken.
pub fn localization_search(
    kernel: &PairKernelField,
    spatial: &SpatialGrid,
    velocity: &VelocityGrid,
    trials: usize,
    seed: u64,
) -> Result<LocalizationReport> {
    summarize(localization_trials(kernel, spatial, velocity, trials, seed)?)
}

/// Checks antisymmetry of `F` and the pointwise balance of `D` (both to
/// 1e-12 relative), then reports the balance residual over random trials.
pub fn localization_forward_check(
    kernel: &PairKernelField,
    spatial: &SpatialGrid,
    velocity: &VelocityGrid,
    trials: usize,
    seed: u64,
) -> Result<LocalizationReport> {
    check_shapes(kernel, spatial, velocity)?;
    let fmax = kernel.max_abs_f();
    let peak = symmetrization_peak(kernel);
    if peak.max_abs > 1e-12 * fmax {
        return Err(Error::Precondition(format!(
            "F is not antisymmetric: |F + F^T| = {:e} at cell {}, nodes ({}, {})",
            peak.max_abs, peak.cell, peak.j, peak.k
        )));
    }
    let kappa = velocity.kappa();
    let n = velocity.len();
    let bound = 1e-12 * (kappa * velocity.weight_sum() * fmax).max(f64::MIN_POSITIVE);
    for cell in 0..kernel.n_cells {
        for j in 0..n {
            for c in 0..kernel.components {
                let integral: f64 = (0..n).map(|k| velocity.weight(k) * kernel.f(cell, j, k)[c]).sum();
                let r = kernel.d(cell, j)[c] + kappa * integral;
                if r.abs() > bound {
                    return Err(Error::Precondition(format!(
                        "D does not balance F at cell {cell}, node {j}: residual {r:e}"
                    )));
                }
            }
        }
    }
    localization_search(kernel, spatial, velocity, trials, seed)
}

/// Classical RK4 integration of the spatially homogeneous mixing problem
/// `d rho_j / dt = kappa sum_k w_k M(rho_j, rho_k)` with step 1e-5.
///
/// Written directly against [`mass_mixer`] so that it shares no code with
/// the solver's tabulated kernel or time stepping.
pub fn homogeneous_mixing_oracle(initial: &[f64], velocity: &VelocityGrid, params: &MixerParams, t_end: f64) -> Result<Vec<f64>> {
    homogeneous_mixing_oracle_with_step(initial, velocity, params, t_end, 1e-5)
}

pub fn homogeneous_mixing_oracle_with_step(
    initial: &[f64],
    velocity: &VelocityGrid,
    params: &MixerParams,
    t_end: f64,
    max_dt: f64,
) -> Result<Vec<f64>> {
    let n = velocity.len();
    if initial.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            actual: initial.len(),
        });
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(crate::error::invalid("t_end", "must be non-negative"));
    }
    let kappa = velocity.kappa();
    let rhs = |rho: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let mut s = 0.0;
                for k in 0..n {
                    s += velocity.weight(k) * mass_mixer(rho[j], rho[k], velocity.node(j), velocity.node(k), params);
                }
                kappa * s
            })
            .collect()
    };
    let steps = (t_end / max_dt).ceil().max(0.0) as usize;
    if steps == 0 {
        return Ok(initial.to_vec());
    }
    let dt = t_end / steps as f64;
    let mut y = initial.to_vec();
    let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    for _ in 0..steps {
        let k1 = rhs(&y);
        let k2 = rhs(&axpy(&y, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&y, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(&y, &k3, dt));
        for j in 0..n {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    Ok(y)
}

/// Builds the balancing `(D, F)` pair for the mass mixer evaluated on
/// `field` and runs the forward check.
pub fn check_mass_mixer_localization(field: &AlphaField, model: &Model, trials: usize, seed: u64) -> Result<LocalizationReport> {
    let kernel = PairKernelField::from_mass_mixer(field, &model.velocity, &model.params);
    localization_forward_check(&kernel, &model.spatial, &model.velocity, trials, seed)
}
