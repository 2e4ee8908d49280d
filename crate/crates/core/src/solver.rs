//! Explicit time integration of the simplified mass law
//! `d/dt rho + <alpha, grad rho> - E lap rho = kappa * int_A M dbeta`.
//!
//! Transport is first-order upwind in flux form, diffusion the standard
//! central Laplacian; both act per velocity node. The mixing integral is
//! evaluated per cell from the same snapshot.

use crate::error::{invalid, Error, Result};
use crate::grid::{field_stats, AlphaField, SpatialGrid, VelocityGrid};
use crate::mixer::{MixerParams, MixingKernel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    AutoCfl,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    /// Explicit midpoint.
    Rk2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt_policy: DtPolicy,
    pub cfl_advection: f64,
    pub cfl_diffusion: f64,
    pub cfl_mixing: f64,
    pub t_end: f64,
    pub integrator: Integrator,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_policy: DtPolicy::AutoCfl,
            cfl_advection: 0.5,
            cfl_diffusion: 0.25,
            cfl_mixing: 0.5,
            t_end: 1.0,
            integrator: Integrator::Euler,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("solver.cfl_advection", self.cfl_advection),
            ("solver.cfl_diffusion", self.cfl_diffusion),
            ("solver.cfl_mixing", self.cfl_mixing),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(name, format!("safety factor must lie in (0, 1], got {v}")));
            }
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(invalid("solver.t_end", format!("must be non-negative, got {}", self.t_end)));
        }
        if let DtPolicy::Fixed(dt) = self.dt_policy {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(invalid("solver.dt_policy", format!("fixed step must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// Grids, parameters and the tabulated mixing kernel of one problem.
#[derive(Debug, Clone)]
pub struct Model {
    pub spatial: SpatialGrid,
    pub velocity: VelocityGrid,
    pub params: MixerParams,
    kernel: MixingKernel,
}

/// Right-hand-side pieces for every (cell, node) entry, plus the net
/// advective inflow through the domain boundary per velocity node
/// (`sum_i h^dim * (-advection)` evaluated face by face).
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub advection: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub mixing: Vec<f64>,
    pub boundary_inflow: Vec<f64>,
}

impl Rates {
    fn zeros(len: usize, nodes: usize) -> Self {
        Self {
            advection: vec![0.0; len],
            diffusion: vec![0.0; len],
            mixing: vec![0.0; len],
            boundary_inflow: vec![0.0; nodes],
        }
    }

    /// `d rho / dt` for entry `idx`.
    #[inline]
    pub fn total(&self, idx: usize) -> f64 {
        (self.mixing[idx] + self.diffusion[idx]) - self.advection[idx]
    }
}

impl Model {
    pub fn new(spatial: SpatialGrid, velocity: VelocityGrid, params: MixerParams) -> Result<Self> {
        if spatial.dim() != velocity.dim() {
            return Err(invalid(
                "velocity",
                format!(
                    "velocity dimension {} does not match spatial dimension {}",
                    velocity.dim(),
                    spatial.dim()
                ),
            ));
        }
        params.validate()?;
        if params.gravity.len() != spatial.dim() {
            return Err(invalid("params.g", format!("expected {} components", spatial.dim())));
        }
        let kernel = MixingKernel::new(&velocity, &params);
        Ok(Self {
            spatial,
            velocity,
            params,
            kernel,
        })
    }

    pub fn kernel(&self) -> &MixingKernel {
        &self.kernel
    }

    pub fn kappa(&self) -> f64 {
        self.velocity.kappa()
    }

    pub fn zero_field(&self) -> AlphaField {
        AlphaField::for_grids(&self.spatial, &self.velocity)
    }

    pub fn rates(&self, values: &[f64]) -> Rates {
        let mut r = Rates::zeros(values.len(), self.velocity.len());
        advection_into(values, &self.spatial, &self.velocity, &mut r.advection, &mut r.boundary_inflow);
        diffusion_into(values, &self.spatial, self.velocity.len(), self.params.diffusion, &mut r.diffusion);
        let n = self.velocity.len();
        if self.kappa() > 0.0 {
            for (row, out) in values.chunks(n).zip(r.mixing.chunks_mut(n)) {
                self.kernel.rates_into(row, out);
            }
        }
        r
    }
}

pub(crate) fn advection_into(
    values: &[f64],
    spatial: &SpatialGrid,
    velocity: &VelocityGrid,
    out: &mut [f64],
    boundary_inflow: &mut [f64],
) {
    let n = velocity.len();
    let h = spatial.h();
    let face_area = h.powi(spatial.dim() as i32 - 1);
    out.iter_mut().for_each(|o| *o = 0.0);
    boundary_inflow.iter_mut().for_each(|b| *b = 0.0);
    for cell in 0..spatial.n_cells() {
        let here = &values[cell * n..(cell + 1) * n];
        for axis in 0..spatial.dim() {
            let back = spatial.neighbor(cell, axis, false);
            let fwd = spatial.neighbor(cell, axis, true);
            let back_row = back.map(|b| &values[b * n..(b + 1) * n]);
            let fwd_row = fwd.map(|f| &values[f * n..(f + 1) * n]);
            for j in 0..n {
                let c = velocity.node(j)[axis];
                if c == 0.0 {
                    continue;
                }
                // zero-gradient ghost cells on outflow boundaries
                let rb = back_row.map_or(here[j], |r| r[j]);
                let rf = fwd_row.map_or(here[j], |r| r[j]);
                let diff = if c > 0.0 { here[j] - rb } else { rf - here[j] };
                out[cell * n + j] += c * diff / h;
                if back.is_none() {
                    boundary_inflow[j] += face_area * c * here[j];
                }
                if fwd.is_none() {
                    boundary_inflow[j] -= face_area * c * here[j];
                }
            }
        }
    }
}

pub(crate) fn diffusion_into(values: &[f64], spatial: &SpatialGrid, n: usize, e: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    if e == 0.0 {
        return;
    }
    let scale = e / (spatial.h() * spatial.h());
    for cell in 0..spatial.n_cells() {
        let here = &values[cell * n..(cell + 1) * n];
        for axis in 0..spatial.dim() {
            let back = spatial.neighbor(cell, axis, false).map(|b| &values[b * n..(b + 1) * n]);
            let fwd = spatial.neighbor(cell, axis, true).map(|f| &values[f * n..(f + 1) * n]);
            for j in 0..n {
                let rb = back.map_or(here[j], |r| r[j]);
                let rf = fwd.map_or(here[j], |r| r[j]);
                out[cell * n + j] += (rf - 2.0 * here[j] + rb) * scale;
            }
        }
    }
}

/// `<alpha, grad_x rho>` by first-order upwinding, per entry.
pub fn advection_term(field: &AlphaField, spatial: &SpatialGrid, velocity: &VelocityGrid) -> Result<Vec<f64>> {
    field.check_shape(spatial, velocity)?;
    let mut out = vec![0.0; field.values().len()];
    let mut inflow = vec![0.0; velocity.len()];
    advection_into(field.values(), spatial, velocity, &mut out, &mut inflow);
    Ok(out)
}

/// `E * lap_x rho` with the central 2*dim+1 point stencil, per entry.
pub fn diffusion_term(field: &AlphaField, spatial: &SpatialGrid, e: f64) -> Result<Vec<f64>> {
    if !(e.is_finite() && e >= 0.0) {
        return Err(invalid("params.E", format!("must be non-negative, got {e}")));
    }
    if field.n_cells() != spatial.n_cells() {
        return Err(Error::ShapeMismatch {
            expected: spatial.n_cells() * field.n_nodes(),
            actual: field.values().len(),
        });
    }
    let mut out = vec![0.0; field.values().len()];
    diffusion_into(field.values(), spatial, field.n_nodes(), e, &mut out);
    Ok(out)
}

/// Largest step for which the explicit Euler update keeps `rho >= 0`.
///
/// The three mechanism bounds are combined harmonically, so the sum of the
/// per-entry loss fractions never exceeds one; with a single active
/// mechanism this is just that mechanism's bound.
pub fn stable_dt(model: &Model, config: &SolverConfig) -> Result<f64> {
    let h = model.spatial.h();
    let vmax = model.velocity.max_abs_component();
    let e = model.params.diffusion;
    let mix = model.kappa() * model.velocity.weight_sum();
    let mut inv = 0.0;
    if vmax > 0.0 {
        inv += vmax / (config.cfl_advection * h);
    }
    if e > 0.0 {
        inv += 2.0 * model.spatial.dim() as f64 * e / (config.cfl_diffusion * h * h);
    }
    if mix > 0.0 {
        inv += mix / config.cfl_mixing;
    }
    if inv > 0.0 && inv.is_finite() {
        Ok(1.0 / inv)
    } else {
        Err(Error::DegenerateTimeStep)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub field: AlphaField,
    pub step_count: u64,
    pub t: f64,
    /// Per-entry increment applied by the most recent step.
    pub last_increment: Vec<f64>,
}

impl SolverState {
    pub fn new(field: AlphaField) -> Self {
        let len = field.values().len();
        Self {
            t: field.t,
            field,
            step_count: 0,
            last_increment: vec![0.0; len],
        }
    }
}

/// Everything needed to replay one accepted step: the rates actually applied
/// (the midpoint rates for `Rk2`), the pre-step values and the midpoint stage.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub dt: f64,
    pub integrator: Integrator,
    pub rates: Rates,
    pub before: Vec<f64>,
    pub stage: Option<Vec<f64>>,
}

/// Advances `state` by `dt`; the state is left untouched on error.
pub fn step(state: &mut SolverState, model: &Model, dt: f64, integrator: Integrator) -> Result<StepRecord> {
    state.field.check_shape(&model.spatial, &model.velocity)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("time step must be positive, got {dt}")));
    }
    let before = state.field.values();
    let len = before.len();
    let (rates, stage) = match integrator {
        Integrator::Euler => (model.rates(before), None),
        Integrator::Rk2 => {
            let r1 = model.rates(before);
            let mid: Vec<f64> = (0..len).map(|i| before[i] + 0.5 * dt * r1.total(i)).collect();
            (model.rates(&mid), Some(mid))
        }
    };
    let increment: Vec<f64> = (0..len).map(|i| dt * rates.total(i)).collect();
    let next: Vec<f64> = before.iter().zip(&increment).map(|(r, d)| r + d).collect();

    let step_index = state.step_count + 1;
    let n = model.velocity.len();
    let max = next.iter().copied().fold(0.0, f64::max);
    for (idx, v) in next.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                step: step_index,
                cell: idx / n,
                node: idx % n,
            });
        }
        if *v < -1e-12 * max {
            return Err(Error::Negativity {
                step: step_index,
                cell: idx / n,
                node: idx % n,
                value: *v,
                max,
            });
        }
    }

    let t = state.t + dt;
    let old = std::mem::replace(
        &mut state.field,
        AlphaField::from_raw(model.spatial.n_cells(), n, next, t),
    );
    state.t = t;
    state.step_count = step_index;
    state.last_increment = increment;
    Ok(StepRecord {
        dt,
        integrator,
        rates,
        before: old.into_values(),
        stage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    /// Mass that entered through the boundary since the start.
    pub boundary_inflow: f64,
    /// `(mass - mass0 - boundary_inflow) / mass0`.
    pub drift: f64,
}

/// Called once before the first step (`record = None`) and after every step.
pub trait Observer {
    fn observe(&mut self, state: &SolverState, record: Option<&StepRecord>) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(&SolverState, Option<&StepRecord>) -> Result<()>,
{
    fn observe(&mut self, state: &SolverState, record: Option<&StepRecord>) -> Result<()> {
        self(state, record)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SolverState,
    pub ledger: Vec<LedgerEntry>,
}

/// A failed run: the error plus the state and ledger up to the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub state: SolverState,
    pub ledger: Vec<LedgerEntry>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted at t = {}: {}", self.state.t, self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Step sizes for a run of length `t_end` under a fixed step `dt`: whole
/// steps of exactly `dt`, with a shorter final step only if `t_end` is not
/// (to 1e-9 relative) a multiple of `dt`.
fn fixed_schedule(t_end: f64, dt: f64) -> (u64, f64) {
    let ratio = t_end / dt;
    let whole = ratio.round();
    if (ratio - whole).abs() <= 1e-9 * whole.max(1.0) {
        (whole as u64, dt)
    } else {
        let n = ratio.ceil();
        (n as u64, t_end - (n - 1.0) * dt)
    }
}

pub fn run(
    initial: AlphaField,
    model: &Model,
    config: &SolverConfig,
    observer: &mut dyn Observer,
) -> std::result::Result<RunOutcome, RunFailure> {
    let mut state = SolverState::new(initial);
    let mut ledger = Vec::new();
    macro_rules! bail {
        ($e:expr) => {
            return Err(RunFailure {
                error: $e,
                state,
                ledger,
            })
        };
    }
    if let Err(e) = config
        .validate()
        .and_then(|_| state.field.check_shape(&model.spatial, &model.velocity))
    {
        bail!(e);
    }
    let t0 = state.t;
    let mass0 = field_stats(&state.field, &model.velocity, &model.spatial).total_mass;
    ledger.push(LedgerEntry {
        step: 0,
        t: t0,
        dt: 0.0,
        mass: mass0,
        boundary_inflow: 0.0,
        drift: 0.0,
    });
    if let Err(e) = observer.observe(&state, None) {
        bail!(e);
    }
    if config.t_end <= 0.0 {
        return Ok(RunOutcome { state, ledger });
    }

    let (fixed_steps, fixed_last) = match config.dt_policy {
        DtPolicy::Fixed(dt) => fixed_schedule(config.t_end, dt),
        DtPolicy::AutoCfl => (0, 0.0),
    };
    let auto_dt = match config.dt_policy {
        DtPolicy::AutoCfl => match stable_dt(model, config) {
            Ok(dt) => dt,
            Err(e) => bail!(e),
        },
        DtPolicy::Fixed(dt) => dt,
    };
    let t_final = t0 + config.t_end;
    let w = model.velocity.weights();
    let kappa = model.kappa();
    let mut inflow = 0.0;
    loop {
        let dt = match config.dt_policy {
            DtPolicy::Fixed(dt) => {
                if state.step_count >= fixed_steps {
                    break;
                }
                if state.step_count + 1 == fixed_steps {
                    fixed_last
                } else {
                    dt
                }
            }
            DtPolicy::AutoCfl => {
                let remaining = t_final - state.t;
                if remaining <= 1e-12 * t_final.abs().max(1.0) {
                    break;
                }
                if remaining <= auto_dt * (1.0 + 1e-9) {
                    remaining
                } else {
                    auto_dt
                }
            }
        };
        let record = match step(&mut state, model, dt, config.integrator) {
            Ok(r) => r,
            Err(e) => bail!(e),
        };
        let boundary: f64 = record
            .rates
            .boundary_inflow
            .iter()
            .zip(w)
            .map(|(b, w)| b * w)
            .sum();
        inflow += dt * kappa * boundary;
        let mass = field_stats(&state.field, &model.velocity, &model.spatial).total_mass;
        let drift = if mass0 > 0.0 {
            (mass - mass0 - inflow) / mass0
        } else {
            0.0
        };
        ledger.push(LedgerEntry {
            step: state.step_count,
            t: state.t,
            dt,
            mass,
            boundary_inflow: inflow,
            drift,
        });
        if let Err(e) = observer.observe(&state, Some(&record)) {
            bail!(e);
        }
    }
    if let DtPolicy::Fixed(_) = config.dt_policy {
        // snap accumulated roundoff in t
        state.t = t_final;
        state.field.t = t_final;
    }
    Ok(RunOutcome { state, ledger })
}
