//! Mixer kernels: the saturation function, the angle factor, the mass mixer
//! `M = Phi * mu`, its velocity-space integral, and the boundary and impulse
//! mixers built from it.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::grid::{dot, norm, VelocityGrid};

/// Scalar modulation `b(alpha, beta)` of the boundary mixer.
#[derive(Clone, Default)]
pub enum BoundaryModulation {
    /// `b = 0`: no boundary mixing (the simplified model).
    #[default]
    Off,
    /// `b = 1`.
    Unit,
    Custom(Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>),
}

impl BoundaryModulation {
    pub fn value(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        match self {
            Self::Off => 0.0,
            Self::Unit => 1.0,
            Self::Custom(f) => f(alpha, beta),
        }
    }
}

impl fmt::Debug for BoundaryModulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Off => f.write_str("Off"),
            Self::Unit => f.write_str("Unit"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Parameters of the mixer and of the transport terms it is paired with.
///
/// `kappa` lives on [`VelocityGrid`] because every velocity quadrature uses it.
#[derive(Debug, Clone)]
pub struct MixerParams {
    /// Saturation scale `D > 0`.
    pub saturation: f64,
    /// Diffusion constant `E >= 0`.
    pub diffusion: f64,
    /// Body-force field `g` per unit alpha-density.
    pub gravity: Vec<f64>,
    /// Angle factor used when either velocity is the zero vector.
    pub zero_angle: f64,
    pub boundary: BoundaryModulation,
}

impl MixerParams {
    pub fn new(saturation: f64, diffusion: f64, dim: usize) -> Result<Self> {
        let p = Self {
            saturation,
            diffusion,
            gravity: vec![0.0; dim],
            zero_angle: 1.0,
            boundary: BoundaryModulation::Off,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_gravity(mut self, gravity: Vec<f64>) -> Result<Self> {
        if gravity.iter().any(|g| !g.is_finite()) {
            return Err(invalid("params.g", "gravity must be finite"));
        }
        self.gravity = gravity;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.saturation.is_finite() && self.saturation > 0.0) {
            return Err(invalid("params.D", format!("must be positive, got {}", self.saturation)));
        }
        if !(self.diffusion.is_finite() && self.diffusion >= 0.0) {
            return Err(invalid("params.E", format!("must be non-negative, got {}", self.diffusion)));
        }
        if !(0.0..=1.0).contains(&self.zero_angle) {
            return Err(invalid("params.zero_angle", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Boundary mixer with this parameter set's modulation `b`.
    pub fn boundary_mixer(&self, m_ab: f64, m_ba: f64, alpha: &[f64], beta: &[f64]) -> Vec<f64> {
        boundary_mixer(m_ab, m_ba, alpha, beta, self.boundary.value(alpha, beta))
    }
}

/// `r(d) = -d / (1 + |d|)`: odd, decreasing, bounded by 1 in magnitude.
#[inline]
pub fn saturation_r(d: f64) -> f64 {
    if d >= 0.0 {
        -d / (1.0 + d)
    } else {
        -d / (1.0 - d)
    }
}

/// `cos(theta / 2)` for the angle between `alpha` and `beta`, computed as
/// `sqrt((1 + cos theta) / 2)`.
pub fn angle_factor_phi(alpha: &[f64], beta: &[f64], zero_angle: f64) -> f64 {
    let denom = norm(alpha) * norm(beta);
    if denom == 0.0 {
        return zero_angle;
    }
    let cos = (dot(alpha, beta) / denom).clamp(-1.0, 1.0);
    (0.5 * (1.0 + cos)).sqrt()
}

#[inline]
fn mu(rho_a: f64, rho_b: f64, speed_a: f64, speed_b: f64, saturation: f64) -> f64 {
    let d = speed_b * rho_b - speed_a * rho_a;
    if d >= 0.0 {
        rho_a * saturation_r(saturation * d)
    } else {
        rho_b * saturation_r(saturation * d)
    }
}

/// Rate of mass gained by the `alpha`-portion from the `beta`-portion.
///
/// Negative whenever `|beta| rho_b >= |alpha| rho_a`; antisymmetric under
/// exchanging the two portions.
pub fn mass_mixer(rho_a: f64, rho_b: f64, alpha: &[f64], beta: &[f64], params: &MixerParams) -> f64 {
    let phi = angle_factor_phi(alpha, beta, params.zero_angle);
    phi * mu(rho_a, rho_b, norm(alpha), norm(beta), params.saturation)
}

/// `(alpha * M_ab + beta * M_ba) * b`.
pub fn boundary_mixer(m_ab: f64, m_ba: f64, alpha: &[f64], beta: &[f64], b: f64) -> Vec<f64> {
    alpha
        .iter()
        .zip(beta)
        .map(|(a, bb)| (a * m_ab + bb * m_ba) * b)
        .collect()
}

/// `J = alpha * M_ab + i_ab`; `i_ab = None` means the correction is zero.
pub fn impulse_mixer(alpha: &[f64], m_ab: f64, i_ab: Option<&[f64]>) -> Vec<f64> {
    match i_ab {
        Some(i) => alpha.iter().zip(i).map(|(a, i)| a * m_ab + i).collect(),
        None => alpha.iter().map(|a| a * m_ab).collect(),
    }
}

/// Mass mixer specialised to one velocity grid: angle factors and speeds are
/// tabulated so the per-cell integral only evaluates `mu`.
#[derive(Debug, Clone)]
pub struct MixingKernel {
    n: usize,
    phi: Vec<f64>,
    speeds: Vec<f64>,
    weights: Vec<f64>,
    saturation: f64,
    kappa: f64,
}

impl MixingKernel {
    pub fn new(velocity: &VelocityGrid, params: &MixerParams) -> Self {
        let n = velocity.len();
        let mut phi = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                phi[j * n + k] = angle_factor_phi(velocity.node(j), velocity.node(k), params.zero_angle);
            }
        }
        Self {
            n,
            phi,
            speeds: velocity.speeds().to_vec(),
            weights: velocity.weights().to_vec(),
            saturation: params.saturation,
            kappa: velocity.kappa(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `M(alpha_j, alpha_k)` for densities `rho_j`, `rho_k`.
    #[inline]
    pub fn pair(&self, j: usize, k: usize, rho_j: f64, rho_k: f64) -> f64 {
        self.phi[j * self.n + k] * mu(rho_j, rho_k, self.speeds[j], self.speeds[k], self.saturation)
    }

    /// Visits every unordered pair `j < k` with a nonzero transfer.
    #[inline]
    pub fn for_each_pair(&self, row: &[f64], mut visit: impl FnMut(usize, usize, f64)) {
        for j in 0..self.n {
            let rj = row[j];
            for k in j + 1..self.n {
                let rk = row[k];
                if rj == 0.0 && rk == 0.0 {
                    continue;
                }
                let m = self.pair(j, k, rj, rk);
                if m != 0.0 {
                    visit(j, k, m);
                }
            }
        }
    }

    /// `out_j = kappa * sum_k w_k M(rho_j, rho_k)`.
    pub fn rates_into(&self, row: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let w = &self.weights;
        self.for_each_pair(row, |j, k, m| {
            out[j] += w[k] * m;
            out[k] -= w[j] * m;
        });
        out.iter_mut().for_each(|o| *o *= self.kappa);
    }
}

/// Per-node mixing rate `kappa * sum_k w_k M(alpha_j, alpha_k)` for one cell.
pub fn mixing_integral(row: &[f64], velocity: &VelocityGrid, params: &MixerParams) -> Vec<f64> {
    let kernel = MixingKernel::new(velocity, params);
    let mut out = vec![0.0; row.len()];
    kernel.rates_into(row, &mut out);
    out
}
