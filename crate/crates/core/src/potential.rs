//! External potentials `V(x, t)`.
//!
//! The confining model is a pair of Gaussian walls whose inner flanks are cut
//! off by error functions, grown linearly until the ramp time `T` and frozen
//! afterwards:
//!
//! ```text
//! V(x,t) = V_max · min(t,T)/T · [ e^{−(x−x_L)²/ℓ²} (1 + erf(−β(x−x_L)))
//!                               + e^{−(x−x_R)²/ℓ²} (1 + erf( β(x−x_R))) ]
//! ```

use crate::error::{invalid, Result};
use crate::lattice::SpatialGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    pub v_max: f64,
    pub ramp_time: f64,
    pub x_left_wall: f64,
    pub x_right_wall: f64,
    pub wall_width: f64,
    pub sharpness: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            v_max: 250.0,
            ramp_time: 10.0,
            x_left_wall: 3.0,
            x_right_wall: 7.0,
            wall_width: 1.0,
            sharpness: 30.0,
        }
    }
}

impl PotentialParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.v_max >= 0.0
            && self.ramp_time > 0.0
            && self.wall_width > 0.0
            && self.sharpness >= 0.0
            && self.x_left_wall < self.x_right_wall
            && [self.v_max, self.ramp_time, self.x_left_wall, self.x_right_wall, self.wall_width, self.sharpness]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid potential parameters: {self:?}")))
        }
    }

    /// Spatial shape at full height (`t ≥ T`), without the `V_max` prefactor.
    pub fn shape(&self, x: f64) -> f64 {
        let l2 = self.wall_width * self.wall_width;
        let dl = x - self.x_left_wall;
        let dr = x - self.x_right_wall;
        let left = (-dl * dl / l2).exp() * (1.0 + libm::erf(-self.sharpness * dl));
        let right = (-dr * dr / l2).exp() * (1.0 + libm::erf(self.sharpness * dr));
        left + right
    }

    pub fn ramp(&self, t: f64) -> f64 {
        (t.max(0.0) / self.ramp_time).min(1.0)
    }

    pub fn evaluate(&self, x: f64, t: f64) -> f64 {
        self.v_max * self.ramp(t) * self.shape(x)
    }

    /// Supremum of `evaluate` over all `x` and `t`.
    ///
    /// Dense sampling of the frozen shape around each wall, followed by a
    /// golden-section refinement of the best bracket.
    pub fn max_value(&self) -> f64 {
        if self.v_max == 0.0 {
            return 0.0;
        }
        let h = (self.wall_width.min(if self.sharpness > 0.0 { 1.0 / self.sharpness } else { f64::INFINITY }))
            / 64.0;
        let reach = 6.0 * self.wall_width;
        let mut best = 0.0f64;
        for wall in [self.x_left_wall, self.x_right_wall] {
            let lo = wall - reach;
            let n = (2.0 * reach / h).ceil() as usize;
            let mut arg = 0usize;
            let mut val = f64::NEG_INFINITY;
            for k in 0..=n {
                let v = self.shape(lo + k as f64 * h);
                if v > val {
                    val = v;
                    arg = k;
                }
            }
            let centre = lo + arg as f64 * h;
            let refined = golden_max(|x| self.shape(x), centre - h, centre + h);
            best = best.max(val).max(refined);
        }
        // keep the result above any grid sample despite rounding in `shape`
        self.v_max * best * (1.0 + 4.0 * f64::EPSILON)
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(0.5 * (a + b)))
}

/// Potential models the evolver accepts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    /// Double wall ramped linearly up to `ramp_time`, frozen afterwards.
    Ramped(PotentialParams),
    /// Double wall at its full `t ≥ T` height from `t = 0` on.
    Static(PotentialParams),
    /// Constant `V = m²/2`, i.e. a Klein-Gordon field of mass `m`.
    Uniform(f64),
}

impl Default for Potential {
    fn default() -> Self {
        Potential::Uniform(0.0)
    }
}

impl Potential {
    pub fn free() -> Self {
        Potential::Uniform(0.0)
    }

    pub fn from_mass(m: f64) -> Self {
        Potential::Uniform(0.5 * m * m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Ramped(p) | Potential::Static(p) => p.validate(),
            Potential::Uniform(v) if v.is_finite() && *v >= 0.0 => Ok(()),
            Potential::Uniform(v) => Err(invalid(format!("uniform potential must be non-negative, got {v}"))),
        }
    }

    pub fn evaluate(&self, x: f64, t: f64) -> f64 {
        match self {
            Potential::Ramped(p) => p.evaluate(x, t),
            Potential::Static(p) => p.v_max * p.shape(x),
            Potential::Uniform(v) => *v,
        }
    }

    /// Maximum over all `x` and all `t ≥ 0`.
    pub fn max_value(&self) -> f64 {
        match self {
            Potential::Ramped(p) | Potential::Static(p) => p.max_value(),
            Potential::Uniform(v) => *v,
        }
    }

    /// Maximum over all `x` and `t ∈ [0, t_max]`.
    pub fn max_until(&self, t_max: f64) -> f64 {
        match self {
            Potential::Ramped(p) => p.max_value() * p.ramp(t_max),
            _ => self.max_value(),
        }
    }

    /// Time after which the potential no longer changes.
    pub fn settle_time(&self) -> f64 {
        match self {
            Potential::Ramped(p) => p.ramp_time,
            _ => 0.0,
        }
    }

    pub fn sample_on_grid(&self, grid: &SpatialGrid, t: f64) -> Vec<f64> {
        (0..grid.n_points()).map(|i| self.evaluate(grid.x(i), t)).collect()
    }

    pub fn params(&self) -> Option<&PotentialParams> {
        match self {
            Potential::Ramped(p) | Potential::Static(p) => Some(p),
            Potential::Uniform(_) => None,
        }
    }
}

pub fn evaluate(params: &PotentialParams, x: f64, t: f64) -> f64 {
    params.evaluate(x, t)
}

pub fn max_value(params: &PotentialParams) -> f64 {
    params.max_value()
}

pub fn sample_on_grid(params: &PotentialParams, grid: &SpatialGrid, t: f64) -> Vec<f64> {
    Potential::Ramped(*params).sample_on_grid(grid, t)
}
