//! Space-time discretisation and the stability analysis of the leapfrog stencil.
//!
//! The update for a single Fourier perturbation `u_n e^{ijθ}` reduces to
//! `λ² − Mλ + 1 = 0` with `M = 2 + 2C²cosθ − 2C² − 2Δt²V`. Both roots are pure
//! phases iff `|M| ≤ 2`, which after minimising over `θ` and maximising over
//! the potential gives `Δt² ≤ 2Δx² / (2 + Ṽ Δx²)`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::C64;

/// Default number of `θ` samples used by [`stability_scan`].
pub const DEFAULT_THETA_SAMPLES: usize = 1024;

/// Uniform grid on `[0, L]` including both Dirichlet boundary points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    length: f64,
    n_points: usize,
    spacing: f64,
}

impl SpatialGrid {
    pub fn new(length: f64, n_points: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid(format!("box length must be positive, got {length}")));
        }
        if n_points < 4 {
            return Err(invalid(format!("need at least 4 grid points, got {n_points}")));
        }
        Ok(Self {
            length,
            n_points,
            spacing: length / (n_points - 1) as f64,
        })
    }

    /// Grid with spacing `dx`; `length / dx` must be an integer to 1e-9.
    pub fn with_spacing(length: f64, dx: f64) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(invalid(format!("grid spacing must be positive, got {dx}")));
        }
        let cells = length / dx;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
            return Err(invalid(format!(
                "box length {length} is not an integer multiple of dx = {dx}"
            )));
        }
        Self::new(length, rounded as usize + 1)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn x(&self, i: usize) -> f64 {
        // exact at both ends
        if i + 1 == self.n_points {
            self.length
        } else {
            i as f64 * self.spacing
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Index of the grid point at `x`, if `x` lies on the grid to 1e-9 cells.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let s = x / self.spacing;
        let r = s.round();
        if r < 0.0 || r as usize >= self.n_points || (s - r).abs() > 1e-9 {
            None
        } else {
            Some(r as usize)
        }
    }
}

/// Uniform time levels `t_n = nΔt`, `n = 0..n_steps`.
///
/// `n_steps` counts levels including `t = 0`, so the last level sits at
/// `(n_steps − 1)Δt ≥ t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    n_steps: usize,
    dt: f64,
    cfl_factor: f64,
}

impl TimeGrid {
    pub fn new(spatial: &SpatialGrid, dt: f64, t_max: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        if !(t_max.is_finite() && t_max >= 0.0) {
            return Err(invalid(format!("t_max must be non-negative, got {t_max}")));
        }
        let steps = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
        Ok(Self {
            t_max,
            // at least the four levels the bootstrap needs
            n_steps: (steps + 1).max(3),
            dt,
            cfl_factor: dt / spatial.spacing(),
        })
    }

    /// Time grid with `Δt = C·Δx`.
    pub fn from_cfl(spatial: &SpatialGrid, cfl: f64, t_max: f64) -> Result<Self> {
        if !(cfl.is_finite() && cfl > 0.0) {
            return Err(invalid(format!("CFL factor must be positive, got {cfl}")));
        }
        Self::new(spatial, cfl * spatial.spacing(), t_max)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cfl_factor(&self) -> f64 {
        self.cfl_factor
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let s = t / self.dt;
        let r = s.round();
        if r < 0.0 || r as usize >= self.n_steps || (s - r).abs() > 1e-9 {
            None
        } else {
            Some(r as usize)
        }
    }
}

/// Largest time step satisfying `Δt² ≤ 2Δx² / (2 + Ṽ Δx²)`.
pub fn cfl_max_timestep(dx: f64, v_max: f64) -> Result<f64> {
    if !(dx.is_finite() && dx > 0.0) {
        return Err(invalid(format!("dx must be positive, got {dx}")));
    }
    if !(v_max.is_finite() && v_max >= 0.0) {
        return Err(invalid(format!("v_max must be non-negative, got {v_max}")));
    }
    Ok((2.0 * dx * dx / (2.0 + v_max * dx * dx)).sqrt())
}

/// Roots `(λ+, λ−)` of `λ² − Mλ + 1 = 0` for the leapfrog stencil.
pub fn amplification_factors(theta: f64, dt: f64, dx: f64, v: f64) -> Result<(C64, C64)> {
    if !(dx > 0.0 && dt > 0.0) {
        return Err(invalid(format!("dt and dx must be positive, got dt = {dt}, dx = {dx}")));
    }
    if !(v >= 0.0) {
        return Err(invalid(format!("potential must be non-negative, got {v}")));
    }
    if !(0.0..=PI).contains(&theta) {
        return Err(invalid(format!("theta must lie in [0, π], got {theta}")));
    }
    let c2 = (dt / dx).powi(2);
    let m = 2.0 + 2.0 * c2 * theta.cos() - 2.0 * c2 - 2.0 * dt * dt * v;
    let half = 0.5 * m;
    // A double root at ±1 only moves by √ε under rounding; snap M that is
    // within a few ulps of ±2.
    let disc = if (m.abs() - 2.0).abs() <= 16.0 * f64::EPSILON * (1.0 + m.abs()) {
        0.0
    } else {
        m * m - 4.0
    };
    if disc >= 0.0 {
        let r = 0.5 * disc.sqrt();
        Ok((C64::new(half + r, 0.0), C64::new(half - r, 0.0)))
    } else {
        let r = 0.5 * (-disc).sqrt();
        Ok((C64::new(half, r), C64::new(half, -r)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub theta_samples: Vec<f64>,
    pub max_amplification: f64,
    pub stable: bool,
}

/// Samples `θ` uniformly on `[0, π]` and records the worst amplification.
pub fn stability_scan(
    spatial: &SpatialGrid,
    time: &TimeGrid,
    v_max: f64,
    n_theta: usize,
) -> Result<StabilityReport> {
    if n_theta < 16 {
        return Err(invalid(format!("need at least 16 theta samples, got {n_theta}")));
    }
    let theta_samples: Vec<f64> = (0..n_theta)
        .map(|k| {
            if k + 1 == n_theta {
                PI
            } else {
                PI * k as f64 / (n_theta - 1) as f64
            }
        })
        .collect();
    let mut max_amplification: f64 = 0.0;
    for &theta in &theta_samples {
        let (lp, lm) = amplification_factors(theta, time.dt(), spatial.spacing(), v_max)?;
        max_amplification = max_amplification.max(lp.norm()).max(lm.norm());
    }
    Ok(StabilityReport {
        theta_samples,
        max_amplification,
        stable: max_amplification <= 1.0 + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_spacing_consistent() {
        let g = SpatialGrid::with_spacing(10.0, 0.05).unwrap();
        assert_eq!(g.n_points(), 201);
        assert_relative_eq!((g.n_points() - 1) as f64 * g.spacing(), 10.0, max_relative = 1e-12);
        assert_eq!(g.x(200), 10.0);
        assert_eq!(g.index_of(3.0), Some(60));
        assert_eq!(g.index_of(3.01), None);
        assert!(SpatialGrid::new(10.0, 3).is_err());
        assert!(SpatialGrid::with_spacing(10.0, 0.03).is_err());
    }

    #[test]
    fn time_grid_cfl() {
        let g = SpatialGrid::with_spacing(10.0, 0.05).unwrap();
        let t = TimeGrid::from_cfl(&g, 0.05, 1.0).unwrap();
        assert_relative_eq!(t.dt(), 0.0025, max_relative = 1e-12);
        assert_relative_eq!(t.cfl_factor(), t.dt() / g.spacing(), max_relative = 1e-12);
        assert_eq!(t.n_steps(), 401);
        assert_eq!(t.index_of(0.75), Some(300));
    }

    #[test]
    fn cfl_without_potential_is_dx() {
        assert_relative_eq!(cfl_max_timestep(0.05, 0.0).unwrap(), 0.05, max_relative = 1e-15);
    }

    #[test]
    fn cfl_with_potential() {
        let dt = cfl_max_timestep(0.05, 250.0).unwrap();
        assert_relative_eq!(dt, (0.005f64 / 2.625).sqrt(), max_relative = 1e-14);
        assert!((dt - 0.043644).abs() < 1e-6);
        // |λ| ≤ 1 at the bound for every θ, and > 1 once the step grows by 1%
        for k in 0..=512 {
            let theta = PI * k as f64 / 512.0;
            let (a, b) = amplification_factors(theta, dt, 0.05, 250.0).unwrap();
            assert!(a.norm().max(b.norm()) <= 1.0 + 1e-12);
        }
        let (a, b) = amplification_factors(PI, 1.01 * dt, 0.05, 250.0).unwrap();
        assert!(a.norm().max(b.norm()) > 1.0);
    }

    #[test]
    fn paper_cfl_factor_is_stable() {
        let dt = 0.05 / 20.0;
        assert!(dt <= cfl_max_timestep(0.05, 250.0).unwrap());
    }

    #[test]
    fn free_roots_are_phases() {
        for k in 0..=64 {
            let theta = PI * k as f64 / 64.0;
            let (a, b) = amplification_factors(theta, 0.05, 0.05, 0.0).unwrap();
            assert_relative_eq!(a.norm(), 1.0, max_relative = 1e-12);
            assert_relative_eq!(b.norm(), 1.0, max_relative = 1e-12);
        }
        let (a, b) = amplification_factors(0.0, 0.01, 0.05, 0.0).unwrap();
        assert_eq!(a, C64::new(1.0, 0.0));
        assert_eq!(b, C64::new(1.0, 0.0));
    }

    #[test]
    fn unstable_above_bound() {
        let dx = 0.05;
        let dt = 1.05 * cfl_max_timestep(dx, 250.0).unwrap();
        let (a, b) = amplification_factors(PI, dt, dx, 250.0).unwrap();
        // closed-form: M = 2 − 4C² − 2Δt²V, dominant root (M − √(M² − 4))/2
        let c2 = (dt / dx).powi(2);
        let m = 2.0 - 4.0 * c2 - 2.0 * dt * dt * 250.0;
        let expected = ((m - (m * m - 4.0).sqrt()) / 2.0).abs();
        assert_relative_eq!(a.norm().max(b.norm()), expected, max_relative = 1e-12);
        assert!(expected > 1.0);
    }

    #[test]
    fn argument_validation() {
        assert!(cfl_max_timestep(0.0, 1.0).is_err());
        assert!(cfl_max_timestep(-1.0, 1.0).is_err());
        assert!(amplification_factors(4.0, 0.1, 0.1, 0.0).is_err());
        assert!(amplification_factors(1.0, 0.1, 0.1, -1.0).is_err());
    }

    #[test]
    fn scan_cases() {
        let g = SpatialGrid::with_spacing(10.0, 0.05).unwrap();
        let bound = cfl_max_timestep(0.05, 250.0).unwrap();

        let at = stability_scan(&g, &TimeGrid::new(&g, bound, 1.0).unwrap(), 250.0, DEFAULT_THETA_SAMPLES)
            .unwrap();
        assert!(at.stable);
        assert!((at.max_amplification - 1.0).abs() <= 1e-9);

        let above = stability_scan(&g, &TimeGrid::new(&g, 1.1 * bound, 1.0).unwrap(), 250.0, 64).unwrap();
        assert!(!above.stable);

        let half = stability_scan(&g, &TimeGrid::new(&g, 0.5 * bound, 1.0).unwrap(), 250.0, 64).unwrap();
        assert!(half.stable);
        assert_eq!(half.theta_samples.len(), 64);
        assert_eq!(*half.theta_samples.last().unwrap(), PI);

        assert!(stability_scan(&g, &TimeGrid::new(&g, bound, 1.0).unwrap(), 250.0, 8).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn roots_multiply_to_one(theta in 0.0..PI, frac in 0.05f64..1.5, dx in 0.01f64..0.2, v in 0.0f64..500.0) {
                let dt = frac * cfl_max_timestep(dx, v).unwrap();
                let (a, b) = amplification_factors(theta, dt, dx, v).unwrap();
                let p = a * b;
                prop_assert!((p.re - 1.0).abs() < 1e-12 * (1.0 + a.norm() * b.norm()));
                prop_assert!(p.im.abs() < 1e-12 * (1.0 + a.norm() * b.norm()));
            }

            #[test]
            fn bounded_under_cfl(theta in 0.0..PI, frac in 0.01f64..=1.0, dx in 0.01f64..0.2, v in 0.0f64..500.0) {
                let dt = frac * cfl_max_timestep(dx, v).unwrap();
                let (a, b) = amplification_factors(theta, dt, dx, v).unwrap();
                prop_assert!(a.norm().max(b.norm()) <= 1.0 + 1e-12);
            }
        }
    }
}
