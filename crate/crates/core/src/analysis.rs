//! Grid-refinement harness: coarse/medium/fine runs of the same setup, the
//! difference curves used to eyeball convergence, and the observed order
//! `p(t) = log₂(‖W_c − W_m‖ / ‖W_m − W_f‖)`.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::evolution::{evolve_column, evolve_diagonal, EvolutionConfig};
use crate::lattice::{SpatialGrid, TimeGrid};
use crate::potential::Potential;
use crate::setup::Setup;
use crate::states::InitialData;
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTriple {
    pub base: Setup,
    pub h: usize,
}

impl RefinementTriple {
    /// `h` must be an integer ≥ 2 so that coarse points are grid points of the
    /// finer grids.
    pub fn new(base: Setup, h: f64) -> Result<Self> {
        if !(h >= 2.0 && h.fract() == 0.0 && h.is_finite()) {
            return Err(invalid(format!("refinement factor {h} does not give nested grids")));
        }
        Ok(Self { base, h: h as usize })
    }

    pub fn setups(&self) -> Result<[Setup; 3]> {
        Ok([self.base.clone(), self.base.refined(self.h)?, self.base.refined(self.h * self.h)?])
    }
}

/// `W(x_i, t_n; x', t')` for a fixed primed point, restricted to the coarse
/// grid: `values[n][i]` with `n` a coarse time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSolution {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub values: Vec<Vec<C64>>,
}

fn level(value: f64, step: f64, what: &str) -> Result<usize> {
    let s = value / step;
    let k = s.round();
    if k < 0.0 || (s - k).abs() > 1e-9 * s.abs().max(1.0) {
        return Err(invalid(format!("{what} = {value} is not on the grid with spacing {step}")));
    }
    Ok(k as usize)
}

/// Runs the three resolutions and samples them at the coarse points.
pub fn run_triple(triple: &RefinementTriple, x_prime: f64, t_prime: f64) -> Result<[ColumnSolution; 3]> {
    let setups = triple.setups()?;
    let coarse = &setups[0];
    let coarse_grid = coarse.grid()?;
    let coarse_time = coarse.time_grid()?;
    // fail before any expensive work if the fixed point is not on every grid
    for s in &setups {
        level(x_prime, s.dx, "x'")?;
        level(t_prime, s.dt(), "t'")?;
    }
    let results: Vec<Result<ColumnSolution>> = setups
        .par_iter()
        .enumerate()
        .map(|(lvl, s)| {
            let stride = triple.h.pow(lvl as u32);
            let cfg = s.build()?;
            let asym = cfg.initial.exchange_asymmetry();
            if asym > 1e-12 {
                return Err(Error::NumericalConsistency(format!(
                    "initial data breaks exchange symmetry by {asym:e}; slices in x and x' are not interchangeable"
                )));
            }
            let j = level(x_prime, s.dx, "x'")?;
            let m = level(t_prime, s.dt(), "t'")?;
            let nt = coarse_time.n_steps();
            let mut values = Vec::with_capacity(nt);
            evolve_column(&cfg, m, |n, slice| {
                if n % stride == 0 && n / stride < nt {
                    values.push((0..coarse_grid.n_points()).map(|i| slice[[i * stride, j]]).collect());
                }
                Ok(())
            })?;
            if values.len() != nt {
                return Err(Error::NumericalConsistency(format!(
                    "level {lvl} produced {} coarse time levels, expected {nt}",
                    values.len()
                )));
            }
            Ok(ColumnSolution {
                times: (0..nt).map(|n| coarse_time.t(n)).collect(),
                xs: coarse_grid.points(),
                values,
            })
        })
        .collect();
    let mut it = results.into_iter();
    Ok([it.next().unwrap()?, it.next().unwrap()?, it.next().unwrap()?])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurves {
    pub abscissa: Vec<f64>,
    pub diff_cm: Vec<C64>,
    pub diff_mf_scaled: Vec<C64>,
    pub p: f64,
}

impl ConvergenceCurves {
    /// Largest gap between the two curves relative to the coarse difference,
    /// for the real (`imaginary = false`) or imaginary part.
    pub fn mismatch(&self, imaginary: bool) -> f64 {
        let part = |v: &C64| if imaginary { v.im } else { v.re };
        let amp = self.diff_cm.iter().map(|v| part(v).abs()).fold(0.0, f64::max);
        let gap = self
            .diff_cm
            .iter()
            .zip(&self.diff_mf_scaled)
            .map(|(a, b)| (part(a) - part(b)).abs())
            .fold(0.0, f64::max);
        gap / amp
    }
}

/// `W_c − W_m` and `h^p (W_m − W_f)` over x at coarse time `t`.
pub fn spatial_convergence_curves(
    solutions: &[ColumnSolution; 3],
    h: usize,
    t: f64,
    p: f64,
) -> Result<ConvergenceCurves> {
    let [c, m, f] = solutions;
    let dt = c.times.get(1).map(|t1| t1 - c.times[0]).ok_or_else(|| invalid("empty solution"))?;
    let n = level(t, dt, "t")?;
    if n >= c.values.len() {
        return Err(invalid(format!("t = {t} is beyond the evolved range")));
    }
    let scale = (h as f64).powf(p);
    Ok(ConvergenceCurves {
        abscissa: c.xs.clone(),
        diff_cm: c.values[n].iter().zip(&m.values[n]).map(|(a, b)| a - b).collect(),
        diff_mf_scaled: m.values[n].iter().zip(&f.values[n]).map(|(a, b)| (a - b) * scale).collect(),
        p,
    })
}

fn l2(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// `p(t)` at every coarse level after the two bootstrap levels.
pub fn temporal_convergence_order(solutions: &[ColumnSolution; 3], h: usize) -> Result<Vec<(f64, f64)>> {
    if h != 2 {
        return Err(invalid(format!("the order formula assumes h = 2, got {h}")));
    }
    let [c, m, f] = solutions;
    let mut out = Vec::new();
    for n in 2..c.values.len() {
        let num = l2(&c.values[n], &m.values[n]);
        let den = l2(&m.values[n], &f.values[n]);
        if den == 0.0 || num == 0.0 {
            return Err(Error::UndefinedOrder(format!(
                "identical solutions at t = {} (‖c − m‖ = {num:e}, ‖m − f‖ = {den:e})",
                c.times[n]
            )));
        }
        out.push((c.times[n], (num / den).log2()));
    }
    Ok(out)
}

/// Largest `|W|` on the equal-time diagonal over `steps` steps, relative to
/// the start, for a point-like seed under the uniform potential `v`. No CFL
/// gate: this is the probe for where the gate belongs. Overflow reports `∞`.
pub fn norm_growth(grid: &SpatialGrid, v: f64, dt: f64, steps: usize) -> Result<f64> {
    if steps < 2 {
        return Err(invalid(format!("need at least 2 steps, got {steps}")));
    }
    let nx = grid.n_points();
    let mut init = InitialData::zeros(nx);
    init.w_phiphi[[nx / 2, nx / 2]] = C64::new(1.0, 0.0);
    let time = TimeGrid::new(grid, dt, steps as f64 * dt)?;
    let cfg = EvolutionConfig::new_unchecked(grid.clone(), time, Potential::Uniform(v), init)?;
    let mut peak: f64 = 0.0;
    evolve_diagonal(&cfg, |r| {
        let m = r.w_nn.iter().map(|z| z.norm()).fold(0.0, f64::max);
        peak = if m.is_finite() { peak.max(m) } else { f64::INFINITY };
        Ok(())
    })?;
    Ok(peak)
}

/// Bisects `[lo, hi]` for the time step at which [`norm_growth`] over `steps`
/// steps first exceeds `threshold`. `lo` must stay below it and `hi` exceed it.
pub fn empirical_stability_boundary(
    grid: &SpatialGrid,
    v: f64,
    steps: usize,
    threshold: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(0.0 < lo && lo < hi && rel_tol > 0.0 && threshold > 1.0) {
        return Err(invalid(format!(
            "bad bisection bracket [{lo}, {hi}] / tolerance {rel_tol} / threshold {threshold}"
        )));
    }
    let grows = |dt: f64| norm_growth(grid, v, dt, steps).map(|g| g >= threshold);
    if grows(lo)? || !grows(hi)? {
        return Err(invalid(format!("[{lo}, {hi}] does not bracket the growth threshold {threshold}")));
    }
    while hi - lo > rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        if grows(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{Bootstrap, VPrimeIndexing};
    use crate::potential::Potential;
    use crate::setup::{DispersionKind, SmearingSpec, StateSpec};
    use crate::states::single_mode_wightman;

    fn single_mode_setup(dispersion: DispersionKind) -> Setup {
        Setup {
            length: 10.0,
            dx: 0.2,
            cfl: 0.2,
            t_max: 3.0,
            potential: Potential::free(),
            state: StateSpec::SingleMode { n: 2 },
            smearing: SmearingSpec::Physical { sigma_x: 0.2, sigma_t: 0.2 },
            dispersion,
            vprime: VPrimeIndexing::Physical,
            bootstrap: Bootstrap::SecondOrder,
        }
    }

    #[test]
    fn growth_switches_on_at_the_bound() {
        let grid = SpatialGrid::with_spacing(10.0, 0.1).unwrap();
        let bound = crate::lattice::cfl_max_timestep(0.1, 250.0).unwrap();
        assert!(norm_growth(&grid, 250.0, 0.95 * bound, 200).unwrap() < 10.0);
        assert!(norm_growth(&grid, 250.0, 1.05 * bound, 200).unwrap() > 10.0);
        let b = empirical_stability_boundary(&grid, 250.0, 400, 1e3, 0.9 * bound, 1.1 * bound, 1e-3).unwrap();
        assert!((b / bound - 1.0).abs() < 0.05, "{b} vs {bound}");
        assert!(empirical_stability_boundary(&grid, 250.0, 400, 1e3, 1.05 * bound, 1.1 * bound, 1e-3).is_err());
    }

    #[test]
    fn rejects_non_nesting() {
        let s = single_mode_setup(DispersionKind::Continuum);
        assert!(RefinementTriple::new(s.clone(), 1.5).is_err());
        assert!(RefinementTriple::new(s.clone(), 1.0).is_err());
        assert!(RefinementTriple::new(s, 3.0).is_ok());
    }

    #[test]
    fn unrepresentable_point() {
        let t = RefinementTriple::new(single_mode_setup(DispersionKind::Continuum), 2.0).unwrap();
        assert!(run_triple(&t, 3.01, 1.0).is_err());
        assert!(run_triple(&t, 3.0, 1.003).is_err());
    }

    #[test]
    fn single_mode_differences_match_analytic_errors() {
        let t = RefinementTriple::new(single_mode_setup(DispersionKind::Continuum), 2.0).unwrap();
        let sols = run_triple(&t, 3.0, 1.0).unwrap();
        let exact = |n: usize| -> Vec<C64> {
            sols[0].xs.iter().map(|&x| single_mode_wightman(2, 10.0, x, sols[0].times[n], 3.0, 1.0)).collect()
        };
        let n = sols[0].times.len() - 1;
        let ex = exact(n);
        let err = |s: &ColumnSolution| -> Vec<C64> { s.values[n].iter().zip(&ex).map(|(a, b)| a - b).collect() };
        let (ec, em) = (err(&sols[0]), err(&sols[1]));
        let predicted: Vec<C64> = ec.iter().zip(&em).map(|(a, b)| a - b).collect();
        let observed: Vec<C64> = sols[0].values[n].iter().zip(&sols[1].values[n]).map(|(a, b)| a - b).collect();
        let gap = l2(&predicted, &observed);
        assert!(gap < 0.1 * l2(&observed, &vec![C64::new(0.0, 0.0); observed.len()]));
        // and they shrink
        let d_cm = l2(&sols[0].values[n], &sols[1].values[n]);
        let d_mf = l2(&sols[1].values[n], &sols[2].values[n]);
        assert!(d_mf < d_cm);
    }

    #[test]
    fn order_two_for_full_scheme_and_one_when_degraded() {
        for disp in [DispersionKind::Continuum, DispersionKind::Lattice] {
            let t = RefinementTriple::new(single_mode_setup(disp), 2.0).unwrap();
            let p = temporal_convergence_order(&run_triple(&t, 3.0, 1.0).unwrap(), 2).unwrap();
            assert!(p.iter().all(|&(_, p)| (p - 2.0).abs() < 0.1), "{p:?}");
        }
        let degraded = Setup { bootstrap: Bootstrap::FirstOrderDegraded, ..single_mode_setup(DispersionKind::Continuum) };
        let t = RefinementTriple::new(degraded, 2.0).unwrap();
        let p = temporal_convergence_order(&run_triple(&t, 3.0, 1.0).unwrap(), 2).unwrap();
        let tail = &p[p.len() / 2..];
        assert!(tail.iter().all(|&(_, p)| (p - 1.0).abs() < 0.25), "{p:?}");
    }

    #[test]
    fn zero_data_has_undefined_order() {
        let s = Setup { state: StateSpec::Zero, ..single_mode_setup(DispersionKind::Continuum) };
        let t = RefinementTriple::new(s, 2.0).unwrap();
        let sols = run_triple(&t, 3.0, 1.0).unwrap();
        assert!(sols.iter().all(|s| s.values.iter().flatten().all(|v| *v == C64::new(0.0, 0.0))));
        assert!(matches!(temporal_convergence_order(&sols, 2), Err(Error::UndefinedOrder(_))));
    }

    #[test]
    fn curves_overlap_only_with_right_order() {
        let s = Setup { t_max: 1.0, ..single_mode_setup(DispersionKind::Continuum) };
        let t = RefinementTriple::new(s, 2.0).unwrap();
        let sols = run_triple(&t, 3.0, 1.0).unwrap();
        let good = spatial_convergence_curves(&sols, 2, 0.8, 2.0).unwrap();
        assert!(good.mismatch(false) < 0.05 && good.mismatch(true) < 0.05);
        let bad = spatial_convergence_curves(&sols, 2, 0.8, 1.0).unwrap();
        assert!(bad.mismatch(false) > 0.4);
        assert!(spatial_convergence_curves(&sols, 2, 0.81, 2.0).is_err());
    }
}
