//! One evolution with the observables the scenarios report, plus the
//! reductions (drift, peak spacing, purity, quality) computed from it.

use w2pt::evolution::{collect_diagonal, evolve_diagonal, evolve_full_twopass, DiagonalRecord, DEFAULT_MEMORY_BUDGET};
use w2pt::lattice::cfl_max_timestep;
use w2pt::observables::{
    canonical_symplectic_eigenvalue, energy_density, energy_record, find_peaks, interpolate_series, profile_weights,
    purity_stats, quadrature_moments, quality_factor, renormalize, EnergyRecord, ModeProfile, PurityStats,
    RegionSpec, UNCERTAINTY_SLACK,
};
use w2pt::setup::Setup;
use w2pt::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    /// Region energies at every step.
    pub energy: bool,
    /// Keep the energy-density profile every this many steps.
    pub density_every: Option<usize>,
    /// Cavity modes whose `ν(t)` is tracked at every step.
    pub modes: Vec<usize>,
    pub keep_final: bool,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub dt: f64,
    pub xs: Vec<f64>,
    pub energy: Vec<EnergyRecord>,
    pub density: Vec<(f64, Vec<f64>)>,
    /// `(mode, [(t, ν)])`
    pub nu: Vec<(usize, Vec<(f64, f64)>)>,
    /// Smallest `ν` over every mode and record; `+∞` when no mode is tracked.
    pub min_nu: f64,
    pub final_record: Option<DiagonalRecord>,
}

impl Trace {
    pub fn nu_series(&self, mode: usize) -> Option<&[(f64, f64)]> {
        self.nu.iter().find(|(m, _)| *m == mode).map(|(_, s)| s.as_slice())
    }
}

/// Evolves `setup` once (CFL-gated) and samples the requested observables at
/// every level in `[0, t_max]`. A `ν` below the uncertainty floor aborts the run.
pub fn trace(setup: &Setup, region: &RegionSpec, opts: &TraceOptions) -> Result<Trace> {
    // a record at level n needs level n + 1
    let padded = Setup { t_max: setup.t_max + setup.dt(), ..setup.clone() };
    let cfg = padded.build()?;
    let grid = &cfg.spatial;
    let vacuum = if opts.energy || opts.density_every.is_some() { Some(setup.grid_vacuum()?) } else { None };
    let weights = opts
        .modes
        .iter()
        .map(|&n| Ok((n, profile_weights(&ModeProfile::new(n, *region)?, grid))))
        .collect::<Result<Vec<_>>>()?;
    let last = cfg.time.n_steps() - 2;
    let mut out = Trace {
        dt: cfg.time.dt(),
        xs: grid.points(),
        energy: Vec::new(),
        density: Vec::new(),
        nu: opts.modes.iter().map(|&n| (n, Vec::new())).collect(),
        min_nu: f64::INFINITY,
        final_record: None,
    };
    evolve_diagonal(&cfg, |r| {
        if let Some(vac) = &vacuum {
            let want_profile = opts.density_every.is_some_and(|k| r.n % k.max(1) == 0);
            if opts.energy || want_profile {
                let t00 = energy_density(&renormalize(r, vac)?, &cfg.v_row(r.n))?;
                if opts.energy {
                    out.energy.push(energy_record(r.t(), &t00, region, grid)?);
                }
                if want_profile {
                    out.density.push((r.t(), t00));
                }
            }
        }
        for ((n, u), (_, series)) in weights.iter().zip(out.nu.iter_mut()) {
            let nu = canonical_symplectic_eigenvalue(&quadrature_moments(r, u)?.covariance())?;
            if nu < 1.0 - UNCERTAINTY_SLACK {
                return Err(Error::NumericalConsistency(format!(
                    "mode {n} has ν = {nu} < 1 − {UNCERTAINTY_SLACK} at t = {}",
                    r.t()
                )));
            }
            out.min_nu = out.min_nu.min(nu);
            series.push((r.t(), nu));
        }
        if opts.keep_final && r.n == last {
            out.final_record = Some(r.clone());
        }
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    pub from: f64,
    pub to: f64,
    /// `max |E(t) − E(from)| / |E(from)|` for the total energy.
    pub total: f64,
    /// Same for the interior energy.
    pub interior: f64,
}

/// Relative excursions of the total and interior energies over `[from, to]`.
pub fn energy_drift(series: &[EnergyRecord], from: f64, to: f64) -> Option<Drift> {
    let total: Vec<(f64, f64)> = series.iter().map(|r| (r.t, r.total)).collect();
    let interior: Vec<(f64, f64)> = series.iter().map(|r| (r.t, r.interior)).collect();
    let (t0, i0) = (interpolate_series(&total, from)?, interpolate_series(&interior, from)?);
    interpolate_series(&total, to)?;
    let (mut dt, mut di) = (0.0f64, 0.0f64);
    for r in series.iter().filter(|r| r.t > from && r.t < to) {
        dt = dt.max((r.total - t0).abs());
        di = di.max((r.interior - i0).abs());
    }
    Some(Drift { from, to, total: dt / t0.abs(), interior: di / i0.abs() })
}

/// Spacings between consecutive maxima (or minima) of `series` after `after`.
/// An extremum must stand out by `rel_prominence` of the series' range there.
pub fn extremum_spacings(series: &[(f64, f64)], after: f64, rel_prominence: f64, minima: bool) -> Vec<f64> {
    let sign = if minima { -1.0 } else { 1.0 };
    let tail: Vec<(f64, f64)> = series.iter().filter(|s| s.0 >= after).map(|&(t, v)| (t, sign * v)).collect();
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.1), b.max(s.1)));
    if tail.len() < 3 || hi <= lo {
        return Vec::new();
    }
    let peaks = find_peaks(&tail, rel_prominence * (hi - lo));
    peaks.windows(2).map(|w| w[1].0 - w[0].0).collect()
}

pub fn peak_spacings(series: &[(f64, f64)], after: f64, rel_prominence: f64) -> Vec<f64> {
    extremum_spacings(series, after, rel_prominence, false)
}

/// Whether the largest excursions of `series` after `after`, measured from
/// its median, point downwards.
pub fn dips_dominate(series: &[(f64, f64)], after: f64) -> bool {
    let mut v: Vec<f64> = series.iter().filter(|s| s.0 >= after).map(|s| s.1).collect();
    if v.is_empty() {
        return false;
    }
    v.sort_by(f64::total_cmp);
    let median = v[v.len() / 2];
    median - v[0] > v[v.len() - 1] - median
}

/// Spacings of whichever extrema (maxima or minima) carry the largest
/// excursions.
pub fn dominant_spacings(series: &[(f64, f64)], after: f64, rel_prominence: f64) -> Vec<f64> {
    extremum_spacings(series, after, rel_prominence, dips_dominate(series, after))
}

/// Purity of `mode` averaged over `window` after the walls stop moving.
pub fn purity_point(setup: &Setup, region: &RegionSpec, mode: usize, window: f64) -> Result<(PurityStats, Trace)> {
    let opts = TraceOptions { modes: vec![mode], ..Default::default() };
    let trace = trace(setup, region, &opts)?;
    let stats = purity_stats(trace.nu_series(mode).unwrap(), setup.potential.settle_time(), window)?;
    Ok((stats, trace))
}

/// Quality factor of the walls for the configured wavepacket.
pub fn quality_point(setup: &Setup, region: &RegionSpec) -> Result<(f64, Trace)> {
    let opts = TraceOptions { energy: true, ..Default::default() };
    let trace = trace(setup, region, &opts)?;
    Ok((quality_factor(&trace.energy, region)?, trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineComparison {
    pub nx: usize,
    pub nt: usize,
    pub dt: f64,
    pub max_abs_diff: f64,
    pub max_abs: f64,
}

/// Band marcher against the two-pass reference on an `nx`-point copy of
/// `setup` with `nt` time levels. The time step is clipped to 90% of the
/// stability bound if the coarse grid needs it.
pub fn compare_engines(setup: &Setup, nx: usize, nt: usize) -> Result<EngineComparison> {
    if nx < 4 || nt < 4 {
        return Err(Error::InvalidArgument(format!("engine comparison needs nx, nt ≥ 4, got {nx}, {nt}")));
    }
    let dx = setup.length / (nx - 1) as f64;
    let dt_max = cfl_max_timestep(dx, setup.potential.max_value())?;
    let dt = (setup.cfl * dx).min(0.9 * dt_max);
    let tiny = Setup { dx, cfl: dt / dx, t_max: (nt - 1) as f64 * dt, ..setup.clone() };
    let cfg = tiny.build()?;
    let full = evolve_full_twopass(&cfg, DEFAULT_MEMORY_BUDGET)?;
    let mut max_abs_diff: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for rec in collect_diagonal(&cfg)? {
        for ((n, m), slice) in rec.slices() {
            for ((i, j), v) in slice.indexed_iter() {
                let reference = full[[n, m, i, j]];
                max_abs_diff = max_abs_diff.max((v - reference).norm());
                max_abs = max_abs.max(reference.norm());
            }
        }
    }
    Ok(EngineComparison { nx: cfg.nx(), nt: cfg.time.n_steps(), dt, max_abs_diff, max_abs })
}
