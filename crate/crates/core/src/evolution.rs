//! Leapfrog evolution of the correlator `W^{nm}_{ij} = W(x_i, t_n; x'_j, t'_m)`
//! in both time arguments.
//!
//! The data needed for equal-time observables lives in a narrow band around the
//! diagonal `n = m`, so the default engine ([`DiagonalMarch`]) only keeps the
//! four slices `(n,n), (n,n+1), (n+1,n), (n+1,n+1)` and advances them with four
//! stencil applications per step. [`evolve_full_twopass`] fills the whole
//! `(n, m)` plane the straightforward way (t' first on the two initial rows,
//! then t for every column) and is kept as a cross-check on small grids.

use ndarray::{Array2, Array4};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::lattice::{cfl_max_timestep, SpatialGrid, TimeGrid};
use crate::potential::Potential;
use crate::states::InitialData;
use crate::C64;

/// Default ceiling for [`evolve_full_twopass`].
pub const DEFAULT_MEMORY_BUDGET: u64 = 256 << 20;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorSlice {
    pub n: usize,
    pub m: usize,
    pub data: Array2<C64>,
}

/// Equal-time window around the diagonal at level `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalRecord {
    pub n: usize,
    pub dt: f64,
    pub dx: f64,
    /// `(n, n)`
    pub w_nn: Array2<C64>,
    /// `(n, n+1)`
    pub w_nn1: Array2<C64>,
    /// `(n+1, n)`
    pub w_n1n: Array2<C64>,
    /// `(n+1, n+1)`
    pub w_n1n1: Array2<C64>,
}

impl DiagonalRecord {
    pub fn t(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn nx(&self) -> usize {
        self.w_nn.nrows()
    }

    /// Slices in snapshot order, with their `(n, m)` levels.
    pub fn slices(&self) -> [((usize, usize), &Array2<C64>); 4] {
        let n = self.n;
        [
            ((n, n), &self.w_nn),
            ((n, n + 1), &self.w_nn1),
            ((n + 1, n), &self.w_n1n),
            ((n + 1, n + 1), &self.w_n1n1),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let nx = self.nx();
        for ((n, m), s) in self.slices() {
            if s.dim() != (nx, nx) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{nx}x{nx}"),
                    got: format!("slice ({n},{m}) is {:?}", s.dim()),
                });
            }
        }
        Ok(())
    }
}

/// Which potential multiplies the correlator in a t'-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VPrimeIndexing {
    /// `V(x'_j, t'_m)`, the primed point's own potential.
    #[default]
    Physical,
    /// `V(x_i, t_n)`, as some write-ups index it. The two engines only agree in
    /// the physical mode: with this choice the t and t' updates no longer commute.
    PaperLiteral,
}

/// Order of the first-step bootstrap. The degraded variant drops the curvature
/// term and exists to exercise the convergence harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bootstrap {
    #[default]
    SecondOrder,
    FirstOrderDegraded,
}

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub spatial: SpatialGrid,
    pub time: TimeGrid,
    pub potential: Potential,
    pub initial: InitialData,
    pub vprime: VPrimeIndexing,
    pub bootstrap: Bootstrap,
}

impl EvolutionConfig {
    /// Validated configuration; rejects time steps above the CFL bound for the
    /// largest potential reached during the run.
    pub fn new(spatial: SpatialGrid, time: TimeGrid, potential: Potential, initial: InitialData) -> Result<Self> {
        let cfg = Self::new_unchecked(spatial, time, potential, initial)?;
        let v_max = cfg.potential.max_until(cfg.time.t(cfg.time.n_steps() - 1));
        let dt_max = cfl_max_timestep(cfg.spatial.spacing(), v_max)?;
        if cfg.time.dt() > dt_max * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt: cfg.time.dt(), dt_max, v_max });
        }
        Ok(cfg)
    }

    /// Like [`EvolutionConfig::new`] but without the CFL gate, for probing
    /// unstable parameters on purpose.
    pub fn new_unchecked(
        spatial: SpatialGrid,
        time: TimeGrid,
        potential: Potential,
        initial: InitialData,
    ) -> Result<Self> {
        potential.validate()?;
        initial.validate()?;
        if initial.nx() != spatial.n_points() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} grid points", spatial.n_points()),
                got: format!("initial data with {}", initial.nx()),
            });
        }
        Ok(Self {
            spatial,
            time,
            potential,
            initial,
            vprime: VPrimeIndexing::default(),
            bootstrap: Bootstrap::default(),
        })
    }

    pub fn with_vprime(mut self, vprime: VPrimeIndexing) -> Self {
        self.vprime = vprime;
        self
    }

    pub fn with_bootstrap(mut self, bootstrap: Bootstrap) -> Self {
        self.bootstrap = bootstrap;
        self
    }

    pub fn nx(&self) -> usize {
        self.spatial.n_points()
    }

    pub fn courant_sq(&self) -> f64 {
        (self.time.dt() / self.spatial.spacing()).powi(2)
    }

    /// `V(x_i, t_n)` on the grid.
    pub fn v_row(&self, n: usize) -> Vec<f64> {
        self.potential.sample_on_grid(&self.spatial, self.time.t(n))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    /// first index, `i`
    Row,
    /// second index, `j`
    Col,
}

#[derive(Clone, Copy)]
struct Stencil {
    c2: f64,
    dt2: f64,
    /// index the second difference acts on
    diff: Axis,
    /// index the potential varies along
    v_axis: Axis,
}

impl Stencil {
    fn t(cfg: &EvolutionConfig) -> Self {
        Self { c2: cfg.courant_sq(), dt2: cfg.time.dt().powi(2), diff: Axis::Row, v_axis: Axis::Row }
    }

    fn tprime(cfg: &EvolutionConfig) -> Self {
        let v_axis = match cfg.vprime {
            VPrimeIndexing::Physical => Axis::Col,
            VPrimeIndexing::PaperLiteral => Axis::Row,
        };
        Self { c2: cfg.courant_sq(), dt2: cfg.time.dt().powi(2), diff: Axis::Col, v_axis }
    }
}

/// `out = 2·curr − prev + C² δ² curr − 2Δt² V curr` on the interior, zero on
/// the boundary ring. `out` is reused when it already has the right shape.
fn leapfrog_into(prev: &Array2<C64>, curr: &Array2<C64>, st: Stencil, v: &[f64], out: &mut Array2<C64>) {
    let nx = curr.nrows();
    if out.dim() != (nx, nx) || !out.is_standard_layout() {
        *out = Array2::zeros((nx, nx));
    }
    let p = prev.as_standard_layout();
    let c = curr.as_standard_layout();
    let (p, c) = (p.as_slice().unwrap(), c.as_slice().unwrap());
    let stride = if st.diff == Axis::Row { nx } else { 1 };
    let (c2, dt2) = (st.c2, st.dt2);
    out.as_slice_mut().unwrap().par_chunks_mut(nx).enumerate().for_each(|(i, row)| {
        if i == 0 || i + 1 == nx {
            row.fill(ZERO);
            return;
        }
        row[0] = ZERO;
        row[nx - 1] = ZERO;
        for j in 1..nx - 1 {
            let k = i * nx + j;
            let w = c[k];
            let lap = c[k + stride] + c[k - stride] - 2.0 * w;
            let vv = if st.v_axis == Axis::Row { v[i] } else { v[j] };
            row[j] = 2.0 * w - p[k] + c2 * lap - 2.0 * dt2 * vv * w;
        }
    });
}

fn leapfrog(prev: &Array2<C64>, curr: &Array2<C64>, st: Stencil, v: &[f64]) -> Array2<C64> {
    let mut out = Array2::zeros(curr.raw_dim());
    leapfrog_into(prev, curr, st, v, &mut out);
    out
}

/// `w00 + Δt·seed + (C²/2) δ²_diff w00 − Δt² V w00`.
fn bootstrap_step(
    w00: &Array2<C64>,
    seed: &Array2<C64>,
    cfg: &EvolutionConfig,
    diff: Axis,
    v_axis: Axis,
) -> Result<Array2<C64>> {
    let nx = cfg.nx();
    for (name, m) in [("W00", w00), ("seed", seed)] {
        if m.dim() != (nx, nx) {
            return Err(Error::DimensionMismatch { expected: format!("{nx}x{nx}"), got: format!("{name}: {:?}", m.dim()) });
        }
    }
    let dt = cfg.time.dt();
    let half_c2 = match cfg.bootstrap {
        Bootstrap::SecondOrder => 0.5 * cfg.courant_sq(),
        Bootstrap::FirstOrderDegraded => 0.0,
    };
    let v = cfg.v_row(0);
    let stride = if diff == Axis::Row { nx } else { 1 };
    let w = w00.as_standard_layout();
    let s = seed.as_standard_layout();
    let (w, s) = (w.as_slice().unwrap(), s.as_slice().unwrap());
    let mut out = vec![ZERO; nx * nx];
    out.par_chunks_mut(nx).enumerate().for_each(|(i, row)| {
        if i == 0 || i + 1 == nx {
            return;
        }
        for j in 1..nx - 1 {
            let k = i * nx + j;
            let lap = w[k + stride] + w[k - stride] - 2.0 * w[k];
            let vv = if v_axis == Axis::Row { v[i] } else { v[j] };
            row[j] = w[k] + dt * s[k] + half_c2 * lap - dt * dt * vv * w[k];
        }
    });
    Ok(Array2::from_shape_vec((nx, nx), out).unwrap())
}

/// `W^{01}` from the equal-time data and `W^{φΠ}`.
pub fn first_step_tprime(w00: &Array2<C64>, w_phipi: &Array2<C64>, cfg: &EvolutionConfig) -> Result<Array2<C64>> {
    let v_axis = match cfg.vprime {
        VPrimeIndexing::Physical => Axis::Col,
        VPrimeIndexing::PaperLiteral => Axis::Row,
    };
    bootstrap_step(w00, w_phipi, cfg, Axis::Col, v_axis)
}

/// `W^{10}` from the equal-time data and `W^{Πφ}`.
pub fn first_step_t(w00: &Array2<C64>, w_piphi: &Array2<C64>, cfg: &EvolutionConfig) -> Result<Array2<C64>> {
    bootstrap_step(w00, w_piphi, cfg, Axis::Row, Axis::Row)
}

/// `W^{11} = Δt² W^{ΠΠ} + W^{01} + W^{10} − W^{00}`.
pub fn corner_step(
    w00: &Array2<C64>,
    w01: &Array2<C64>,
    w10: &Array2<C64>,
    w_pipi: &Array2<C64>,
    dt: f64,
) -> Result<Array2<C64>> {
    let dim = w00.dim();
    for m in [w01, w10, w_pipi] {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch { expected: format!("{dim:?}"), got: format!("{:?}", m.dim()) });
        }
    }
    let mut out = w_pipi * C64::new(dt * dt, 0.0) + w01 + w10 - w00;
    crate::matrix::pin_boundaries(&mut out);
    Ok(out)
}

fn check_pair(prev: &CorrelatorSlice, curr: &CorrelatorSlice, nx: usize, along_t: bool) -> Result<()> {
    let aligned = if along_t {
        prev.m == curr.m && prev.n + 1 == curr.n
    } else {
        prev.n == curr.n && prev.m + 1 == curr.m
    };
    if !aligned {
        return Err(invalid(format!(
            "misaligned slices ({},{}) and ({},{}) for a {} step",
            prev.n,
            prev.m,
            curr.n,
            curr.m,
            if along_t { "t" } else { "t'" }
        )));
    }
    for s in [prev, curr] {
        if s.data.dim() != (nx, nx) {
            return Err(Error::DimensionMismatch { expected: format!("{nx}x{nx}"), got: format!("{:?}", s.data.dim()) });
        }
    }
    Ok(())
}

/// `(n+1, m)` from `(n−1, m)` and `(n, m)`; `v` is `V(x_i, t_n)`.
pub fn step_t(prev: &CorrelatorSlice, curr: &CorrelatorSlice, cfg: &EvolutionConfig, v: &[f64]) -> Result<CorrelatorSlice> {
    check_pair(prev, curr, cfg.nx(), true)?;
    check_potential(v, cfg.nx())?;
    Ok(CorrelatorSlice { n: curr.n + 1, m: curr.m, data: leapfrog(&prev.data, &curr.data, Stencil::t(cfg), v) })
}

/// `(n, m+1)` from `(n, m−1)` and `(n, m)`; `v` is `V(x'_j, t'_m)`, or
/// `V(x_i, t_n)` under [`VPrimeIndexing::PaperLiteral`].
pub fn step_tprime(
    prev: &CorrelatorSlice,
    curr: &CorrelatorSlice,
    cfg: &EvolutionConfig,
    v: &[f64],
) -> Result<CorrelatorSlice> {
    check_pair(prev, curr, cfg.nx(), false)?;
    check_potential(v, cfg.nx())?;
    Ok(CorrelatorSlice { n: curr.n, m: curr.m + 1, data: leapfrog(&prev.data, &curr.data, Stencil::tprime(cfg), v) })
}

fn check_potential(v: &[f64], nx: usize) -> Result<()> {
    if v.len() != nx {
        return Err(Error::DimensionMismatch { expected: format!("{nx} potential samples"), got: format!("{}", v.len()) });
    }
    Ok(())
}

/// Potential row for a t'-step out of the slice at `(n, m)`.
fn tprime_potential(cfg: &EvolutionConfig, n: usize, m: usize) -> Vec<f64> {
    match cfg.vprime {
        VPrimeIndexing::Physical => cfg.v_row(m),
        VPrimeIndexing::PaperLiteral => cfg.v_row(n),
    }
}

/// The four bootstrap slices `(0,0), (0,1), (1,0), (1,1)`.
fn bootstrap(cfg: &EvolutionConfig) -> Result<[Array2<C64>; 4]> {
    let init = &cfg.initial;
    let mut w00 = init.w_phiphi.clone();
    crate::matrix::pin_boundaries(&mut w00);
    let w01 = first_step_tprime(&w00, &init.w_phipi, cfg)?;
    let w10 = first_step_t(&w00, &init.w_piphi, cfg)?;
    let w11 = corner_step(&w00, &w01, &w10, &init.w_pipi, cfg.time.dt())?;
    Ok([w00, w01, w10, w11])
}

/// Constant-memory march along the diagonal.
#[derive(Debug)]
pub struct DiagonalMarch<'a> {
    cfg: &'a EvolutionConfig,
    record: DiagonalRecord,
    spare: [Array2<C64>; 2],
}

impl<'a> DiagonalMarch<'a> {
    pub fn new(cfg: &'a EvolutionConfig) -> Result<Self> {
        let [w00, w01, w10, w11] = bootstrap(cfg)?;
        Ok(Self {
            cfg,
            record: DiagonalRecord {
                n: 0,
                dt: cfg.time.dt(),
                dx: cfg.spatial.spacing(),
                w_nn: w00,
                w_nn1: w01,
                w_n1n: w10,
                w_n1n1: w11,
            },
            spare: Default::default(),
        })
    }

    pub fn record(&self) -> &DiagonalRecord {
        &self.record
    }

    /// Index of the last record the time grid supports.
    pub fn last_index(&self) -> usize {
        self.cfg.time.n_steps() - 2
    }

    /// Moves to the next record; returns `false` once the grid is exhausted.
    pub fn advance(&mut self) -> Result<bool> {
        use std::mem::{replace, take};
        let n = self.record.n;
        if n >= self.last_index() {
            return Ok(false);
        }
        let cfg = self.cfg;
        let (st, stp) = (Stencil::t(cfg), Stencil::tprime(cfg));
        let r = &mut self.record;
        let v_t = cfg.v_row(n + 1);
        // (n+2, n) and (n+2, n+1) along t
        let [mut a, mut b] = take(&mut self.spare);
        leapfrog_into(&r.w_nn, &r.w_n1n, st, &v_t, &mut a);
        leapfrog_into(&r.w_nn1, &r.w_n1n1, st, &v_t, &mut b);
        // (n+1, n+2) and (n+2, n+2) along t'; the old (n, n) and (n, n+1)
        // buffers are free by now
        let mut c = take(&mut r.w_nn);
        leapfrog_into(&r.w_n1n, &r.w_n1n1, stp, &tprime_potential(cfg, n + 1, n + 1), &mut c);
        let mut d = take(&mut r.w_nn1);
        leapfrog_into(&a, &b, stp, &tprime_potential(cfg, n + 2, n + 1), &mut d);

        let old_n1n = replace(&mut r.w_n1n, b);
        r.w_nn = replace(&mut r.w_n1n1, d);
        r.w_nn1 = c;
        r.n = n + 1;
        self.spare = [old_n1n, a];
        Ok(true)
    }
}

/// Runs the diagonal march, handing every record `n = 0..=Nt−2` to `visit`.
pub fn evolve_diagonal(cfg: &EvolutionConfig, mut visit: impl FnMut(&DiagonalRecord) -> Result<()>) -> Result<()> {
    let mut march = DiagonalMarch::new(cfg)?;
    loop {
        visit(march.record())?;
        if !march.advance()? {
            return Ok(());
        }
    }
}

/// All diagonal records; only sensible for small grids.
pub fn collect_diagonal(cfg: &EvolutionConfig) -> Result<Vec<DiagonalRecord>> {
    let mut out = Vec::new();
    evolve_diagonal(cfg, |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Full correlator `W[[n, m, i, j]]`.
pub fn evolve_full_twopass(cfg: &EvolutionConfig, memory_budget: u64) -> Result<Array4<C64>> {
    let nt = cfg.time.n_steps();
    let nx = cfg.nx();
    let required = (nt as u64).saturating_pow(2).saturating_mul((nx as u64).pow(2)).saturating_mul(16);
    if required > memory_budget {
        return Err(Error::MemoryBudget { required, budget: memory_budget });
    }
    let mut w = Array4::<C64>::zeros((nt, nt, nx, nx));
    let [w00, w01, w10, w11] = bootstrap(cfg)?;
    w.slice_mut(ndarray::s![0, 0, .., ..]).assign(&w00);
    w.slice_mut(ndarray::s![0, 1, .., ..]).assign(&w01);
    w.slice_mut(ndarray::s![1, 0, .., ..]).assign(&w10);
    w.slice_mut(ndarray::s![1, 1, .., ..]).assign(&w11);
    let get = |w: &Array4<C64>, n: usize, m: usize| CorrelatorSlice {
        n,
        m,
        data: w.slice(ndarray::s![n, m, .., ..]).to_owned(),
    };

    // t' direction along the two initial rows
    for n in 0..2 {
        for m in 1..nt - 1 {
            let curr = get(&w, n, m);
            let v = tprime_potential(cfg, curr.n, curr.m);
            let next = step_tprime(&get(&w, n, m - 1), &curr, cfg, &v)?;
            w.slice_mut(ndarray::s![n, m + 1, .., ..]).assign(&next.data);
        }
    }
    // then t for every column
    for n in 1..nt - 1 {
        let v = cfg.v_row(n);
        for m in 0..nt {
            let next = step_t(&get(&w, n - 1, m), &get(&w, n, m), cfg, &v)?;
            w.slice_mut(ndarray::s![n + 1, m, .., ..]).assign(&next.data);
        }
    }
    Ok(w)
}

/// Evolves the column of slices `(n, m_fixed)` for `n = 0..Nt`, calling
/// `visit(n, slice)` in order. Memory is `O(Nx²)`.
pub fn evolve_column(
    cfg: &EvolutionConfig,
    m_fixed: usize,
    mut visit: impl FnMut(usize, &Array2<C64>) -> Result<()>,
) -> Result<()> {
    let nt = cfg.time.n_steps();
    if m_fixed >= nt {
        return Err(invalid(format!("column {m_fixed} beyond the {nt} time levels")));
    }
    let [w00, w01, w10, w11] = bootstrap(cfg)?;
    // rows n = 0 and n = 1 up to m_fixed
    let mut rows = Vec::with_capacity(2);
    for (n, (a, b)) in [(w00, w01), (w10, w11)].into_iter().enumerate() {
        let mut prev = CorrelatorSlice { n, m: 0, data: a };
        let mut curr = CorrelatorSlice { n, m: 1, data: b };
        if m_fixed == 0 {
            rows.push(prev);
            continue;
        }
        while curr.m < m_fixed {
            let v = tprime_potential(cfg, curr.n, curr.m);
            let next = step_tprime(&prev, &curr, cfg, &v)?;
            prev = std::mem::replace(&mut curr, next);
        }
        rows.push(curr);
    }
    let curr = rows.pop().unwrap();
    let prev = rows.pop().unwrap();
    visit(0, &prev.data)?;
    visit(1, &curr.data)?;
    let st = Stencil::t(cfg);
    let (mut prev, mut curr) = (prev.data, curr.data);
    let mut next = Array2::zeros(curr.raw_dim());
    for n in 1..nt - 1 {
        leapfrog_into(&prev, &curr, st, &cfg.v_row(n), &mut next);
        visit(n + 1, &next)?;
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{boundaries_zero, max_abs_diff};
    use crate::potential::PotentialParams;
    use crate::states::{vacuum_initial_data, Dispersion, ModeBasis, SmearingParams, VacuumReference};
    use std::f64::consts::PI;

    /// Unsmeared single box mode `sin(kx) sin(kx') e^{−ik(t−t')}` with the
    /// analytic derivative seeds.
    fn single_mode(grid: &SpatialGrid, n: usize) -> InitialData {
        let k = n as f64 * PI / grid.length();
        let xs = grid.points();
        let s = |i: usize, j: usize| (k * xs[i]).sin() * (k * xs[j]).sin();
        let nx = xs.len();
        InitialData {
            w_phiphi: Array2::from_shape_fn((nx, nx), |(i, j)| C64::new(s(i, j), 0.0)),
            w_piphi: Array2::from_shape_fn((nx, nx), |(i, j)| C64::new(0.0, -k * s(i, j))),
            w_phipi: Array2::from_shape_fn((nx, nx), |(i, j)| C64::new(0.0, k * s(i, j))),
            w_pipi: Array2::from_shape_fn((nx, nx), |(i, j)| C64::new(k * k * s(i, j), 0.0)),
        }
    }

    fn single_mode_exact(grid: &SpatialGrid, n: usize, t: f64, tp: f64) -> Array2<C64> {
        let k = n as f64 * PI / grid.length();
        let xs = grid.points();
        let mut out = Array2::from_shape_fn((xs.len(), xs.len()), |(i, j)| {
            C64::from_polar((k * xs[i]).sin() * (k * xs[j]).sin(), -k * (t - tp))
        });
        crate::matrix::pin_boundaries(&mut out);
        out
    }

    fn free_config(nx: usize, cfl: f64, t_max: f64, init: impl Fn(&SpatialGrid) -> InitialData) -> EvolutionConfig {
        let grid = SpatialGrid::new(10.0, nx).unwrap();
        let time = TimeGrid::from_cfl(&grid, cfl, t_max).unwrap();
        let initial = init(&grid);
        EvolutionConfig::new(grid, time, Potential::free(), initial).unwrap()
    }

    fn random_data(nx: usize, seed: u64) -> InitialData {
        // cheap deterministic LCG; only structure-free data is needed
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = || {
            let mut a = Array2::from_shape_fn((nx, nx), |_| C64::new(next(), next()));
            crate::matrix::pin_boundaries(&mut a);
            a
        };
        InitialData { w_phiphi: m(), w_piphi: m(), w_phipi: m(), w_pipi: m() }
    }

    fn ramped_config(nx: usize, nt: usize, data: InitialData, vprime: VPrimeIndexing) -> EvolutionConfig {
        let grid = SpatialGrid::new(10.0, nx).unwrap();
        let params = PotentialParams { v_max: 3.0, ramp_time: 0.5, x_left_wall: 3.0, x_right_wall: 7.0, wall_width: 1.5, sharpness: 2.0 };
        let dt = 0.2;
        let time = TimeGrid::new(&grid, dt, dt * (nt - 1) as f64).unwrap();
        assert_eq!(time.n_steps(), nt);
        EvolutionConfig::new(grid, time, Potential::Ramped(params), data).unwrap().with_vprime(vprime)
    }

    #[test]
    fn zero_data_stays_zero() {
        let cfg = free_config(21, 0.5, 1.0, |g| InitialData::zeros(g.n_points()));
        let z = Array2::<C64>::zeros((21, 21));
        assert_eq!(first_step_tprime(&z, &z, &cfg).unwrap(), z);
        assert_eq!(first_step_t(&z, &z, &cfg).unwrap(), z);
        assert_eq!(corner_step(&z, &z, &z, &z, 0.1).unwrap(), z);
        evolve_diagonal(&cfg, |r| {
            assert!(r.slices().iter().all(|(_, s)| s.iter().all(|v| *v == ZERO)));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn corner_without_momentum_is_rearrangement() {
        let d = random_data(9, 3);
        let z = Array2::<C64>::zeros((9, 9));
        let got = corner_step(&d.w_phiphi, &d.w_phipi, &d.w_piphi, &z, 0.3).unwrap();
        let want = &d.w_phipi + &d.w_piphi - &d.w_phiphi;
        assert!(max_abs_diff(&got, &want) < 1e-15);
        assert!(corner_step(&z, &z, &Array2::zeros((8, 8)), &z, 0.1).is_err());
    }

    #[test]
    fn single_mode_first_steps() {
        // local error of one bootstrap step is O(Δt³): halving Δt cuts it ~8×
        let err = |nx: usize| {
            let cfg = free_config(nx, 0.5, 1.0, |g| single_mode(g, 3));
            let dt = cfg.time.dt();
            let w01 = first_step_tprime(&cfg.initial.w_phiphi, &cfg.initial.w_phipi, &cfg).unwrap();
            let w10 = first_step_t(&cfg.initial.w_phiphi, &cfg.initial.w_piphi, &cfg).unwrap();
            let e01 = max_abs_diff(&w01, &single_mode_exact(&cfg.spatial, 3, 0.0, dt));
            let e10 = max_abs_diff(&w10, &single_mode_exact(&cfg.spatial, 3, dt, 0.0));
            assert!(max_abs_diff(&w10, &w01.t().mapv(|v| v.conj())) < 1e-15);
            e01.max(e10)
        };
        let (a, b) = (err(101), err(201));
        assert!(a / b > 7.0 && a / b < 9.0, "ratio {}", a / b);
    }

    #[test]
    fn single_mode_step_t_dispersion() {
        // one leapfrog step on an exact standing wave: local error O(Δt⁴ + Δt²Δx²)
        let grid = SpatialGrid::new(10.0, 201).unwrap();
        let time = TimeGrid::from_cfl(&grid, 0.5, 1.0).unwrap();
        let dt = time.dt();
        let cfg = EvolutionConfig::new(grid.clone(), time, Potential::free(), single_mode(&grid, 2)).unwrap();
        let prev = CorrelatorSlice { n: 0, m: 0, data: single_mode_exact(&grid, 2, 0.0, 0.0) };
        let curr = CorrelatorSlice { n: 1, m: 0, data: single_mode_exact(&grid, 2, dt, 0.0) };
        let next = step_t(&prev, &curr, &cfg, &vec![0.0; 201]).unwrap();
        assert_eq!((next.n, next.m), (2, 0));
        let err = max_abs_diff(&next.data, &single_mode_exact(&grid, 2, 2.0 * dt, 0.0));
        assert!(err < 1e-7, "{err}");
        // mirrored in t'
        let prev = CorrelatorSlice { n: 0, m: 0, data: single_mode_exact(&grid, 2, 0.0, 0.0) };
        let curr = CorrelatorSlice { n: 0, m: 1, data: single_mode_exact(&grid, 2, 0.0, dt) };
        let next = step_tprime(&prev, &curr, &cfg, &vec![0.0; 201]).unwrap();
        let err = max_abs_diff(&next.data, &single_mode_exact(&grid, 2, 0.0, 2.0 * dt));
        assert!(err < 1e-7, "{err}");
        // misaligned
        assert!(step_t(&prev, &curr, &cfg, &vec![0.0; 201]).is_err());
        assert!(step_tprime(&prev, &curr, &cfg, &vec![0.0; 3]).is_err());
    }

    #[test]
    fn single_mode_second_order_convergence() {
        let err = |nx: usize| {
            let cfg = free_config(nx, 0.25, 2.0, |g| single_mode(g, 2));
            let mut e = 0.0f64;
            evolve_diagonal(&cfg, |r| {
                let t = r.t();
                e = e.max(max_abs_diff(&r.w_nn, &single_mode_exact(&cfg.spatial, 2, t, t)));
                e = e.max(max_abs_diff(&r.w_n1n, &single_mode_exact(&cfg.spatial, 2, t + r.dt, t)));
                Ok(())
            })
            .unwrap();
            // compare at matching physical times: check the last common time via ratio
            e
        };
        let (a, b, c) = (err(51), err(101), err(201));
        assert!((a / b - 4.0).abs() < 0.4, "{}", a / b);
        assert!((b / c - 4.0).abs() < 0.4, "{}", b / c);
    }

    #[test]
    fn lattice_vacuum_is_exactly_stationary() {
        let grid = SpatialGrid::new(10.0, 101).unwrap();
        let time = TimeGrid::from_cfl(&grid, 0.2, 4.0).unwrap();
        let smearing = SmearingParams::grid_default(grid.spacing());
        let basis = ModeBasis::for_smearing(10.0, &smearing).unwrap();
        let disp = Dispersion::lattice(grid.spacing(), time.dt()).unwrap();
        let init = vacuum_initial_data(&basis, &smearing, &grid, &disp).unwrap();
        let reference = VacuumReference::new(basis, smearing, disp);
        let w0 = reference.slice(&grid, 0.0).unwrap();
        let wf = reference.slice(&grid, time.dt()).unwrap();
        let cfg = EvolutionConfig::new(grid, time, Potential::free(), init).unwrap();
        evolve_diagonal(&cfg, |r| {
            assert!(max_abs_diff(&r.w_nn, &w0) < 1e-12, "n = {}", r.n);
            assert!(max_abs_diff(&r.w_n1n, &wf) < 1e-12);
            assert!(boundaries_zero(&r.w_nn1));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn continuum_vacuum_close_to_analytic() {
        let grid = SpatialGrid::new(10.0, 201).unwrap();
        let time = TimeGrid::from_cfl(&grid, 0.2, 1.0).unwrap();
        let smearing = SmearingParams::new(0.2, 0.2).unwrap();
        let basis = ModeBasis::for_smearing(10.0, &smearing).unwrap();
        let init = vacuum_initial_data(&basis, &smearing, &grid, &Dispersion::Continuum).unwrap();
        let reference = VacuumReference::new(basis, smearing, Dispersion::Continuum);
        let w0 = reference.slice(&grid, 0.0).unwrap();
        let scale = w0.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let cfg = EvolutionConfig::new(grid, time, Potential::free(), init).unwrap();
        let w01 = first_step_tprime(&cfg.initial.w_phiphi, &cfg.initial.w_phipi, &cfg).unwrap();
        let ref01 = reference.slice(&cfg.spatial, -cfg.time.dt()).unwrap();
        assert!(max_abs_diff(&w01, &ref01) < 1e-3 * scale);
        evolve_diagonal(&cfg, |r| {
            assert!(max_abs_diff(&r.w_nn, &w0) < 1e-2 * scale, "n = {}", r.n);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn engines_agree() {
        for seed in [1u64, 2] {
            let cfg = ramped_config(8, 8, random_data(8, seed), VPrimeIndexing::Physical);
            let full = evolve_full_twopass(&cfg, DEFAULT_MEMORY_BUDGET).unwrap();
            let mut worst = 0.0f64;
            evolve_diagonal(&cfg, |r| {
                for ((n, m), s) in r.slices() {
                    let f = full.slice(ndarray::s![n, m, .., ..]).to_owned();
                    worst = worst.max(max_abs_diff(&f, s));
                }
                Ok(())
            })
            .unwrap();
            assert!(worst <= 1e-12, "{worst}");
        }
    }

    #[test]
    fn paper_literal_engines_differ_only_under_potential() {
        let data = random_data(8, 5);
        let cfg = ramped_config(8, 8, data.clone(), VPrimeIndexing::PaperLiteral);
        let full = evolve_full_twopass(&cfg, DEFAULT_MEMORY_BUDGET).unwrap();
        let records = collect_diagonal(&cfg).unwrap();
        let last = records.last().unwrap();
        let f = full.slice(ndarray::s![last.n, last.n, .., ..]).to_owned();
        assert!(max_abs_diff(&f, &last.w_nn) > 1e-8);
        // without a potential the indexing is irrelevant
        let mut free = cfg.clone();
        free.potential = Potential::free();
        let a = collect_diagonal(&free).unwrap();
        let b = collect_diagonal(&free.clone().with_vprime(VPrimeIndexing::Physical)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn twopass_budget_and_symmetry() {
        let grid = SpatialGrid::new(10.0, 8).unwrap();
        let smearing = SmearingParams::new(1.5, 1.5).unwrap();
        let basis = ModeBasis::for_smearing(10.0, &smearing).unwrap();
        let init = vacuum_initial_data(&basis, &smearing, &grid, &Dispersion::Continuum).unwrap();
        let mut cfg = ramped_config(8, 8, init, VPrimeIndexing::Physical);
        let full = evolve_full_twopass(&cfg, DEFAULT_MEMORY_BUDGET).unwrap();
        for n in 0..8 {
            for m in 0..8 {
                for i in 0..8 {
                    for j in 0..8 {
                        assert!((full[[n, m, i, j]] - full[[m, n, j, i]].conj()).norm() < 1e-12);
                    }
                }
            }
        }
        assert!(matches!(evolve_full_twopass(&cfg, 1000), Err(Error::MemoryBudget { .. })));
        cfg.initial = InitialData::zeros(8);
        assert!(evolve_full_twopass(&cfg, DEFAULT_MEMORY_BUDGET).unwrap().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn exchange_symmetry_in_march() {
        let grid = SpatialGrid::with_spacing(10.0, 0.1).unwrap();
        let time = TimeGrid::from_cfl(&grid, 0.2, 3.0).unwrap();
        let smearing = SmearingParams::grid_default(0.1);
        let basis = ModeBasis::for_smearing(10.0, &smearing).unwrap();
        let init = vacuum_initial_data(&basis, &smearing, &grid, &Dispersion::Continuum).unwrap();
        let params = PotentialParams { ramp_time: 1.0, ..Default::default() };
        let cfg = EvolutionConfig::new(grid, time, Potential::Ramped(params), init).unwrap();
        evolve_diagonal(&cfg, |r| {
            let herm = |m: &Array2<C64>| max_abs_diff(m, &m.t().mapv(|v| v.conj()));
            assert!(herm(&r.w_nn) < 1e-12 && herm(&r.w_n1n1) < 1e-12);
            assert!(max_abs_diff(&r.w_nn1, &r.w_n1n.t().mapv(|v| v.conj())) < 1e-12);
            for (_, s) in r.slices() {
                assert!(boundaries_zero(s));
            }
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn linearity() {
        let (d1, d2) = (random_data(12, 11), random_data(12, 12));
        let (a, b) = (C64::new(0.7, -0.2), C64::new(-1.3, 0.4));
        let mix = d1.combine(a, &d2, b).unwrap();
        let run = |d: InitialData| collect_diagonal(&ramped_config(12, 10, d, VPrimeIndexing::Physical)).unwrap();
        let (r1, r2, rm) = (run(d1), run(d2), run(mix));
        for ((x, y), z) in r1.iter().zip(&r2).zip(&rm) {
            let lin = x.w_n1n1.mapv(|v| v * a) + y.w_n1n1.mapv(|v| v * b);
            assert!(max_abs_diff(&lin, &z.w_n1n1) < 1e-12);
        }
    }

    #[test]
    fn cfl_gate() {
        let grid = SpatialGrid::with_spacing(10.0, 0.05).unwrap();
        let dt_max = cfl_max_timestep(0.05, 250.0).unwrap();
        let ok = TimeGrid::new(&grid, 0.95 * dt_max, 1.0).unwrap();
        let bad = TimeGrid::new(&grid, 1.05 * dt_max, 1.0).unwrap();
        let init = InitialData::zeros(grid.n_points());
        let v = Potential::Uniform(250.0);
        assert!(EvolutionConfig::new(grid.clone(), ok, v.clone(), init.clone()).is_ok());
        assert!(matches!(
            EvolutionConfig::new(grid.clone(), bad.clone(), v.clone(), init.clone()),
            Err(Error::CflViolation { .. })
        ));
        assert!(EvolutionConfig::new_unchecked(grid, bad, v, init).is_ok());
    }

    #[test]
    fn norm_growth_matches_cfl() {
        let grid = SpatialGrid::with_spacing(10.0, 0.05).unwrap();
        let dt_max = cfl_max_timestep(0.05, 250.0).unwrap();
        let growth = |factor: f64| {
            let time = TimeGrid::new(&grid, factor * dt_max, 400.0 * factor * dt_max).unwrap();
            let smearing = SmearingParams::grid_default(0.05);
            let basis = ModeBasis::for_smearing(10.0, &smearing).unwrap();
            let init = vacuum_initial_data(&basis, &smearing, &grid, &Dispersion::Continuum).unwrap();
            let cfg = EvolutionConfig::new_unchecked(grid.clone(), time, Potential::Uniform(250.0), init).unwrap();
            let n0 = crate::matrix::frobenius(&cfg.initial.w_phiphi);
            let mut peak = 0.0f64;
            evolve_diagonal(&cfg, |r| {
                peak = peak.max(crate::matrix::frobenius(&r.w_nn));
                Ok(())
            })
            .unwrap();
            peak / n0
        };
        assert!(growth(0.95) < 10.0);
        assert!(growth(1.05) > 1e3);
    }

    #[test]
    fn column_matches_twopass() {
        let cfg = ramped_config(8, 8, random_data(8, 9), VPrimeIndexing::Physical);
        let full = evolve_full_twopass(&cfg, DEFAULT_MEMORY_BUDGET).unwrap();
        for m in [0usize, 1, 5] {
            let mut count = 0;
            evolve_column(&cfg, m, |n, s| {
                let f = full.slice(ndarray::s![n, m, .., ..]).to_owned();
                assert!(max_abs_diff(&f, s) < 1e-12);
                count += 1;
                Ok(())
            })
            .unwrap();
            assert_eq!(count, 8);
        }
        assert!(evolve_column(&cfg, 8, |_, _| Ok(())).is_err());
    }
}
