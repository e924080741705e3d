//! Observables extracted from diagonal records: renormalised energy density,
//! region energies and quality factor, single-mode quadratures, covariance
//! matrices and purity statistics.

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::evolution::DiagonalRecord;
use crate::lattice::SpatialGrid;
use crate::states::VacuumReference;
use crate::C64;

/// Relative size of an imaginary part that is still treated as roundoff.
pub const IMAGINARY_TOLERANCE: f64 = 1e-9;

/// Slack on the uncertainty bound `ν ≥ 1` allowed for discretisation.
pub const UNCERTAINTY_SLACK: f64 = 5e-3;

pub fn trapz_1d(values: &[f64], dx: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(invalid(format!("trapezoid rule needs at least 2 samples, got {}", values.len())));
    }
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    Ok(dx * (0.5 * (values[0] + values[n - 1]) + inner))
}

pub fn trapz_2d(values: &Array2<f64>, dx: f64) -> Result<f64> {
    let (r, c) = values.dim();
    if r < 2 || c < 2 {
        return Err(invalid(format!("2D trapezoid rule needs at least 2x2 samples, got {r}x{c}")));
    }
    let w = |i: usize, n: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
    let mut acc = 0.0;
    for ((i, j), v) in values.indexed_iter() {
        acc += w(i, r) * w(j, c) * v;
    }
    Ok(acc * dx * dx)
}

/// Trapezoid weights (including `dx`) on `n` equally spaced samples.
fn trapz_weights(n: usize, dx: f64) -> Vec<f64> {
    (0..n).map(|i| if i == 0 || i + 1 == n { 0.5 * dx } else { dx }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSpec {
    pub x_left: f64,
    pub x_right: f64,
}

impl RegionSpec {
    pub fn new(x_left: f64, x_right: f64, box_length: f64) -> Result<Self> {
        if !(0.0 <= x_left && x_left < x_right && x_right <= box_length) {
            return Err(invalid(format!(
                "region [{x_left}, {x_right}] must satisfy 0 ≤ x_left < x_right ≤ {box_length}"
            )));
        }
        Ok(Self { x_left, x_right })
    }

    /// Cavity length, which is also the light-crossing time.
    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    pub interior: f64,
    pub exterior: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeProfile {
    pub mode_number: usize,
    pub region: RegionSpec,
}

impl ModeProfile {
    pub fn new(mode_number: usize, region: RegionSpec) -> Result<Self> {
        if mode_number == 0 {
            return Err(invalid("mode numbers start at 1"));
        }
        Ok(Self { mode_number, region })
    }

    /// `√(2/l) sin(nπ(x − x_L)/l)` inside the region, zero outside.
    pub fn value(&self, x: f64) -> f64 {
        let (a, b) = (self.region.x_left, self.region.x_right);
        if x < a || x > b {
            return 0.0;
        }
        let l = self.region.length();
        (2.0 / l).sqrt() * (self.mode_number as f64 * std::f64::consts::PI * (x - a) / l).sin()
    }

    pub fn sample(&self, grid: &SpatialGrid) -> Vec<f64> {
        grid.points().into_iter().map(|x| self.value(x)).collect()
    }

    /// Angular frequency `nπ/l` of the cavity mode.
    pub fn frequency(&self) -> f64 {
        self.mode_number as f64 * std::f64::consts::PI / self.region.length()
    }

    /// `∫ f g dx` on the grid (the momentum profile equals the field profile).
    pub fn normalization(&self, grid: &SpatialGrid) -> Result<f64> {
        let f2: Vec<f64> = self.sample(grid).iter().map(|v| v * v).collect();
        trapz_1d(&f2, grid.spacing())
    }
}

/// Single-mode covariance `σ = [[qq, qp], [qp, pp]]` with
/// `qq = 2⟨Q²⟩, qp = 2Re⟨QP⟩, pp = 2⟨P²⟩`. `commutator` is `|⟨[Q, P]⟩|`,
/// which is one for canonical quadratures and smaller when they are smeared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix {
    pub qq: f64,
    pub qp: f64,
    pub pp: f64,
    pub commutator: f64,
}

impl CovarianceMatrix {
    pub fn new(qq: f64, qp: f64, pp: f64) -> Self {
        Self { qq, qp, pp, commutator: 1.0 }
    }

    pub fn from_moments(q2: f64, re_qp: f64, p2: f64, commutator: f64) -> Self {
        Self { qq: 2.0 * q2, qp: 2.0 * re_qp, pp: 2.0 * p2, commutator }
    }

    pub fn determinant(&self) -> f64 {
        self.qq * self.pp - self.qp * self.qp
    }
}

/// `ν = √det σ`.
pub fn symplectic_eigenvalue(cov: &CovarianceMatrix) -> Result<f64> {
    if !(cov.qq > 0.0 && cov.pp > 0.0) {
        return Err(Error::NumericalConsistency(format!(
            "covariance diagonal must be positive, got qq = {}, pp = {}",
            cov.qq, cov.pp
        )));
    }
    let det = cov.determinant();
    if !(det >= 0.0) {
        return Err(Error::NumericalConsistency(format!("negative covariance determinant {det}")));
    }
    Ok(det.sqrt())
}

/// `√det σ / |⟨[Q, P]⟩|`: the symplectic eigenvalue after rescaling the
/// quadratures to a canonical pair. Equal to [`symplectic_eigenvalue`] for
/// unsmeared operators.
pub fn canonical_symplectic_eigenvalue(cov: &CovarianceMatrix) -> Result<f64> {
    if !(cov.commutator > 0.0) {
        return Err(Error::NumericalConsistency(format!("vanishing quadrature commutator {}", cov.commutator)));
    }
    Ok(symplectic_eigenvalue(cov)? / cov.commutator)
}

/// `P₀ = 2/(ν + 1)`, with `ν` clamped to the physical range `ν ≥ 1`.
pub fn ground_state_probability(nu: f64) -> f64 {
    2.0 / (nu.max(1.0) + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurityStats {
    pub mean_nu: f64,
    pub std_nu: f64,
    pub p0: f64,
    pub window: f64,
}

/// Time averages of `ν` and `ν²` over `[start, start + window]`.
pub fn purity_stats(nu_series: &[(f64, f64)], start: f64, window: f64) -> Result<PurityStats> {
    if !(window > 0.0) {
        return Err(invalid(format!("averaging window must be positive, got {window}")));
    }
    let end = start + window;
    let eps = 1e-9 * end.abs().max(1.0);
    let last = nu_series.last().map_or(f64::NEG_INFINITY, |s| s.0);
    if last < end - eps {
        return Err(Error::InsufficientSpan(format!("series ends at t = {last}, averaging needs t = {end}")));
    }
    let picked: Vec<(f64, f64)> =
        nu_series.iter().copied().filter(|&(t, _)| t >= start - eps && t <= end + eps).collect();
    if picked.len() < 2 {
        return Err(Error::InsufficientSpan(format!("fewer than two samples in [{start}, {end}]")));
    }
    // samples need not be equally spaced
    let (mut s1, mut s2, mut span) = (0.0, 0.0, 0.0);
    for w in picked.windows(2) {
        let h = w[1].0 - w[0].0;
        s1 += 0.5 * h * (w[0].1 + w[1].1);
        s2 += 0.5 * h * (w[0].1 * w[0].1 + w[1].1 * w[1].1);
        span += h;
    }
    let mean = s1 / span;
    let var = (s2 / span - mean * mean).max(0.0);
    Ok(PurityStats { mean_nu: mean, std_nu: var.sqrt(), p0: ground_state_probability(mean), window })
}

/// Vacuum reference sampled at the three time separations a record needs.
#[derive(Debug, Clone)]
pub struct GridVacuum {
    dx: f64,
    dt: f64,
    /// `t − t' = 0`
    equal: Array2<C64>,
    /// `t − t' = +Δt`
    later: Array2<C64>,
    /// `t − t' = −Δt`
    earlier: Array2<C64>,
}

impl GridVacuum {
    pub fn new(reference: &VacuumReference, grid: &SpatialGrid, dt: f64) -> Result<Self> {
        Ok(Self {
            dx: grid.spacing(),
            dt,
            equal: reference.slice(grid, 0.0)?,
            later: reference.slice(grid, dt)?,
            earlier: reference.slice(grid, -dt)?,
        })
    }
}

/// `W_R = W − W_0` on the four slices of a record.
pub fn renormalize(record: &DiagonalRecord, vacuum: &GridVacuum) -> Result<DiagonalRecord> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if record.nx() != vacuum.equal.nrows() || !close(record.dx, vacuum.dx) || !close(record.dt, vacuum.dt) {
        return Err(invalid(format!(
            "vacuum reference (Nx = {}, dx = {}, dt = {}) does not match the record (Nx = {}, dx = {}, dt = {})",
            vacuum.equal.nrows(),
            vacuum.dx,
            vacuum.dt,
            record.nx(),
            record.dx,
            record.dt
        )));
    }
    Ok(DiagonalRecord {
        n: record.n,
        dt: record.dt,
        dx: record.dx,
        w_nn: &record.w_nn - &vacuum.equal,
        w_nn1: &record.w_nn1 - &vacuum.earlier,
        w_n1n: &record.w_n1n - &vacuum.later,
        w_n1n1: &record.w_n1n1 - &vacuum.equal,
    })
}

fn check_real(values: &[C64], what: &str) -> Result<Vec<f64>> {
    let scale = values.iter().map(|v| v.re.abs()).fold(1.0, f64::max);
    let worst = values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if worst > IMAGINARY_TOLERANCE * scale {
        return Err(Error::NumericalConsistency(format!(
            "{what}: imaginary residue {worst:e} exceeds {IMAGINARY_TOLERANCE:e} × {scale:e}"
        )));
    }
    Ok(values.iter().map(|v| v.re).collect())
}

/// `T₀₀(x_i) = ½[D_t D_t' W_R + D_x D_x' W_R + 2 V W_R]` at coincidence, with
/// forward differences (backward in space at the last grid point). `v` is the
/// potential at the record's time level.
pub fn energy_density(renorm: &DiagonalRecord, v: &[f64]) -> Result<Vec<f64>> {
    renorm.validate()?;
    let nx = renorm.nx();
    if v.len() != nx {
        return Err(Error::DimensionMismatch { expected: format!("{nx} potential samples"), got: format!("{}", v.len()) });
    }
    let (dt2, dx2) = (renorm.dt * renorm.dt, renorm.dx * renorm.dx);
    let w = &renorm.w_nn;
    let out: Vec<C64> = (0..nx)
        .map(|i| {
            let tt = (renorm.w_n1n1[[i, i]] - renorm.w_n1n[[i, i]] - renorm.w_nn1[[i, i]] + w[[i, i]]) / dt2;
            let c = if i + 1 < nx { i } else { i - 1 };
            let xx = (w[[c + 1, c + 1]] - w[[c + 1, c]] - w[[c, c + 1]] + w[[c, c]]) / dx2;
            0.5 * (tt + xx + 2.0 * v[i] * w[[i, i]])
        })
        .collect();
    check_real(&out, "energy density")
}

/// `∫_a^b` of the piecewise-linear interpolant of equally spaced samples.
fn integrate_linear(values: &[f64], dx: f64, a: f64, b: f64) -> f64 {
    let n = values.len();
    let at = |x: f64| {
        let s = (x / dx).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let f = s - i as f64;
        (i, f, values[i] * (1.0 - f) + values[i + 1] * f)
    };
    let (ia, fa, va) = at(a);
    let (ib, fb, vb) = at(b);
    if ia == ib {
        return 0.5 * (va + vb) * (fb - fa) * dx;
    }
    // partial cell at each end plus the whole cells in between
    let mut acc = 0.5 * (va + values[ia + 1]) * (1.0 - fa) * dx;
    for k in ia + 1..ib {
        acc += 0.5 * (values[k] + values[k + 1]) * dx;
    }
    acc + 0.5 * (values[ib] + vb) * fb * dx
}

/// Energy in the region, integrating linearly interpolated `T₀₀`.
pub fn region_energy(t00: &[f64], region: &RegionSpec, grid: &SpatialGrid) -> Result<f64> {
    if t00.len() != grid.n_points() {
        return Err(Error::DimensionMismatch { expected: format!("{}", grid.n_points()), got: format!("{}", t00.len()) });
    }
    if region.x_left < 0.0 || region.x_right > grid.length() * (1.0 + 1e-12) {
        return Err(invalid("region outside the box"));
    }
    Ok(integrate_linear(t00, grid.spacing(), region.x_left, region.x_right.min(grid.length())))
}

pub fn energy_record(t: f64, t00: &[f64], region: &RegionSpec, grid: &SpatialGrid) -> Result<EnergyRecord> {
    let interior = region_energy(t00, region, grid)?;
    let l = grid.length();
    let left = RegionSpec { x_left: 0.0, x_right: region.x_left };
    let right = RegionSpec { x_left: region.x_right, x_right: l };
    let exterior = region_energy(t00, &left, grid)? + region_energy(t00, &right, grid)?;
    Ok(EnergyRecord { t, interior, exterior, total: interior + exterior })
}

/// Linear interpolation of a sampled series at `t`.
pub fn interpolate_series(series: &[(f64, f64)], t: f64) -> Option<f64> {
    let k = series.partition_point(|s| s.0 < t);
    if k == series.len() {
        return None;
    }
    if k == 0 {
        return (series[0].0 - t <= 1e-12 * t.abs().max(1.0)).then_some(series[0].1);
    }
    let (a, b) = (series[k - 1], series[k]);
    Some(a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0))
}

/// `Q = E_in(0) / (E_in(0) − E_in(l))`, `+∞` when nothing leaked.
pub fn quality_factor(series: &[EnergyRecord], region: &RegionSpec) -> Result<f64> {
    let l = region.length();
    let interior: Vec<(f64, f64)> = series.iter().map(|r| (r.t, r.interior)).collect();
    let first = interior.first().ok_or_else(|| Error::InsufficientSpan("empty energy series".into()))?;
    let e0 = first.1;
    let el = interpolate_series(&interior, first.0 + l).ok_or_else(|| {
        Error::InsufficientSpan(format!(
            "energy series ends at t = {}, one light-crossing needs t = {}",
            interior.last().unwrap().0,
            first.0 + l
        ))
    })?;
    let loss = e0 - el;
    if loss <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(e0 / loss.max(f64::MIN_POSITIVE))
}

/// Default rise, as a fraction of the initial total energy, that counts as
/// energy reaching the exterior.
pub const LEAKAGE_FRACTION: f64 = 0.01;

/// First time the exterior energy exceeds its initial value by
/// `fraction · |E_total(0)|`, linearly interpolated between samples.
pub fn leakage_onset(series: &[EnergyRecord], fraction: f64) -> Option<f64> {
    let first = series.first()?;
    let rise = fraction * first.total.abs();
    let excess = |r: &EnergyRecord| r.exterior - first.exterior - rise;
    series.windows(2).find(|w| excess(&w[1]) > 0.0).map(|w| {
        let (a, b) = (excess(&w[0]), excess(&w[1]));
        if a >= 0.0 {
            w[0].t
        } else {
            w[0].t + (w[1].t - w[0].t) * (-a) / (b - a)
        }
    })
}

/// Moments of the cavity mode from one record, using the full correlator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureMoments {
    pub q2: f64,
    pub re_qp: f64,
    pub p2: f64,
    /// `Im⟨QP⟩`; `2 Im⟨QP⟩ = ⟨[Q, P]⟩ / i`.
    pub im_qp: f64,
}

impl QuadratureMoments {
    pub fn covariance(&self) -> CovarianceMatrix {
        CovarianceMatrix::from_moments(self.q2, self.re_qp, self.p2, (2.0 * self.im_qp).abs())
    }
}

/// Weighted profile `u_i = w_i f(x_i)` with trapezoid weights; `u·W·u` is the
/// double trapezoid integral.
pub fn profile_weights(profile: &ModeProfile, grid: &SpatialGrid) -> Vec<f64> {
    let f = profile.sample(grid);
    trapz_weights(f.len(), grid.spacing()).iter().zip(&f).map(|(w, f)| w * f).collect()
}

fn sandwich(u: &[f64], m: &Array2<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (i, &ui) in u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        let row = m.row(i);
        let mut r = C64::new(0.0, 0.0);
        for (j, &uj) in u.iter().enumerate() {
            r += row[j] * uj;
        }
        acc += ui * r;
    }
    acc
}

/// `⟨Q²⟩, ⟨QP⟩, ⟨P²⟩` with `Q = ∫ f φ`, `P = ∫ f ∂_t φ` and forward time
/// differences from the record's slices.
pub fn quadrature_moments(record: &DiagonalRecord, weights: &[f64]) -> Result<QuadratureMoments> {
    if weights.len() != record.nx() {
        return Err(Error::DimensionMismatch { expected: format!("{}", record.nx()), got: format!("{}", weights.len()) });
    }
    let dt = record.dt;
    let q2 = sandwich(weights, &record.w_nn);
    let s_nn1 = sandwich(weights, &record.w_nn1);
    let s_n1n = sandwich(weights, &record.w_n1n);
    let s_n1n1 = sandwich(weights, &record.w_n1n1);
    let qp = (s_nn1 - q2) / dt;
    let p2 = (s_n1n1 - s_n1n - s_nn1 + q2) / (dt * dt);
    let real = check_real(&[q2, p2], "quadrature moments")?;
    Ok(QuadratureMoments { q2: real[0], re_qp: qp.re, p2: real[1], im_qp: qp.im })
}

/// Local maxima of a sampled series, as `(t, value)`. A maximum must rise
/// above its neighbouring minima by at least `prominence`.
pub fn find_peaks(series: &[(f64, f64)], prominence: f64) -> Vec<(f64, f64)> {
    let n = series.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        let v = series[i].1;
        if v > series[i - 1].1 {
            // walk across a flat top
            let mut j = i;
            while j + 1 < n && series[j + 1].1 == v {
                j += 1;
            }
            if j + 1 < n && series[j + 1].1 < v {
                let left_min = series[..i].iter().rev().take_while(|s| s.1 <= v).fold(v, |m, s| m.min(s.1));
                let right_min = series[j + 1..].iter().take_while(|s| s.1 <= v).fold(v, |m, s| m.min(s.1));
                if v - left_min.max(right_min) >= prominence {
                    let mid = (i + j) / 2;
                    peaks.push((refine_peak(series, mid), v));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Vertex of the parabola through the three samples around `k`.
fn refine_peak(series: &[(f64, f64)], k: usize) -> f64 {
    if k == 0 || k + 1 >= series.len() {
        return series[k].0;
    }
    let (a, b, c) = (series[k - 1], series[k], series[k + 1]);
    let denom = a.1 - 2.0 * b.1 + c.1;
    if denom >= 0.0 {
        return b.0;
    }
    let h = 0.5 * (c.0 - a.0);
    b.0 + 0.5 * h * (a.1 - c.1) / denom
}
