//! Initial data for the correlator: the smeared box vacuum and one-particle
//! wavepackets on top of it.
//!
//! Everything is expanded in the Dirichlet modes `sin(k_n x)`, `k_n = nπ/L`.
//! Gaussian smearing of both arguments in space and time multiplies mode `n`
//! of a bilinear by `E_n = e^{−k_n²(σ_x² + σ_t²)}`.
//!
//! Two time dependences are supported through [`Dispersion`]:
//!
//! * `Continuum`: `e^{−i k t}` with derivatives taken analytically. This is the
//!   textbook object the lattice converges to.
//! * `Lattice`: each mode oscillates with the frequency `ω̃` of the discrete
//!   stencil, `cos(ω̃Δt) = 1 − 2C² sin²(kΔx/2)`, and carries the amplitude
//!   `1/(L Ω)` with `Ω = sin(ω̃Δt)/Δt`. The derivative seeds are chosen such that
//!   the bootstrap stencils reproduce this exactly, so the free vacuum is an
//!   exactly stationary solution of the scheme and a box mode of it has
//!   symplectic eigenvalue one. Both agree to `O(Δx²)` on resolved modes.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::lattice::SpatialGrid;
use crate::matrix::{complexify, max_abs_diff, pin_boundaries, sine_bilinear};
use crate::C64;

/// Modes are kept while the Gaussian smearing factor is at least this large.
pub const DAMPING_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeBasis {
    box_length: f64,
    n_modes: usize,
}

impl ModeBasis {
    pub fn new(box_length: f64, n_modes: usize) -> Result<Self> {
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(invalid(format!("box length must be positive, got {box_length}")));
        }
        if n_modes == 0 {
            return Err(invalid("mode basis needs at least one mode"));
        }
        Ok(Self { box_length, n_modes })
    }

    /// Smallest truncation with `e^{−k_N²(σ_x² + σ_t²)} < DAMPING_THRESHOLD`.
    pub fn for_smearing(box_length: f64, smearing: &SmearingParams) -> Result<Self> {
        let s2 = smearing.sigma_x.powi(2) + smearing.sigma_t.powi(2);
        let k_cut = (-DAMPING_THRESHOLD.ln() / s2).sqrt();
        let mut n = (k_cut * box_length / PI).ceil().max(1.0) as usize;
        while smearing.damping(n as f64 * PI / box_length) >= DAMPING_THRESHOLD {
            n += 1;
        }
        Self::new(box_length, n)
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// `k_n = nπ/L` for `n ≥ 1`.
    pub fn wavenumber(&self, n: usize) -> f64 {
        n as f64 * PI / self.box_length
    }

    pub fn frequency(&self, n: usize) -> f64 {
        self.wavenumber(n)
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (1..=self.n_modes).map(|n| self.wavenumber(n)).collect()
    }

    fn check_position(&self, x: f64) -> Result<()> {
        if !(0.0..=self.box_length).contains(&x) {
            return Err(invalid(format!("position {x} outside the box [0, {}]", self.box_length)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmearingParams {
    pub sigma_x: f64,
    pub sigma_t: f64,
}

impl SmearingParams {
    pub fn new(sigma_x: f64, sigma_t: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_t > 0.0 && sigma_x.is_finite() && sigma_t.is_finite()) {
            return Err(invalid(format!(
                "smearing widths must be positive, got sigma_x = {sigma_x}, sigma_t = {sigma_t}"
            )));
        }
        Ok(Self { sigma_x, sigma_t })
    }

    /// Two grid spacings in both directions.
    pub fn grid_default(dx: f64) -> Self {
        Self { sigma_x: 2.0 * dx, sigma_t: 2.0 * dx }
    }

    pub fn damping(&self, k: f64) -> f64 {
        (-k * k * (self.sigma_x * self.sigma_x + self.sigma_t * self.sigma_t)).exp()
    }
}

/// Time dependence attached to each mode; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dispersion {
    Continuum,
    Lattice { dx: f64, dt: f64 },
}

impl Dispersion {
    pub fn lattice(dx: f64, dt: f64) -> Result<Self> {
        if !(dx > 0.0 && dt > 0.0) {
            return Err(invalid(format!("lattice dispersion needs dx, dt > 0, got {dx}, {dt}")));
        }
        if dt > dx * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "lattice dispersion needs C = dt/dx ≤ 1, got {}",
                dt / dx
            )));
        }
        Ok(Dispersion::Lattice { dx, dt })
    }

    /// Oscillation frequency of the mode with wavenumber `k`.
    pub fn frequency(&self, k: f64) -> f64 {
        match *self {
            Dispersion::Continuum => k,
            Dispersion::Lattice { dx, dt } => {
                let c2 = (dt / dx).powi(2);
                let s = (0.5 * k * dx).sin();
                (1.0 - 2.0 * c2 * s * s).clamp(-1.0, 1.0).acos() / dt
            }
        }
    }

    /// `Ω`: `∂_t e^{−iωt} → −iΩ` as seen by the bootstrap stencil.
    pub fn derivative_factor(&self, k: f64) -> f64 {
        match *self {
            Dispersion::Continuum => k,
            Dispersion::Lattice { dt, .. } => (self.frequency(k) * dt).sin() / dt,
        }
    }

    /// Forward time difference of `e^{−iωt}` over one step (`−ik` in the continuum).
    pub fn increment(&self, k: f64) -> C64 {
        match *self {
            Dispersion::Continuum => C64::new(0.0, -k),
            Dispersion::Lattice { dt, .. } => {
                let w = self.frequency(k) * dt;
                C64::new(w.cos() - 1.0, -w.sin()) / dt
            }
        }
    }

    /// Whether mode `n` of a box of length `box_length` is carried.
    ///
    /// On the lattice, modes at or beyond the grid's Nyquist index are aliases
    /// of resolved ones and are dropped.
    fn carries(&self, n: usize, box_length: f64) -> bool {
        match *self {
            Dispersion::Continuum => true,
            Dispersion::Lattice { dx, .. } => (n as f64) < (box_length / dx).round() - 0.5,
        }
    }
}

/// Per-mode data shared by the vacuum and wavepacket constructions.
#[derive(Debug, Clone, Copy)]
struct ModeTerm {
    n: usize,
    k: f64,
    omega: f64,
    /// `E_n / (L Ω_n)`.
    amplitude: f64,
    derivative: f64,
    increment: C64,
}

fn mode_terms(basis: &ModeBasis, smearing: Option<&SmearingParams>, dispersion: &Dispersion) -> Vec<ModeTerm> {
    let l = basis.box_length();
    (1..=basis.n_modes())
        .filter(|&n| dispersion.carries(n, l))
        .filter_map(|n| {
            let k = basis.wavenumber(n);
            let damping = smearing.map_or(1.0, |s| s.damping(k));
            let derivative = dispersion.derivative_factor(k);
            (derivative > 0.0).then(|| ModeTerm {
                n,
                k,
                omega: dispersion.frequency(k),
                amplitude: damping / (l * derivative),
                derivative,
                increment: dispersion.increment(k),
            })
        })
        .collect()
}

/// Regularised box vacuum
/// `(1/π) Σ_n (1/n) E_n sin(k_n x) sin(k_n x') e^{−ik_n(t−t')}`, truncated at
/// `basis.n_modes()`.
pub fn vacuum_wightman(
    basis: &ModeBasis,
    smearing: &SmearingParams,
    x: f64,
    t: f64,
    xp: f64,
    tp: f64,
) -> Result<C64> {
    basis.check_position(x)?;
    basis.check_position(xp)?;
    let tau = t - tp;
    let mut sum = C64::new(0.0, 0.0);
    for n in 1..=basis.n_modes() {
        let k = basis.wavenumber(n);
        let a = smearing.damping(k) / (n as f64 * PI) * (k * x).sin() * (k * xp).sin();
        sum += C64::from_polar(a, -k * tau);
    }
    Ok(sum)
}

/// Evaluator of the stationary free vacuum used as the renormalisation
/// reference `W_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VacuumReference {
    pub basis: ModeBasis,
    pub smearing: SmearingParams,
    pub dispersion: Dispersion,
}

impl VacuumReference {
    pub fn new(basis: ModeBasis, smearing: SmearingParams, dispersion: Dispersion) -> Self {
        Self { basis, smearing, dispersion }
    }

    pub fn eval(&self, x: f64, t: f64, xp: f64, tp: f64) -> Result<C64> {
        self.basis.check_position(x)?;
        self.basis.check_position(xp)?;
        let tau = t - tp;
        Ok(mode_terms(&self.basis, Some(&self.smearing), &self.dispersion)
            .iter()
            .map(|m| C64::from_polar(m.amplitude * (m.k * x).sin() * (m.k * xp).sin(), -m.omega * tau))
            .sum())
    }

    /// `W_0(x_i, t; x_j, t − τ)` on the grid, boundaries pinned to zero.
    pub fn slice(&self, grid: &SpatialGrid, tau: f64) -> Result<Array2<C64>> {
        check_lengths(grid, &self.basis)?;
        let terms = mode_terms(&self.basis, Some(&self.smearing), &self.dispersion);
        let xs = grid.points();
        let re = sine_bilinear(&xs, &terms.iter().map(|m| (m.k, m.amplitude * (m.omega * tau).cos())).collect::<Vec<_>>());
        let im = sine_bilinear(&xs, &terms.iter().map(|m| (m.k, -m.amplitude * (m.omega * tau).sin())).collect::<Vec<_>>());
        let mut out = complexify(&re, &im);
        pin_boundaries(&mut out);
        Ok(out)
    }
}

fn check_lengths(grid: &SpatialGrid, basis: &ModeBasis) -> Result<()> {
    if (grid.length() - basis.box_length()).abs() > 1e-12 * basis.box_length() {
        return Err(invalid(format!(
            "grid length {} does not match mode basis length {}",
            grid.length(),
            basis.box_length()
        )));
    }
    Ok(())
}

/// Equal-time seeds `W^{φφ}, W^{Πφ}, W^{φΠ}, W^{ΠΠ}` on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub w_phiphi: Array2<C64>,
    pub w_piphi: Array2<C64>,
    pub w_phipi: Array2<C64>,
    pub w_pipi: Array2<C64>,
}

impl InitialData {
    pub fn zeros(nx: usize) -> Self {
        let z = Array2::<C64>::zeros((nx, nx));
        Self { w_phiphi: z.clone(), w_piphi: z.clone(), w_phipi: z.clone(), w_pipi: z }
    }

    pub fn nx(&self) -> usize {
        self.w_phiphi.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let nx = self.nx();
        for (name, m) in self.fields() {
            if m.dim() != (nx, nx) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{nx}x{nx}"),
                    got: format!("{name}: {:?}", m.dim()),
                });
            }
        }
        if nx < 4 {
            return Err(invalid("initial data needs at least 4 grid points"));
        }
        Ok(())
    }

    fn fields(&self) -> [(&'static str, &Array2<C64>); 4] {
        [
            ("w_phiphi", &self.w_phiphi),
            ("w_piphi", &self.w_piphi),
            ("w_phipi", &self.w_phipi),
            ("w_pipi", &self.w_pipi),
        ]
    }

    /// Largest violation of the exchange symmetry `W(x,t;x',t') = conj W(x',t';x,t)`
    /// at `t = t' = 0`.
    pub fn exchange_asymmetry(&self) -> f64 {
        let herm = |m: &Array2<C64>| max_abs_diff(m, &m.t().mapv(|v| v.conj()));
        herm(&self.w_phiphi)
            .max(herm(&self.w_pipi))
            .max(max_abs_diff(&self.w_phipi, &self.w_piphi.t().mapv(|v| v.conj())))
    }

    /// `a·self + b·other`, used for linearity checks and for superposing seeds.
    pub fn combine(&self, a: C64, other: &InitialData, b: C64) -> Result<InitialData> {
        if other.nx() != self.nx() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}", self.nx()),
                got: format!("{}", other.nx()),
            });
        }
        let lin = |x: &Array2<C64>, y: &Array2<C64>| x.mapv(|v| v * a) + y.mapv(|v| v * b);
        Ok(InitialData {
            w_phiphi: lin(&self.w_phiphi, &other.w_phiphi),
            w_piphi: lin(&self.w_piphi, &other.w_piphi),
            w_phipi: lin(&self.w_phipi, &other.w_phipi),
            w_pipi: lin(&self.w_pipi, &other.w_pipi),
        })
    }

    fn pin(&mut self) {
        pin_boundaries(&mut self.w_phiphi);
        pin_boundaries(&mut self.w_piphi);
        pin_boundaries(&mut self.w_phipi);
        pin_boundaries(&mut self.w_pipi);
    }
}

/// Seeds of the smeared free vacuum.
pub fn vacuum_initial_data(
    basis: &ModeBasis,
    smearing: &SmearingParams,
    grid: &SpatialGrid,
    dispersion: &Dispersion,
) -> Result<InitialData> {
    check_lengths(grid, basis)?;
    let terms = mode_terms(basis, Some(smearing), dispersion);
    let xs = grid.points();
    let zero = Array2::<f64>::zeros((xs.len(), xs.len()));
    let phiphi = sine_bilinear(&xs, &terms.iter().map(|m| (m.k, m.amplitude)).collect::<Vec<_>>());
    let current = sine_bilinear(&xs, &terms.iter().map(|m| (m.k, m.amplitude * m.derivative)).collect::<Vec<_>>());
    let pipi = sine_bilinear(&xs, &terms.iter().map(|m| (m.k, m.amplitude * m.increment.norm_sqr())).collect::<Vec<_>>());
    let mut data = InitialData {
        w_phiphi: complexify(&phiphi, &zero),
        w_piphi: complexify(&zero, &current.mapv(|v| -v)),
        w_phipi: complexify(&zero, &current),
        w_pipi: complexify(&pipi, &zero),
    };
    data.pin();
    Ok(data)
}

/// Seeds of a single unsmeared box mode, `sin(k_n x) sin(k_n x') e^{−iω(t−t')}/(LΩ)`
/// (amplitude `1/(nπ)` in the continuum).
pub fn single_mode_initial_data(n: usize, grid: &SpatialGrid, dispersion: &Dispersion) -> Result<InitialData> {
    if n == 0 {
        return Err(invalid("mode numbers start at 1"));
    }
    let basis = ModeBasis::new(grid.length(), n)?;
    let terms: Vec<ModeTerm> = mode_terms(&basis, None, dispersion).into_iter().filter(|m| m.n == n).collect();
    if terms.is_empty() {
        return Err(invalid(format!("mode {n} is not resolved on a grid with {} points", grid.n_points())));
    }
    let xs = grid.points();
    let zero = Array2::<f64>::zeros((xs.len(), xs.len()));
    let m = terms[0];
    let phiphi = sine_bilinear(&xs, &[(m.k, m.amplitude)]);
    let current = sine_bilinear(&xs, &[(m.k, m.amplitude * m.derivative)]);
    let pipi = sine_bilinear(&xs, &[(m.k, m.amplitude * m.increment.norm_sqr())]);
    let mut data = InitialData {
        w_phiphi: complexify(&phiphi, &zero),
        w_piphi: complexify(&zero, &current.mapv(|v| -v)),
        w_phipi: complexify(&zero, &current),
        w_pipi: complexify(&pipi, &zero),
    };
    data.pin();
    Ok(data)
}

/// Exact continuum evolution of [`single_mode_initial_data`].
pub fn single_mode_wightman(n: usize, box_length: f64, x: f64, t: f64, xp: f64, tp: f64) -> C64 {
    let k = n as f64 * PI / box_length;
    C64::from_polar((k * x).sin() * (k * xp).sin() / (n as f64 * PI), -k * (t - tp))
}

/// One-particle wavepacket `Σ_n c_n |n⟩` in the box.
#[derive(Debug, Clone, PartialEq)]
pub struct WavepacketSpec {
    pub width: f64,
    pub center: f64,
    pub n_modes: usize,
    pub coefficients: Vec<C64>,
}

impl WavepacketSpec {
    /// Arbitrary coefficients without normalisation; `coefficients[0]` is mode 1.
    pub fn unnormalized(coefficients: Vec<C64>) -> Self {
        Self { width: f64::NAN, center: f64::NAN, n_modes: coefficients.len(), coefficients }
    }

    /// The normalised single-mode state `|n⟩` expressed over `n_modes` modes.
    pub fn single_mode(n: usize, n_modes: usize) -> Result<Self> {
        if n == 0 || n > n_modes {
            return Err(invalid(format!("mode {n} outside 1..={n_modes}")));
        }
        let mut c = vec![C64::new(0.0, 0.0); n_modes];
        c[n - 1] = C64::new(1.0, 0.0);
        Ok(Self::unnormalized(c))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `Σ_n |c_n|² ω_n`, the energy of the unsmeared packet in the box.
    pub fn energy(&self, basis: &ModeBasis) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm_sqr() * basis.frequency(i + 1))
            .sum()
    }

    /// `Σ_n |c_n|² ω_n E_n`, the energy seen through the smearing.
    pub fn smeared_energy(&self, basis: &ModeBasis, smearing: &SmearingParams) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = basis.wavenumber(i + 1);
                c.norm_sqr() * k * smearing.damping(k)
            })
            .sum()
    }
}

/// `c_n = λ^{−1} e^{−α²k_n²/2} e^{i k_n x_0}` for `n = 1..=n_modes`.
pub fn wavepacket_coefficients(alpha: f64, x0: f64, n_modes: usize, box_length: f64) -> Result<WavepacketSpec> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("wavepacket width must be positive, got {alpha}")));
    }
    if !(x0 > 0.0 && x0 < box_length) {
        return Err(invalid(format!("wavepacket centre {x0} outside (0, {box_length})")));
    }
    if n_modes == 0 {
        return Err(invalid("wavepacket needs at least one mode"));
    }
    let basis = ModeBasis::new(box_length, n_modes)?;
    let raw: Vec<C64> = (1..=n_modes)
        .map(|n| {
            let k = basis.wavenumber(n);
            C64::from_polar((-0.5 * alpha * alpha * k * k).exp(), k * x0)
        })
        .collect();
    let lambda = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    Ok(WavepacketSpec {
        width: alpha,
        center: x0,
        n_modes,
        coefficients: raw.into_iter().map(|c| c / lambda).collect(),
    })
}

/// Unsmeared mode function of the packet,
/// `F(x, t) = Σ_n c_n (nπ)^{−1/2} sin(k_n x) e^{−ik_n t}`.
pub fn one_particle_f(spec: &WavepacketSpec, basis: &ModeBasis, x: f64, t: f64) -> Result<C64> {
    basis.check_position(x)?;
    Ok(spec
        .coefficients
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let n = i + 1;
            let k = basis.wavenumber(n);
            c * C64::from_polar((k * x).sin() / (n as f64 * PI).sqrt(), -k * t)
        })
        .sum())
}

/// Seeds of the one-particle state: the vacuum plus `F*(x)F(x') + F(x)F*(x')`
/// and its time derivatives, with `F` smeared like the vacuum.
pub fn one_particle_initial_data(
    spec: &WavepacketSpec,
    basis: &ModeBasis,
    smearing: &SmearingParams,
    grid: &SpatialGrid,
    dispersion: &Dispersion,
) -> Result<InitialData> {
    let mut data = vacuum_initial_data(basis, smearing, grid, dispersion)?;
    let packet_basis = ModeBasis::new(basis.box_length(), spec.coefficients.len().max(1))?;
    let terms = mode_terms(&packet_basis, Some(smearing), dispersion);
    let nx = grid.n_points();
    // F, ∂_t F and the forward difference of F at t = 0 on the grid
    let mut f0 = vec![C64::new(0.0, 0.0); nx];
    let mut f1 = f0.clone();
    let mut f2 = f0.clone();
    for m in &terms {
        let b = spec.coefficients[m.n - 1] * m.amplitude.sqrt();
        let b1 = b * C64::new(0.0, -m.derivative);
        let b2 = b * m.increment;
        for (i, x) in grid.points().into_iter().enumerate() {
            let s = (m.k * x).sin();
            f0[i] += b * s;
            f1[i] += b1 * s;
            f2[i] += b2 * s;
        }
    }
    let bilinear = |a: &[C64], b: &[C64]| {
        Array2::from_shape_fn((nx, nx), |(i, j)| a[i].conj() * b[j] + a[i] * b[j].conj())
    };
    data.w_phiphi = data.w_phiphi + bilinear(&f0, &f0);
    data.w_phipi = data.w_phipi + bilinear(&f0, &f1);
    data.w_piphi = data.w_piphi + bilinear(&f1, &f0);
    data.w_pipi = data.w_pipi + bilinear(&f2, &f2);
    data.pin();
    Ok(data)
}

/// A complex solution sampled on a time slice together with its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSamples {
    pub values: Vec<C64>,
    pub time_derivative: Vec<C64>,
}

/// `(f1, f2) = i ∫ dx (f1* ∂_t f2 − f2 ∂_t f1*)` by the trapezoid rule.
pub fn kg_inner_product(f1: &SliceSamples, f2: &SliceSamples, grid: &SpatialGrid) -> Result<C64> {
    let nx = grid.n_points();
    for s in [f1, f2] {
        if s.values.len() != nx || s.time_derivative.len() != nx {
            return Err(Error::DimensionMismatch {
                expected: format!("{nx} samples"),
                got: format!("{} values, {} derivatives", s.values.len(), s.time_derivative.len()),
            });
        }
    }
    let dx = grid.spacing();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..nx {
        let w = if i == 0 || i + 1 == nx { 0.5 } else { 1.0 };
        acc += w * (f1.values[i].conj() * f2.time_derivative[i] - f2.values[i] * f1.time_derivative[i].conj());
    }
    Ok(C64::new(0.0, 1.0) * acc * dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup() -> (SpatialGrid, SmearingParams, ModeBasis) {
        let grid = SpatialGrid::with_spacing(10.0, 0.05).unwrap();
        let smearing = SmearingParams::grid_default(grid.spacing());
        let basis = ModeBasis::for_smearing(10.0, &smearing).unwrap();
        (grid, smearing, basis)
    }

    #[test]
    fn truncation_threshold() {
        let (_, smearing, basis) = setup();
        let n = basis.n_modes();
        assert!(smearing.damping(basis.wavenumber(n)) < DAMPING_THRESHOLD);
        assert!(smearing.damping(basis.wavenumber(n - 1)) >= DAMPING_THRESHOLD);
        let ks = basis.wavenumbers();
        assert!(ks.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(basis.frequency(3), basis.wavenumber(3));
    }

    #[test]
    fn vacuum_vanishes_on_boundary() {
        let (_, smearing, basis) = setup();
        let a = vacuum_wightman(&basis, &smearing, 0.0, 0.3, 4.0, 0.0).unwrap();
        assert_eq!(a, C64::new(0.0, 0.0));
        let b = vacuum_wightman(&basis, &smearing, 10.0, 0.3, 4.0, 0.0).unwrap();
        assert!(b.norm() < 1e-13);
        assert!(vacuum_wightman(&basis, &smearing, 10.5, 0.0, 4.0, 0.0).is_err());
    }

    #[test]
    fn single_mode_vacuum() {
        let smearing = SmearingParams::new(0.1, 0.2).unwrap();
        let basis = ModeBasis::new(10.0, 1).unwrap();
        let (x, xp, t, tp) = (2.0, 7.5, 0.4, 1.3);
        let k = PI / 10.0;
        let expected = C64::from_polar(
            (-k * k * (0.01 + 0.04)).exp() / PI * (k * x).sin() * (k * xp).sin(),
            -k * (t - tp),
        );
        let got = vacuum_wightman(&basis, &smearing, x, t, xp, tp).unwrap();
        assert!((got - expected).norm() < 1e-15);
    }

    #[test]
    fn vacuum_equal_time_is_real() {
        let (_, smearing, basis) = setup();
        let v = vacuum_wightman(&basis, &smearing, 3.3, 1.7, 5.1, 1.7).unwrap();
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn vacuum_seed_structure() {
        let (grid, smearing, basis) = setup();
        for dispersion in [Dispersion::Continuum, Dispersion::lattice(0.05, 0.0025).unwrap()] {
            let d = vacuum_initial_data(&basis, &smearing, &grid, &dispersion).unwrap();
            assert!(crate::matrix::boundaries_zero(&d.w_phiphi));
            assert!(crate::matrix::boundaries_zero(&d.w_pipi));
            assert!(crate::matrix::boundaries_zero(&d.w_piphi));
            assert!(d.w_phiphi.iter().all(|v| v.im == 0.0));
            assert!(d.w_pipi.iter().all(|v| v.im == 0.0));
            assert!(d.w_piphi.iter().all(|v| v.re == 0.0));
            assert!(d.w_phipi.iter().all(|v| v.re == 0.0));
            assert!(d.exchange_asymmetry() < 1e-13);

            // smeared canonical commutator 2i Σ (1/L) E_n sin sin
            let commutator = &d.w_phipi - &d.w_piphi;
            let terms = mode_terms(&basis, Some(&smearing), &dispersion);
            let xs = grid.points();
            for &(i, j) in &[(50usize, 50usize), (50, 53), (100, 20), (120, 121)] {
                let expected: f64 = terms
                    .iter()
                    .map(|m| 2.0 / 10.0 * smearing.damping(m.k) * (m.k * xs[i]).sin() * (m.k * xs[j]).sin())
                    .sum();
                assert!((commutator[[i, j]] - C64::new(0.0, expected)).norm() < 1e-12);
            }
            // peaked on the diagonal
            assert!(commutator[[100, 100]].im > 10.0 * commutator[[100, 110]].im.abs());
        }
    }

    #[test]
    fn continuum_seeds_match_analytic_derivatives() {
        let (grid, smearing, basis) = setup();
        let d = vacuum_initial_data(&basis, &smearing, &grid, &Dispersion::Continuum).unwrap();
        let (i, j) = (70usize, 90usize);
        let (x, xp) = (grid.x(i), grid.x(j));
        let w = vacuum_wightman(&basis, &smearing, x, 0.0, xp, 0.0).unwrap();
        assert!((d.w_phiphi[[i, j]] - w).norm() < 1e-13);
        let pipi: f64 = (1..=basis.n_modes())
            .map(|n| {
                let k = basis.wavenumber(n);
                k * k / (n as f64 * PI) * smearing.damping(k) * (k * x).sin() * (k * xp).sin()
            })
            .sum();
        assert!((d.w_pipi[[i, j]].re - pipi).abs() < 1e-11);
    }

    #[test]
    fn lattice_dispersion_limits() {
        let d = Dispersion::lattice(0.01, 0.0005).unwrap();
        let k = 1.0;
        assert!((d.frequency(k) - k).abs() < 1e-4);
        assert!((d.derivative_factor(k) - k).abs() < 1e-4);
        assert!((d.increment(k) - C64::new(0.0, -k)).norm() < 1e-3);
        assert!(Dispersion::lattice(0.01, 0.02).is_err());
    }

    #[test]
    fn wavepacket_normalised() {
        let w = wavepacket_coefficients(1.0 / 11.0, 5.0, 100, 10.0).unwrap();
        assert!((w.norm_sqr() - 1.0).abs() < 1e-12);
        assert_eq!(w.coefficients.len(), 100);
        let wide = wavepacket_coefficients(50.0, 5.0, 20, 10.0).unwrap();
        assert!(wide.coefficients[0].norm_sqr() > 1.0 - 1e-12);
        assert!(wavepacket_coefficients(0.0, 5.0, 10, 10.0).is_err());
        assert!(wavepacket_coefficients(0.1, 10.0, 10, 10.0).is_err());
        assert!(wavepacket_coefficients(0.1, 5.0, 0, 10.0).is_err());
    }

    #[test]
    fn mode_function_properties() {
        let basis = ModeBasis::new(10.0, 100).unwrap();
        let w = wavepacket_coefficients(1.0 / 11.0, 5.0, 100, 10.0).unwrap();
        assert_eq!(one_particle_f(&w, &basis, 0.0, 0.7).unwrap(), C64::new(0.0, 0.0));

        let single = WavepacketSpec::single_mode(3, 5).unwrap();
        let a = one_particle_f(&single, &basis, 2.2, 0.0).unwrap().norm();
        let b = one_particle_f(&single, &basis, 2.2, 1.9).unwrap().norm();
        assert_relative_eq!(a, b, max_relative = 1e-14);

        // |F|² of the reference packet peaks at its centre
        let (mut best, mut arg) = (0.0, 0.0);
        for k in 0..=1000 {
            let x = k as f64 * 0.01;
            let v = one_particle_f(&w, &basis, x, 0.0).unwrap().norm_sqr();
            if v > best {
                best = v;
                arg = x;
            }
        }
        assert!((arg - 5.0).abs() < 0.02, "peak at {arg}");
    }

    #[test]
    fn zero_packet_is_vacuum() {
        let (grid, smearing, basis) = setup();
        let disp = Dispersion::lattice(0.05, 0.0025).unwrap();
        let zero = WavepacketSpec::unnormalized(vec![C64::new(0.0, 0.0); 10]);
        let vac = vacuum_initial_data(&basis, &smearing, &grid, &disp).unwrap();
        let one = one_particle_initial_data(&zero, &basis, &smearing, &grid, &disp).unwrap();
        assert_eq!(vac, one);
    }

    #[test]
    fn packet_difference_is_real_bilinear() {
        let (grid, smearing, basis) = setup();
        let w = wavepacket_coefficients(1.0 / 11.0, 5.0, 100, 10.0).unwrap();
        for disp in [Dispersion::Continuum, Dispersion::lattice(0.05, 0.0025).unwrap()] {
            let vac = vacuum_initial_data(&basis, &smearing, &grid, &disp).unwrap();
            let one = one_particle_initial_data(&w, &basis, &smearing, &grid, &disp).unwrap();
            let h = &one.w_phiphi - &vac.w_phiphi;
            assert!(h.iter().all(|v| v.im.abs() < 1e-15));
            assert!(one.exchange_asymmetry() < 1e-12);
            // h = F*F' + F F'* with the smeared mode function
            let f = |x: f64| -> C64 {
                w.coefficients
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| disp.carries(i + 1, 10.0))
                    .map(|(i, c)| {
                        let k = basis.wavenumber(i + 1);
                        let amp = smearing.damping(k) / (10.0 * disp.derivative_factor(k));
                        c * amp.sqrt() * (k * x).sin()
                    })
                    .sum()
            };
            let (i, j) = (95usize, 104usize);
            let (a, b) = (f(grid.x(i)), f(grid.x(j)));
            let expected = a.conj() * b + a * b.conj();
            assert!((h[[i, j]] - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn kg_orthonormality() {
        let grid = SpatialGrid::with_spacing(10.0, 0.01).unwrap();
        let basis = ModeBasis::new(10.0, 10).unwrap();
        let t = 0.37;
        let mode = |n: usize, conj: bool| -> SliceSamples {
            let k = basis.wavenumber(n);
            let norm = 1.0 / (n as f64 * PI).sqrt();
            let mut values = Vec::new();
            let mut time_derivative = Vec::new();
            for x in grid.points() {
                let u = C64::from_polar(norm * (k * x).sin(), -k * t);
                let du = C64::new(0.0, -k) * u;
                if conj {
                    values.push(u.conj());
                    time_derivative.push(du.conj());
                } else {
                    values.push(u);
                    time_derivative.push(du);
                }
            }
            SliceSamples { values, time_derivative }
        };
        for n in [1usize, 4, 7] {
            let un = mode(n, false);
            let ip = kg_inner_product(&un, &un, &grid).unwrap();
            assert!((ip - 1.0).norm() < 1e-12, "{ip}");
            let conj = kg_inner_product(&un, &mode(n, true), &grid).unwrap();
            assert!(conj.norm() < 1e-12);
            let m = if n == 7 { 2 } else { n + 1 };
            let cross = kg_inner_product(&un, &mode(m, false), &grid).unwrap();
            assert!(cross.norm() < 1e-12);
        }
        let short = SliceSamples { values: vec![C64::new(0.0, 0.0); 3], time_derivative: vec![C64::new(0.0, 0.0); 3] };
        assert!(kg_inner_product(&short, &short, &grid).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn hermitian_and_stationary(x in 0.0f64..10.0, xp in 0.0f64..10.0, t in -5.0f64..5.0,
                                        tp in -5.0f64..5.0, s in -20.0f64..20.0) {
                let smearing = SmearingParams::new(0.1, 0.1).unwrap();
                let basis = ModeBasis::for_smearing(10.0, &smearing).unwrap();
                let a = vacuum_wightman(&basis, &smearing, x, t, xp, tp).unwrap();
                let b = vacuum_wightman(&basis, &smearing, xp, tp, x, t).unwrap();
                prop_assert!((a - b.conj()).norm() < 1e-13);
                let shifted = vacuum_wightman(&basis, &smearing, x, t + s, xp, tp + s).unwrap();
                prop_assert!((a - shifted).norm() < 1e-12);
            }

            #[test]
            fn equal_time_vacuum_is_positive(seed in proptest::collection::vec(-1.0f64..1.0, 41)) {
                let grid = SpatialGrid::new(10.0, 41).unwrap();
                let smearing = SmearingParams::grid_default(grid.spacing());
                let basis = ModeBasis::for_smearing(10.0, &smearing).unwrap();
                let d = vacuum_initial_data(&basis, &smearing, &grid, &Dispersion::Continuum).unwrap();
                let quad: f64 = (0..41).flat_map(|i| (0..41).map(move |j| (i, j)))
                    .map(|(i, j)| seed[i] * seed[j] * d.w_phiphi[[i, j]].re)
                    .sum();
                let norm: f64 = seed.iter().map(|v| v * v).sum();
                prop_assert!(quad >= -1e-10 * norm);
            }
        }
    }
}
