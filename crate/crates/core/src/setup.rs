//! Resolution-independent description of a run, from which evolution configs,
//! vacuum references and refined copies are built.

use crate::error::{invalid, Result};
use crate::evolution::{Bootstrap, EvolutionConfig, VPrimeIndexing};
use crate::lattice::{SpatialGrid, TimeGrid};
use crate::observables::GridVacuum;
use crate::potential::Potential;
use crate::states::{
    one_particle_initial_data, single_mode_initial_data, vacuum_initial_data, wavepacket_coefficients, Dispersion,
    InitialData, ModeBasis, SmearingParams, VacuumReference, WavepacketSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    Vacuum,
    Wavepacket { alpha: f64, x0: f64, n_modes: usize },
    /// A single unsmeared box mode, with no vacuum underneath.
    SingleMode { n: usize },
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmearingSpec {
    /// Fixed widths, independent of the grid.
    Physical { sigma_x: f64, sigma_t: f64 },
    /// Widths equal to this many grid spacings.
    GridMultiple(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DispersionKind {
    Continuum,
    #[default]
    Lattice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub length: f64,
    pub dx: f64,
    /// `C = Δt/Δx`
    pub cfl: f64,
    pub t_max: f64,
    pub potential: Potential,
    pub state: StateSpec,
    pub smearing: SmearingSpec,
    pub dispersion: DispersionKind,
    pub vprime: VPrimeIndexing,
    pub bootstrap: Bootstrap,
}

impl Setup {
    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::with_spacing(self.length, self.dx)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::from_cfl(&self.grid()?, self.cfl, self.t_max)
    }

    pub fn dt(&self) -> f64 {
        self.cfl * self.dx
    }

    pub fn smearing_params(&self) -> Result<SmearingParams> {
        match self.smearing {
            SmearingSpec::Physical { sigma_x, sigma_t } => SmearingParams::new(sigma_x, sigma_t),
            SmearingSpec::GridMultiple(f) => SmearingParams::new(f * self.dx, f * self.dx),
        }
    }

    pub fn basis(&self) -> Result<ModeBasis> {
        ModeBasis::for_smearing(self.length, &self.smearing_params()?)
    }

    pub fn dispersion_model(&self) -> Result<Dispersion> {
        match self.dispersion {
            DispersionKind::Continuum => Ok(Dispersion::Continuum),
            DispersionKind::Lattice => Dispersion::lattice(self.dx, self.dt()),
        }
    }

    pub fn reference(&self) -> Result<VacuumReference> {
        Ok(VacuumReference::new(self.basis()?, self.smearing_params()?, self.dispersion_model()?))
    }

    pub fn grid_vacuum(&self) -> Result<GridVacuum> {
        GridVacuum::new(&self.reference()?, &self.grid()?, self.dt())
    }

    pub fn wavepacket(&self) -> Result<Option<WavepacketSpec>> {
        match self.state {
            StateSpec::Wavepacket { alpha, x0, n_modes } => {
                Ok(Some(wavepacket_coefficients(alpha, x0, n_modes, self.length)?))
            }
            _ => Ok(None),
        }
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        let grid = self.grid()?;
        let disp = self.dispersion_model()?;
        match &self.state {
            StateSpec::Zero => Ok(InitialData::zeros(grid.n_points())),
            StateSpec::SingleMode { n } => single_mode_initial_data(*n, &grid, &disp),
            StateSpec::Vacuum => vacuum_initial_data(&self.basis()?, &self.smearing_params()?, &grid, &disp),
            StateSpec::Wavepacket { .. } => {
                let packet = self.wavepacket()?.unwrap();
                one_particle_initial_data(&packet, &self.basis()?, &self.smearing_params()?, &grid, &disp)
            }
        }
    }

    fn assemble(&self, checked: bool) -> Result<EvolutionConfig> {
        let grid = self.grid()?;
        let time = self.time_grid()?;
        let init = self.initial_data()?;
        let cfg = if checked {
            EvolutionConfig::new(grid, time, self.potential.clone(), init)?
        } else {
            EvolutionConfig::new_unchecked(grid, time, self.potential.clone(), init)?
        };
        Ok(cfg.with_vprime(self.vprime).with_bootstrap(self.bootstrap))
    }

    /// Evolution config, with the CFL gate.
    pub fn build(&self) -> Result<EvolutionConfig> {
        self.assemble(true)
    }

    pub fn build_unchecked(&self) -> Result<EvolutionConfig> {
        self.assemble(false)
    }

    /// Same physics with `Δx` and `Δt` divided by `h`.
    pub fn refined(&self, h: usize) -> Result<Setup> {
        if h == 0 {
            return Err(invalid("refinement factor must be positive"));
        }
        Ok(Setup { dx: self.dx / h as f64, ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Setup {
        Setup {
            length: 10.0,
            dx: 0.1,
            cfl: 0.2,
            t_max: 1.0,
            potential: Potential::free(),
            state: StateSpec::Vacuum,
            smearing: SmearingSpec::Physical { sigma_x: 0.2, sigma_t: 0.2 },
            dispersion: DispersionKind::Lattice,
            vprime: VPrimeIndexing::Physical,
            bootstrap: Bootstrap::SecondOrder,
        }
    }

    #[test]
    fn refinement_nests() {
        let s = base();
        let f = s.refined(2).unwrap();
        assert_eq!(f.grid().unwrap().n_points(), 201);
        assert_eq!(f.time_grid().unwrap().n_steps(), 2 * (s.time_grid().unwrap().n_steps() - 1) + 1);
        assert_eq!(f.smearing_params().unwrap(), s.smearing_params().unwrap());
        assert!(s.refined(0).is_err());
    }

    #[test]
    fn builds_each_state() {
        for state in [
            StateSpec::Vacuum,
            StateSpec::Zero,
            StateSpec::SingleMode { n: 2 },
            StateSpec::Wavepacket { alpha: 0.5, x0: 5.0, n_modes: 20 },
        ] {
            let cfg = Setup { state, ..base() }.build().unwrap();
            assert_eq!(cfg.nx(), 101);
            assert!(cfg.initial.exchange_asymmetry() < 1e-12);
        }
        let bad = Setup { state: StateSpec::Wavepacket { alpha: 0.5, x0: 11.0, n_modes: 20 }, ..base() };
        assert!(bad.build().is_err());
    }
}
