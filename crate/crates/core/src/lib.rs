//! Non-Markovian sideband-cooling simulator.
//!
//! The pipeline runs in four layers: classical mean fields ([`meanfield`]),
//! the dressed mechanical propagators ([`propagator`]), the phonon-number
//! assembly ([`moments`]) and the cooling diagnostics ([`analysis`]). The
//! [`oracle`] module evolves a finite-bath Gaussian network exactly and is
//! used to validate the kernel path.

pub mod analysis;
pub mod bath;
pub mod error;
pub mod io;
pub mod meanfield;
pub mod model;
pub mod moments;
pub mod oracle;
pub mod propagator;

pub use analysis::{CoolingReport, NuConvention, OutputSpec, Simulation};
pub use bath::{KernelTable, SpectralDensity};
pub use error::{Result, SimError};
pub use meanfield::{solve_meanfield, MeanFieldTrajectory};
pub use model::{
    gaussian_physicality, validate_params, KappaSchedule, Occupation, PhysicalParams, PhysicalityReport, TimeGrid,
};
pub use moments::{assemble_nb, PhononSeries};
pub use propagator::{solve_ml, PropagatorPair};
