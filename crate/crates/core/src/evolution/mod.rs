//! Hamiltonian assembly, spectra and adiabatic time evolution.

mod analysis;
mod operator;
mod propagate;
mod robustness;
mod spectrum;
mod terms;

pub use analysis::{
    adiabatic_criterion, criterion_path, final_spectrum, finite_difference, gap_trace, gap_trace_path,
    CriterionReport, CriterionSample, SpectrumTrace, EVOLUTION_MAX_SITES, FD_STEP,
};
pub use operator::{is_hermitian, realize, Amplitude, Operator, MAX_SITES};
pub use propagate::{
    evolve, evolve_path, evolve_with, start_state, EvolutionResult, EvolveOptions, DEFAULT_STEP_TOL,
    DEFAULT_TRACE_POINTS, NORM_FAILURE,
};
pub use robustness::{perturb_and_refit, RobustnessReport, RobustnessTrial};
pub use spectrum::{degeneracy, spectrum, Spectrum, DEGENERACY_TOL, DENSE_MAX_SITES};
pub use terms::{
    assemble_at, assemble_problem, dummy_residual_field, terms_from_ising, uniform_grid, DevicePathModel, HamiltonianPath,
    LinearPath, Schedule, ScheduleModel, ScheduledPath, Term, TermList, DEFAULT_DEVICE_START,
    DEFAULT_START_FIELD,
};
