//! Concrete Hamiltonian families.

pub mod birth_death;
pub mod flux;
pub mod lambert;
pub mod quadratic;

pub use birth_death::{make_birth_death_models, make_one_sided_model, make_two_sided_model};
pub use flux::{check_proper_kernel, default_flux_model, make_flux_model, FluxKernel, FluxSpec, MixtureKernel};
pub use lambert::lambert_w;
pub use quadratic::{default_quadratic_model, default_quadratic_spec, make_quadratic_model, quadratic_eigen_hamiltonian, QuadraticLambda, QuadraticSpec};
