//! Local distribution families, conditioning, and the covariance lemmas.

mod family;
mod joint;
pub mod lemmas;
mod table;

pub use family::{ConditionedFamily, FamilyBody, FamilyDump, LocalDistributionFamily, Marginals, Provenance, ZERO_MASS};
pub use joint::JointDistribution;
pub use lemmas::{
    average_variance, binary_conditioning_identity, check_statdist_cov_identity, conditional_variance_decrement,
    covariance, covariance_matrix, expected_conditional_variance, pair_probability_matrix, pi_distance,
    DecrementCheck, IdentityCheck, PiDistance,
};
pub use table::{collision_probability, statistical_distance, variance_k, Table};

pub(crate) use table::advance;
