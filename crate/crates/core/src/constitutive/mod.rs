//! Degeneracy profiles and the material functions built from them.
//!
//! [`profile`] owns the diffusivity profile `P` and the log-domain primitives
//! (`ln P`, the stable product `P*I`) that keep fast-degenerating media
//! representable. [`bundle`] derives the transform family `H`, `F`, `h`, `G`
//! from a profile and an exponent `Lambda`, estimates the admissibility
//! constants, and validates the structural identities on a probe grid.

mod bundle;
mod profile;

pub use bundle::{analyze_profile, build_bundle, AdmissibilityReport, ConstitutiveBundle};
pub use profile::{
    reduce_hypothesis, ConstitutiveError, DegeneracyProfile, ProfileKind, TailPolicy, ZetaSpec,
};
