//! Numerical laboratory for degenerate diffusion with a finite speed of
//! propagation.
//!
//! The library is organized around one pipeline:
//!
//! * [`constitutive`] turns a degeneracy profile `P` (diffusivity vanishing at
//!   zero density) into the derived material functions `I`, `H`, `h`, `F`, `G`
//!   and checks the admissibility conditions under which the rest of the
//!   machinery applies.
//! * [`solver`] integrates the regularized problem `h(u) u_t = (F(u) + eps) Lap u`
//!   on an interval or a radially symmetric ball, with a discrete maximum
//!   principle enforced at every step.
//! * [`degiorgi`] evaluates the shrinking-radii energy functional on a computed
//!   trajectory, checks the nonlinear recursion between consecutive levels, and
//!   measures how long an initially empty ball stays empty.
//! * [`estimates`] audits the pointwise and integral inequalities that the
//!   localization argument relies on.
//!
//! Shared numerics (adaptive quadrature, limit extrapolation, half-integer
//! gamma values) live in [`quad`] and [`special`].

pub mod constitutive;
pub mod degiorgi;
pub mod estimates;
pub mod quad;
pub mod solver;
pub mod special;
