//! Numerical library for Markov dynamics on the BC branching graph.
//!
//! The library implements, and cross-verifies against independent oracles,
//! the computational objects attached to the graph of positive signatures:
//!
//! * stochastic links between adjacent levels ([`branching`]),
//! * the two-complex-parameter family of probability measures on each
//!   level and their coherence under the links ([`zmeasure`]),
//! * nonintersecting birth-and-death dynamics obtained by a Doob
//!   h-transform, together with the discrete difference operator and its
//!   orthogonal-polynomial eigenfunctions ([`dynamics`]),
//! * truncated transition semigroups via uniformization and the
//!   Karlin–McGregor determinant ([`semigroup`]),
//! * seeded continuous-time Monte Carlo simulation ([`simulate`]),
//! * an exact-rational shifted-symmetric-polynomial calculus used as an
//!   independent oracle for the links ([`shifted`]).
//!
//! Scalar special functions (complex log-gamma, Pochhammer symbols,
//! Jacobi polynomials, terminating hypergeometric sums) live in
//! [`specfun`]; signatures and parameter-domain classification in
//! [`sig`] and [`params`].

pub mod branching;
pub mod dynamics;
pub mod error;
pub mod params;
pub mod semigroup;
pub mod shifted;
pub mod sig;
pub mod simulate;
pub mod specfun;
pub mod zmeasure;

pub use error::{Error, Result};
pub use params::{DomainClass, Params};
pub use sig::Signature;
