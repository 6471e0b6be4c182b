//! Decides whether a symmetric nonnegative tensor is completely positive
//! and, when it is, produces an explicit nonnegative rank-one
//! decomposition. Instead of one large dense moment-relaxation SDP, the
//! pipeline generates the maximal cliques of the tensor's support
//! multi-hypergraph and solves small per-clique moment relaxations,
//! certifying the answer either way: a clique-coverage violation or an
//! SDP infeasibility certificate for "no", an extracted atomic measure
//! with verified reconstruction for "yes".

pub mod bench;
pub mod clique;
pub mod conic;
pub mod error;
pub mod extract;
pub mod io;
pub mod linalg;
pub mod moment;
pub mod sdp;
pub mod tensor;

pub use error::{CpError, Result};
