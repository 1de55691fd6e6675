//! Finite element spaces on quadrilateral meshes.
//!
//! Spaces are built from a reference space on the unit square `[0,1]^2` and
//! transported to each convex quadrilateral element through a bilinear
//! isomorphism.  Whether the transported spaces keep their approximation
//! order depends on which polynomials the reference space contains, and this
//! crate provides both sides of that story:
//!
//! - [`polyspace`] decides inclusion questions (`P_r`, `Q_r`, serendipity
//!   `S_r`, mapped spaces) in exact rational arithmetic, with no tolerances.
//! - [`mesh`], [`quadrature`], [`refelem`], and [`linalg`] supply the usual
//!   computational kernels: structured quadrilateral mesh families, tensor
//!   Gauss rules, nodal Q2/S2 bases, dense/sparse symmetric solvers.
//! - [`projection`] measures element-by-element best approximation errors in
//!   `L^2` and the broken `H^1` seminorm, including the monomial sweep that
//!   exhibits the loss of order on trapezoidal meshes.
//! - [`poisson`] is a conforming Galerkin solver for the Dirichlet Poisson
//!   problem with mapped Q2 and S2 elements, feeding [`harness`] convergence
//!   tables.
//!
//! The `quadfem` binary exposes the `mesh`, `inclusion`, `project`, and
//! `solve` subcommands on top of these modules.

pub mod field;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod poisson;
pub mod polyspace;
pub mod projection;
pub mod quadrature;
pub mod refelem;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bilinear map is degenerate (Jacobian changes sign or vanishes on the reference square)")]
    DegenerateMap,

    #[error("element {element}: nonpositive Jacobian determinant ({det:.3e})")]
    DegenerateElement { element: usize, det: f64 },

    #[error("element {element}: singular Gram matrix (basis linearly dependent after mapping)")]
    SingularGram { element: usize },

    #[error("element {element}: gradient Gram nullspace is not one-dimensional (basis defect)")]
    BasisDefect { element: usize },

    #[error("matrix not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error(
        "conjugate gradients did not converge in {iterations} iterations \
         (relative residual {relative_residual:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        relative_residual: f64,
        history: Vec<f64>,
    },

    #[error("mesh format error: {0}")]
    MeshFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI: 2 for argument/format errors,
    /// 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::MeshFormat(_) => 2,
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}
