//! Shape function bases on the reference square.
//!
//! Two nodal families are provided for the Poisson solver:
//!
//! - `Q2`, the biquadratic element with 9 nodes on the tensor grid
//!   {0, 1/2, 1}^2;
//! - `S2`, the 8-node serendipity element (corners plus edge midpoints)
//!   spanning `P_2` together with `x^2 y` and `x y^2`.
//!
//! Node order is fixed: corners counterclockwise from the origin, then edge
//! midpoints counterclockwise starting with the bottom edge, then (Q2 only)
//! the center.  Nodal coefficients are computed once by an exact rational
//! Vandermonde solve and then frozen to floating point, so evaluation is
//! deterministic across runs.
//!
//! Arbitrary [`PolySpan`] spans (no nodes) are supported for the projection
//! studies.

use std::fmt;
use std::str::FromStr;

use crate::linalg::{rational_solve, rational_to_f64, Rational};
use crate::polyspace::{make_space, rat, ratio, PolySpan, RationalPoly, SpaceKind};
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

/// The nodal element families of the Poisson solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    Q2,
    S2,
}

impl ElementKind {
    pub fn node_count(&self) -> usize {
        match self {
            ElementKind::Q2 => 9,
            ElementKind::S2 => 8,
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementKind::Q2 => write!(f, "q2"),
            ElementKind::S2 => write!(f, "s2"),
        }
    }
}

impl FromStr for ElementKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q2" => Ok(ElementKind::Q2),
            "s2" => Ok(ElementKind::S2),
            other => Err(Error::InvalidArgument(format!(
                "unknown element '{other}' (q2 | s2)"
            ))),
        }
    }
}

/// Reference node coordinates in the fixed order, as exact rationals.
pub fn reference_nodes(kind: ElementKind) -> Vec<[Rational; 2]> {
    let h = || ratio(1, 2);
    let mut nodes = vec![
        [rat(0), rat(0)],
        [rat(1), rat(0)],
        [rat(1), rat(1)],
        [rat(0), rat(1)],
        [h(), rat(0)],
        [rat(1), h()],
        [h(), rat(1)],
        [rat(0), h()],
    ];
    if kind == ElementKind::Q2 {
        nodes.push([h(), h()]);
    }
    nodes
}

fn reference_span(kind: ElementKind) -> PolySpan {
    match kind {
        ElementKind::Q2 => make_space(SpaceKind::Q, 2),
        ElementKind::S2 => make_space(SpaceKind::S, 2),
    }
}

/// Nodal basis polynomials with exact rational coefficients, solving the
/// node/monomial Vandermonde system.
pub fn exact_nodal_basis(kind: ElementKind) -> Vec<RationalPoly> {
    let nodes = reference_nodes(kind);
    let span = reference_span(kind);
    let monos = span.basis();
    let n = nodes.len();
    assert_eq!(monos.len(), n);
    let vandermonde: Vec<Vec<Rational>> = nodes
        .iter()
        .map(|p| monos.iter().map(|m| m.eval(&p[0], &p[1])).collect())
        .collect();
    (0..n)
        .map(|j| {
            let unit: Vec<Rational> = (0..n)
                .map(|i| if i == j { rat(1) } else { rat(0) })
                .collect();
            let coeffs = rational_solve(&vandermonde, &unit)
                .expect("nodal Vandermonde is unisolvent");
            let mut phi = RationalPoly::zero();
            for (c, m) in coeffs.iter().zip(monos) {
                phi = &phi + &m.scale(c);
            }
            phi
        })
        .collect()
}

/// A polynomial with floating-point coefficients, stored sparsely.
#[derive(Clone, Debug)]
struct FloatPoly {
    terms: Vec<(u32, u32, f64)>,
}

impl FloatPoly {
    fn from_rational(p: &RationalPoly) -> Self {
        FloatPoly {
            terms: p.to_f64_terms(),
        }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(i, j, c)| c * x.powi(i as i32) * y.powi(j as i32))
            .sum()
    }

    fn dx(&self) -> FloatPoly {
        FloatPoly {
            terms: self
                .terms
                .iter()
                .filter(|&&(i, _, _)| i > 0)
                .map(|&(i, j, c)| (i - 1, j, c * i as f64))
                .collect(),
        }
    }

    fn dy(&self) -> FloatPoly {
        FloatPoly {
            terms: self
                .terms
                .iter()
                .filter(|&&(_, j, _)| j > 0)
                .map(|&(i, j, c)| (i, j - 1, c * j as f64))
                .collect(),
        }
    }
}

/// A basis on the reference square, with optional nodes.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub kind: Option<ElementKind>,
    /// Node coordinates; empty for generic spans.
    pub nodes: Vec<[f64; 2]>,
    pub dim: usize,
    basis: Vec<FloatPoly>,
    gradients: Vec<[FloatPoly; 2]>,
}

impl ReferenceElement {
    /// The nodal Q2 or S2 element.
    pub fn nodal(kind: ElementKind) -> Self {
        let basis: Vec<FloatPoly> = exact_nodal_basis(kind)
            .iter()
            .map(FloatPoly::from_rational)
            .collect();
        let nodes = reference_nodes(kind)
            .iter()
            .map(|p| [rational_to_f64(&p[0]), rational_to_f64(&p[1])])
            .collect();
        Self::from_parts(Some(kind), nodes, basis)
    }

    /// A generic span basis (no nodes), using the span's numerically
    /// well-conditioned evaluation basis.
    pub fn from_span(span: &PolySpan) -> Self {
        let basis: Vec<FloatPoly> = span
            .evaluation_basis()
            .iter()
            .map(FloatPoly::from_rational)
            .collect();
        Self::from_parts(None, Vec::new(), basis)
    }

    fn from_parts(kind: Option<ElementKind>, nodes: Vec<[f64; 2]>, basis: Vec<FloatPoly>) -> Self {
        let gradients = basis.iter().map(|p| [p.dx(), p.dy()]).collect();
        ReferenceElement {
            kind,
            nodes,
            dim: basis.len(),
            basis,
            gradients,
        }
    }

    /// Values of all basis functions at a reference point.
    pub fn shape_values(&self, p: [f64; 2]) -> Vec<f64> {
        self.basis.iter().map(|phi| phi.eval(p[0], p[1])).collect()
    }

    /// Reference gradients of all basis functions at a reference point.
    pub fn shape_gradients(&self, p: [f64; 2]) -> Vec<[f64; 2]> {
        self.gradients
            .iter()
            .map(|g| [g[0].eval(p[0], p[1]), g[1].eval(p[0], p[1])])
            .collect()
    }

    /// Values and gradients tabulated at every point of a rule.
    pub fn tabulate(&self, rule: &QuadratureRule) -> BasisTable {
        BasisTable {
            values: rule.points().iter().map(|&p| self.shape_values(p)).collect(),
            gradients: rule
                .points()
                .iter()
                .map(|&p| self.shape_gradients(p))
                .collect(),
        }
    }
}

/// Basis values and gradients per quadrature point.
pub struct BasisTable {
    /// `values[point][basis]`
    pub values: Vec<Vec<f64>>,
    /// `gradients[point][basis]`
    pub gradients: Vec<Vec<[f64; 2]>>,
}
