//! Broken (element-by-element) best approximation onto mapped spaces.
//!
//! On each element `K = F(K̂)` the error is minimized independently, with no
//! interelement continuity, over `{ v : v ∘ F ∈ V̂ }`:
//!
//! - in `L^2`, by solving the Gram system of the mapped basis;
//! - in the `H^1` seminorm, by the gradient Gram with the constant basis
//!   function removed (the seminorm kernel), so no rank-revealing tolerance
//!   is needed.
//!
//! All integrals are pulled back to the reference square, where mass
//! integrands are polynomials times the (affine) Jacobian determinant, so
//! the default rules integrate them exactly.  The study driver measures the
//! total broken error across a mesh family and the monomial sweep locates
//! polynomials whose approximation order degrades.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::field::ScalarField;
use crate::harness::{make_pool, ConvergenceTable};
use crate::linalg::DenseSymMatrix;
use crate::mesh::{self, BilinearMap, MeshFamily, QuadMesh};
use crate::polyspace::{space_monomials, Monomial, PolySpan, RationalPoly, SpaceKind};
use crate::quadrature::{gauss_rule, QuadratureRule};
use crate::refelem::{BasisTable, ReferenceElement};
use crate::{Error, Result};

/// Which error is minimized and measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1Semi,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormKind::L2 => write!(f, "l2"),
            NormKind::H1Semi => write!(f, "h1"),
        }
    }
}

impl FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(NormKind::L2),
            "h1" => Ok(NormKind::H1Semi),
            other => Err(Error::InvalidArgument(format!(
                "unknown norm '{other}' (l2 | h1)"
            ))),
        }
    }
}

/// Options shared by the projection drivers.
#[derive(Clone, Debug, Default)]
pub struct ProjOptions {
    /// Override for the Gram/error quadrature orders.
    pub quad_order: Option<usize>,
    /// 0 = deterministic serial reduction.
    pub threads: usize,
}

/// Precomputed reference-side data for projecting onto one span.
pub struct ProjectionKernel {
    elem: ReferenceElement,
    constant_index: Option<usize>,
    gram_rule: QuadratureRule,
    gram_tab: BasisTable,
    err_rule: QuadratureRule,
    err_tab: BasisTable,
}

impl ProjectionKernel {
    /// Gram systems use order `max(5, separate degree + 1)`: mass integrands
    /// are basis products times the affine Jacobian determinant, so this is
    /// exact.  Error norms use order `max(6, separate degree + 1)`.  An
    /// explicit `quad_order` overrides both.
    pub fn new(span: &PolySpan, opts: &ProjOptions) -> Result<Self> {
        let elem = ReferenceElement::from_span(span);
        let constant_index = span
            .evaluation_basis()
            .iter()
            .position(|p| p.total_degree() == Some(0));
        let deg = span.max_separate_degree() as usize;
        let (q_gram, q_err) = match opts.quad_order {
            Some(q) => (q, q),
            None => ((deg + 1).max(5), (deg + 1).max(6)),
        };
        let gram_rule = gauss_rule(q_gram)?;
        let err_rule = gauss_rule(q_err)?;
        let gram_tab = elem.tabulate(&gram_rule);
        let err_tab = elem.tabulate(&err_rule);
        Ok(ProjectionKernel {
            elem,
            constant_index,
            gram_rule,
            gram_tab,
            err_rule,
            err_tab,
        })
    }

    pub fn dim(&self) -> usize {
        self.elem.dim
    }

    /// Best-approximation coefficients and squared error on one element.
    pub fn project_element(
        &self,
        map: &BilinearMap,
        u: &ScalarField,
        norm: NormKind,
        element: usize,
    ) -> Result<(Vec<f64>, f64)> {
        let coeffs = match norm {
            NormKind::L2 => self.l2_coeffs(map, u, element)?,
            NormKind::H1Semi => self.h1_coeffs(map, u, element)?,
        };
        let err2 = self.error_sq_with_coeffs(map, u, norm, &coeffs, element)?;
        Ok((coeffs, err2))
    }

    fn l2_coeffs(&self, map: &BilinearMap, u: &ScalarField, element: usize) -> Result<Vec<f64>> {
        let m = self.dim();
        let mut gram = DenseSymMatrix::zeros(m);
        let mut rhs = vec![0.0; m];
        for (k, (p, w)) in self
            .gram_rule
            .points()
            .iter()
            .zip(self.gram_rule.weights())
            .enumerate()
        {
            let det = positive_det(map, *p, element)?;
            let vals = &self.gram_tab.values[k];
            let q = map.apply(*p);
            let uval = u.value(q[0], q[1]);
            for i in 0..m {
                rhs[i] += w * uval * vals[i] * det;
                for j in i..m {
                    gram.add(i, j, w * vals[i] * vals[j] * det);
                }
            }
        }
        gram.cholesky_solve(&rhs)
            .map_err(|_| Error::SingularGram { element })
    }

    fn h1_coeffs(&self, map: &BilinearMap, u: &ScalarField, element: usize) -> Result<Vec<f64>> {
        let Some(skip) = self.constant_index else {
            return Err(Error::InvalidArgument(
                "seminorm projection needs the constant stored as an explicit basis element"
                    .into(),
            ));
        };
        let m = self.dim();
        let keep: Vec<usize> = (0..m).filter(|&i| i != skip).collect();
        let r = keep.len();
        let mut gram = DenseSymMatrix::zeros(r);
        let mut rhs = vec![0.0; r];
        for (k, (p, w)) in self
            .gram_rule
            .points()
            .iter()
            .zip(self.gram_rule.weights())
            .enumerate()
        {
            let (j, det) = map.jacobian(*p);
            if det <= 0.0 {
                return Err(Error::DegenerateElement { element, det });
            }
            let grads = &self.gram_tab.gradients[k];
            let phys: Vec<[f64; 2]> = keep
                .iter()
                .map(|&i| physical_gradient(&j, det, grads[i]))
                .collect();
            let q = map.apply(*p);
            let gu = u.gradient(q[0], q[1]);
            for a in 0..r {
                rhs[a] += w * (gu[0] * phys[a][0] + gu[1] * phys[a][1]) * det;
                for b in a..r {
                    gram.add(
                        a,
                        b,
                        w * (phys[a][0] * phys[b][0] + phys[a][1] * phys[b][1]) * det,
                    );
                }
            }
        }
        let reduced = gram
            .cholesky_solve(&rhs)
            .map_err(|_| Error::BasisDefect { element })?;
        let mut coeffs = vec![0.0; m];
        for (a, &i) in keep.iter().enumerate() {
            coeffs[i] = reduced[a];
        }
        Ok(coeffs)
    }

    /// Squared error of an arbitrary coefficient vector on one element,
    /// by quadrature of the squared residual.
    pub fn error_sq_with_coeffs(
        &self,
        map: &BilinearMap,
        u: &ScalarField,
        norm: NormKind,
        coeffs: &[f64],
        element: usize,
    ) -> Result<f64> {
        let m = self.dim();
        debug_assert_eq!(coeffs.len(), m);
        let mut err2 = 0.0;
        for (k, (p, w)) in self
            .err_rule
            .points()
            .iter()
            .zip(self.err_rule.weights())
            .enumerate()
        {
            let (j, det) = map.jacobian(*p);
            if det <= 0.0 {
                return Err(Error::DegenerateElement { element, det });
            }
            let q = map.apply(*p);
            match norm {
                NormKind::L2 => {
                    let vals = &self.err_tab.values[k];
                    let vh: f64 = (0..m).map(|i| coeffs[i] * vals[i]).sum();
                    let res = u.value(q[0], q[1]) - vh;
                    err2 += w * res * res * det;
                }
                NormKind::H1Semi => {
                    let grads = &self.err_tab.gradients[k];
                    let mut gh = [0.0; 2];
                    for i in 0..m {
                        let g = physical_gradient(&j, det, grads[i]);
                        gh[0] += coeffs[i] * g[0];
                        gh[1] += coeffs[i] * g[1];
                    }
                    let gu = u.gradient(q[0], q[1]);
                    let rx = gu[0] - gh[0];
                    let ry = gu[1] - gh[1];
                    err2 += w * (rx * rx + ry * ry) * det;
                }
            }
        }
        Ok(err2)
    }

    /// Squared reference norm of the field over one element (for percent
    /// columns), with the same quadrature as the error.
    fn reference_sq(&self, map: &BilinearMap, u: &ScalarField, norm: NormKind) -> f64 {
        self.err_rule
            .points()
            .iter()
            .zip(self.err_rule.weights())
            .map(|(p, w)| {
                let det = map.det_at(*p);
                let q = map.apply(*p);
                match norm {
                    NormKind::L2 => {
                        let v = u.value(q[0], q[1]);
                        w * v * v * det
                    }
                    NormKind::H1Semi => {
                        let g = u.gradient(q[0], q[1]);
                        w * (g[0] * g[0] + g[1] * g[1]) * det
                    }
                }
            })
            .sum()
    }
}

fn positive_det(map: &BilinearMap, p: [f64; 2], element: usize) -> Result<f64> {
    let det = map.det_at(p);
    if det <= 0.0 {
        return Err(Error::DegenerateElement { element, det });
    }
    Ok(det)
}

/// Physical gradient `J^{-T} ĝ` from the Jacobian and reference gradient.
fn physical_gradient(j: &[[f64; 2]; 2], det: f64, g: [f64; 2]) -> [f64; 2] {
    [
        (j[1][1] * g[0] - j[1][0] * g[1]) / det,
        (-j[0][1] * g[0] + j[0][0] * g[1]) / det,
    ]
}

/// Broken `L^2` best-approximation error of `u` over the whole mesh.
pub fn project_l2(
    span: &PolySpan,
    mesh: &QuadMesh,
    u: &ScalarField,
    opts: &ProjOptions,
) -> Result<f64> {
    broken_error(span, mesh, u, NormKind::L2, opts)
}

/// Broken `H^1`-seminorm best-approximation error of `u` over the mesh.
pub fn project_h1(
    span: &PolySpan,
    mesh: &QuadMesh,
    u: &ScalarField,
    opts: &ProjOptions,
) -> Result<f64> {
    broken_error(span, mesh, u, NormKind::H1Semi, opts)
}

/// Total broken error: the square root of the sum of per-element squared
/// errors.  Elements are independent; the reduction is a fixed-order serial
/// sum in deterministic mode (threads = 0) and a parallel sum otherwise.
pub fn broken_error(
    span: &PolySpan,
    mesh: &QuadMesh,
    u: &ScalarField,
    norm: NormKind,
    opts: &ProjOptions,
) -> Result<f64> {
    let kernel = ProjectionKernel::new(span, opts)?;
    let per_element = |e: usize| -> Result<f64> {
        let map = mesh.element_map(e);
        kernel.project_element(&map, u, norm, e).map(|(_, e2)| e2)
    };
    let total: f64 = match make_pool(opts.threads) {
        Some(pool) => pool.install(|| {
            (0..mesh.quads.len())
                .into_par_iter()
                .map(per_element)
                .try_reduce(|| 0.0, |a, b| Ok(a + b))
        })?,
        None => {
            let mut acc = 0.0;
            for e in 0..mesh.quads.len() {
                acc += per_element(e)?;
            }
            acc
        }
    };
    Ok(total.sqrt())
}

fn reference_norm(
    kernel: &ProjectionKernel,
    mesh: &QuadMesh,
    u: &ScalarField,
    norm: NormKind,
) -> f64 {
    (0..mesh.quads.len())
        .map(|e| kernel.reference_sq(&mesh.element_map(e), u, norm))
        .sum::<f64>()
        .sqrt()
}

/// Errors and rates of the broken projection over a mesh family.
///
/// `n_list` must be strictly increasing; rates are `log2` of consecutive
/// error ratios.
pub fn projection_study(
    label: &str,
    span: &PolySpan,
    family: MeshFamily,
    n_list: &[u32],
    u: &ScalarField,
    norm: NormKind,
    opts: &ProjOptions,
) -> Result<ConvergenceTable> {
    if !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "mesh levels must be strictly increasing".into(),
        ));
    }
    let kernel = ProjectionKernel::new(span, opts)?;
    let mut table = ConvergenceTable::new(vec![norm.to_string()]);
    table.set_meta("study", "project");
    table.set_meta("space", label);
    table.set_meta("family", &family.to_string());
    table.set_meta("norm", &norm.to_string());
    table.set_meta("u", &u.to_string());
    table.set_meta("quad_order", &kernel.err_rule.order.to_string());
    for &n in n_list {
        let mesh = mesh::generate(family, n)?;
        let err = broken_error(span, &mesh, u, norm, opts)?;
        let reference = reference_norm(&kernel, &mesh, u, norm);
        let pct = if reference > 0.0 {
            100.0 * err / reference
        } else {
            0.0
        };
        table.push_row(n, &[(err, pct)]);
    }
    Ok(table)
}

/// One monomial of the sweep: its per-level errors and final observed rate.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub monomial: Monomial,
    pub errors: Vec<f64>,
    /// `log2(err(n/2) / err(n))` at the finest pair, `None` when the errors
    /// are at rounding level (the monomial is reproduced exactly).
    pub final_rate: Option<f64>,
}

/// Project every monomial of `P_r` over the family and report each one's
/// error history.  The worst-case row exhibits the approximation order the
/// space actually delivers for degree-r data.
pub fn monomial_sweep(
    span: &PolySpan,
    family: MeshFamily,
    n_list: &[u32],
    r: u32,
    norm: NormKind,
    opts: &ProjOptions,
) -> Result<Vec<SweepRow>> {
    let exact_threshold = 1e-12;
    let mut rows = Vec::new();
    for m in space_monomials(SpaceKind::P, r) {
        let u = ScalarField::Monomial(m.i, m.j);
        let mut errors = Vec::with_capacity(n_list.len());
        for &n in n_list {
            let mesh = mesh::generate(family, n)?;
            errors.push(broken_error(span, &mesh, &u, norm, opts)?);
        }
        let k = errors.len();
        let final_rate = if k >= 2 && errors[k - 1] > exact_threshold {
            Some((errors[k - 2] / errors[k - 1]).log2())
        } else {
            None
        };
        rows.push(SweepRow {
            monomial: m,
            errors,
            final_rate,
        });
    }
    Ok(rows)
}

/// The sweep row with the smallest final rate (the degraded direction),
/// ignoring exactly-reproduced monomials.
pub fn worst_sweep_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter()
        .filter(|r| r.final_rate.is_some())
        .min_by(|a, b| {
            a.final_rate
                .unwrap()
                .partial_cmp(&b.final_rate.unwrap())
                .expect("rates are finite")
        })
}

/// Single-element projection: best-approximation coefficients and the
/// squared error.  Used heavily by tests.
pub fn project_on_element(
    span: &PolySpan,
    map: &BilinearMap,
    u: &ScalarField,
    norm: NormKind,
    opts: &ProjOptions,
) -> Result<(Vec<f64>, f64)> {
    let kernel = ProjectionKernel::new(span, opts)?;
    kernel.project_element(map, u, norm, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyspace::make_space;

    fn unit_square_map() -> BilinearMap {
        BilinearMap::from_corners([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    }

    #[test]
    fn constants_reproduced() {
        let one = ScalarField::custom("one", |_, _| 1.0, |_, _| [0.0, 0.0], |_, _| 0.0);
        let opts = ProjOptions::default();
        for kind in [SpaceKind::P, SpaceKind::Q, SpaceKind::S] {
            let span = make_space(kind, 2);
            let mesh = mesh::generate(MeshFamily::Trapezoid, 4).unwrap();
            let err = project_l2(&span, &mesh, &one, &opts).unwrap();
            assert!(err < 1e-12, "{kind:?}: {err}");
        }
    }

    #[test]
    fn p1_error_on_unit_square_is_frozen_constant() {
        // best L2 approximation of x^2 by affine functions; the residual is
        // the scaled shifted Legendre polynomial (6x^2 - 6x + 1)/6
        let span = make_space(SpaceKind::P, 1);
        let u = ScalarField::Monomial(2, 0);
        let (_, err2) = ProjectionKernel::new(&span, &ProjOptions::default())
            .unwrap()
            .project_element(&unit_square_map(), &u, NormKind::L2, 0)
            .unwrap();
        let expect = 1.0 / 180.0f64;
        assert!((err2 - expect).abs() < 1e-15, "err2 = {err2}");
    }

    #[test]
    fn l2_scaling_on_square_meshes() {
        let span = make_space(SpaceKind::P, 1);
        let u = ScalarField::Monomial(2, 0);
        let opts = ProjOptions::default();
        let expect = 1.0 / 180.0f64.sqrt();
        for n in [2u32, 4, 8] {
            let mesh = mesh::generate(MeshFamily::Square, n).unwrap();
            let err = project_l2(&span, &mesh, &u, &opts).unwrap();
            let scaled = err * (n * n) as f64;
            assert!(
                (scaled - expect).abs() < 1e-12 * expect,
                "n={n}: {scaled} vs {expect}"
            );
        }
    }

    #[test]
    fn h1_affine_fields_reproduced() {
        let span = make_space(SpaceKind::P, 1);
        let u = ScalarField::custom(
            "affine",
            |x, y| 2.0 * x - 3.0 * y + 1.0,
            |_, _| [2.0, -3.0],
            |_, _| 0.0,
        );
        let mesh = mesh::generate(MeshFamily::Trapezoid, 4).unwrap();
        let err = project_h1(&span, &mesh, &u, &ProjOptions::default()).unwrap();
        assert!(err < 1e-11);
    }

    #[test]
    fn h1_scaling_on_square_meshes() {
        // d/dx of the best gradient fit of x^2 leaves 2x - 1; its norm is
        // 1/sqrt(3), scaling like 1/n on n x n squares
        let span = make_space(SpaceKind::P, 1);
        let u = ScalarField::Monomial(2, 0);
        let opts = ProjOptions::default();
        let expect = 1.0 / 3.0f64.sqrt();
        for n in [2u32, 4, 8] {
            let mesh = mesh::generate(MeshFamily::Square, n).unwrap();
            let err = project_h1(&span, &mesh, &u, &opts).unwrap();
            assert!(((err * n as f64) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_gram_reports_element() {
        // exactly independent over the rationals, numerically coincident
        let eps = crate::polyspace::ratio(1, i64::MAX);
        let nearly = &RationalPoly::monomial(1, 0)
            + &RationalPoly::monomial(1, 0).scale(&eps);
        let span = PolySpan::new(vec![RationalPoly::monomial(1, 0), nearly]).unwrap();
        let mesh = mesh::generate(MeshFamily::Square, 1).unwrap();
        let u = ScalarField::Monomial(1, 0);
        match project_l2(&span, &mesh, &u, &ProjOptions::default()) {
            Err(Error::SingularGram { element }) => assert_eq!(element, 0),
            other => panic!("expected singular Gram, got {other:?}"),
        }
    }

    #[test]
    fn parallel_reduction_matches_serial() {
        let span = make_space(SpaceKind::S, 2);
        let mesh = mesh::generate(MeshFamily::Trapezoid, 8).unwrap();
        let u = ScalarField::Quartic;
        let serial = project_l2(&span, &mesh, &u, &ProjOptions::default()).unwrap();
        let parallel = project_l2(
            &span,
            &mesh,
            &u,
            &ProjOptions {
                quad_order: None,
                threads: 4,
            },
        )
        .unwrap();
        assert!((serial - parallel).abs() < 1e-13 * serial);
    }
}
