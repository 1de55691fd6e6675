//! Conforming Galerkin solver for the Dirichlet Poisson problem
//! `-Δu = f` on the unit square, `u = g` on the boundary, with mapped
//! biquadratic (Q2) or serendipity (S2) elements.
//!
//! Degrees of freedom sit at mesh vertices and edge midpoints (shared
//! between incident elements; this is what enforces C0 continuity, since
//! both bases restrict to quadratics along each edge), plus a private
//! center node per element for Q2.  Dirichlet data is imposed by nodal
//! interpolation at boundary nodes; the known columns move to the
//! right-hand side and the reduced symmetric positive definite system is
//! solved by Jacobi-preconditioned conjugate gradients.
//!
//! Assembly order is deterministic (elements ascending, local indices
//! ascending), so repeated runs are bit-identical.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::field::{Problem, ScalarField};
use crate::harness::{make_pool, ConvergenceTable};
use crate::linalg::{cg_solve, SparseSymCsr};
use crate::mesh::{self, MeshFamily, QuadMesh};
use crate::quadrature::gauss_rule;
use crate::refelem::{ElementKind, ReferenceElement};
use crate::{Error, Result};

/// Solver configuration.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Quadrature order for stiffness/load assembly (default 5).
    pub quad_order: Option<usize>,
    /// Quadrature order for error norms (default 6).
    pub norm_quad_order: Option<usize>,
    /// 0 = deterministic serial.
    pub threads: usize,
    /// Relative residual target for conjugate gradients.
    pub cg_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            quad_order: None,
            norm_quad_order: None,
            threads: 0,
            cg_tol: 1e-12,
        }
    }
}

impl SolveOptions {
    fn assembly_order(&self) -> usize {
        self.quad_order.unwrap_or(5)
    }

    fn norm_order(&self) -> usize {
        self.norm_quad_order.or(self.quad_order).unwrap_or(6)
    }
}

/// Global numbering of element-local nodes.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub kind: ElementKind,
    /// `element_dofs[e][local]` -> global dof.
    pub element_dofs: Vec<Vec<usize>>,
    /// Physical position of every dof (edge midpoints and element centers
    /// are images of the reference nodes, which for bilinear maps are the
    /// corresponding vertex averages).
    pub positions: Vec<[f64; 2]>,
    pub is_boundary: Vec<bool>,
    /// Position in the reduced (interior) system.
    pub interior_index: Vec<Option<usize>>,
    pub n_dofs: usize,
    pub n_interior: usize,
}

impl DofMap {
    /// Shared vertices and shared edge midpoints receive one global index
    /// across all incident elements; Q2 center nodes are element-private.
    pub fn build(mesh: &QuadMesh, kind: ElementKind) -> DofMap {
        let nv = mesh.vertices.len();
        let mut edge_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edge_order: Vec<(usize, usize)> = Vec::new();
        for q in &mesh.quads {
            for k in 0..4 {
                let (a, b) = (q[k], q[(k + 1) % 4]);
                let key = (a.min(b), a.max(b));
                edge_ids.entry(key).or_insert_with(|| {
                    edge_order.push(key);
                    edge_order.len() - 1
                });
            }
        }
        let ne = edge_order.len();
        let centers = if kind == ElementKind::Q2 {
            mesh.quads.len()
        } else {
            0
        };
        let n_dofs = nv + ne + centers;

        let mut positions = vec![[0.0, 0.0]; n_dofs];
        positions[..nv].copy_from_slice(&mesh.vertices);
        for (id, &(a, b)) in edge_order.iter().enumerate() {
            let p = mesh.vertices[a];
            let q = mesh.vertices[b];
            positions[nv + id] = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        }

        let mut element_dofs = Vec::with_capacity(mesh.quads.len());
        for (e, q) in mesh.quads.iter().enumerate() {
            let mut dofs = vec![q[0], q[1], q[2], q[3]];
            for k in 0..4 {
                let (a, b) = (q[k], q[(k + 1) % 4]);
                dofs.push(nv + edge_ids[&(a.min(b), a.max(b))]);
            }
            if kind == ElementKind::Q2 {
                let c = mesh.corners(e);
                positions[nv + ne + e] = [
                    0.25 * ((c[0][0] + c[1][0]) + (c[2][0] + c[3][0])),
                    0.25 * ((c[0][1] + c[1][1]) + (c[2][1] + c[3][1])),
                ];
                dofs.push(nv + ne + e);
            }
            element_dofs.push(dofs);
        }

        let mut is_boundary = vec![false; n_dofs];
        for ((a, b), users) in mesh.edges() {
            if users.len() == 1 {
                is_boundary[a] = true;
                is_boundary[b] = true;
                is_boundary[nv + edge_ids[&(a, b)]] = true;
            }
        }

        let mut interior_index = vec![None; n_dofs];
        let mut n_interior = 0;
        for (dof, slot) in interior_index.iter_mut().enumerate() {
            if !is_boundary[dof] {
                *slot = Some(n_interior);
                n_interior += 1;
            }
        }
        DofMap {
            kind,
            element_dofs,
            positions,
            is_boundary,
            interior_index,
            n_dofs,
            n_interior,
        }
    }
}

/// The reduced linear system plus the data needed to reconstruct the full
/// nodal vector.
pub struct SparseSystem {
    pub matrix: SparseSymCsr,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    /// Dirichlet value at boundary dofs, zero at interior dofs.
    pub boundary_values: Vec<f64>,
}

/// Assemble stiffness and load for `-Δu = f`, `u = g` on the boundary.
pub fn assemble(
    mesh: &QuadMesh,
    kind: ElementKind,
    f: &ScalarField,
    g: &ScalarField,
    opts: &SolveOptions,
) -> Result<SparseSystem> {
    let elem = ReferenceElement::nodal(kind);
    let rule = gauss_rule(opts.assembly_order())?;
    let tab = elem.tabulate(&rule);
    let dofs = DofMap::build(mesh, kind);
    let m = elem.dim;

    let element_system = |e: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let map = mesh.element_map(e);
        let mut a_local = vec![0.0; m * m];
        let mut b_local = vec![0.0; m];
        for (k, (p, w)) in rule.points().iter().zip(rule.weights()).enumerate() {
            let (j, det) = map.jacobian(*p);
            if det <= 0.0 {
                return Err(Error::DegenerateElement { element: e, det });
            }
            let grads = &tab.gradients[k];
            let vals = &tab.values[k];
            let phys: Vec<[f64; 2]> = grads
                .iter()
                .map(|g| {
                    [
                        (j[1][1] * g[0] - j[1][0] * g[1]) / det,
                        (-j[0][1] * g[0] + j[0][0] * g[1]) / det,
                    ]
                })
                .collect();
            let q = map.apply(*p);
            let fval = f.value(q[0], q[1]);
            for i in 0..m {
                b_local[i] += w * fval * vals[i] * det;
                for l in i..m {
                    let v = w * (phys[i][0] * phys[l][0] + phys[i][1] * phys[l][1]) * det;
                    a_local[i * m + l] += v;
                    if i != l {
                        a_local[l * m + i] += v;
                    }
                }
            }
        }
        Ok((a_local, b_local))
    };

    let locals: Vec<(Vec<f64>, Vec<f64>)> = match make_pool(opts.threads) {
        Some(pool) => pool.install(|| {
            (0..mesh.quads.len())
                .into_par_iter()
                .map(element_system)
                .collect::<Result<Vec<_>>>()
        })?,
        None => (0..mesh.quads.len())
            .map(element_system)
            .collect::<Result<Vec<_>>>()?,
    };

    let mut boundary_values = vec![0.0; dofs.n_dofs];
    for dof in 0..dofs.n_dofs {
        if dofs.is_boundary[dof] {
            let p = dofs.positions[dof];
            boundary_values[dof] = g.value(p[0], p[1]);
        }
    }

    // deterministic scatter: elements ascending, local indices ascending
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; dofs.n_interior];
    for (e, (a_local, b_local)) in locals.iter().enumerate() {
        let gdofs = &dofs.element_dofs[e];
        for i in 0..m {
            let gi = gdofs[i];
            let Some(ii) = dofs.interior_index[gi] else {
                continue;
            };
            rhs[ii] += b_local[i];
            for l in 0..m {
                let gl = gdofs[l];
                let v = a_local[i * m + l];
                match dofs.interior_index[gl] {
                    Some(ll) => triplets.push((ii, ll, v)),
                    None => rhs[ii] -= v * boundary_values[gl],
                }
            }
        }
    }
    let matrix = SparseSymCsr::from_triplets(dofs.n_interior, &triplets);
    Ok(SparseSystem {
        matrix,
        rhs,
        dofs,
        boundary_values,
    })
}

/// A solved system: full nodal coefficients and CG diagnostics.
pub struct Solution {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solve the reduced system by preconditioned conjugate gradients
/// (relative residual `cg_tol`, iteration cap `20 sqrt(unknowns) + 200`)
/// and reassemble the full nodal vector.
pub fn solve(system: &SparseSystem, opts: &SolveOptions) -> Result<Solution> {
    let n = system.dofs.n_interior;
    let cap = (20.0 * (n as f64).sqrt()) as usize + 200;
    let pool = make_pool(opts.threads);
    let sol = cg_solve(&system.matrix, &system.rhs, opts.cg_tol, cap, pool.as_ref())?;
    let mut coefficients = system.boundary_values.clone();
    for (dof, idx) in system.dofs.interior_index.iter().enumerate() {
        if let Some(ii) = *idx {
            coefficients[dof] = sol.x[ii];
        }
    }
    Ok(Solution {
        coefficients,
        iterations: sol.iterations,
        relative_residual: sol.relative_residual,
    })
}

/// Infinity norm of the reduced-system residual for a full nodal vector;
/// Galerkin orthogonality makes this vanish at the solution.
pub fn residual_inf(system: &SparseSystem, coefficients: &[f64]) -> f64 {
    let x: Vec<f64> = system
        .dofs
        .interior_index
        .iter()
        .enumerate()
        .filter_map(|(dof, idx)| idx.map(|_| coefficients[dof]))
        .collect();
    let mut ax = vec![0.0; x.len()];
    system.matrix.matvec(&x, &mut ax, None);
    ax.iter()
        .zip(&system.rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Nodal interpolant of a field (coefficients = field values at dof
/// positions).
pub fn interpolant(mesh: &QuadMesh, kind: ElementKind, u: &ScalarField) -> Vec<f64> {
    let dofs = DofMap::build(mesh, kind);
    dofs.positions.iter().map(|p| u.value(p[0], p[1])).collect()
}

/// Evaluate a nodal coefficient vector inside one element at a reference
/// point.
pub fn evaluate_at(
    mesh: &QuadMesh,
    kind: ElementKind,
    dofs: &DofMap,
    coefficients: &[f64],
    element: usize,
    p: [f64; 2],
) -> f64 {
    let _ = mesh;
    let elem = ReferenceElement::nodal(kind);
    let vals = elem.shape_values(p);
    dofs.element_dofs[element]
        .iter()
        .zip(vals)
        .map(|(&d, v)| coefficients[d] * v)
        .sum()
}

/// Discretization errors of a nodal coefficient vector against the exact
/// solution, with percentages relative to the exact norms computed by the
/// same quadrature on the same mesh.
#[derive(Clone, Copy, Debug)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1_semi: f64,
    pub l2_pct: f64,
    pub h1_pct: f64,
}

pub fn error_norms(
    mesh: &QuadMesh,
    kind: ElementKind,
    coefficients: &[f64],
    u_exact: &ScalarField,
    opts: &SolveOptions,
) -> Result<ErrorNorms> {
    let elem = ReferenceElement::nodal(kind);
    let rule = gauss_rule(opts.norm_order())?;
    let tab = elem.tabulate(&rule);
    let dofs = DofMap::build(mesh, kind);
    let m = elem.dim;

    let mut err_l2 = 0.0;
    let mut err_h1 = 0.0;
    let mut ref_l2 = 0.0;
    let mut ref_h1 = 0.0;
    for e in 0..mesh.quads.len() {
        let map = mesh.element_map(e);
        let local: Vec<f64> = dofs.element_dofs[e]
            .iter()
            .map(|&d| coefficients[d])
            .collect();
        for (k, (p, w)) in rule.points().iter().zip(rule.weights()).enumerate() {
            let (j, det) = map.jacobian(*p);
            if det <= 0.0 {
                return Err(Error::DegenerateElement { element: e, det });
            }
            let q = map.apply(*p);
            let vals = &tab.values[k];
            let grads = &tab.gradients[k];
            let uh: f64 = (0..m).map(|i| local[i] * vals[i]).sum();
            let mut gh = [0.0f64; 2];
            for i in 0..m {
                let g = grads[i];
                gh[0] += local[i] * (j[1][1] * g[0] - j[1][0] * g[1]) / det;
                gh[1] += local[i] * (-j[0][1] * g[0] + j[0][0] * g[1]) / det;
            }
            let uv = u_exact.value(q[0], q[1]);
            let gu = u_exact.gradient(q[0], q[1]);
            err_l2 += w * (uv - uh) * (uv - uh) * det;
            err_h1 += w * ((gu[0] - gh[0]).powi(2) + (gu[1] - gh[1]).powi(2)) * det;
            ref_l2 += w * uv * uv * det;
            ref_h1 += w * (gu[0] * gu[0] + gu[1] * gu[1]) * det;
        }
    }
    let (err_l2, err_h1) = (err_l2.sqrt(), err_h1.sqrt());
    let (ref_l2, ref_h1) = (ref_l2.sqrt(), ref_h1.sqrt());
    Ok(ErrorNorms {
        l2: err_l2,
        h1_semi: err_h1,
        l2_pct: 100.0 * err_l2 / ref_l2,
        h1_pct: 100.0 * err_h1 / ref_h1,
    })
}

/// Solve the problem over a mesh family and return the convergence table
/// (errors, percentages, and rates for both norms).
pub fn table_run(
    problem: &Problem,
    kind: ElementKind,
    family: MeshFamily,
    n_list: &[u32],
    opts: &SolveOptions,
) -> Result<ConvergenceTable> {
    if !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "mesh levels must be strictly increasing".into(),
        ));
    }
    let f = problem.source();
    let g = problem.boundary();
    let mut table = ConvergenceTable::new(vec!["l2".into(), "h1".into()]);
    table.set_meta("study", "solve");
    table.set_meta("element", &kind.to_string());
    table.set_meta("family", &family.to_string());
    table.set_meta("problem", &problem.name);
    table.set_meta("quad_order", &opts.assembly_order().to_string());
    table.set_meta("solver_tol", &format!("{:e}", opts.cg_tol));
    for &n in n_list {
        let mesh = mesh::generate(family, n)?;
        let system = assemble(&mesh, kind, &f, &g, opts)?;
        let solution = solve(&system, opts)?;
        let norms = error_norms(&mesh, kind, &solution.coefficients, &problem.u, opts)?;
        table.push_row(
            n,
            &[(norms.l2, norms.l2_pct), (norms.h1_semi, norms.h1_pct)],
        );
    }
    Ok(table)
}

/// Doubling levels `2, 4, ..., nmax`.
pub fn doubling_levels(nmax: u32) -> Result<Vec<u32>> {
    if nmax < 2 || !nmax.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "nmax must be a power of two >= 2, got {nmax}"
        )));
    }
    Ok((1..=nmax.trailing_zeros()).map(|k| 1 << k).collect())
}

/// Reference coordinates of the point at fraction `s` from vertex `a` to
/// vertex `b` along the matching edge of element `quad`, if `(a, b)` is one
/// of its edges.
pub fn edge_reference_point(quad: &[usize; 4], a: usize, b: usize, s: f64) -> Option<[f64; 2]> {
    for k in 0..4 {
        let (va, vb) = (quad[k], quad[(k + 1) % 4]);
        let t = if (va, vb) == (a, b) {
            s
        } else if (va, vb) == (b, a) {
            1.0 - s
        } else {
            continue;
        };
        return Some(match k {
            0 => [t, 0.0],
            1 => [1.0, t],
            2 => [1.0 - t, 1.0],
            _ => [0.0, 1.0 - t],
        });
    }
    None
}
