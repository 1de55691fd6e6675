//! Quadrilateral meshes of the unit square.
//!
//! Three structured families are generated:
//!
//! - `square`: the uniform n x n mesh of congruent subsquares;
//! - `trapezoid`: n x n congruent trapezoids, all similar to the one with
//!   vertices (0,0), (1/2,0), (1/2,2/3), (0,1/3), laid out as translated
//!   dilates of a four-trapezoid macro cell on an (n/2) x (n/2) grid;
//! - `asympar`: the n = 2 macro cell refined by repeatedly dividing each
//!   quadrilateral in four through the midpoints of opposite edges, which
//!   drives the element distortion sigma_K to O(h_K).
//!
//! Element corners are stored counterclockwise starting from the lowest-left
//! corner.  Every generated element is strictly convex.
//!
//! The text format is bit-exact: coordinates are printed with 17 significant
//! digits so a write/read round trip reproduces the same f64 values.
//!
//! ```text
//! quadmesh 1
//! vertices V
//! <x> <y>          (V lines)
//! quads Q
//! <i0> <i1> <i2> <i3>   (Q lines, counterclockwise)
//! boundary B
//! <vertex index>   (B lines)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

/// The generated mesh families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFamily {
    Square,
    Trapezoid,
    Asympar,
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshFamily::Square => write!(f, "square"),
            MeshFamily::Trapezoid => write!(f, "trapezoid"),
            MeshFamily::Asympar => write!(f, "asympar"),
        }
    }
}

impl FromStr for MeshFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(MeshFamily::Square),
            "trapezoid" => Ok(MeshFamily::Trapezoid),
            "asympar" => Ok(MeshFamily::Asympar),
            other => Err(Error::InvalidArgument(format!(
                "unknown mesh family '{other}' (square | trapezoid | asympar)"
            ))),
        }
    }
}

/// A conforming mesh of convex quadrilaterals.
#[derive(Clone, Debug)]
pub struct QuadMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Vertex indices, counterclockwise, lowest-left corner first.
    pub quads: Vec<[usize; 4]>,
    /// Vertices on the domain boundary.
    pub boundary_vertices: BTreeSet<usize>,
    /// The n of the mesh sequence this mesh belongs to.
    pub level: u32,
}

/// A bilinear map `F(x, y) = a + b x + c y + d x y` from the reference
/// square onto a quadrilateral, componentwise.
#[derive(Clone, Copy, Debug)]
pub struct BilinearMap {
    /// Images of the reference corners (0,0), (1,0), (1,1), (0,1).
    pub corners: [[f64; 2]; 4],
    a: [f64; 2],
    b: [f64; 2],
    c: [f64; 2],
    d: [f64; 2],
}

impl BilinearMap {
    pub fn from_corners(corners: [[f64; 2]; 4]) -> Self {
        let [p0, p1, p2, p3] = corners;
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        let mut c = [0.0; 2];
        let mut d = [0.0; 2];
        for k in 0..2 {
            a[k] = p0[k];
            b[k] = p1[k] - p0[k];
            c[k] = p3[k] - p0[k];
            d[k] = (p0[k] - p1[k]) + (p2[k] - p3[k]);
        }
        BilinearMap { corners, a, b, c, d }
    }

    /// Coefficients `(a, b, c, d)` of component `k`.
    pub fn coefficients(&self, k: usize) -> (f64, f64, f64, f64) {
        (self.a[k], self.b[k], self.c[k], self.d[k])
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        [
            self.a[0] + self.b[0] * x + self.c[0] * y + self.d[0] * x * y,
            self.a[1] + self.b[1] * x + self.c[1] * y + self.d[1] * x * y,
        ]
    }

    /// Jacobian matrix and determinant at a reference point.
    /// Rows are gradients of the physical coordinates.
    pub fn jacobian(&self, p: [f64; 2]) -> ([[f64; 2]; 2], f64) {
        let [x, y] = p;
        let j = [
            [self.b[0] + self.d[0] * y, self.c[0] + self.d[0] * x],
            [self.b[1] + self.d[1] * y, self.c[1] + self.d[1] * x],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        (j, det)
    }

    pub fn det_at(&self, p: [f64; 2]) -> f64 {
        self.jacobian(p).1
    }

    /// True when the bilinear term vanishes, i.e. the image is a
    /// parallelogram and the map is affine.
    pub fn is_affine(&self) -> bool {
        self.d == [0.0, 0.0]
    }
}

/// Deviation of a quadrilateral from a parallelogram: the larger deviation
/// from pi of the angles between outward normals of the two pairs of
/// opposite sides.  Zero exactly for parallelograms; less than pi always.
pub fn sigma_of_corners(c: &[[f64; 2]; 4]) -> f64 {
    let normal = |p: [f64; 2], q: [f64; 2]| -> [f64; 2] {
        let d = [q[0] - p[0], q[1] - p[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        // outward for counterclockwise orientation
        [d[1] / len, -d[0] / len]
    };
    let n = [
        normal(c[0], c[1]),
        normal(c[1], c[2]),
        normal(c[2], c[3]),
        normal(c[3], c[0]),
    ];
    let angle = |u: [f64; 2], v: [f64; 2]| -> f64 {
        let dot = (u[0] * v[0] + u[1] * v[1]).clamp(-1.0, 1.0);
        dot.acos()
    };
    let dev1 = (std::f64::consts::PI - angle(n[0], n[2])).abs();
    let dev2 = (std::f64::consts::PI - angle(n[1], n[3])).abs();
    dev1.max(dev2)
}

impl QuadMesh {
    /// Corner coordinates of element `e` in stored order.
    pub fn corners(&self, e: usize) -> [[f64; 2]; 4] {
        self.quads[e].map(|v| self.vertices[v])
    }

    /// Bilinear map sending the reference corners to the element corners in
    /// stored counterclockwise order starting from the stored first vertex.
    pub fn element_map(&self, e: usize) -> BilinearMap {
        BilinearMap::from_corners(self.corners(e))
    }

    /// Distortion measure of element `e`.
    pub fn sigma(&self, e: usize) -> f64 {
        sigma_of_corners(&self.corners(e))
    }

    /// Element diameter: the largest distance between two corners.
    pub fn diameter(&self, e: usize) -> f64 {
        let c = self.corners(e);
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                d = d.max(((c[i][0] - c[j][0]).powi(2) + (c[i][1] - c[j][1]).powi(2)).sqrt());
            }
        }
        d
    }

    /// Longest edge over shortest edge.
    pub fn aspect_ratio(&self, e: usize) -> f64 {
        let c = self.corners(e);
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..4 {
            let j = (i + 1) % 4;
            let l = ((c[i][0] - c[j][0]).powi(2) + (c[i][1] - c[j][1]).powi(2)).sqrt();
            lo = lo.min(l);
            hi = hi.max(l);
        }
        hi / lo
    }

    /// Undirected edges with the elements that use them, keyed by sorted
    /// vertex pair, in deterministic order.
    pub fn edges(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (e, q) in self.quads.iter().enumerate() {
            for k in 0..4 {
                let a = q[k];
                let b = q[(k + 1) % 4];
                map.entry((a.min(b), a.max(b))).or_default().push(e);
            }
        }
        map
    }

    /// Structural checks: index bounds, strict convexity and orientation of
    /// every element, conformity (each edge used once or twice), and
    /// consistency of the stored boundary set with the edge-use counts.
    pub fn validate(&self) -> Result<()> {
        for (e, q) in self.quads.iter().enumerate() {
            for &v in q {
                if v >= self.vertices.len() {
                    return Err(Error::MeshFormat(format!(
                        "element {e} references vertex {v} out of range"
                    )));
                }
            }
            let c = self.corners(e);
            for k in 0..4 {
                let p = c[k];
                let q1 = c[(k + 1) % 4];
                let q2 = c[(k + 2) % 4];
                let cross = (q1[0] - p[0]) * (q2[1] - q1[1]) - (q1[1] - p[1]) * (q2[0] - q1[0]);
                if cross <= 0.0 {
                    return Err(Error::MeshFormat(format!(
                        "element {e} is not strictly convex and counterclockwise"
                    )));
                }
            }
        }
        let mut boundary = BTreeSet::new();
        for ((a, b), users) in self.edges() {
            match users.len() {
                1 => {
                    boundary.insert(a);
                    boundary.insert(b);
                }
                2 => {}
                k => {
                    return Err(Error::MeshFormat(format!(
                        "edge ({a}, {b}) used by {k} elements"
                    )))
                }
            }
        }
        if boundary != self.boundary_vertices {
            return Err(Error::MeshFormat(
                "stored boundary vertex set disagrees with edge-use counts".into(),
            ));
        }
        Ok(())
    }

    /// Serialize in the bit-exact text format.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "quadmesh 1")?;
        writeln!(w, "vertices {}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "{:.16e} {:.16e}", v[0], v[1])?;
        }
        writeln!(w, "quads {}", self.quads.len())?;
        for q in &self.quads {
            writeln!(w, "{} {} {} {}", q[0], q[1], q[2], q[3])?;
        }
        writeln!(w, "boundary {}", self.boundary_vertices.len())?;
        for v in &self.boundary_vertices {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("write to vec cannot fail");
        String::from_utf8(buf).expect("mesh text is ascii")
    }

    pub fn write_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    /// Parse the text format and validate the result.  The mesh level is not
    /// part of the format; it is recovered as round(sqrt(#quads)).
    pub fn read_from<R: BufRead>(r: &mut R) -> Result<QuadMesh> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::MeshFormat(format!("unexpected end of file, expected {what}")))?
                .map_err(Error::Io)
        };
        let header = next("header")?;
        if header.trim() != "quadmesh 1" {
            return Err(Error::MeshFormat(format!("bad header '{header}'")));
        }
        let nv = parse_count(&next("vertex count")?, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = next("vertex")?;
            let mut it = line.split_whitespace();
            let x = parse_f64(it.next(), "vertex x")?;
            let y = parse_f64(it.next(), "vertex y")?;
            vertices.push([x, y]);
        }
        let nq = parse_count(&next("quad count")?, "quads")?;
        let mut quads = Vec::with_capacity(nq);
        for _ in 0..nq {
            let line = next("quad")?;
            let mut it = line.split_whitespace();
            let mut q = [0usize; 4];
            for slot in &mut q {
                *slot = parse_usize(it.next(), "quad index")?;
            }
            quads.push(q);
        }
        let nb = parse_count(&next("boundary count")?, "boundary")?;
        let mut boundary_vertices = BTreeSet::new();
        for _ in 0..nb {
            boundary_vertices.insert(parse_usize(Some(next("boundary index")?.trim()), "boundary index")?);
        }
        let level = (nq as f64).sqrt().round() as u32;
        let mesh = QuadMesh {
            vertices,
            quads,
            boundary_vertices,
            level,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn read_file<P: AsRef<Path>>(path: P) -> Result<QuadMesh> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

fn parse_count(line: &str, keyword: &str) -> Result<usize> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next()) {
        (Some(k), Some(v)) if k == keyword => v
            .parse()
            .map_err(|_| Error::MeshFormat(format!("bad count in '{line}'"))),
        _ => Err(Error::MeshFormat(format!(
            "expected '{keyword} <count>', got '{line}'"
        ))),
    }
}

fn parse_f64(tok: Option<&str>, what: &str) -> Result<f64> {
    tok.ok_or_else(|| Error::MeshFormat(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::MeshFormat(format!("bad {what}")))
}

fn parse_usize(tok: Option<&str>, what: &str) -> Result<usize> {
    tok.ok_or_else(|| Error::MeshFormat(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::MeshFormat(format!("bad {what}")))
}

/// Generate a mesh of the unit square.
///
/// `square` accepts any n >= 1; `trapezoid` needs even n >= 2 (the macro
/// pattern covers a 2 x 2 block); `asympar` needs n a power of two >= 2
/// (each refinement doubles n).
pub fn generate(family: MeshFamily, n: u32) -> Result<QuadMesh> {
    match family {
        MeshFamily::Square => {
            if n < 1 {
                return Err(Error::InvalidArgument("square mesh needs n >= 1".into()));
            }
            Ok(generate_square(n))
        }
        MeshFamily::Trapezoid => {
            if n < 2 || n % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "trapezoid mesh needs even n >= 2, got {n}"
                )));
            }
            Ok(generate_trapezoid(n))
        }
        MeshFamily::Asympar => {
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::InvalidArgument(format!(
                    "asympar mesh needs n a power of two >= 2, got {n}"
                )));
            }
            let mut mesh = generate_trapezoid(2);
            for _ in 0..n.trailing_zeros() - 1 {
                mesh = midpoint_refine(&mesh);
            }
            Ok(mesh)
        }
    }
}

fn generate_square(n: u32) -> QuadMesh {
    let n = n as usize;
    let nf = n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / nf, j as f64 / nf]);
        }
    }
    let mut quads = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            quads.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    finish_mesh(vertices, quads, n as u32)
}

/// Trapezoid mesh on an integer lattice: x = i/n for i in 0..=n,
/// y = 2j/(3n) for j in 0..=3n/2, so shared vertices dedup exactly.
fn generate_trapezoid(n: u32) -> QuadMesh {
    let n = n as usize;
    let macros = n / 2;
    let mut key_to_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut quads = Vec::with_capacity(n * n);
    let nf = n as f64;
    for my in 0..macros {
        for mx in 0..macros {
            let (i0, j0) = (2 * mx, 3 * my);
            let mut vid = |di: usize, dj: usize| -> usize {
                let key = (i0 + di, j0 + dj);
                *key_to_index.entry(key).or_insert_with(|| {
                    vertices.push([key.0 as f64 / nf, 2.0 * key.1 as f64 / (3.0 * nf)]);
                    vertices.len() - 1
                })
            };
            // four congruent trapezoids per macro cell; the zigzag interior
            // line runs (0, s/3) - (s/2, 2s/3) - (s, s/3)
            let bl = [vid(0, 0), vid(1, 0), vid(1, 2), vid(0, 1)];
            let br = [vid(1, 0), vid(2, 0), vid(2, 1), vid(1, 2)];
            let tl = [vid(0, 1), vid(1, 2), vid(1, 3), vid(0, 3)];
            let tr = [vid(2, 1), vid(2, 3), vid(1, 3), vid(1, 2)];
            quads.extend([bl, br, tl, tr]);
        }
    }
    finish_mesh(vertices, quads, n as u32)
}

/// Divide each quadrilateral in four by connecting the midpoints of
/// opposite edges.  The cut segments are the images of the reference
/// midlines, so they intersect at the corner average.
pub fn midpoint_refine(mesh: &QuadMesh) -> QuadMesh {
    let mut vertices = mesh.vertices.clone();
    let mut edge_midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        let key = (a.min(b), a.max(b));
        *edge_midpoint.entry(key).or_insert_with(|| {
            let p = vertices[key.0];
            let q = vertices[key.1];
            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            vertices.len() - 1
        })
    };
    let mut quads = Vec::with_capacity(4 * mesh.quads.len());
    for q in &mesh.quads {
        let [v0, v1, v2, v3] = *q;
        let m01 = midpoint(v0, v1, &mut vertices);
        let m12 = midpoint(v1, v2, &mut vertices);
        let m23 = midpoint(v2, v3, &mut vertices);
        let m30 = midpoint(v3, v0, &mut vertices);
        let c = {
            let p: Vec<[f64; 2]> = q.iter().map(|&v| mesh.vertices[v]).collect();
            vertices.push([
                0.25 * ((p[0][0] + p[1][0]) + (p[2][0] + p[3][0])),
                0.25 * ((p[0][1] + p[1][1]) + (p[2][1] + p[3][1])),
            ]);
            vertices.len() - 1
        };
        for child in [
            [v0, m01, c, m30],
            [m01, v1, m12, c],
            [c, m12, v2, m23],
            [m30, c, m23, v3],
        ] {
            quads.push(normalize_quad(&vertices, child));
        }
    }
    finish_mesh(vertices, quads, mesh.level * 2)
}

/// Rotate the corner cycle so the lowest-left corner (smallest y, then
/// smallest x) comes first; counterclockwise order is preserved.
fn normalize_quad(vertices: &[[f64; 2]], q: [usize; 4]) -> [usize; 4] {
    let key = |v: usize| (vertices[v][1], vertices[v][0]);
    let mut start = 0;
    for k in 1..4 {
        if key(q[k]) < key(q[start]) {
            start = k;
        }
    }
    [
        q[start],
        q[(start + 1) % 4],
        q[(start + 2) % 4],
        q[(start + 3) % 4],
    ]
}

fn finish_mesh(vertices: Vec<[f64; 2]>, quads: Vec<[usize; 4]>, level: u32) -> QuadMesh {
    let mut mesh = QuadMesh {
        vertices,
        quads,
        boundary_vertices: BTreeSet::new(),
        level,
    };
    let mut boundary = BTreeSet::new();
    for ((a, b), users) in mesh.edges() {
        if users.len() == 1 {
            boundary.insert(a);
            boundary.insert(b);
        }
    }
    mesh.boundary_vertices = boundary;
    debug_assert!(mesh.validate().is_ok());
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_rule;

    fn total_mapped_area(mesh: &QuadMesh) -> f64 {
        let rule = gauss_rule(2).unwrap();
        (0..mesh.quads.len())
            .map(|e| {
                let f = mesh.element_map(e);
                rule.points()
                    .iter()
                    .zip(rule.weights())
                    .map(|(p, w)| w * f.det_at(*p))
                    .sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn square_two_by_two() {
        let mesh = generate(MeshFamily::Square, 2).unwrap();
        assert_eq!(mesh.vertices.len(), 9);
        assert_eq!(mesh.quads.len(), 4);
        for e in 0..4 {
            assert!(mesh.sigma(e).abs() < 1e-15);
        }
        assert_eq!(mesh.boundary_vertices.len(), 8);
    }

    #[test]
    fn trapezoid_macro_vertices() {
        let mesh = generate(MeshFamily::Trapezoid, 2).unwrap();
        assert_eq!(mesh.quads.len(), 4);
        for expect in [[0.0, 1.0 / 3.0], [0.5, 2.0 / 3.0], [1.0, 1.0 / 3.0]] {
            assert!(
                mesh.vertices
                    .iter()
                    .any(|v| (v[0] - expect[0]).abs() < 1e-15
                        && (v[1] - expect[1]).abs() < 1e-15),
                "missing vertex {expect:?}"
            );
        }
    }

    #[test]
    fn trapezoid_sigma_is_constant_over_elements_and_levels() {
        let expected = (2.0f64 / 3.0).atan();
        for n in [2u32, 4, 8] {
            let mesh = generate(MeshFamily::Trapezoid, n).unwrap();
            assert_eq!(mesh.quads.len(), (n * n) as usize);
            let aspect0 = mesh.aspect_ratio(0);
            for e in 0..mesh.quads.len() {
                assert!((mesh.sigma(e) - expected).abs() < 1e-12);
                assert!((mesh.aspect_ratio(e) - aspect0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn odd_or_bad_levels_rejected() {
        assert!(generate(MeshFamily::Trapezoid, 3).is_err());
        assert!(generate(MeshFamily::Asympar, 6).is_err());
        assert!(generate(MeshFamily::Square, 0).is_err());
    }

    #[test]
    fn element_map_examples() {
        let mesh = generate(MeshFamily::Square, 1).unwrap();
        let f = mesh.element_map(0);
        assert!(f.is_affine());
        for p in [[0.0, 0.0], [0.3, 0.8], [1.0, 1.0]] {
            let q = f.apply(p);
            assert!((q[0] - p[0]).abs() < 1e-15 && (q[1] - p[1]).abs() < 1e-15);
        }
        let (j, det) = f.jacobian([0.4, 0.7]);
        assert_eq!(j, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(det, 1.0);
    }

    #[test]
    fn shear_element_and_jacobian() {
        // the trapezoid with corners (0,0), (1,0), (1,2), (0,1): second
        // component y (x + 1), determinant x + 1
        let f = BilinearMap::from_corners([[0.0, 0.0], [1.0, 0.0], [1.0, 2.0], [0.0, 1.0]]);
        let (a, b, c, d) = f.coefficients(1);
        assert_eq!((a, b, c, d), (0.0, 0.0, 1.0, 1.0));
        for p in [[0.0, 0.0], [0.5, 0.25], [1.0, 1.0]] {
            assert!((f.det_at(p) - (p[0] + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn scaled_translation_has_det_h_squared() {
        let h = 0.125;
        let f = BilinearMap::from_corners([
            [0.5, 0.25],
            [0.5 + h, 0.25],
            [0.5 + h, 0.25 + h],
            [0.5, 0.25 + h],
        ]);
        assert!(f.is_affine());
        assert!((f.det_at([0.3, 0.9]) - h * h).abs() < 1e-18);
    }

    #[test]
    fn sigma_examples() {
        // parallelogram
        let para = [[0.0, 0.0], [2.0, 0.5], [2.5, 1.8], [0.5, 1.3]];
        assert!(sigma_of_corners(&para) < 1e-15);
        // the reference shear trapezoid
        let shear = [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0], [0.0, 1.0]];
        assert!((sigma_of_corners(&shear) - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
        // the mesh-family trapezoid
        let trap = [[0.0, 0.0], [0.5, 0.0], [0.5, 2.0 / 3.0], [0.0, 1.0 / 3.0]];
        assert!((sigma_of_corners(&trap) - (2.0f64 / 3.0).atan()).abs() < 1e-14);
    }

    #[test]
    fn asympar_counts_and_distortion_decay() {
        let m4 = generate(MeshFamily::Asympar, 4).unwrap();
        let m8 = generate(MeshFamily::Asympar, 8).unwrap();
        assert_eq!(m8.quads.len(), 64);
        let max_sigma = |m: &QuadMesh| {
            (0..m.quads.len())
                .map(|e| m.sigma(e))
                .fold(0.0f64, f64::max)
        };
        assert!(max_sigma(&m8) < max_sigma(&m4));
    }

    #[test]
    fn asympar_sigma_over_h_bounded_by_first_level() {
        let ratio = |m: &QuadMesh| {
            (0..m.quads.len())
                .map(|e| m.sigma(e) / m.diameter(e))
                .fold(0.0f64, f64::max)
        };
        let bound = ratio(&generate(MeshFamily::Asympar, 2).unwrap());
        let mut prev = bound;
        for n in [4u32, 8, 16, 32] {
            let r = ratio(&generate(MeshFamily::Asympar, n).unwrap());
            assert!(r <= bound + 1e-12, "n={n}: {r} > {bound}");
            assert!(r <= prev + 1e-12, "ratio not monotone at n={n}");
            prev = r;
        }
        // the trapezoid family, by contrast, keeps sigma constant
        let sig = |m: &QuadMesh| (0..m.quads.len()).map(|e| m.sigma(e)).fold(0.0f64, f64::max);
        let s2 = sig(&generate(MeshFamily::Trapezoid, 2).unwrap());
        for n in [4u32, 8, 16] {
            assert!((sig(&generate(MeshFamily::Trapezoid, n).unwrap()) - s2).abs() < 1e-12);
        }
    }

    #[test]
    fn area_conservation() {
        for (family, ns) in [
            (MeshFamily::Square, vec![1u32, 2, 5, 8]),
            (MeshFamily::Trapezoid, vec![2, 4, 8]),
            (MeshFamily::Asympar, vec![2, 4, 8, 16]),
        ] {
            for n in ns {
                let mesh = generate(family, n).unwrap();
                assert!(
                    (total_mapped_area(&mesh) - 1.0).abs() < 1e-12,
                    "{family} n={n}"
                );
            }
        }
    }

    #[test]
    fn conformity_and_validation() {
        for (family, n) in [
            (MeshFamily::Square, 4u32),
            (MeshFamily::Trapezoid, 4),
            (MeshFamily::Asympar, 8),
        ] {
            let mesh = generate(family, n).unwrap();
            mesh.validate().unwrap();
            for users in mesh.edges().values() {
                assert!(users.len() == 1 || users.len() == 2);
            }
        }
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mesh = generate(MeshFamily::Asympar, 4).unwrap();
        let text = mesh.to_text();
        let back = QuadMesh::read_from(&mut text.as_bytes()).unwrap();
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.quads, mesh.quads);
        assert_eq!(back.boundary_vertices, mesh.boundary_vertices);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_text_rejected() {
        assert!(QuadMesh::read_from(&mut "quadmesh 2\n".as_bytes()).is_err());
        let bad = "quadmesh 1\nvertices 1\n0 0\nquads 1\n0 0 0 0\nboundary 0\n";
        assert!(QuadMesh::read_from(&mut bad.as_bytes()).is_err());
    }
}
