//! Exact rational algebra of bivariate polynomial spaces on the unit square.
//!
//! Everything in this module works over arbitrary-precision rationals:
//! inclusion of one span in another is a rank question, and floating-point
//! rank is fragile.  The module provides
//!
//! - [`RationalPoly`], a sparse bivariate polynomial with exact coefficients,
//! - [`PolySpan`], a linearly independent span of such polynomials, covering
//!   the families `P_r` (total degree), `Q_r` (separate degree), and the
//!   serendipity spaces `S_r`,
//! - composition with bilinear maps ([`pullback`]) and the containment tests
//!   built on it ([`mapped_space_contains_pr`], [`qr_equivalence`]),
//! - [`verify_identity`], the binomial identity that rewrites `x^r y^s` as a
//!   combination of a mapped monomial and lower-order terms.
//!
//! Monomials are ordered graded-lexicographically (total degree first, then
//! decreasing x-exponent), so printed bases and elimination pivots are
//! deterministic.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::linalg::{rational_rank, Rational};
use crate::{Error, Result};

/// Exact rational from an integer.
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Exact rational `n / d`.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// A monomial `x^i y^j` on the reference square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Monomial {
    /// Exponent of x.
    pub i: u32,
    /// Exponent of y.
    pub j: u32,
}

impl Monomial {
    pub fn new(i: u32, j: u32) -> Self {
        Monomial { i, j }
    }

    pub fn total_degree(&self) -> u32 {
        self.i + self.j
    }

    pub fn separate_degree(&self) -> u32 {
        self.i.max(self.j)
    }
}

// Graded lexicographic: by total degree, then by increasing y-exponent,
// so degree-2 monomials print as x^2, x y, y^2.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.total_degree(), self.j).cmp(&(other.total_degree(), other.j))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.i, self.j) {
            (0, 0) => write!(f, "1"),
            (i, 0) => write_power(f, "x", i),
            (0, j) => write_power(f, "y", j),
            (i, j) => {
                write_power(f, "x", i)?;
                write!(f, " ")?;
                write_power(f, "y", j)
            }
        }
    }
}

fn write_power(f: &mut fmt::Formatter<'_>, var: &str, e: u32) -> fmt::Result {
    if e == 1 {
        write!(f, "{var}")
    } else {
        write!(f, "{var}^{e}")
    }
}

/// A bivariate polynomial with exact rational coefficients.
///
/// Stored sparsely; zero coefficients are never kept.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RationalPoly {
    terms: BTreeMap<Monomial, Rational>,
}

impl RationalPoly {
    pub fn zero() -> Self {
        RationalPoly::default()
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = RationalPoly::zero();
        p.add_term(Monomial::new(0, 0), c);
        p
    }

    pub fn one() -> Self {
        Self::constant(rat(1))
    }

    /// The monomial `x^i y^j` with coefficient one.
    pub fn monomial(i: u32, j: u32) -> Self {
        let mut p = RationalPoly::zero();
        p.add_term(Monomial::new(i, j), rat(1));
        p
    }

    /// Build from `(i, j, coefficient)` triples, summing duplicates.
    pub fn from_terms<I: IntoIterator<Item = (u32, u32, Rational)>>(terms: I) -> Self {
        let mut p = RationalPoly::zero();
        for (i, j, c) in terms {
            p.add_term(Monomial::new(i, j), c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    /// Terms in graded lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    /// Maximum total degree, or `None` for the zero polynomial.
    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::total_degree).max()
    }

    /// Maximum separate degree (degree in x and in y taken separately).
    pub fn separate_degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::separate_degree).max()
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get() + &c;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return RationalPoly::zero();
        }
        RationalPoly {
            terms: self.terms.iter().map(|(m, v)| (*m, v * c)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = RationalPoly::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    pub fn eval(&self, x: &Rational, y: &Rational) -> Rational {
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for _ in 0..m.i {
                t *= x;
            }
            for _ in 0..m.j {
                t *= y;
            }
            acc += t;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| rational_to_f64(c) * x.powi(m.i as i32) * y.powi(m.j as i32))
            .sum()
    }

    /// Partial derivative with respect to x.
    pub fn dx(&self) -> Self {
        let mut p = RationalPoly::zero();
        for (m, c) in &self.terms {
            if m.i > 0 {
                p.add_term(Monomial::new(m.i - 1, m.j), c * rat(m.i as i64));
            }
        }
        p
    }

    /// Partial derivative with respect to y.
    pub fn dy(&self) -> Self {
        let mut p = RationalPoly::zero();
        for (m, c) in &self.terms {
            if m.j > 0 {
                p.add_term(Monomial::new(m.i, m.j - 1), c * rat(m.j as i64));
            }
        }
        p
    }

    /// Exact integral over the unit square `[0,1]^2`.
    pub fn integral_unit_square(&self) -> Rational {
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            acc += c / rat(((m.i + 1) as i64) * ((m.j + 1) as i64));
        }
        acc
    }

    /// Substitute `x <- fx`, `y <- fy` and expand.
    pub fn substitute(&self, fx: &RationalPoly, fy: &RationalPoly) -> RationalPoly {
        let max_i = self.terms.keys().map(|m| m.i).max().unwrap_or(0) as usize;
        let max_j = self.terms.keys().map(|m| m.j).max().unwrap_or(0) as usize;
        let pow_x = power_table(fx, max_i);
        let pow_y = power_table(fy, max_j);
        let mut acc = RationalPoly::zero();
        for (m, c) in &self.terms {
            let prod = &pow_x[m.i as usize] * &pow_y[m.j as usize];
            acc = &acc + &prod.scale(c);
        }
        acc
    }

    /// Coefficients as `(i, j, f64)` triples in graded lexicographic order.
    pub fn to_f64_terms(&self) -> Vec<(u32, u32, f64)> {
        self.terms
            .iter()
            .map(|(m, c)| (m.i, m.j, rational_to_f64(c)))
            .collect()
    }
}

fn power_table(p: &RationalPoly, up_to: usize) -> Vec<RationalPoly> {
    let mut t = Vec::with_capacity(up_to + 1);
    t.push(RationalPoly::one());
    for k in 1..=up_to {
        let next = &t[k - 1] * p;
        t.push(next);
    }
    t
}

/// Exact rational to nearest f64.
pub fn rational_to_f64(r: &Rational) -> f64 {
    num_traits::ToPrimitive::to_f64(r).expect("rational out of f64 range")
}

impl std::ops::Add for &RationalPoly {
    type Output = RationalPoly;
    fn add(self, rhs: &RationalPoly) -> RationalPoly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(*m, c.clone());
        }
        out
    }
}

impl std::ops::Sub for &RationalPoly {
    type Output = RationalPoly;
    fn sub(self, rhs: &RationalPoly) -> RationalPoly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(*m, -c.clone());
        }
        out
    }
}

impl std::ops::Mul for &RationalPoly {
    type Output = RationalPoly;
    fn mul(self, rhs: &RationalPoly) -> RationalPoly {
        let mut out = RationalPoly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(Monomial::new(ma.i + mb.i, ma.j + mb.j), ca * cb);
            }
        }
        out
    }
}

impl std::ops::Neg for &RationalPoly {
    type Output = RationalPoly;
    fn neg(self) -> RationalPoly {
        self.scale(&rat(-1))
    }
}

impl fmt::Display for RationalPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            let negative = c.is_negative();
            let abs = c.abs();
            if k == 0 {
                if negative {
                    write!(f, "-")?;
                }
            } else if negative {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let unit_coeff = abs.is_one();
            let constant_term = m.i == 0 && m.j == 0;
            if !unit_coeff || constant_term {
                write!(f, "{abs}")?;
                if !constant_term {
                    write!(f, " ")?;
                }
            }
            if !constant_term {
                write!(f, "{m}")?;
            }
        }
        Ok(())
    }
}

/// A bilinear map of the reference square with exact rational coefficients,
/// `F(x, y) = a + b x + c y + d x y` componentwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactBilinearMap {
    /// Images of the reference corners (0,0), (1,0), (1,1), (0,1).
    pub corners: [[Rational; 2]; 4],
}

impl ExactBilinearMap {
    pub fn from_corners(corners: [[Rational; 2]; 4]) -> Self {
        ExactBilinearMap { corners }
    }

    /// Exact conversion of floating-point corners (every f64 is rational).
    pub fn from_f64_corners(corners: &[[f64; 2]; 4]) -> Self {
        let conv = |v: f64| Rational::from_float(v).expect("finite coordinate");
        ExactBilinearMap {
            corners: corners.map(|p| [conv(p[0]), conv(p[1])]),
        }
    }

    pub fn identity() -> Self {
        Self::from_corners([
            [rat(0), rat(0)],
            [rat(1), rat(0)],
            [rat(1), rat(1)],
            [rat(0), rat(1)],
        ])
    }

    /// The shear `(x, y) -> (x, y (x + 1))`, mapping the reference square
    /// onto the trapezoid with corners (0,0), (1,0), (1,2), (0,1).
    pub fn shear_map() -> Self {
        Self::from_corners([
            [rat(0), rat(0)],
            [rat(1), rat(0)],
            [rat(1), rat(2)],
            [rat(0), rat(1)],
        ])
    }

    /// The shear with swapped arguments, `(x, y) -> (y, x (y + 1))`.  Maps
    /// onto the same trapezoid as [`ExactBilinearMap::shear_map`] with
    /// opposite orientation.
    pub fn swapped_shear_map() -> Self {
        Self::from_corners([
            [rat(0), rat(0)],
            [rat(0), rat(1)],
            [rat(1), rat(2)],
            [rat(1), rat(0)],
        ])
    }

    /// Coefficients `(a, b, c, d)` of component `k` (0 = x, 1 = y).
    fn coeffs(&self, k: usize) -> (Rational, Rational, Rational, Rational) {
        let p = &self.corners;
        let a = p[0][k].clone();
        let b = &p[1][k] - &p[0][k];
        let c = &p[3][k] - &p[0][k];
        let d = &(&p[0][k] - &p[1][k]) + &(&p[2][k] - &p[3][k]);
        (a, b, c, d)
    }

    /// Component `k` as a polynomial in the reference coordinates.
    pub fn component(&self, k: usize) -> RationalPoly {
        let (a, b, c, d) = self.coeffs(k);
        RationalPoly::from_terms([(0, 0, a), (1, 0, b), (0, 1, c), (1, 1, d)])
    }

    /// The Jacobian determinant, an affine polynomial in (x, y).
    pub fn jacobian_det(&self) -> RationalPoly {
        let fx = self.component(0);
        let fy = self.component(1);
        &(&fx.dx() * &fy.dy()) - &(&fx.dy() * &fy.dx())
    }

    /// True iff the Jacobian determinant keeps a strict sign on the closed
    /// reference square.  The determinant is affine, so it suffices to test
    /// the four corners.
    pub fn is_invertible(&self) -> bool {
        let det = self.jacobian_det();
        let vals = [
            det.eval(&rat(0), &rat(0)),
            det.eval(&rat(1), &rat(0)),
            det.eval(&rat(1), &rat(1)),
            det.eval(&rat(0), &rat(1)),
        ];
        vals.iter().all(Signed::is_positive) || vals.iter().all(Signed::is_negative)
    }
}

/// Composition `p ∘ F`, expanded in reference monomials.
///
/// Both components of a bilinear map have separate degree ≤ 1, so a
/// polynomial of total degree `r` pulls back to separate degree ≤ `r`.
pub fn pullback(p: &RationalPoly, f: &ExactBilinearMap) -> RationalPoly {
    p.substitute(&f.component(0), &f.component(1))
}

/// Families of reference polynomial spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    /// Total degree at most r.
    P,
    /// Degree at most r in each variable separately.
    Q,
    /// Serendipity: `P_r` together with `x^r y` and `x y^r`.
    S,
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceKind::P => write!(f, "p"),
            SpaceKind::Q => write!(f, "q"),
            SpaceKind::S => write!(f, "s"),
        }
    }
}

/// A span of linearly independent polynomials.
#[derive(Clone, Debug)]
pub struct PolySpan {
    basis: Vec<RationalPoly>,
    maxdeg: u32,
}

impl PolySpan {
    /// Build a span, checking linear independence exactly.
    pub fn new(basis: Vec<RationalPoly>) -> Result<Self> {
        let monos = collect_monomials(&basis);
        let rows: Vec<Vec<Rational>> = basis.iter().map(|p| coefficient_row(p, &monos)).collect();
        if rational_rank(&rows) != basis.len() {
            return Err(Error::InvalidArgument(
                "span basis is linearly dependent".into(),
            ));
        }
        Ok(Self::new_unchecked(basis))
    }

    fn new_unchecked(basis: Vec<RationalPoly>) -> Self {
        let maxdeg = basis
            .iter()
            .filter_map(RationalPoly::separate_degree)
            .max()
            .unwrap_or(0);
        PolySpan { basis, maxdeg }
    }

    pub fn basis(&self) -> &[RationalPoly] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Largest separate degree over the basis.
    pub fn max_separate_degree(&self) -> u32 {
        self.maxdeg
    }

    /// True iff every basis element of `inner` lies in this span.
    /// Exact Gaussian elimination; no tolerances.
    pub fn contains(&self, inner: &PolySpan) -> bool {
        self.contains_witness(inner).is_none()
    }

    /// First basis element of `inner` outside this span, if any.
    pub fn contains_witness(&self, inner: &PolySpan) -> Option<&RationalPoly> {
        inner.basis.iter().find(|p| !self.member(p))
    }

    /// Exact membership of a single polynomial.
    pub fn member(&self, p: &RationalPoly) -> bool {
        let mut all = self.basis.clone();
        all.push(p.clone());
        let monos = collect_monomials(&all);
        let rows: Vec<Vec<Rational>> =
            self.basis.iter().map(|q| coefficient_row(q, &monos)).collect();
        let base_rank = rational_rank(&rows);
        let mut augmented = rows;
        augmented.push(coefficient_row(p, &monos));
        rational_rank(&augmented) == base_rank
    }

    /// Whether the span is built purely of monomials.
    fn monomial_support(&self) -> Option<Vec<Monomial>> {
        let mut out = Vec::with_capacity(self.basis.len());
        for p in &self.basis {
            let mut it = p.terms();
            let (m, _) = it.next()?;
            if it.next().is_some() {
                return None;
            }
            out.push(*m);
        }
        Some(out)
    }

    /// A basis of the same span suited to floating-point Gram matrices:
    /// for monomial spans, products of shifted Legendre polynomials (the
    /// span is unchanged because the monomial supports here are downward
    /// closed); otherwise the basis itself.  The first element is always
    /// the constant when the span contains it.
    pub fn evaluation_basis(&self) -> Vec<RationalPoly> {
        match self.monomial_support() {
            Some(monos) => {
                let max_deg = monos.iter().map(Monomial::separate_degree).max().unwrap_or(0);
                let leg = shifted_legendre_table(max_deg);
                monos
                    .iter()
                    .map(|m| product_of_univariate(&leg[m.i as usize], &leg[m.j as usize]))
                    .collect()
            }
            None => self.basis.clone(),
        }
    }
}

impl fmt::Display for PolySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "span{{")?;
        for (k, p) in self.basis.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}

fn collect_monomials(polys: &[RationalPoly]) -> Vec<Monomial> {
    let set: BTreeSet<Monomial> = polys
        .iter()
        .flat_map(|p| p.terms().map(|(m, _)| *m))
        .collect();
    set.into_iter().collect()
}

fn coefficient_row(p: &RationalPoly, monos: &[Monomial]) -> Vec<Rational> {
    monos.iter().map(|m| p.coefficient(m)).collect()
}

/// Monomial exponent sets of the three families, in graded lex order.
pub fn space_monomials(kind: SpaceKind, r: u32) -> Vec<Monomial> {
    let mut set = BTreeSet::new();
    match kind {
        SpaceKind::P => {
            for i in 0..=r {
                for j in 0..=(r - i) {
                    set.insert(Monomial::new(i, j));
                }
            }
        }
        SpaceKind::Q => {
            for i in 0..=r {
                for j in 0..=r {
                    set.insert(Monomial::new(i, j));
                }
            }
        }
        SpaceKind::S => {
            assert!(r >= 1, "serendipity spaces are defined for r >= 1");
            for m in space_monomials(SpaceKind::P, r) {
                set.insert(m);
            }
            set.insert(Monomial::new(r, 1));
            set.insert(Monomial::new(1, r));
        }
    }
    set.into_iter().collect()
}

/// The monomial basis of `P_r`, `Q_r`, or `S_r`.
///
/// For `S_1` the two extra monomials coincide with `x y`, so the result is
/// the `Q_1` basis.
pub fn make_space(kind: SpaceKind, r: u32) -> PolySpan {
    let basis = space_monomials(kind, r)
        .into_iter()
        .map(|m| RationalPoly::monomial(m.i, m.j))
        .collect();
    PolySpan::new_unchecked(basis)
}

/// The rotated-bilinear reference space `span{1, x, y, x^2 - y^2}` used by
/// nonconforming quadrilateral elements in place of `Q_1`.
pub fn rotated_bilinear_span() -> PolySpan {
    PolySpan::new_unchecked(vec![
        RationalPoly::one(),
        RationalPoly::monomial(1, 0),
        RationalPoly::monomial(0, 1),
        &RationalPoly::monomial(2, 0) - &RationalPoly::monomial(0, 2),
    ])
}

/// Outcome of a mapped-space containment test.
#[derive(Clone, Debug)]
pub struct MappedContainment {
    pub contained: bool,
    /// Monomial of `P_r` whose pullback escapes the reference span.
    pub witness: Option<Monomial>,
}

/// Does the mapped space `V_F(K)` contain all polynomials of total degree
/// at most `r` on the image quadrilateral?
///
/// Equivalent formulation: does `p ∘ F` lie in the reference span for every
/// monomial `p` of `P_r`?  Rejects maps whose Jacobian determinant vanishes
/// somewhere on the closed reference square.
pub fn mapped_space_contains_pr(
    span: &PolySpan,
    f: &ExactBilinearMap,
    r: u32,
) -> Result<MappedContainment> {
    if !f.is_invertible() {
        return Err(Error::DegenerateMap);
    }
    for m in space_monomials(SpaceKind::P, r) {
        let pb = pullback(&RationalPoly::monomial(m.i, m.j), f);
        if !span.member(&pb) {
            return Ok(MappedContainment {
                contained: false,
                witness: Some(m),
            });
        }
    }
    Ok(MappedContainment {
        contained: true,
        witness: None,
    })
}

/// The two sides of the containment equivalence for a reference span.
#[derive(Clone, Debug)]
pub struct QrEquivalence {
    /// `Q_r ⊆ V̂`.
    pub q_side: bool,
    /// The mapped space contains `P_r` for both reference shear maps.
    pub p_side: bool,
    /// Monomial of `Q_r` missing from the span when `q_side` is false.
    pub q_witness: Option<Monomial>,
    /// Monomial of `P_r` whose pullback escapes when `p_side` is false.
    pub p_witness: Option<Monomial>,
}

/// Evaluate both sides of the equivalence "`Q_r ⊆ V̂` iff the mapped spaces
/// over the reference trapezoid contain `P_r`".  The two sides are computed
/// independently so they can be cross-checked; the span must contain the
/// constants.
pub fn qr_equivalence(span: &PolySpan, r: u32) -> QrEquivalence {
    let q_span = make_space(SpaceKind::Q, r);
    let mut q_witness = None;
    let q_side = match span.contains_witness(&q_span) {
        None => true,
        Some(p) => {
            q_witness = p.terms().next().map(|(m, _)| *m);
            false
        }
    };
    let shear = mapped_space_contains_pr(span, &ExactBilinearMap::shear_map(), r)
        .expect("reference shear map is invertible");
    let swapped = mapped_space_contains_pr(span, &ExactBilinearMap::swapped_shear_map(), r)
        .expect("reference shear map is invertible");
    QrEquivalence {
        q_side,
        p_side: shear.contained && swapped.contained,
        q_witness,
        p_witness: shear.witness.or(swapped.witness),
    }
}

fn binomial(n: u32, k: u32) -> Rational {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for t in 0..k.min(n - k) {
        num *= BigInt::from(n - t);
        den *= BigInt::from(t + 1);
    }
    Rational::new(num, den)
}

/// Check the expansion of `x^r y^s` as the pullbacked monomial
/// `F_1^{r-s} F_2^s` of the shear map minus binomial corrections of lower
/// separate degree, in exact arithmetic.  Requires `0 ≤ s ≤ r`.
pub fn verify_identity(r: u32, s: u32) -> bool {
    assert!(s <= r, "identity requires 0 <= s <= r");
    let f = ExactBilinearMap::shear_map();
    let f1 = f.component(0);
    let f2 = f.component(1);
    let lhs = RationalPoly::monomial(r, s);
    let mut rhs = &f1.pow(r - s) * &f2.pow(s);
    for t in 1..=s {
        let corr = RationalPoly::monomial(r - t, s).scale(&binomial(s, t));
        rhs = &rhs - &corr;
    }
    lhs == rhs
}

/// Shifted Legendre polynomials on [0,1] as univariate coefficient vectors
/// (index = power), exact, through degree `n`.
fn shifted_legendre_table(n: u32) -> Vec<Vec<Rational>> {
    let mut table: Vec<Vec<Rational>> = Vec::with_capacity(n as usize + 1);
    table.push(vec![rat(1)]);
    if n >= 1 {
        table.push(vec![rat(-1), rat(2)]);
    }
    for k in 1..n {
        // (k+1) L_{k+1} = (2k+1)(2x-1) L_k - k L_{k-1}
        let k_i = k as i64;
        let lk = &table[k as usize];
        let lk1 = &table[k as usize - 1];
        let mut next = vec![Rational::zero(); k as usize + 2];
        for (p, c) in lk.iter().enumerate() {
            next[p + 1] += c * ratio(2 * (2 * k_i + 1), k_i + 1);
            next[p] -= c * ratio(2 * k_i + 1, k_i + 1);
        }
        for (p, c) in lk1.iter().enumerate() {
            next[p] -= c * ratio(k_i, k_i + 1);
        }
        table.push(next);
    }
    table
}

fn product_of_univariate(cx: &[Rational], cy: &[Rational]) -> RationalPoly {
    let mut p = RationalPoly::zero();
    for (i, a) in cx.iter().enumerate() {
        for (j, b) in cy.iter().enumerate() {
            p.add_term(Monomial::new(i as u32, j as u32), a * b);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(i: u32, j: u32) -> RationalPoly {
        RationalPoly::monomial(i, j)
    }

    #[test]
    fn p1_basis() {
        let s = make_space(SpaceKind::P, 1);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.to_string(), "span{1, x, y}");
    }

    #[test]
    fn s2_basis_and_dimension() {
        let s = make_space(SpaceKind::S, 2);
        assert_eq!(s.dim(), 8);
        assert_eq!(s.to_string(), "span{1, x, y, x^2, x y, y^2, x^2 y, x y^2}");
    }

    #[test]
    fn q2_contains_mixed_quartic_monomial() {
        let s = make_space(SpaceKind::Q, 2);
        assert_eq!(s.dim(), 9);
        assert!(s.member(&mono(2, 2)));
    }

    #[test]
    fn s1_is_q1() {
        let s1 = make_space(SpaceKind::S, 1);
        let q1 = make_space(SpaceKind::Q, 1);
        assert_eq!(s1.dim(), 4);
        assert!(s1.contains(&q1) && q1.contains(&s1));
    }

    #[test]
    fn dimension_formulas() {
        for r in 0..=5u32 {
            assert_eq!(
                make_space(SpaceKind::P, r).dim(),
                ((r + 1) * (r + 2) / 2) as usize
            );
            assert_eq!(make_space(SpaceKind::Q, r).dim(), ((r + 1) * (r + 1)) as usize);
            if r >= 2 {
                assert_eq!(
                    make_space(SpaceKind::S, r).dim(),
                    ((r + 1) * (r + 2) / 2 + 2) as usize
                );
            }
        }
    }

    #[test]
    fn serendipity_contains_p2_but_not_q2() {
        let s2 = make_space(SpaceKind::S, 2);
        assert!(s2.contains(&make_space(SpaceKind::P, 2)));
        assert!(!s2.contains(&make_space(SpaceKind::Q, 2)));
        let w = s2.contains_witness(&make_space(SpaceKind::Q, 2)).unwrap();
        assert_eq!(w.to_string(), "x^2 y^2");
    }

    #[test]
    fn p_r_contains_q_half_r() {
        for r in [2u32, 3, 4] {
            let p = make_space(SpaceKind::P, r);
            let q = make_space(SpaceKind::Q, r / 2);
            assert!(p.contains(&q), "P_{r} should contain Q_{}", r / 2);
            assert!(!p.contains(&make_space(SpaceKind::Q, r / 2 + 1)));
        }
    }

    #[test]
    fn pullback_under_shear() {
        let f = ExactBilinearMap::shear_map();
        assert_eq!(pullback(&mono(0, 1), &f), &mono(0, 1) + &mono(1, 1));
        assert_eq!(pullback(&mono(1, 1), &f), &mono(1, 1) + &mono(2, 1));
    }

    #[test]
    fn pullback_under_identity_is_identity() {
        let f = ExactBilinearMap::identity();
        let p = RationalPoly::from_terms([(0, 0, rat(3)), (2, 1, ratio(-7, 2)), (0, 3, rat(1))]);
        assert_eq!(pullback(&p, &f), p);
    }

    #[test]
    fn shear_maps_agree_with_their_closed_forms() {
        let f = ExactBilinearMap::shear_map();
        assert_eq!(f.component(0), mono(1, 0));
        assert_eq!(f.component(1), &mono(0, 1) + &mono(1, 1));
        let g = ExactBilinearMap::swapped_shear_map();
        assert_eq!(g.component(0), mono(0, 1));
        assert_eq!(g.component(1), &mono(1, 0) + &mono(1, 1));
    }

    #[test]
    fn shear_jacobians() {
        // det J of (x, y(x+1)) is x+1 > 0; the swapped map reverses orientation.
        let f = ExactBilinearMap::shear_map();
        assert_eq!(f.jacobian_det(), &RationalPoly::one() + &mono(1, 0));
        assert!(f.is_invertible());
        let g = ExactBilinearMap::swapped_shear_map();
        assert_eq!(g.jacobian_det(), &(-&RationalPoly::one()) - &mono(0, 1));
        assert!(g.is_invertible());
    }

    #[test]
    fn degenerate_map_rejected() {
        // All four corners on a line.
        let f = ExactBilinearMap::from_corners([
            [rat(0), rat(0)],
            [rat(1), rat(1)],
            [rat(2), rat(2)],
            [rat(3), rat(3)],
        ]);
        assert!(!f.is_invertible());
        let s = make_space(SpaceKind::Q, 2);
        assert!(matches!(
            mapped_space_contains_pr(&s, &f, 2),
            Err(Error::DegenerateMap)
        ));
    }

    #[test]
    fn mapped_q2_contains_p2_for_convex_maps() {
        let maps = [
            ExactBilinearMap::shear_map(),
            ExactBilinearMap::from_corners([
                [rat(0), rat(0)],
                [rat(2), ratio(1, 3)],
                [ratio(5, 2), rat(3)],
                [ratio(-1, 2), rat(1)],
            ]),
        ];
        let q2 = make_space(SpaceKind::Q, 2);
        for f in &maps {
            assert!(mapped_space_contains_pr(&q2, f, 2).unwrap().contained);
        }
    }

    #[test]
    fn mapped_s2_misses_p2_under_shear() {
        let s2 = make_space(SpaceKind::S, 2);
        let out = mapped_space_contains_pr(&s2, &ExactBilinearMap::shear_map(), 2).unwrap();
        assert!(!out.contained);
        assert_eq!(out.witness.unwrap(), Monomial::new(0, 2));
    }

    #[test]
    fn mapped_rotated_bilinear_misses_p1() {
        let span = rotated_bilinear_span();
        let out = mapped_space_contains_pr(&span, &ExactBilinearMap::shear_map(), 1).unwrap();
        assert!(!out.contained);
        assert_eq!(out.witness.unwrap(), Monomial::new(0, 1));
    }

    #[test]
    fn equivalence_examples() {
        let e = qr_equivalence(&make_space(SpaceKind::Q, 2), 2);
        assert!(e.q_side && e.p_side);
        let e = qr_equivalence(&make_space(SpaceKind::S, 2), 2);
        assert!(!e.q_side && !e.p_side);
        let e = qr_equivalence(&make_space(SpaceKind::P, 3), 1);
        assert!(e.q_side && e.p_side);
    }

    #[test]
    fn equivalence_battery_and_symmetry() {
        let mut spans: Vec<PolySpan> = Vec::new();
        for r in 0..=4 {
            spans.push(make_space(SpaceKind::P, r));
            spans.push(make_space(SpaceKind::Q, r));
            if r >= 1 {
                spans.push(make_space(SpaceKind::S, r));
            }
        }
        spans.push(rotated_bilinear_span());
        for span in &spans {
            for r in 0..=4 {
                let e = qr_equivalence(span, r);
                assert_eq!(e.q_side, e.p_side, "sides differ for {span} at r={r}");
                // All spans above are symmetric under x <-> y, so the two
                // shear maps must agree.
                let a = mapped_space_contains_pr(span, &ExactBilinearMap::shear_map(), r)
                    .unwrap()
                    .contained;
                let b = mapped_space_contains_pr(span, &ExactBilinearMap::swapped_shear_map(), r)
                    .unwrap()
                    .contained;
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn identity_small_cases() {
        assert!(verify_identity(1, 0));
        assert!(verify_identity(2, 1));
    }

    #[test]
    fn identity_through_degree_six() {
        for r in 0..=6 {
            for s in 0..=r {
                assert!(verify_identity(r, s), "identity fails at r={r}, s={s}");
            }
        }
    }

    #[test]
    fn pullback_degree_bound() {
        let f = ExactBilinearMap::from_corners([
            [rat(0), rat(0)],
            [rat(3), rat(1)],
            [rat(4), rat(5)],
            [ratio(-1, 2), rat(2)],
        ]);
        for r in 0..=4u32 {
            for m in space_monomials(SpaceKind::P, r) {
                let pb = pullback(&RationalPoly::monomial(m.i, m.j), &f);
                assert!(pb.separate_degree().unwrap_or(0) <= r);
            }
        }
    }

    #[test]
    fn evaluation_basis_spans_same_space() {
        for (kind, r) in [(SpaceKind::P, 3), (SpaceKind::Q, 2), (SpaceKind::S, 2)] {
            let span = make_space(kind, r);
            let eval = PolySpan::new(span.evaluation_basis()).unwrap();
            assert!(span.contains(&eval) && eval.contains(&span));
            assert_eq!(eval.basis()[0], RationalPoly::one());
        }
        // Non-monomial spans keep their own basis.
        let rot = rotated_bilinear_span();
        assert_eq!(rot.evaluation_basis(), rot.basis());
    }

    #[test]
    fn dependent_basis_rejected() {
        let dependent = vec![
            mono(1, 0),
            mono(0, 1),
            &mono(1, 0) + &mono(0, 1),
        ];
        assert!(PolySpan::new(dependent).is_err());
    }

    #[test]
    fn poly_display() {
        let p = RationalPoly::from_terms([
            (0, 0, rat(1)),
            (1, 0, ratio(-3, 2)),
            (2, 1, rat(1)),
        ]);
        assert_eq!(p.to_string(), "1 - 3/2 x + x^2 y");
    }
}
