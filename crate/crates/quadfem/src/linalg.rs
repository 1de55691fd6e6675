//! Dense symmetric solves, sparse symmetric storage with conjugate
//! gradients, and exact rational elimination.
//!
//! The rational routines back the span-membership tests in [`crate::polyspace`];
//! the floating-point routines back per-element Gram systems and the global
//! Poisson solve.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

/// Arbitrary-precision rational number.
pub type Rational = num_rational::BigRational;

/// Exact rank by fraction-free (Bareiss) Gaussian elimination.
///
/// Rows are first scaled to integers by their denominator lcm; the
/// fraction-free recurrence then bounds intermediate integer growth.
pub fn rational_rank(rows: &[Vec<Rational>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    debug_assert!(rows.iter().all(|r| r.len() == cols));
    let mut m: Vec<Vec<BigInt>> = rows.iter().map(|r| integer_row(r)).collect();
    let nrows = m.len();

    let mut rank = 0;
    let mut pivot_row = 0;
    let mut prev = BigInt::one();
    for col in 0..cols {
        let Some(pr) = (pivot_row..nrows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(pivot_row, pr);
        for r in pivot_row + 1..nrows {
            for c in col + 1..cols {
                let num = &m[pivot_row][col] * &m[r][c] - &m[r][col] * &m[pivot_row][c];
                m[r][c] = num / &prev; // exact by the Bareiss identity
            }
            m[r][col] = BigInt::zero();
        }
        prev = m[pivot_row][col].clone();
        pivot_row += 1;
        rank += 1;
        if pivot_row == nrows {
            break;
        }
    }
    rank
}

fn integer_row(row: &[Rational]) -> Vec<BigInt> {
    let mut lcm = BigInt::one();
    for v in row {
        let d = v.denom();
        let g = num_integer_gcd(&lcm, d);
        lcm = &lcm / &g * d;
    }
    row.iter()
        .map(|v| v.numer() * (&lcm / v.denom()))
        .collect()
}

fn num_integer_gcd(a: &BigInt, b: &BigInt) -> BigInt {
    let mut a = a.abs();
    let mut b = b.abs();
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

/// Exact solve of a square rational system; `None` if singular.
pub fn rational_solve(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
    let n = a.len();
    debug_assert!(a.iter().all(|r| r.len() == n) && b.len() == n);
    let mut m: Vec<Vec<Rational>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    for col in 0..n {
        let pr = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pr);
        let piv = m[col][col].clone();
        for c in col..=n {
            m[col][c] = &m[col][c] / &piv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for c in col..=n {
                    let sub = &factor * &m[col][c];
                    m[r][c] = &m[r][c] - &sub;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n].clone()).collect())
}

/// Dense symmetric matrix in full row-major storage.
#[derive(Clone, Debug)]
pub struct DenseSymMatrix {
    n: usize,
    a: Vec<f64>,
}

impl DenseSymMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseSymMatrix { n, a: vec![0.0; n * n] }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
        self.a[j * self.n + i] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] += v;
        if i != j {
            self.a[j * self.n + i] += v;
        }
    }

    /// Solve `A x = b` by Cholesky factorization.
    ///
    /// A pivot at or below `1e-14` times the original diagonal entry is
    /// reported as not positive definite; that is how singular element Gram
    /// matrices surface.
    pub fn cholesky_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut l = self.a.clone();
        for k in 0..n {
            let mut d = l[k * n + k];
            for p in 0..k {
                d -= l[k * n + p] * l[k * n + p];
            }
            let floor = 1e-14 * self.a[k * n + k].abs();
            if d <= floor || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: k });
            }
            let dk = d.sqrt();
            l[k * n + k] = dk;
            for r in k + 1..n {
                let mut v = l[r * n + k];
                for p in 0..k {
                    v -= l[r * n + p] * l[k * n + p];
                }
                l[r * n + k] = v / dk;
            }
        }
        // forward then backward substitution
        let mut y = b.to_vec();
        for i in 0..n {
            for p in 0..i {
                y[i] -= l[i * n + p] * y[p];
            }
            y[i] /= l[i * n + i];
        }
        let mut x = y;
        for i in (0..n).rev() {
            for p in i + 1..n {
                x[i] -= l[p * n + i] * x[p];
            }
            x[i] /= l[i * n + i];
        }
        Ok(x)
    }
}

/// Symmetric sparse matrix in compressed row storage.
#[derive(Clone, Debug)]
pub struct SparseSymCsr {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymCsr {
    /// Build from unordered `(row, col, value)` triplets, summing duplicates.
    /// Both triangles of the symmetric matrix must be supplied.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut k = 0;
        for i in 0..n {
            row_ptr[i] = col_idx.len();
            while k < sorted.len() && sorted[k].0 == i {
                debug_assert!(sorted[k].1 < n);
                let j = sorted[k].1;
                let mut v = 0.0;
                while k < sorted.len() && sorted[k].0 == i && sorted[k].1 == j {
                    v += sorted[k].2;
                    k += 1;
                }
                col_idx.push(j);
                vals.push(v);
            }
        }
        row_ptr[n] = col_idx.len();
        SparseSymCsr { n, row_ptr, col_idx, vals }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.vals[k];
                }
            }
        }
        d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                return self.vals[k];
            }
        }
        0.0
    }

    /// `y = A x`.  Row-parallel under a pool; each row's dot product is a
    /// fixed-order sum, so the result is bit-identical either way.
    pub fn matvec(&self, x: &[f64], y: &mut [f64], pool: Option<&rayon::ThreadPool>) {
        let row = |i: usize| -> f64 {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.col_idx[k]];
            }
            s
        };
        match pool {
            Some(p) => p.install(|| {
                use rayon::prelude::*;
                y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
            }),
            None => {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = row(i);
                }
            }
        }
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|` relative to the largest
    /// entry; zero for an exactly symmetric matrix.
    pub fn symmetry_defect(&self) -> f64 {
        let mut max_entry = 0.0f64;
        let mut max_defect = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                max_entry = max_entry.max(self.vals[k].abs());
                max_defect = max_defect.max((self.vals[k] - self.get(j, i)).abs());
            }
        }
        if max_entry == 0.0 {
            0.0
        } else {
            max_defect / max_entry
        }
    }

    pub fn to_dense(&self) -> DenseSymMatrix {
        let mut d = DenseSymMatrix::zeros(self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d.a[i * self.n + self.col_idx[k]] = self.vals[k];
            }
        }
        d
    }
}

/// Conjugate gradient solution with convergence diagnostics.
#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    /// Relative residual norm after each iteration.
    pub history: Vec<f64>,
}

/// Preconditioned conjugate gradients with the diagonal (Jacobi)
/// preconditioner, starting from zero.
pub fn cg_solve(
    a: &SparseSymCsr,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
    pool: Option<&rayon::ThreadPool>,
) -> Result<CgSolution> {
    let n = a.order();
    debug_assert_eq!(b.len(), n);
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            history: Vec::new(),
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();

    for it in 1..=max_iter {
        a.matvec(&p, &mut ap, pool);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm2(&r) / b_norm;
        history.push(rel);
        if rel <= rel_tol {
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: rel,
                history,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NoConvergence {
        iterations: max_iter,
        relative_residual: rel,
        history,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Nearest f64 of an exact rational, for freezing exact solves.
pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().expect("rational out of f64 range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::FromPrimitive;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn rank_of_zero_and_identity() {
        let zero = vec![vec![Rational::zero(); 3]; 2];
        assert_eq!(rational_rank(&zero), 0);
        for k in 1..=4usize {
            let eye: Vec<Vec<Rational>> = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| if i == j { r(1, 1) } else { Rational::zero() })
                        .collect()
                })
                .collect();
            assert_eq!(rational_rank(&eye), k);
        }
    }

    #[test]
    fn rank_detects_dependence() {
        let rows = vec![
            vec![r(1, 2), r(1, 3)],
            vec![r(3, 2), r(1, 1)],
            vec![r(2, 1), r(4, 3)], // row0 * 4
        ];
        assert_eq!(rational_rank(&rows), 2);
    }

    #[test]
    fn solve_exact_2x2() {
        let a = vec![vec![r(2, 1), r(1, 1)], vec![r(1, 1), r(2, 1)]];
        let b = vec![r(3, 1), r(3, 1)];
        let x = rational_solve(&a, &b).unwrap();
        assert_eq!(x, vec![r(1, 1), r(1, 1)]);
    }

    #[test]
    fn solve_singular_is_none() {
        let a = vec![vec![r(1, 1), r(2, 1)], vec![r(2, 1), r(4, 1)]];
        assert!(rational_solve(&a, &vec![r(1, 1), r(1, 1)]).is_none());
    }

    #[test]
    fn cholesky_identity_and_2x2() {
        let mut eye = DenseSymMatrix::zeros(3);
        for i in 0..3 {
            eye.set(i, i, 1.0);
        }
        let b = vec![1.0, -2.0, 0.5];
        assert_eq!(eye.cholesky_solve(&b).unwrap(), b);

        let mut a = DenseSymMatrix::zeros(2);
        a.set(0, 0, 2.0);
        a.set(0, 1, 1.0);
        a.set(1, 1, 2.0);
        let x = a.cholesky_solve(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cholesky_hilbert_matches_exact_solve() {
        let n = 4;
        let mut a = DenseSymMatrix::zeros(n);
        let mut ar = vec![vec![Rational::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, 1.0 / ((i + j + 1) as f64));
                ar[i][j] = r(1, (i + j + 1) as i64);
            }
        }
        let b = vec![1.0; n];
        let br = vec![r(1, 1); n];
        let x = a.cholesky_solve(&b).unwrap();
        let xr = rational_solve(&ar, &br).unwrap();
        for i in 0..n {
            assert!((x[i] - rational_to_f64(&xr[i])).abs() < 1e-7);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = DenseSymMatrix::zeros(2);
        a.set(0, 0, 1.0);
        a.set(1, 1, -1.0);
        match a.cholesky_solve(&[1.0, 1.0]) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected pivot failure, got {other:?}"),
        }
    }

    #[test]
    fn csr_from_triplets_sums_duplicates() {
        let a = SparseSymCsr::from_triplets(
            2,
            &[(0, 0, 1.0), (0, 0, 1.0), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 3.0)],
        );
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.get(0, 1), 0.5);
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.symmetry_defect(), 0.0);
    }

    #[test]
    fn cg_solves_one_by_one_and_small_spd() {
        let a = SparseSymCsr::from_triplets(1, &[(0, 0, 4.0)]);
        let sol = cg_solve(&a, &[8.0], 1e-12, 10, None).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-12);

        // diagonally dominant SPD 5x5
        let mut trips = Vec::new();
        for i in 0..5usize {
            trips.push((i, i, 4.0));
            if i + 1 < 5 {
                trips.push((i, i + 1, -1.0));
                trips.push((i + 1, i, -1.0));
            }
        }
        let a = SparseSymCsr::from_triplets(5, &trips);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let sol = cg_solve(&a, &b, 1e-12, 100, None).unwrap();
        let dense_x = a.to_dense().cholesky_solve(&b).unwrap();
        for i in 0..5 {
            assert!((sol.x[i] - dense_x[i]).abs() < 1e-10);
        }
        assert!(sol.relative_residual <= 1e-12);
    }

    #[test]
    fn cg_reports_nonconvergence_with_history() {
        let mut trips = Vec::new();
        for i in 0..20usize {
            trips.push((i, i, 1.0 + i as f64 * 1000.0));
            if i + 1 < 20 {
                trips.push((i, i + 1, -1.0));
                trips.push((i + 1, i, -1.0));
            }
        }
        let a = SparseSymCsr::from_triplets(20, &trips);
        match cg_solve(&a, &vec![1.0; 20], 1e-30, 3, None) {
            Err(Error::NoConvergence { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    proptest! {
        // Rank is invariant under row swaps and rational row recombination.
        #[test]
        fn rank_invariant_under_row_ops(
            seed_rows in proptest::collection::vec(
                proptest::collection::vec(-4i64..=4, 4), 3..=5),
            swap_a in 0usize..5, swap_b in 0usize..5,
            src in 0usize..5, dst in 0usize..5, mul in -3i64..=3,
        ) {
            let rows: Vec<Vec<Rational>> = seed_rows
                .iter()
                .map(|row| row.iter().map(|&v| Rational::from_i64(v).unwrap()).collect())
                .collect();
            let base = rational_rank(&rows);

            let mut edited = rows.clone();
            let n = edited.len();
            edited.swap(swap_a % n, swap_b % n);
            let (src, dst) = (src % n, dst % n);
            if src != dst {
                let scaled: Vec<Rational> = edited[src]
                    .iter()
                    .map(|v| v * Rational::from_i64(mul).unwrap())
                    .collect();
                for (d, s) in edited[dst].iter_mut().zip(scaled) {
                    *d = &*d + &s;
                }
            }
            prop_assert_eq!(rational_rank(&edited), base);
        }
    }
}
