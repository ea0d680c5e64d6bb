//! Small dense complex linear algebra: matrices, Hermitian eigensolver and a
//! real linear solver for the least-squares fits.

use crate::error::{Error, Result};
use crate::scalar::{cplx, czero, Cplx, Real};

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Cplx<T>>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![czero(); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = cplx(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Cplx<T>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, c: usize) -> Vec<Cplx<T>> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == czero() {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .fold(czero(), |acc, (a, b)| acc + *a * *b)
            })
            .collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| self[(r, c)] - other[(r, c)])
    }

    /// Largest elementwise modulus.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.rows {
            for c in 0..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> Cplx<T> {
        (0..self.rows.min(self.cols)).fold(czero(), |acc, i| acc + self[(i, i)])
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = Cplx<T>;
    fn index(&self, (r, c): (usize, usize)) -> &Cplx<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Cplx<T> {
        &mut self.data[r * self.cols + c]
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T> {
    /// Ascending eigenvalues.
    pub values: Vec<T>,
    /// Eigenvectors, one per entry of `values`.
    pub vectors: Vec<Vec<Cplx<T>>>,
}

const MAX_SWEEPS: usize = 100;

/// Full-spectrum Hermitian eigensolver (cyclic Jacobi with complex rotations).
///
/// Eigenvalues come out ascending. Near-degenerate eigenvalues (within
/// `degeneracy_tol`) are ordered by the lowest basis index carrying weight,
/// and each eigenvector is phased so its largest component is real positive.
pub fn eigh<T: Real>(matrix: &DenseMatrix<T>, degeneracy_tol: T) -> Result<HermitianEigen<T>> {
    let n = matrix.rows();
    if n != matrix.cols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: matrix.cols(),
        });
    }
    let mut a = matrix.clone();
    // Symmetrize once so rounding in the input cannot bias the rotations.
    for r in 0..n {
        for c in r..n {
            let avg = (a[(r, c)] + a[(c, r)].conj()) * T::lit(0.5);
            a[(r, c)] = avg;
            a[(c, r)] = avg.conj();
        }
        a[(r, r)] = cplx(a[(r, r)].re, T::zero());
    }
    let mut v = DenseMatrix::<T>::identity(n);

    let scale = a.data.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
    let eps = T::epsilon() * T::lit(0.5);
    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c)))
            .fold(T::zero(), |s, (r, c)| s + a[(r, c)].norm_sqr())
            .sqrt();
        if off <= eps * scale || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= T::min_positive_value() {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let phase = apq / mag;
                let theta = (aqq - app) / (T::lit(2.0) * mag);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (theta * theta + T::one()).sqrt())
                } else {
                    -T::one() / (-theta + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // U = diag(1, conj(phase)) * [[c, s], [-s, c]] restricted to (p, q).
                let upp = cplx(c, T::zero());
                let upq = cplx(s, T::zero());
                let uqp = phase.conj() * (-s);
                let uqq = phase.conj() * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * upp + akq * uqp;
                    a[(k, q)] = akp * upq + akq * uqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = upp.conj() * apk + uqp.conj() * aqk;
                    a[(q, k)] = upq.conj() * apk + uqq.conj() * aqk;
                }
                a[(p, q)] = czero();
                a[(q, p)] = czero();
                a[(p, p)] = cplx(a[(p, p)].re, T::zero());
                a[(q, q)] = cplx(a[(q, q)].re, T::zero());
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * upp + vkq * uqp;
                    v[(k, q)] = vkp * upq + vkq * uqq;
                }
            }
        }
    }

    let weight_tol = T::lit(1e-8);
    let mut pairs: Vec<(T, Vec<Cplx<T>>)> = (0..n)
        .map(|i| {
            let mut col = v.column(i);
            fix_phase(&mut col);
            (a[(i, i)].re, col)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    // Within degenerate clusters, order by lowest supporting basis index.
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && pairs[end].0 - pairs[end - 1].0 <= degeneracy_tol {
            end += 1;
        }
        pairs[start..end].sort_by_key(|(_, col)| {
            col.iter()
                .position(|z| z.norm() > weight_tol)
                .unwrap_or(usize::MAX)
        });
        start = end;
    }
    let (values, vectors) = pairs.into_iter().unzip();
    Ok(HermitianEigen { values, vectors })
}

/// Rotates a vector's global phase so its largest component is real positive.
pub(crate) fn fix_phase<T: Real>(v: &mut [Cplx<T>]) {
    let mut best = 0;
    let mut best_norm = T::zero();
    for (i, z) in v.iter().enumerate() {
        // Prefer the earliest index among (near-)equal magnitudes.
        if z.norm() > best_norm * (T::one() + T::lit(1e-9)) {
            best = i;
            best_norm = z.norm();
        }
    }
    if best_norm > T::zero() {
        let phase = v[best].conj() / best_norm;
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

/// Solves the real square system `a x = b` by Gaussian elimination with
/// partial pivoting. `a` is row-major `n x n`.
pub fn solve_real<T: Real>(mut a: Vec<T>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    if a.len() != n * n {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i * n + col]
                .abs()
                .partial_cmp(&a[j * n + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot * n + col].abs() <= T::min_positive_value() {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let f = a[row * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] -= f * v;
            }
            let bc = b[col];
            b[row] -= f * bc;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in (row + 1)..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> DenseMatrix<f64> {
        // Small LCG; enough for a deterministic fixture.
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = DenseMatrix::zeros(n, n);
        for r in 0..n {
            m[(r, r)] = cplx(next(), 0.0);
            for c in (r + 1)..n {
                let z = cplx(next(), next());
                m[(r, c)] = z;
                m[(c, r)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn jacobi_residuals_and_orthonormality() {
        for (n, seed) in [(1, 1), (2, 7), (5, 3), (16, 11), (33, 5)] {
            let m = random_hermitian(n, seed);
            let eig = eigh(&m, 1e-10).unwrap();
            for w in eig.values.windows(2) {
                assert!(w[0] <= w[1]);
            }
            for (e, v) in eig.values.iter().zip(&eig.vectors) {
                let mv = m.matvec(v).unwrap();
                let res: f64 = mv
                    .iter()
                    .zip(v)
                    .map(|(a, b)| (*a - *b * *e).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(res < 1e-12, "residual {res}");
            }
            for i in 0..n {
                for j in 0..n {
                    let ip: Cplx<f64> = eig.vectors[i]
                        .iter()
                        .zip(&eig.vectors[j])
                        .map(|(a, b)| a.conj() * b)
                        .sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - cplx(want, 0.0)).norm() < 1e-12);
                }
            }
            let tr: f64 = eig.values.iter().sum();
            assert!((tr - m.trace().re).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_ordering_is_by_basis_index() {
        let mut m = DenseMatrix::<f64>::zeros(3, 3);
        m[(0, 0)] = cplx(1.0, 0.0);
        m[(1, 1)] = cplx(-2.0, 0.0);
        m[(2, 2)] = cplx(1.0, 0.0);
        let eig = eigh(&m, 1e-10).unwrap();
        assert_eq!(eig.values, vec![-2.0, 1.0, 1.0]);
        assert!(eig.vectors[1][0].norm() > 0.99);
        assert!(eig.vectors[2][2].norm() > 0.99);
    }

    #[test]
    fn solve_real_small_system() {
        let a = vec![2.0f64, 1.0, 1.0, 3.0];
        let x = solve_real(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_real(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0]).is_none());
    }
}
