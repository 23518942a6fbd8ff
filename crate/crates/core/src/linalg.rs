//! Minimal dense linear algebra for the Laplace-GGN machinery.
//!
//! Everything here operates on square, row-major `Vec` storage. The only
//! factorization needed by the toolkit is the Cholesky decomposition of a
//! symmetric positive definite matrix, used to solve, sample and take
//! log-determinants of the weight-space precision. The Cholesky is blocked so
//! the inner loops stay contiguous; at the network sizes used here
//! (P around 1-2k) it runs in well under a quarter second.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense square matrix in row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    data: Vec<T>,
    n: usize,
}

impl<T: Real> SquareMatrix<T> {
    /// Zero matrix of order `n`.
    pub fn zeros(n: usize) -> Self {
        Self {
            data: vec![T::zero(); n * n],
            n,
        }
    }

    /// `scale * I`.
    pub fn scaled_identity(n: usize, scale: T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = scale;
        }
        m
    }

    /// Matrix order.
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    /// Rank-k symmetric accumulation `self += rows^T * diag(weights) * rows`,
    /// touching only the lower triangle. `rows` holds k slices of length n.
    pub fn add_weighted_outer_lower(&mut self, rows: &[&[T]], weights: &[T]) {
        assert_eq!(rows.len(), weights.len());
        let n = self.n;
        for (r, &w) in rows.iter().zip(weights) {
            assert_eq!(r.len(), n);
            for i in 0..n {
                let wi = w * r[i];
                if wi == T::zero() {
                    continue;
                }
                let dst = &mut self.data[i * n..i * n + i + 1];
                for (d, &rk) in dst.iter_mut().zip(&r[..=i]) {
                    *d += wi * rk;
                }
            }
        }
    }

    /// Gram accumulation `self += G^T G` over the lower triangle, where the
    /// k columns of `G` are stored transposed: `gt` is n x k row-major, row i
    /// holding feature i across all k samples.
    ///
    /// Tiled over row blocks so the right-hand rows stay cache resident.
    pub fn add_gram_lower(&mut self, gt: &[T], k: usize) {
        if k == 0 {
            return;
        }
        let n = self.n;
        assert_eq!(gt.len(), n * k);
        const TILE: usize = 64;
        let mut j0 = 0;
        while j0 < n {
            let jb = TILE.min(n - j0);
            for i in j0..n {
                let gi = &gt[i * k..(i + 1) * k];
                let hi = (j0 + jb).min(i + 1);
                let row = &mut self.data[i * n + j0..i * n + hi];
                for (off, slot) in row.iter_mut().enumerate() {
                    let gj = &gt[(j0 + off) * k..(j0 + off + 1) * k];
                    *slot += dot(gi, gj);
                }
            }
            j0 += jb;
        }
    }

    /// Copy the lower triangle onto the upper one.
    pub fn mirror_lower(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in 0..i {
                self.data[j * n + i] = self.data[i * n + j];
            }
        }
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// Largest absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

// Four independent accumulators keep the multiply-add chains pipelined;
// `mul_add` is avoided because it lowers to a libm call on baseline targets.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let (xa, xb) = (&a[4 * i..4 * i + 4], &b[4 * i..4 * i + 4]);
        acc[0] += xa[0] * xb[0];
        acc[1] += xa[1] * xb[1];
        acc[2] += xa[2] * xb[2];
        acc[3] += xa[3] * xb[3];
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// Stores the lower factor `L` (with `A = L L^T`) and its transpose, so both
/// forward and backward substitution run over contiguous rows.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: SquareMatrix<T>,
    upper: SquareMatrix<T>,
}

const CHOLESKY_BLOCK: usize = 48;

impl<T: Real> Cholesky<T> {
    /// Factor `a`, reading only its lower triangle.
    pub fn factor(a: &SquareMatrix<T>) -> Result<Self> {
        let n = a.n;
        let mut l = a.clone();
        // zero the strict upper triangle of the working copy
        for i in 0..n {
            for j in (i + 1)..n {
                l.data[i * n + j] = T::zero();
            }
        }
        let data = &mut l.data;

        let mut j0 = 0;
        while j0 < n {
            let jb = CHOLESKY_BLOCK.min(n - j0);
            // factor the diagonal block
            for j in j0..j0 + jb {
                let mut d = data[j * n + j];
                for k in j0..j {
                    let v = data[j * n + k];
                    d -= v * v;
                }
                let pivot_ok = d.is_finite() && d > T::zero();
                if !pivot_ok {
                    return Err(Error::NotPositiveDefinite {
                        index: j,
                        pivot: d.to_f64().unwrap_or(f64::NAN),
                    });
                }
                let piv = d.sqrt();
                data[j * n + j] = piv;
                let inv = piv.recip();
                for i in (j + 1)..j0 + jb {
                    let (head, tail) = data.split_at_mut(i * n);
                    let rowj = &head[j * n + j0..j * n + j];
                    let rowi = &mut tail[..n];
                    let mut s = rowi[j];
                    for (k, &lj) in rowj.iter().enumerate() {
                        s -= rowi[j0 + k] * lj;
                    }
                    rowi[j] = s * inv;
                }
            }
            // panel solve below the diagonal block
            for i in (j0 + jb)..n {
                for j in j0..j0 + jb {
                    let (head, tail) = data.split_at_mut(i * n);
                    let rowj = &head[j * n + j0..j * n + j + 1];
                    let rowi = &mut tail[..n];
                    let mut s = rowi[j];
                    let (pre, piv) = rowj.split_at(rowj.len() - 1);
                    for (k, &lj) in pre.iter().enumerate() {
                        s -= rowi[j0 + k] * lj;
                    }
                    rowi[j] = s / piv[0];
                }
            }
            // trailing symmetric update (lower triangle only)
            for i in (j0 + jb)..n {
                let (head, tail) = data.split_at_mut(i * n);
                let rowi = &mut tail[..n];
                let ri = &rowi[j0..j0 + jb];
                let mut acc = vec![T::zero(); i + 1 - (j0 + jb)];
                for (off, a) in acc.iter_mut().enumerate() {
                    let l = j0 + jb + off;
                    *a = if l == i {
                        dot(ri, ri)
                    } else {
                        dot(ri, &head[l * n + j0..l * n + j0 + jb])
                    };
                }
                for (off, a) in acc.into_iter().enumerate() {
                    rowi[j0 + jb + off] -= a;
                }
            }
            j0 += jb;
        }

        let mut upper = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                upper.data[j * n + i] = l.data[i * n + j];
            }
        }
        Ok(Self { lower: l, upper })
    }

    /// Wrap an existing lower factor (checkpoint restore); no validation
    /// beyond shape is performed.
    pub fn from_lower(lower: SquareMatrix<T>) -> Self {
        let n = lower.n;
        let mut upper = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                upper.data[j * n + i] = lower.data[i * n + j];
            }
        }
        Self { lower, upper }
    }

    pub fn order(&self) -> usize {
        self.lower.n
    }

    /// The lower factor `L`.
    pub fn lower(&self) -> &SquareMatrix<T> {
        &self.lower
    }

    /// `log det A = 2 * sum(log diag L)`.
    pub fn log_det(&self) -> T {
        let n = self.lower.n;
        let two = T::cast(2.0);
        (0..n).map(|i| self.lower.data[i * n + i].ln()).sum::<T>() * two
    }

    /// Solve `L y = b` (forward substitution).
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.lower.n;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] = (y[i] - s) / row[i];
        }
        y
    }

    /// Solve `L^T x = b` (backward substitution).
    pub fn solve_upper_transposed(&self, b: &[T]) -> Vec<T> {
        let n = self.upper.n;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let row = self.upper.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solve `A x = b` via the two triangular solves.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper_transposed(&self.solve_lower(b))
    }

    /// Quadratic form `b^T A^{-1} b`, evaluated as `|| L^{-1} b ||^2`.
    pub fn inv_quad_form(&self, b: &[T]) -> T {
        let y = self.solve_lower(b);
        dot(&y, &y)
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
///
/// Intended for small verification matrices (Gram PSD checks), not for the
/// hot path.
pub fn symmetric_eigenvalues<T: Real>(a: &SquareMatrix<T>) -> Vec<T> {
    let n = a.n;
    let mut m = a.clone();
    m.mirror_lower();
    let tol = T::cast(1e-14)
        * m.data
            .iter()
            .map(|v| v.abs())
            .fold(T::zero(), T::max)
            .max(T::one());
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m.get(p, q).abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= tol {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (T::cast(2.0) * apq);
                let t = {
                    let sign = if theta >= T::zero() {
                        T::one()
                    } else {
                        -T::one()
                    };
                    sign / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                let c = (T::one() + t * t).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| m.get(i, i)).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("non-finite eigenvalue"));
    eig
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_spd(n: usize, rank: usize, diag: f64, rng: &mut ChaCha12Rng) -> SquareMatrix<f64> {
        let mut a = SquareMatrix::scaled_identity(n, diag);
        let rows: Vec<Vec<f64>> = (0..rank)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let w = vec![0.5; rank];
        a.add_weighted_outer_lower(&refs, &w);
        a.mirror_lower();
        a
    }

    #[test]
    fn cholesky_reconstructs_the_matrix() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for &n in &[1usize, 2, 7, 40, 123] {
            let a = random_spd(n, n / 2 + 2, 1.2, &mut rng);
            let ch = Cholesky::factor(&a).unwrap();
            let l = ch.lower();
            let mut max_err = 0.0f64;
            for i in 0..n {
                for j in 0..=i {
                    let mut s = 0.0;
                    for k in 0..=j {
                        s += l.get(i, k) * l.get(j, k);
                    }
                    max_err = max_err.max((s - a.get(i, j)).abs());
                }
            }
            assert!(max_err < 1e-10, "n={n} err={max_err}");
        }
    }

    #[test]
    fn cholesky_spans_block_boundaries() {
        // orders straddling the 48-wide blocking
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for &n in &[47usize, 48, 49, 96, 97, 150] {
            let a = random_spd(n, 10, 2.0, &mut rng);
            let ch = Cholesky::factor(&a).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = ch.solve(&b);
            let r = a.matvec(&x);
            let err = r
                .iter()
                .zip(&b)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} err={err}");
        }
    }

    #[test]
    fn gram_accumulation_matches_rank_one_updates() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (n, k) = (131, 37);
        let samples: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();

        let mut via_outer = SquareMatrix::zeros(n);
        let refs: Vec<&[f64]> = samples.iter().map(|r| r.as_slice()).collect();
        via_outer.add_weighted_outer_lower(&refs, &vec![1.0; k]);

        // transpose into n x k
        let mut gt = vec![0.0f64; n * k];
        for (s, row) in samples.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                gt[i * k + s] = v;
            }
        }
        let mut via_gram = SquareMatrix::zeros(n);
        via_gram.add_gram_lower(&gt, k);

        assert!(via_outer.max_abs_diff(&via_gram) < 1e-12);
    }

    #[test]
    fn solve_and_quad_form_agree() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 30;
        let a = random_spd(n, 8, 1.0, &mut rng);
        let ch = Cholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = ch.solve(&b);
        let direct = dot(&b, &x);
        let via_quad = ch.inv_quad_form(&b);
        assert!((direct - via_quad).abs() < 1e-10);
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let n = 12;
        let a = random_spd(n, 5, 1.5, &mut rng);
        let ch = Cholesky::factor(&a).unwrap();
        let eig = symmetric_eigenvalues(&a);
        let from_eig: f64 = eig.iter().map(|e| e.ln()).sum();
        assert!((ch.log_det() - from_eig).abs() < 1e-9);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = SquareMatrix::scaled_identity(3, 1.0);
        a.set(2, 2, -4.0);
        match Cholesky::factor(&a) {
            Err(Error::NotPositiveDefinite { index: 2, .. }) => {}
            other => panic!("expected pivot failure, got {other:?}"),
        }
    }

    #[test]
    fn triangular_solves_invert_the_factors() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let n = 25;
        let a = random_spd(n, 6, 1.0, &mut rng);
        let ch = Cholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = ch.solve_lower(&b);
        // L y should reproduce b
        for i in 0..n {
            let s = dot(&ch.lower().row(i)[..=i], &y[..=i]);
            assert!((s - b[i]).abs() < 1e-11);
        }
        let x = ch.solve_upper_transposed(&b);
        for i in 0..n {
            let mut s = 0.0;
            for j in i..n {
                s += ch.lower().get(j, i) * x[j];
            }
            assert!((s - b[i]).abs() < 1e-11);
        }
    }
}
