//! Dense linear algebra for small symmetric matrices (Gram matrices,
//! subspace Hamiltonians, Rayleigh-Ritz blocks).
//!
//! Matrices are stored row-major in flat slices. The eigensolver is a cyclic
//! Jacobi iteration: deterministic, branch-light, and accurate to machine
//! precision for the matrix sizes that occur here (a handful of orbitals up
//! to a few hundred rows for dense cross-checks).

use crate::real::Real;

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub struct SymEig<T> {
    pub values: Vec<T>,
    /// Row-major `n x n`; column `j` is the eigenvector of `values[j]`.
    pub vectors: Vec<T>,
}

/// Cyclic Jacobi eigendecomposition of the symmetric matrix `a` (row-major,
/// `n x n`). Only the lower triangle is read.
pub fn symeig<T: Real>(a: &[T], n: usize) -> SymEig<T> {
    assert_eq!(a.len(), n * n, "matrix shape");
    let mut m = a.to_vec();
    // Symmetrize defensively; quadrature asymmetry upstream is at rounding level.
    for i in 0..n {
        for j in 0..i {
            let s = (m[i * n + j] + m[j * n + i]) * T::of(0.5);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }

    let off = |m: &[T]| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..i {
                s = s + m[i * n + j] * m[i * n + j];
            }
        }
        s.sqrt()
    };
    let scale = {
        let mut s = T::zero();
        for i in 0..n {
            s = s.max(m[i * n + i].abs());
        }
        s.max(off(&m)).max(T::one())
    };
    let tol = T::epsilon() * scale * T::of(n as f64);

    for _sweep in 0..64 {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= T::epsilon() * scale {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[i * n + i]
            .partial_cmp(&m[j * n + j])
            .expect("finite eigenvalues")
    });
    let values: Vec<T> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![T::zero(); n * n];
    for (jnew, &jold) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + jnew] = v[i * n + jold];
        }
    }
    SymEig { values, vectors }
}

/// `c = a * b` for row-major `n x n` matrices.
pub fn matmul<T: Real>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == T::zero() {
                continue;
            }
            for j in 0..n {
                c[i * n + j] = c[i * n + j] + aik * b[k * n + j];
            }
        }
    }
    c
}

pub fn transpose<T: Real>(a: &[T], n: usize) -> Vec<T> {
    let mut t = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}

/// Inverse square root `a^{-1/2}` of a symmetric positive definite matrix.
///
/// Fails with the offending eigenvalue when the spectrum drops below
/// `min_eigenvalue` (numerically rank-deficient input).
pub fn inv_sqrt_spd<T: Real>(a: &[T], n: usize, min_eigenvalue: T) -> Result<Vec<T>, T> {
    let eig = symeig(a, n);
    if eig.values[0] < min_eigenvalue {
        return Err(eig.values[0]);
    }
    let mut scaled = vec![T::zero(); n * n];
    for j in 0..n {
        let w = T::one() / eig.values[j].sqrt();
        for i in 0..n {
            scaled[i * n + j] = eig.vectors[i * n + j] * w;
        }
    }
    Ok(matmul(&scaled, &transpose(&eig.vectors, n), n))
}

/// Orthogonal polar factor of `m`: the maximizer of `tr(Rᵀ m)` over O(n),
/// computed as `m (mᵀ m)^{-1/2}`. Falls back to the identity when `m` is
/// numerically singular.
pub fn polar_factor<T: Real>(m: &[T], n: usize) -> Vec<T> {
    let mtm = matmul(&transpose(m, n), m, n);
    match inv_sqrt_spd(&mtm, n, T::of(1e-12)) {
        Ok(s) => matmul(m, &s, n),
        Err(_) => {
            let mut id = vec![T::zero(); n * n];
            for i in 0..n {
                id[i * n + i] = T::one();
            }
            id
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn symeig_diagonal_is_identity() {
        let a = [3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        let e = symeig(&a, 3);
        assert!(max_abs_diff(&e.values, &[1.0, 2.0, 3.0]) < 1e-14);
    }

    #[test]
    fn symeig_reconstructs_matrix() {
        // A = V diag(w) Vᵀ must reproduce the input.
        let n = 5;
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 2.0 } else { 0.0 };
            }
        }
        let e = symeig(&a, n);
        let mut vw = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                vw[i * n + j] = e.vectors[i * n + j] * e.values[j];
            }
        }
        let recon = matmul(&vw, &transpose(&e.vectors, n), n);
        assert!(max_abs_diff(&recon, &a) < 1e-12);
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let a = [2.0, 0.3, 0.3, 1.0];
        let s = inv_sqrt_spd(&a, 2, 1e-12).unwrap();
        let s2 = matmul(&s, &s, 2);
        let prod = matmul(&s2, &a, 2);
        assert!(max_abs_diff(&prod, &[1.0, 0.0, 0.0, 1.0]) < 1e-12);
    }

    #[test]
    fn inv_sqrt_rejects_singular() {
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(inv_sqrt_spd(&a, 2, 1e-8).is_err());
    }

    #[test]
    fn polar_factor_is_orthogonal() {
        let m = [0.9, -0.2, 0.4, 1.3];
        let r = polar_factor(&m, 2);
        let rtr = matmul(&transpose(&r, 2), &r, 2);
        assert!(max_abs_diff(&rtr, &[1.0, 0.0, 0.0, 1.0]) < 1e-12);
    }
}
