//! Small dense complex linear algebra: spin-1 operators, Kronecker products,
//! column-stacking vectorisation and a scaling-and-squaring matrix exponential.

use nalgebra::{DMatrix, SMatrix, SVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat3 = SMatrix<C64, 3, 3>;
pub type Mat9 = SMatrix<C64, 9, 9>;
pub type Vec9 = SVector<C64, 9>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Zeeman-basis index of spin projection `m_s` ∈ {−1, 0, +1}.
/// Basis order is (|−1⟩, |0⟩, |+1⟩).
#[inline]
pub fn zeeman_index(m_s: i32) -> usize {
    (m_s + 1) as usize
}

pub fn spin_z() -> Mat3 {
    Mat3::from_diagonal(&SVector::from([c(-1.0), c(0.0), c(1.0)]))
}

/// S₊ = √2 (|0⟩⟨−1| + |+1⟩⟨0|).
pub fn spin_plus() -> Mat3 {
    let s = std::f64::consts::SQRT_2;
    let mut m = Mat3::zeros();
    m[(1, 0)] = c(s);
    m[(2, 1)] = c(s);
    m
}

pub fn spin_x() -> Mat3 {
    let p = spin_plus();
    (p + p.adjoint()) * c(0.5)
}

pub fn spin_y() -> Mat3 {
    let p = spin_plus();
    (p - p.adjoint()) * C64::new(0.0, -0.5)
}

/// B·S for a local-frame vector.
pub fn spin_dot(v: &[f64; 3]) -> Mat3 {
    spin_x() * c(v[0]) + spin_y() * c(v[1]) + spin_z() * c(v[2])
}

/// Kronecker product of two 3×3 matrices.
pub fn kron3(a: &Mat3, b: &Mat3) -> Mat9 {
    let mut out = Mat9::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let aij = a[(i, j)];
            for k in 0..3 {
                for l in 0..3 {
                    out[(3 * i + k, 3 * j + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Column-stacking vectorisation: vec(ρ)[i + 3j] = ρ[i, j].
pub fn vectorize(rho: &Mat3) -> Vec9 {
    let mut v = Vec9::zeros();
    for j in 0..3 {
        for i in 0..3 {
            v[i + 3 * j] = rho[(i, j)];
        }
    }
    v
}

pub fn unvectorize(v: &Vec9) -> Mat3 {
    let mut rho = Mat3::zeros();
    for j in 0..3 {
        for i in 0..3 {
            rho[(i, j)] = v[i + 3 * j];
        }
    }
    rho
}

fn one_norm<const N: usize>(a: &SMatrix<C64, N, N>) -> f64 {
    (0..N)
        .map(|j| (0..N).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the [13/13] diagonal Padé
/// approximant (Higham 2005). Backward error is at unit-roundoff level.
pub fn expm<const N: usize>(a: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    let norm = one_norm(a);
    if norm == 0.0 {
        return SMatrix::identity();
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * c(0.5f64.powi(s));
    let id = SMatrix::<C64, N, N>::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let b = |k: usize| c(PADE13[k]);
    let u_inner = a6 * (a6 * b(13) + a4 * b(11) + a2 * b(9))
        + a6 * b(7)
        + a4 * b(5)
        + a2 * b(3)
        + id * b(1);
    let u = a * u_inner;
    let v = a6 * (a6 * b(12) + a4 * b(10) + a2 * b(8)) + a6 * b(6) + a4 * b(4) + a2 * b(2) + id * b(0);
    let p = v + u;
    let q = v - u;
    // Solved dynamically: const-generic LU needs typenum bounds.
    let qd = DMatrix::from_column_slice(N, N, q.as_slice());
    let pd = DMatrix::from_column_slice(N, N, p.as_slice());
    let sol = qd
        .lu()
        .solve(&pd)
        .expect("Padé denominator is nonsingular for scaled arguments");
    let mut r = SMatrix::<C64, N, N>::from_column_slice(sol.as_slice());
    for _ in 0..s {
        r = r * r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn spin_commutation() {
        let (x, y, z) = (spin_x(), spin_y(), spin_z());
        let comm = x * y - y * x - z * I;
        assert!(max_abs(&comm) < 1e-15);
        let casimir = x * x + y * y + z * z - Mat3::identity() * c(2.0);
        assert!(max_abs(&casimir) < 1e-15);
    }

    #[test]
    fn expm_of_diagonal() {
        let mut d = Mat3::zeros();
        d[(0, 0)] = C64::new(0.0, 3.0);
        d[(1, 1)] = c(-2.0);
        d[(2, 2)] = C64::new(40.0, 7.0);
        let e = expm(&d);
        assert!((e[(0, 0)] - (C64::new(0.0, 3.0)).exp()).norm() < 1e-14);
        assert!((e[(1, 1)] - c((-2.0f64).exp())).norm() < 1e-15);
        let want = C64::new(40.0, 7.0).exp();
        assert!((e[(2, 2)] - want).norm() / want.norm() < 1e-13);
    }

    #[test]
    fn expm_agrees_with_eigen_route_for_hermitian_generator() {
        // exp(-iHt) via Padé vs via spectral decomposition.
        let h = spin_x() * c(1.7) + spin_z() * c(0.4) + (spin_y() * spin_z() + spin_z() * spin_y()) * c(0.3);
        let t = 5.3;
        let e = expm(&(h * C64::new(0.0, -t)));
        let eig = h.symmetric_eigen();
        let mut d = Mat3::zeros();
        for k in 0..3 {
            d[(k, k)] = (C64::new(0.0, -t * eig.eigenvalues[k])).exp();
        }
        let e2 = eig.eigenvectors * d * eig.eigenvectors.adjoint();
        assert!(max_abs(&(e - e2)) < 1e-13);
        assert!(max_abs(&(e * e.adjoint() - Mat3::identity())) < 1e-13);
    }

    #[test]
    fn kron_vec_identity() {
        // vec(A X B) = (Bᵀ ⊗ A) vec(X)
        let a = spin_x() + spin_z() * C64::new(0.2, 0.5);
        let b = spin_y() * c(0.7) + Mat3::identity();
        let x = spin_plus() + spin_z() * C64::new(0.0, 1.0);
        let lhs = vectorize(&(a * x * b));
        let rhs = kron3(&b.transpose(), &a) * vectorize(&x);
        assert!((lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);
        assert_eq!(unvectorize(&vectorize(&x)), x);
    }
}
