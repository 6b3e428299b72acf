//! Small fixed-size complex linear algebra for spin-1/2 operators.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Cartesian 3-vector.
pub type Vec3 = [f64; 3];

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// A 2x2 complex matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub const fn identity() -> Self {
        Mat2::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zeros() -> Self {
        Mat2::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub const fn pauli_x() -> Self {
        Mat2::new(ZERO, ONE, ONE, ZERO)
    }

    pub fn pauli_y() -> Self {
        Mat2::new(ZERO, -I, I, ZERO)
    }

    pub const fn pauli_z() -> Self {
        Mat2::new(ONE, ZERO, ZERO, C64 { re: -1.0, im: 0.0 })
    }

    pub fn hadamard() -> Self {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Mat2::new(s, s, s, -s)
    }

    /// `v . sigma / 2`, the spin-1/2 operator for a field vector `v`.
    pub fn spin_half(v: &Vec3) -> Self {
        let h = 0.5;
        Mat2::new(
            C64::new(h * v[2], 0.0),
            C64::new(h * v[0], -h * v[1]),
            C64::new(h * v[0], h * v[1]),
            C64::new(-h * v[2], 0.0),
        )
    }

    /// `exp(-i (omega . sigma / 2) t)` via the axis-angle closed form.
    pub fn precession(omega: &Vec3, t: f64) -> Self {
        let w = norm(omega);
        if w == 0.0 || t == 0.0 {
            return Mat2::identity();
        }
        let half = 0.5 * w * t;
        let (s, c) = half.sin_cos();
        let k = s / w;
        let (nx, ny, nz) = (omega[0] * k, omega[1] * k, omega[2] * k);
        // cos - i sin (n . sigma)
        Mat2::new(
            C64::new(c, -nz),
            C64::new(-ny, -nx),
            C64::new(ny, -nx),
            C64::new(c, nz),
        )
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Mat2::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.0;
        Mat2::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn apply(&self, v: &[C64; 2]) -> [C64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// Largest elementwise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// `max |(U^dagger U - 1)_ij|`.
    pub fn unitarity_residual(&self) -> f64 {
        (self.adjoint() * *self - Mat2::identity()).max_abs()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    /// Eigenvalues of a Hermitian 2x2, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let a = self.0[0][0].re;
        let d = self.0[1][1].re;
        let b = self.0[0][1];
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        [mean - r, mean + r]
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2::new(a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1])
    }
}

/// Bloch vector `(<sx>, <sy>, <sz>)` of a normalized spinor.
pub fn bloch_vector(psi: &[C64; 2]) -> Vec3 {
    let rho01 = psi[0] * psi[1].conj();
    [
        2.0 * rho01.re,
        -2.0 * rho01.im,
        psi[0].norm_sqr() - psi[1].norm_sqr(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn precession_about_z_is_diagonal_phase() {
        let u = Mat2::precession(&[0.0, 0.0, 2.0 * PI], 0.5);
        let expected = Mat2::new(C64::new(0.0, -1.0), ZERO, ZERO, C64::new(0.0, 1.0));
        assert!((u - expected).max_abs() < 1e-15);
    }

    #[test]
    fn precession_matches_series_expansion() {
        let omega = [0.3, -1.1, 0.7];
        let t = 0.9;
        let h = Mat2::spin_half(&omega);
        let gen = h.scale(C64::new(0.0, -t));
        // truncated Taylor series as an independent route
        let mut term = Mat2::identity();
        let mut sum = Mat2::identity();
        for k in 1..40 {
            term = (term * gen).scale(C64::new(1.0 / k as f64, 0.0));
            sum = sum + term;
        }
        assert!((Mat2::precession(&omega, t) - sum).max_abs() < 1e-14);
    }

    #[test]
    fn bloch_vector_of_basis_states() {
        assert_eq!(bloch_vector(&[ONE, ZERO]), [0.0, 0.0, 1.0]);
        assert_eq!(bloch_vector(&[ZERO, ONE]), [0.0, 0.0, -1.0]);
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let b = bloch_vector(&[s, s]);
        assert!((b[0] - 1.0).abs() < 1e-15 && b[1].abs() < 1e-15);
    }
}
