//! Dense complex square matrices and qubit-local operations.
//!
//! Basis ordering: qubit 0 is the most significant bit. An optional
//! passive factor of dimension `d` (an environment or a second spin that
//! is never pulsed) sits after all qubits, so the full dimension is
//! `2^n * d`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

pub use num_complex::Complex64 as C64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// A 2x2 complex matrix acting on a single qubit.
pub type Mat2 = [[C64; 2]; 2];

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major entries. Panics if the length is not a square.
    pub fn from_row_major(data: Vec<C64>) -> Self {
        let dim = (data.len() as f64).sqrt().round() as usize;
        assert_eq!(dim * dim, data.len(), "row-major data is not square");
        Self { dim, data }
    }

    pub fn from_mat2(m: &Mat2) -> Self {
        Self { dim: 2, data: vec![m[0][0], m[0][1], m[1][0], m[1][1]] }
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    /// `out = self * rhs`, reusing the output allocation.
    pub fn mul_into(&self, rhs: &Self, out: &mut Self) {
        debug_assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        out.dim = n;
        out.data.clear();
        out.data.resize(n * n, ZERO);
        for i in 0..n {
            let row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let b = &rhs.data[k * n..(k + 1) * n];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
    }

    /// `out += alpha * self * rhs`.
    pub fn mul_acc(&self, rhs: &Self, alpha: C64, out: &mut Self) {
        debug_assert_eq!(self.dim, rhs.dim);
        debug_assert_eq!(self.dim, out.dim);
        let n = self.dim;
        for i in 0..n {
            let row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let a = a * alpha;
                let b = &rhs.data[k * n..(k + 1) * n];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = ZERO);
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.dim);
        self.mul_into(rhs, &mut out);
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_mut(&mut self, s: C64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn copy_from(&mut self, other: &Self) {
        self.dim = other.dim;
        self.data.clear();
        self.data.extend_from_slice(&other.data);
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm divided by `sqrt(dim)`; equals 1 for any unitary.
    pub fn normalized_norm(&self) -> f64 {
        self.frobenius_norm() / (self.dim as f64).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other) - other.matmul(self)
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        self.matmul(other) + other.matmul(self)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim, other.dim);
        Self::from_fn(n * m, |i, j| self[(i / m, j / m)] * other[(i % m, j % m)])
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.adjoint()).frobenius_norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol * self.frobenius_norm().max(1.0)
    }

    /// `||U^dagger U - 1||_F`
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint().matmul(self) - Self::identity(self.dim)).frobenius_norm()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn powi(&self, mut n: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::identity(self.dim);
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.matmul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.matmul(&base);
            }
        }
        acc
    }

    /// Left-multiplies by `w` acting on qubit `q` (bit stride `stride`).
    pub fn apply_left(&mut self, w: &Mat2, stride: usize) {
        let n = self.dim;
        for base in 0..n {
            if base & stride != 0 {
                continue;
            }
            let (r0, r1) = (base * n, (base + stride) * n);
            for c in 0..n {
                let a = self.data[r0 + c];
                let b = self.data[r1 + c];
                self.data[r0 + c] = w[0][0] * a + w[0][1] * b;
                self.data[r1 + c] = w[1][0] * a + w[1][1] * b;
            }
        }
    }

    /// Right-multiplies by `w` acting on qubit with bit stride `stride`.
    pub fn apply_right(&mut self, w: &Mat2, stride: usize) {
        let n = self.dim;
        for r in 0..n {
            let row = &mut self.data[r * n..(r + 1) * n];
            for base in 0..n {
                if base & stride != 0 {
                    continue;
                }
                let a = row[base];
                let b = row[base + stride];
                row[base] = a * w[0][0] + b * w[1][0];
                row[base + stride] = a * w[0][1] + b * w[1][1];
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self - other).max_abs()
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

macro_rules! elementwise {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr<&ComplexMatrix> for &ComplexMatrix {
            type Output = ComplexMatrix;
            fn $f(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                assert_eq!(self.dim, rhs.dim, "dimension mismatch");
                ComplexMatrix {
                    dim: self.dim,
                    data: self.data.iter().zip(&rhs.data).map(|(a, b)| a $op b).collect(),
                }
            }
        }
        impl $tr<ComplexMatrix> for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $f(self, rhs: ComplexMatrix) -> ComplexMatrix {
                (&self).$f(&rhs)
            }
        }
        impl $tr<&ComplexMatrix> for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $f(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                (&self).$f(rhs)
            }
        }
    };
}

elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        self.axpy(ONE, rhs);
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        self.axpy(-ONE, rhs);
    }
}

impl Mul<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Mul<ComplexMatrix> for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: ComplexMatrix) -> ComplexMatrix {
        self.matmul(&rhs)
    }
}

impl Mul<C64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, s: C64) -> ComplexMatrix {
        self.scaled(s)
    }
}

impl Mul<f64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, s: f64) -> ComplexMatrix {
        self.scaled(C64::new(s, 0.0))
    }
}

impl Mul<f64> for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, s: f64) -> ComplexMatrix {
        self.scaled(C64::new(s, 0.0))
    }
}

impl Mul<C64> for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, s: C64) -> ComplexMatrix {
        self.scaled(s)
    }
}

impl Neg for ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scaled(-ONE)
    }
}

/// Pauli axis label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

pub fn pauli2(axis: Axis) -> Mat2 {
    match axis {
        Axis::X => [[ZERO, ONE], [ONE, ZERO]],
        Axis::Y => [[ZERO, -I], [I, ZERO]],
        Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
    }
}

pub fn pauli(axis: Axis) -> ComplexMatrix {
    ComplexMatrix::from_mat2(&pauli2(axis))
}

pub fn sigma_x() -> ComplexMatrix {
    pauli(Axis::X)
}

pub fn sigma_y() -> ComplexMatrix {
    pauli(Axis::Y)
}

pub fn sigma_z() -> ComplexMatrix {
    pauli(Axis::Z)
}

/// Rotation `exp(-i angle/2 (cos(psi) sx + sin(psi) sy))` about an in-plane axis.
pub fn inplane_rotation(angle: f64, psi: f64) -> Mat2 {
    let (s, c) = (0.5 * angle).sin_cos();
    let e = C64::from_polar(1.0, psi);
    // -i sin * (cos psi sx + sin psi sy) has off-diagonals -i s e^{-i psi}, -i s e^{i psi}
    [[C64::new(c, 0.0), -I * s * e.conj()], [-I * s * e, C64::new(c, 0.0)]]
}

pub fn mat2_adjoint(w: &Mat2) -> Mat2 {
    [[w[0][0].conj(), w[1][0].conj()], [w[0][1].conj(), w[1][1].conj()]]
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Tensor-product layout: `n_qubits` pulsed qubits followed by a passive factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_qubits: usize,
    pub passive_dim: usize,
}

impl Layout {
    pub fn qubits(n_qubits: usize) -> Self {
        Self { n_qubits, passive_dim: 1 }
    }

    pub fn dim(&self) -> usize {
        (1usize << self.n_qubits) * self.passive_dim
    }

    /// Index stride of qubit `q`'s bit in the full basis.
    pub fn stride(&self, q: usize) -> usize {
        assert!(q < self.n_qubits, "qubit {q} out of range");
        (1usize << (self.n_qubits - q - 1)) * self.passive_dim
    }

    /// Embeds a single-qubit operator acting on qubit `q`.
    pub fn embed(&self, op: &Mat2, q: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::identity(self.dim());
        m.apply_left(op, self.stride(q));
        m
    }

    /// Embeds a product of Pauli operators on the given qubits.
    pub fn pauli_string(&self, factors: &[(usize, Axis)]) -> ComplexMatrix {
        let mut m = ComplexMatrix::identity(self.dim());
        for &(q, a) in factors {
            m.apply_left(&pauli2(a), self.stride(q));
        }
        m
    }
}
