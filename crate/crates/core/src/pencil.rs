//! Linearization of `Z(lambda) = lambda^2 (I - Theta) + lambda H_d + I`.
//!
//! With `Psi = (psi, lambda psi)` the quadratic problem `Z psi = 0` becomes
//! `A Psi = lambda B Psi` with
//! `A = [[0, I], [I, H_d]]` and `B = diag(I, -I + Theta)`.

use nalgebra::{DMatrix, DVector};

use crate::model::OpenLatticeModel;
use crate::{CMatrix, RMatrix, C64};

/// The `(A, B)` pencil and the quadratic matrix it linearizes.
#[derive(Clone, Debug)]
pub struct QuadraticPencil {
    h: RMatrix,
    theta: DVector<f64>,
    a: RMatrix,
    b: DVector<f64>,
}

impl QuadraticPencil {
    /// Pencil of a model.
    pub fn new(model: &OpenLatticeModel) -> Self {
        Self::from_parts(model.dot_matrix().clone(), model.theta_diagonal())
    }

    /// Pencil from `H_d` and the diagonal of `Theta`.
    pub fn from_parts(h: RMatrix, theta: DVector<f64>) -> Self {
        let n = h.nrows();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            a[(i, n + i)] = 1.0;
            a[(n + i, i)] = 1.0;
        }
        a.view_mut((n, n), (n, n)).copy_from(&h);
        let mut b = DVector::from_element(2 * n, 1.0);
        for i in 0..n {
            b[n + i] = theta[i] - 1.0;
        }
        Self { h, theta, a, b }
    }

    /// Dot dimension `N`.
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// `A`, real symmetric `2N x 2N`.
    pub fn a_matrix(&self) -> &RMatrix {
        &self.a
    }

    /// Diagonal of `B`.
    pub fn b_diagonal(&self) -> &DVector<f64> {
        &self.b
    }

    /// `B` as a full matrix.
    pub fn b_matrix(&self) -> RMatrix {
        DMatrix::from_diagonal(&self.b)
    }

    /// Dot Hamiltonian.
    pub fn h(&self) -> &RMatrix {
        &self.h
    }

    /// Diagonal of `Theta`.
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// `Z(lambda)`.
    pub fn z(&self, lambda: C64) -> CMatrix {
        let n = self.n();
        let l2 = lambda * lambda;
        let mut z = self.h.map(|v| lambda * v);
        for i in 0..n {
            z[(i, i)] += l2 * (1.0 - self.theta[i]) + 1.0;
        }
        z
    }

    /// `dZ/dlambda = 2 lambda (I - Theta) + H_d`.
    pub fn dz(&self, lambda: C64) -> CMatrix {
        let mut z = self.h.map(C64::from);
        for i in 0..self.n() {
            z[(i, i)] += lambda * 2.0 * (1.0 - self.theta[i]);
        }
        z
    }

    /// `A - lambda B`.
    pub fn a_minus_lambda_b(&self, lambda: C64) -> CMatrix {
        let mut m = self.a.map(C64::from);
        for i in 0..2 * self.n() {
            m[(i, i)] -= lambda * self.b[i];
        }
        m
    }

    /// `X(lambda) = [[-H - lambda (I - Theta), I], [I, 0]]`.
    pub fn x_matrix(&self, lambda: C64) -> CMatrix {
        let n = self.n();
        let mut x = CMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                x[(i, j)] = C64::from(-self.h[(i, j)]);
            }
            x[(i, i)] -= lambda * (1.0 - self.theta[i]);
            x[(i, n + i)] = C64::from(1.0);
            x[(n + i, i)] = C64::from(1.0);
        }
        x
    }

    /// `Y1(lambda) = [[I, 0], [lambda I, I]]`.
    pub fn y1_matrix(&self, lambda: C64) -> CMatrix {
        let n = self.n();
        let mut y = CMatrix::identity(2 * n, 2 * n);
        for i in 0..n {
            y[(n + i, i)] = lambda;
        }
        y
    }

    /// `Y2(lambda) = [[I, lambda I], [0, I]]`.
    pub fn y2_matrix(&self, lambda: C64) -> CMatrix {
        let n = self.n();
        let mut y = CMatrix::identity(2 * n, 2 * n);
        for i in 0..n {
            y[(i, n + i)] = lambda;
        }
        y
    }

    /// `diag(Z(lambda), I)`, the right-hand side of both block identities.
    pub fn block_target(&self, lambda: C64) -> CMatrix {
        let n = self.n();
        let mut t = CMatrix::identity(2 * n, 2 * n);
        t.view_mut((0, 0), (n, n)).copy_from(&self.z(lambda));
        t
    }

    /// `max |X (A - lambda B) Y1 - diag(Z, I)|`.
    pub fn identity_residual_y1(&self, lambda: C64) -> f64 {
        let lhs = self.x_matrix(lambda) * self.a_minus_lambda_b(lambda) * self.y1_matrix(lambda);
        max_abs(&(lhs - self.block_target(lambda)))
    }

    /// `max |Y2 (A - lambda B) X - diag(Z, I)|`, the transposed identity.
    pub fn identity_residual_y2(&self, lambda: C64) -> f64 {
        let lhs = self.y2_matrix(lambda) * self.a_minus_lambda_b(lambda) * self.x_matrix(lambda);
        max_abs(&(lhs - self.block_target(lambda)))
    }
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}
