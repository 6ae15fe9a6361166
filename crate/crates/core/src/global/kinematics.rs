//! Pointwise kinematics and the nodal stationarity potential.
//!
//! With `F` the deformation gradient, `G = ∇λ` the multiplier gradient,
//! `e = E(F)` the Green strain and `a = sym(FᵀG)` (both Voigt, engineering
//! shear), the data-driven global step is stationary in `(F, G)` of
//!
//! ```text
//! π(F, G) = ½ (e − ê)ᵀ C (e − ê) − ½ aᵀ C a − aᵀ ŝ
//! ```
//!
//! and the model-based reference uses `π(F) = ½ eᵀ C e`.

use crate::phase::{Mat3, Vec3};

/// 2×2 matrix, `m[i][j]`.
pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

fn mat3_vec(c: &Mat3, v: &Vec3) -> Vec3 {
    [
        c[0][0] * v[0] + c[0][1] * v[1] + c[0][2] * v[2],
        c[1][0] * v[0] + c[1][1] * v[1] + c[1][2] * v[2],
        c[2][0] * v[0] + c[2][1] * v[1] + c[2][2] * v[2],
    ]
}

fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn add_scaled(acc: &mut Mat2, s: f64, m: &Mat2) {
    for i in 0..2 {
        for j in 0..2 {
            acc[i][j] += s * m[i][j];
        }
    }
}

/// Voigt strain-like vector of `sym(AᵀB)`: `((AᵀB)₁₁, (AᵀB)₂₂, (AᵀB)₁₂ + (AᵀB)₂₁)`.
pub fn sym_transpose_product(a: &Mat2, b: &Mat2) -> Vec3 {
    let p = |i: usize, j: usize| a[0][i] * b[0][j] + a[1][i] * b[1][j];
    [p(0, 0), p(1, 1), p(0, 1) + p(1, 0)]
}

/// Symmetric tensor of a Voigt stress-like vector `(s11, s22, s12)`.
pub fn stress_tensor(s: &Vec3) -> Mat2 {
    [[s[0], s[2]], [s[2], s[1]]]
}

/// Green–Lagrange strain `½(FᵀF − I)` in Voigt form `(E11, E22, 2E12)`.
pub fn green_strain(f: &Mat2) -> Vec3 {
    let p = sym_transpose_product(f, f);
    [0.5 * (p[0] - 1.0), 0.5 * (p[1] - 1.0), 0.5 * p[2]]
}

/// Stress update `S = C · sym(FᵀG) + ŝ`.
pub fn stress_update(f: &Mat2, g: &Mat2, c: &Mat3, s_hat: &Vec3) -> Vec3 {
    let ca = mat3_vec(c, &sym_transpose_product(f, g));
    [ca[0] + s_hat[0], ca[1] + s_hat[1], ca[2] + s_hat[2]]
}

/// Nodal potential of the global step. Field 0 is the deformation gradient,
/// field 1 (data-driven only) the multiplier gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodalPotential {
    /// `½ eᵀ C e`.
    Model { c: Mat3 },
    /// Data-driven potential with optimal material data `(ê, ŝ)`.
    DataDriven { c: Mat3, e_hat: Vec3, s_hat: Vec3 },
}

impl NodalPotential {
    pub fn num_fields(&self) -> usize {
        match self {
            Self::Model { .. } => 1,
            Self::DataDriven { .. } => 2,
        }
    }

    pub fn value(&self, x: &[Mat2; 2]) -> f64 {
        match self {
            Self::Model { c } => {
                let e = green_strain(&x[0]);
                0.5 * dot3(&e, &mat3_vec(c, &e))
            }
            Self::DataDriven { c, e_hat, s_hat } => {
                let e = green_strain(&x[0]);
                let de = [e[0] - e_hat[0], e[1] - e_hat[1], e[2] - e_hat[2]];
                let a = sym_transpose_product(&x[0], &x[1]);
                0.5 * dot3(&de, &mat3_vec(c, &de))
                    - 0.5 * dot3(&a, &mat3_vec(c, &a))
                    - dot3(&a, s_hat)
            }
        }
    }

    /// `∂π/∂X_f` for every field.
    pub fn gradient(&self, x: &[Mat2; 2]) -> [Mat2; 2] {
        match self {
            Self::Model { c } => {
                let sigma = stress_tensor(&mat3_vec(c, &green_strain(&x[0])));
                [mul(&x[0], &sigma), [[0.0; 2]; 2]]
            }
            Self::DataDriven { c, e_hat, s_hat } => {
                let (f, g) = (&x[0], &x[1]);
                let (sigma, t) = self.dd_stresses(c, e_hat, s_hat, f, g);
                let mut df = mul(f, &sigma);
                add_scaled(&mut df, -1.0, &mul(g, &t));
                let mut dg = mul(f, &t);
                dg.iter_mut().flatten().for_each(|v| *v = -*v);
                [df, dg]
            }
        }
    }

    /// `Σ_E = C(e − ê)` and `T = C a + ŝ` as tensors.
    fn dd_stresses(
        &self,
        c: &Mat3,
        e_hat: &Vec3,
        s_hat: &Vec3,
        f: &Mat2,
        g: &Mat2,
    ) -> (Mat2, Mat2) {
        let e = green_strain(f);
        let de = [e[0] - e_hat[0], e[1] - e_hat[1], e[2] - e_hat[2]];
        let sigma = stress_tensor(&mat3_vec(c, &de));
        let t = stress_tensor(&stress_update(f, g, c, s_hat));
        (sigma, t)
    }

    /// Second derivatives `∂²π/∂X_f[k][j] ∂X_f'[m][n]`, flattened with index
    /// `4f + 2k + j`. Only the leading `4 · num_fields` rows and columns are set.
    pub fn hessian(&self, x: &[Mat2; 2]) -> [[f64; 8]; 8] {
        let mut h = [[0.0; 8]; 8];
        let nf = self.num_fields();
        for col in 0..4 * nf {
            let mut dir = [[[0.0; 2]; 2]; 2];
            dir[col / 4][(col % 4) / 2][col % 2] = 1.0;
            let d = self.gradient_derivative(x, &dir);
            for row in 0..4 * nf {
                h[row][col] = d[row / 4][(row % 4) / 2][row % 2];
            }
        }
        h
    }

    /// Directional derivative of [`gradient`](Self::gradient) along `dx`.
    fn gradient_derivative(&self, x: &[Mat2; 2], dx: &[Mat2; 2]) -> [Mat2; 2] {
        match self {
            Self::Model { c } => {
                let (f, df) = (&x[0], &dx[0]);
                let sigma = stress_tensor(&mat3_vec(c, &green_strain(f)));
                let dsigma = stress_tensor(&mat3_vec(c, &sym_transpose_product(f, df)));
                let mut out = mul(df, &sigma);
                add_scaled(&mut out, 1.0, &mul(f, &dsigma));
                [out, [[0.0; 2]; 2]]
            }
            Self::DataDriven { c, e_hat, s_hat } => {
                let (f, g) = (&x[0], &x[1]);
                let (df, dg) = (&dx[0], &dx[1]);
                let (sigma, t) = self.dd_stresses(c, e_hat, s_hat, f, g);
                let dsigma = stress_tensor(&mat3_vec(c, &sym_transpose_product(f, df)));
                let da1 = sym_transpose_product(df, g);
                let da2 = sym_transpose_product(f, dg);
                let dt = stress_tensor(&mat3_vec(
                    c,
                    &[da1[0] + da2[0], da1[1] + da2[1], da1[2] + da2[2]],
                ));
                let mut out_f = mul(df, &sigma);
                add_scaled(&mut out_f, 1.0, &mul(f, &dsigma));
                add_scaled(&mut out_f, -1.0, &mul(dg, &t));
                add_scaled(&mut out_f, -1.0, &mul(g, &dt));
                let mut out_g = mul(df, &t);
                add_scaled(&mut out_g, 1.0, &mul(f, &dt));
                out_g.iter_mut().flatten().for_each(|v| *v = -*v);
                [out_f, out_g]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const C: Mat3 = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.0], [0.0, 0.0, 1.5]];

    fn rotation(theta: f64) -> Mat2 {
        let (s, c) = theta.sin_cos();
        [[c, -s], [s, c]]
    }

    #[test]
    fn strain_examples() {
        assert_eq!(green_strain(&IDENTITY), [0.0; 3]);
        let e = green_strain(&[[1.1, 0.0], [0.0, 1.0]]);
        assert!((e[0] - 0.105).abs() < 1e-15 && e[1] == 0.0 && e[2] == 0.0);
        let e = green_strain(&rotation(0.7));
        assert!(e.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn stress_update_examples() {
        let s_hat = [1.0, 2.0, 3.0];
        assert_eq!(stress_update(&IDENTITY, &[[0.0; 2]; 2], &C, &s_hat), s_hat);
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let s = stress_update(&IDENTITY, &[[0.001, 0.0], [0.0, 0.0]], &id, &s_hat);
        assert!((s[0] - 1.001).abs() < 1e-15 && s[1] == 2.0 && s[2] == 3.0);
        // the shear entry sees only the symmetric part of FᵀG
        let a = stress_update(&IDENTITY, &[[0.0, 0.002], [0.0, 0.0]], &id, &[0.0; 3]);
        let b = stress_update(&IDENTITY, &[[0.0, 0.001], [0.001, 0.0]], &id, &[0.0; 3]);
        assert_eq!(a, b);
    }

    fn mats() -> impl Strategy<Value = [Mat2; 2]> {
        proptest::array::uniform8(-0.5..0.5f64).prop_map(|v| {
            [
                [[1.0 + v[0], v[1]], [v[2], 1.0 + v[3]]],
                [[v[4], v[5]], [v[6], v[7]]],
            ]
        })
    }

    fn potentials() -> [NodalPotential; 2] {
        [
            NodalPotential::Model { c: C },
            NodalPotential::DataDriven {
                c: C,
                e_hat: [0.01, -0.02, 0.03],
                s_hat: [0.2, -0.1, 0.05],
            },
        ]
    }

    fn perturb(x: &[Mat2; 2], idx: usize, h: f64) -> [Mat2; 2] {
        let mut y = *x;
        y[idx / 4][(idx % 4) / 2][idx % 2] += h;
        y
    }

    proptest! {
        #[test]
        fn gradient_and_hessian_match_finite_differences(x in mats()) {
            let h = 1e-6;
            for p in potentials() {
                let g = p.gradient(&x);
                let hess = p.hessian(&x);
                for i in 0..4 * p.num_fields() {
                    let fd = (p.value(&perturb(&x, i, h)) - p.value(&perturb(&x, i, -h))) / (2.0 * h);
                    let an = g[i / 4][(i % 4) / 2][i % 2];
                    prop_assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "grad {i}: {fd} vs {an}");
                    let gp = p.gradient(&perturb(&x, i, h));
                    let gm = p.gradient(&perturb(&x, i, -h));
                    for j in 0..4 * p.num_fields() {
                        let fd = (gp[j / 4][(j % 4) / 2][j % 2] - gm[j / 4][(j % 4) / 2][j % 2]) / (2.0 * h);
                        prop_assert!((fd - hess[j][i]).abs() <= 1e-6 * (1.0 + fd.abs()), "hess {j},{i}");
                        prop_assert!((hess[i][j] - hess[j][i]).abs() <= 1e-12 * (1.0 + hess[i][j].abs()));
                    }
                }
            }
        }

        #[test]
        fn superposed_rotation_leaves_strain_unchanged(x in mats(), theta in -3.0..3.0f64) {
            let e0 = green_strain(&x[0]);
            let e1 = green_strain(&mul(&rotation(theta), &x[0]));
            for k in 0..3 {
                prop_assert!((e0[k] - e1[k]).abs() < 1e-10);
            }
        }
    }
}
