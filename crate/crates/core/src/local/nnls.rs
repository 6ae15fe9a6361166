//! Lawson–Hanson non-negative least squares for small dense systems.

use crate::error::{Error, Result};

/// Least-squares solution of `A x ≈ b` restricted to the columns in `cols`,
/// by Householder QR. `a` is row-major `m × n`.
fn lstsq_subset(a: &[f64], m: usize, n: usize, b: &[f64], cols: &[usize]) -> Option<Vec<f64>> {
    let p = cols.len();
    let mut r = vec![0.0; m * p];
    for i in 0..m {
        for (j, &c) in cols.iter().enumerate() {
            r[i * p + j] = a[i * n + c];
        }
    }
    let mut y = b.to_vec();
    let scale = r.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    for j in 0..p.min(m) {
        let norm = (j..m).map(|i| r[i * p + j].powi(2)).sum::<f64>().sqrt();
        if norm <= 1e-14 * scale {
            return None;
        }
        let alpha = if r[j * p + j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| r[i * p + j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in j..p {
            let dot: f64 = (j..m).map(|i| v[i - j] * r[i * p + col]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..m {
                r[i * p + col] -= f * v[i - j];
            }
        }
        let dot: f64 = (j..m).map(|i| v[i - j] * y[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in j..m {
            y[i] -= f * v[i - j];
        }
    }
    if p > m {
        return None;
    }
    let mut x = vec![0.0; p];
    for j in (0..p).rev() {
        let mut s = y[j];
        for c in j + 1..p {
            s -= r[j * p + c] * x[c];
        }
        x[j] = s / r[j * p + j];
    }
    Some(x)
}

/// Minimizes `‖A x − b‖` subject to `x ≥ 0`. `a` is row-major `m × n`.
pub fn nnls(a: &[f64], m: usize, n: usize, b: &[f64], max_iter: usize) -> Result<Vec<f64>> {
    if a.len() != m * n || b.len() != m {
        return Err(Error::Shape(format!(
            "NNLS system {m}x{n} has {} entries",
            a.len()
        )));
    }
    let anorm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = 1e-12 * anorm * (anorm + bnorm).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let gradient = |x: &[f64]| -> Vec<f64> {
        let mut res = b.to_vec();
        for i in 0..m {
            for j in 0..n {
                res[i] -= a[i * n + j] * x[j];
            }
        }
        (0..n)
            .map(|j| (0..m).map(|i| a[i * n + j] * res[i]).sum())
            .collect()
    };
    let mut iterations = 0;
    loop {
        let w = gradient(&x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap().then(j.cmp(&i)));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::LocalSolver(format!(
                    "NNLS did not converge in {max_iter} iterations"
                )));
            }
            let cols: Vec<usize> = (0..n).filter(|&c| passive[c]).collect();
            let Some(s) = lstsq_subset(a, m, n, b, &cols) else {
                // dependent column: drop the newest one and stop adding
                passive[j] = false;
                return Ok(x);
            };
            if s.iter().all(|&v| v > 0.0) {
                for (&c, &v) in cols.iter().zip(&s) {
                    x[c] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&c, &v) in cols.iter().zip(&s) {
                if v <= 0.0 {
                    alpha = alpha.min(x[c] / (x[c] - v));
                }
            }
            for (&c, &v) in cols.iter().zip(&s) {
                x[c] += alpha * (v - x[c]);
                if x[c] <= 1e-15 * (1.0 + v.abs()) {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unconstrained_optimum_inside_orthant() {
        let a = [1.0, 0.0, 0.0, 2.0, 1.0, 1.0];
        let b = [1.0, 4.0, 3.0];
        let x = nnls(&a, 3, 2, &b, 50).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn active_bound() {
        // unconstrained solution has x1 < 0
        let a = [1.0, 0.0, 0.0, 1.0];
        let b = [2.0, -3.0];
        let x = nnls(&a, 2, 2, &b, 50).unwrap();
        assert_eq!(x, vec![2.0, 0.0]);
    }

    fn kkt_holds(a: &[f64], m: usize, n: usize, b: &[f64], x: &[f64]) -> bool {
        let mut res = b.to_vec();
        for i in 0..m {
            for j in 0..n {
                res[i] -= a[i * n + j] * x[j];
            }
        }
        let scale = 1e-8
            * (1.0
                + a.iter().map(|v| v.abs()).sum::<f64>() * b.iter().map(|v| v.abs()).sum::<f64>());
        (0..n).all(|j| {
            let w: f64 = (0..m).map(|i| a[i * n + j] * res[i]).sum();
            x[j] >= 0.0 && w <= scale && (x[j] == 0.0 || w.abs() <= scale)
        })
    }

    proptest! {
        #[test]
        fn satisfies_kkt(a in proptest::collection::vec(-1.0f64..1.0, 28), b in proptest::collection::vec(-1.0f64..1.0, 7)) {
            let x = nnls(&a, 7, 4, &b, 100).unwrap();
            prop_assert!(kkt_holds(&a, 7, 4, &b, &x));
        }
    }
}
