//! Newton–Raphson on the reduced stationarity system.

use super::assembly::{assemble, DofLayout};
use super::kinematics::NodalPotential;
use crate::error::{Error, Result};
use crate::meshfree::Discretization;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Residual reduction relative to the first residual.
    pub tol: f64,
    /// Absolute residual floor.
    pub abs_tol: f64,
    /// Also converged once `‖Δq‖∞ ≤ step_tol · (1 + ‖q‖∞)`.
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            abs_tol: 1e-12,
            step_tol: 1e-12,
            max_iter: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NewtonReport {
    /// Linear solves performed.
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves for the free unknowns starting from `q` (full coefficients, updated
/// in place) at the given load factor.
pub(crate) fn newton_solve(
    disc: &Discretization,
    layout: &DofLayout,
    q: &mut [f64],
    potentials: &[NodalPotential],
    linear: &[f64],
    load_factor: f64,
    cfg: &NewtonConfig,
) -> Result<NewtonReport> {
    let mut free = layout.restrict(q);
    layout.expand(&free, load_factor, q);
    let mut tangent = layout.new_tangent();
    let mut report = NewtonReport::default();
    for it in 0.. {
        tangent.clear();
        let mut r = assemble(disc, layout, q, potentials, linear, Some(&mut tangent));
        let rn = norm2(&r);
        if !rn.is_finite() {
            return Err(Error::NewtonFailure {
                iterations: it,
                residual: rn,
            });
        }
        if it == 0 {
            report.initial_residual = rn;
        }
        report.final_residual = rn;
        if rn <= (cfg.tol * report.initial_residual).max(cfg.abs_tol) {
            return Ok(report);
        }
        if it >= cfg.max_iter {
            return Err(Error::NewtonFailure {
                iterations: it,
                residual: rn,
            });
        }
        let lu = tangent.factorize()?;
        tangent = layout.new_tangent();
        r.iter_mut().for_each(|v| *v = -*v);
        lu.solve_in_place(&mut r);
        for (x, d) in free.iter_mut().zip(&r) {
            *x += d;
        }
        layout.expand(&free, load_factor, q);
        report.iterations = it + 1;
        if norm_inf(&r) <= cfg.step_tol * (1.0 + norm_inf(&free)) {
            report.final_residual = norm2(&assemble(disc, layout, q, potentials, linear, None));
            return Ok(report);
        }
    }
    unreachable!()
}
