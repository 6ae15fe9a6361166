//! Cantilever beam under a tip shear load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::{
    BoundaryConditions, Dirichlet, FixedPointRun, Problem, ReferenceStep, Traction,
};
use crate::meshfree::{rectangle_grid, Discretization, Polygon};
use crate::phase::{build_weight_matrix_isotropic, WeightMatrix};

use super::{interpolate_curve, nrmsd};

/// Geometry, discretization, material and load program of the beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamSpec {
    pub length: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub jitter: f64,
    pub support_factor: f64,
    /// Polynomial order of the RK basis.
    pub basis_order: usize,
    pub node_seed: u64,
    pub subdivisions: usize,
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    /// Final normalized load `P L² / E I`.
    pub max_load: f64,
    pub load_steps: usize,
    /// Evaluation points of the deflection curve used by the NRMSD.
    pub n_eval: usize,
}

impl Default for BeamSpec {
    fn default() -> Self {
        Self {
            length: 50.0,
            height: 0.4,
            nx: 41,
            ny: 5,
            jitter: 0.25,
            support_factor: 3.0,
            basis_order: 2,
            node_seed: 1,
            subdivisions: 8,
            young_modulus: 4800.0,
            poisson_ratio: 0.0,
            max_load: 10.0,
            load_steps: 10,
            n_eval: 200,
        }
    }
}

impl BeamSpec {
    /// Bending stiffness `E I` per unit thickness with `I = H³/12`.
    pub fn bending_stiffness(&self) -> f64 {
        self.young_modulus * self.height.powi(3) / 12.0
    }

    /// Tip shear force at full load.
    pub fn tip_force(&self) -> f64 {
        self.max_load * self.bending_stiffness() / (self.length * self.length)
    }

    pub fn weight(&self) -> Result<WeightMatrix> {
        build_weight_matrix_isotropic(self.young_modulus, self.poisson_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("height", self.height),
            ("support_factor", self.support_factor),
            ("max_load", self.max_load),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "beam.{name} must be positive, got {v}"
                )));
            }
        }
        if self.load_steps == 0 || self.n_eval == 0 || self.subdivisions == 0 {
            return Err(Error::Config(
                "beam.load_steps, beam.n_eval and beam.subdivisions must be at least 1".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config(format!(
                "beam.jitter must lie in [0, 0.5), got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    /// Clamped at `x = 0`, uniform downward shear traction on `x = L`.
    pub fn problem(&self) -> Result<Problem> {
        self.validate()?;
        let h2 = 0.5 * self.height;
        let nodes = rectangle_grid(
            [0.0, -h2],
            [self.length, self.height],
            self.nx,
            self.ny,
            self.jitter,
            self.support_factor,
            self.node_seed,
        )?
        .with_basis_order(self.basis_order)?;
        let domain = Polygon::rectangle([0.0, -h2], [self.length, self.height])?;
        let disc = Discretization::new(nodes, domain, self.subdivisions)?;
        let dirichlet = (0..disc.num_nodes())
            .filter(|&i| disc.nodes.coord(i)[0] == 0.0)
            .flat_map(|i| {
                [0, 1].map(|component| Dirichlet {
                    node: i,
                    component,
                    value: 0.0,
                })
            })
            .collect();
        let t = -self.tip_force() / self.height;
        let tractions = disc
            .boundary_segments_on_edge(1)
            .into_iter()
            .map(|(a, b)| Traction {
                a,
                b,
                traction: [0.0, t],
            })
            .collect();
        let bcs = BoundaryConditions {
            dirichlet,
            tractions,
            body_force: [0.0, 0.0],
        };
        Problem::new(disc, bcs, self.weight()?)
    }

    /// `−u_y(L, 0) / L` for nodal displacement coefficients `disp`.
    pub fn tip_deflection(
        &self,
        problem: &Problem,
        disp: impl Fn(usize) -> [f64; 2],
    ) -> Result<f64> {
        let u = problem.interpolate([self.length, 0.0], disp)?;
        Ok(-u[1] / self.length)
    }

    fn load(&self, load_factor: f64) -> f64 {
        load_factor * self.max_load
    }
}

/// Normalized load and tip deflection after every load step.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflectionCurve {
    pub load: Vec<f64>,
    pub deflection: Vec<f64>,
}

impl DeflectionCurve {
    fn with_origin(&self) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0];
        let mut y = vec![0.0];
        x.extend(&self.load);
        y.extend(&self.deflection);
        (x, y)
    }

    /// Piecewise-linear samples at `n` equally spaced loads in `(0, max_load]`.
    pub fn sample(&self, max_load: f64, n: usize) -> Result<Vec<f64>> {
        let (x, y) = self.with_origin();
        let at: Vec<f64> = (1..=n).map(|i| max_load * i as f64 / n as f64).collect();
        interpolate_curve(&x, &y, &at)
    }
}

pub fn reference_curve(
    spec: &BeamSpec,
    problem: &Problem,
    steps: &[ReferenceStep],
) -> Result<DeflectionCurve> {
    let mut c = DeflectionCurve {
        load: Vec::with_capacity(steps.len()),
        deflection: Vec::with_capacity(steps.len()),
    };
    for s in steps {
        c.load.push(spec.load(s.load_factor));
        c.deflection
            .push(spec.tip_deflection(problem, |i| s.displacement(i))?);
    }
    Ok(c)
}

/// Converged load steps of a data-driven run. A failed run yields a curve
/// that stops at the last completed step.
pub fn data_driven_curve(
    spec: &BeamSpec,
    problem: &Problem,
    run: &FixedPointRun,
) -> Result<DeflectionCurve> {
    let mut c = DeflectionCurve {
        load: Vec::with_capacity(run.steps.len()),
        deflection: Vec::with_capacity(run.steps.len()),
    };
    for s in &run.steps {
        c.load.push(spec.load(s.state.load_factor));
        c.deflection
            .push(spec.tip_deflection(problem, |i| s.state.displacement(i))?);
    }
    Ok(c)
}

/// NRMSD of a data-driven deflection curve against the reference, sampled at
/// `n_eval` loads and normalized by the final load `P L² / E I`.
pub fn beam_nrmsd(
    spec: &BeamSpec,
    dd: &DeflectionCurve,
    reference: &DeflectionCurve,
) -> Result<f64> {
    if dd.load.len() != reference.load.len() {
        return Err(Error::InvalidInput(format!(
            "data-driven curve has {} of {} load steps",
            dd.load.len(),
            reference.load.len()
        )));
    }
    let a = dd.sample(spec.max_load, spec.n_eval)?;
    let b = reference.sample(spec.max_load, spec.n_eval)?;
    nrmsd(&a, &b, spec.max_load)
}
