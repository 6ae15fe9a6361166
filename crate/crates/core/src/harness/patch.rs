//! Linear patch test: an affine displacement imposed on the whole boundary of
//! a jittered unit square, solved against data that holds the exact state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::{green_strain, BoundaryConditions, Dirichlet, FixedPointConfig, Mat2, Problem};
use crate::local::LocalSolver;
use crate::meshfree::{rectangle_grid, Discretization, Polygon};
use crate::phase::{build_weight_matrix_isotropic, MaterialDataset, PhaseState, WeightMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSpec {
    pub nx: usize,
    pub ny: usize,
    pub jitter: f64,
    pub support_factor: f64,
    pub node_seed: u64,
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    /// Displacement gradient `∇u` of the affine field.
    pub gradient: [[f64; 2]; 2],
    pub shift: [f64; 2],
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            nx: 5,
            ny: 5,
            jitter: 0.2,
            support_factor: 2.0,
            node_seed: 9,
            young_modulus: 1000.0,
            poisson_ratio: 0.25,
            gradient: [[0.004, -0.002], [0.003, -0.001]],
            shift: [0.01, -0.02],
        }
    }
}

/// Largest deviations of a patch solution from the affine state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchReport {
    /// Max displacement error over the nodes.
    pub displacement_error: f64,
    /// Max strain error over the integration cells.
    pub strain_error: f64,
    /// Fixed-point distance at the end of the solve.
    pub distance: f64,
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Config(
                "patch.nx and patch.ny must be at least 2".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config(format!(
                "patch.jitter must lie in [0, 0.5), got {}",
                self.jitter
            )));
        }
        if !(self.support_factor > 0.0 && self.young_modulus > 0.0) {
            return Err(Error::Config(
                "patch.support_factor and patch.young_modulus must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn weight(&self) -> Result<WeightMatrix> {
        build_weight_matrix_isotropic(self.young_modulus, self.poisson_ratio)
    }

    pub fn affine(&self, x: [f64; 2]) -> [f64; 2] {
        let a = &self.gradient;
        [
            a[0][0] * x[0] + a[0][1] * x[1] + self.shift[0],
            a[1][0] * x[0] + a[1][1] * x[1] + self.shift[1],
        ]
    }

    pub fn exact_state(&self, w: &WeightMatrix) -> PhaseState {
        let a = &self.gradient;
        let f: Mat2 = [[1.0 + a[0][0], a[0][1]], [a[1][0], 1.0 + a[1][1]]];
        let e = green_strain(&f);
        PhaseState::new(e, w.apply(&e))
    }

    /// Multiples `t·z` of the exact state for `t ∈ {0, 0.5, …, 2}`.
    pub fn dataset(&self, w: &WeightMatrix) -> Result<MaterialDataset> {
        let z = self.exact_state(w);
        let points = (0..5)
            .map(|i| {
                let t = 0.5 * i as f64;
                PhaseState::new(z.strain.map(|v| t * v), z.stress.map(|v| t * v))
            })
            .collect();
        MaterialDataset::from_points(points, "patch: scaled exact states")
    }

    pub fn problem(&self) -> Result<Problem> {
        self.validate()?;
        let nodes = rectangle_grid(
            [0.0, 0.0],
            [1.0, 1.0],
            self.nx,
            self.ny,
            self.jitter,
            self.support_factor,
            self.node_seed,
        )?;
        let disc = Discretization::new(nodes, Polygon::rectangle([0.0, 0.0], [1.0, 1.0])?, 1)?;
        let dirichlet = (0..disc.num_nodes())
            .filter(|&i| {
                let x = disc.nodes.coord(i);
                x[0] == 0.0 || x[0] == 1.0 || x[1] == 0.0 || x[1] == 1.0
            })
            .flat_map(|i| {
                let g = self.affine(disc.nodes.coord(i));
                [0, 1].map(|component| Dirichlet {
                    node: i,
                    component,
                    value: g[component],
                })
            })
            .collect();
        let bcs = BoundaryConditions {
            dirichlet,
            ..Default::default()
        };
        Problem::new(disc, bcs, self.weight()?)
    }

    /// One-step data-driven solve with `local`, compared with the affine state.
    pub fn run(&self, local: &LocalSolver, cfg: &FixedPointConfig) -> Result<PatchReport> {
        let p = self.problem()?;
        let run = p.fixed_point_solve(local, 1, cfg)?;
        if let Some(f) = &run.failure {
            return Err(Error::LocalSolver(format!(
                "patch solve failed: {}",
                f.reason
            )));
        }
        let st = &run.steps[0].state;
        let mut displacement_error = 0.0f64;
        for i in 0..p.discretization().num_nodes() {
            let x = p.discretization().nodes.coord(i);
            let u = p.interpolate(x, |j| st.displacement(j))?;
            let g = self.affine(x);
            displacement_error = displacement_error
                .max((u[0] - g[0]).abs())
                .max((u[1] - g[1]).abs());
        }
        let z = self.exact_state(local.weight());
        let strain_error = st
            .physical
            .iter()
            .flat_map(|s| (0..3).map(move |k| (s.strain[k] - z.strain[k]).abs()))
            .fold(0.0, f64::max);
        Ok(PatchReport {
            displacement_error,
            strain_error,
            distance: st.distance,
        })
    }
}
