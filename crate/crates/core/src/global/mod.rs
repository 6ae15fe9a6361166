//! The physics step of data-driven computing.
//!
//! Displacement `u` and multiplier `λ` are approximated with the same RK
//! shape functions and integrated nodally with smoothed gradients. At fixed
//! material states the stationarity conditions are solved by Newton–Raphson,
//! the nodal stress follows from `S = Ĉ sym(Fᵀ∇λ) + Ŝ*`, and the driver
//! alternates this global step with a local data search.

mod assembly;
mod banded;
mod driver;
mod kinematics;
mod newton;

pub use assembly::Dirichlet;
pub use banded::{dense_inverse, BandLu, BandMatrix};
pub use driver::{
    BoundaryConditions, DataDrivenState, FixedPointConfig, FixedPointRun, IterationRecord,
    LoadStepOutcome, Problem, ReferenceStep, StepFailure, Traction,
};
pub use kinematics::{
    green_strain, stress_tensor, stress_update, sym_transpose_product, Mat2, NodalPotential,
    IDENTITY,
};
pub use newton::{NewtonConfig, NewtonReport};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local::{LocalSolver, LocalSolverChoice};
    use crate::meshfree::{rectangle_grid, Discretization, Polygon};
    use crate::phase::{build_weight_matrix_isotropic, MaterialDataset, PhaseState, WeightMatrix};

    const A: [[f64; 2]; 2] = [[0.004, -0.002], [0.003, -0.001]];
    const SHIFT: [f64; 2] = [0.01, -0.02];

    fn affine(x: [f64; 2]) -> [f64; 2] {
        [
            A[0][0] * x[0] + A[0][1] * x[1] + SHIFT[0],
            A[1][0] * x[0] + A[1][1] * x[1] + SHIFT[1],
        ]
    }

    fn deformation() -> Mat2 {
        [[1.0 + A[0][0], A[0][1]], [A[1][0], 1.0 + A[1][1]]]
    }

    fn patch_disc() -> Discretization {
        let nodes = rectangle_grid([0.0, 0.0], [1.0, 1.0], 5, 5, 0.2, 2.0, 9).unwrap();
        Discretization::new(
            nodes,
            Polygon::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap(),
            1,
        )
        .unwrap()
    }

    fn pin(disc: &Discretization, i: usize) -> [Dirichlet; 2] {
        let g = affine(disc.nodes.coord(i));
        [0, 1].map(|c| Dirichlet {
            node: i,
            component: c,
            value: g[c],
        })
    }

    /// Nominal tractions `F S N` of the affine state on every edge, with the
    /// two bottom corners pinned.
    fn patch() -> (Problem, WeightMatrix) {
        let disc = patch_disc();
        let w = build_weight_matrix_isotropic(1000.0, 0.25).unwrap();
        let f = deformation();
        let s = stress_tensor(&w.apply(&green_strain(&f)));
        let mut p = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                p[i][j] = (0..2).map(|k| f[i][k] * s[k][j]).sum();
            }
        }
        let mut tractions = Vec::new();
        let dv = disc.domain.vertices.clone();
        for e in 0..dv.len() {
            let (a, b) = (dv[e], dv[(e + 1) % dv.len()]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
            let t = [
                p[0][0] * n[0] + p[0][1] * n[1],
                p[1][0] * n[0] + p[1][1] * n[1],
            ];
            for (a, b) in disc.boundary_segments_on_edge(e) {
                tractions.push(Traction { a, b, traction: t });
            }
        }
        let corners: Vec<usize> = (0..disc.num_nodes())
            .filter(|&i| {
                let x = disc.nodes.coord(i);
                x[1] == 0.0 && (x[0] == 0.0 || x[0] == 1.0)
            })
            .collect();
        assert_eq!(corners.len(), 2);
        let dirichlet = corners.iter().flat_map(|&i| pin(&disc, i)).collect();
        let bcs = BoundaryConditions {
            dirichlet,
            tractions,
            ..Default::default()
        };
        (Problem::new(disc, bcs, w.clone()).unwrap(), w)
    }

    fn exact_state(w: &WeightMatrix) -> PhaseState {
        let e = green_strain(&deformation());
        PhaseState::new(e, w.apply(&e))
    }

    fn affine_error(p: &Problem, disp: impl Fn(usize) -> [f64; 2]) -> f64 {
        let mut err = 0.0f64;
        for i in 0..p.discretization().num_nodes() {
            let x = p.discretization().nodes.coord(i);
            let u = p.interpolate(x, &disp).unwrap();
            let g = affine(x);
            err = err.max((u[0] - g[0]).abs()).max((u[1] - g[1]).abs());
        }
        err
    }

    fn assert_affine(p: &Problem, disp: impl Fn(usize) -> [f64; 2]) {
        for i in 0..p.discretization().num_nodes() {
            let x = p.discretization().nodes.coord(i);
            let u = p.interpolate(x, &disp).unwrap();
            let g = affine(x);
            assert!(
                (u[0] - g[0]).abs() < 1e-6 && (u[1] - g[1]).abs() < 1e-6,
                "node {i}: {u:?} vs {g:?}"
            );
        }
    }

    #[test]
    fn zero_load_and_zero_data_is_trivial() {
        let nodes = rectangle_grid([0.0, 0.0], [2.0, 1.0], 5, 3, 0.1, 2.0, 2).unwrap();
        let disc = Discretization::new(
            nodes,
            Polygon::rectangle([0.0, 0.0], [2.0, 1.0]).unwrap(),
            1,
        )
        .unwrap();
        let dirichlet = (0..disc.num_nodes())
            .filter(|&i| disc.nodes.coord(i)[0] == 0.0)
            .flat_map(|i| {
                [0, 1].map(|c| Dirichlet {
                    node: i,
                    component: c,
                    value: 0.0,
                })
            })
            .collect();
        let w = build_weight_matrix_isotropic(10.0, 0.0).unwrap();
        let p = Problem::new(
            disc,
            BoundaryConditions {
                dirichlet,
                ..Default::default()
            },
            w,
        )
        .unwrap();
        let mut s = p.initial_state(PhaseState::ZERO);
        let r = p
            .solve_global(&mut s, 1.0, &NewtonConfig::default())
            .unwrap();
        assert!(r.iterations <= 1);
        assert!(s.coefficients.iter().all(|v| v.abs() < 1e-14));
        assert!(s.distance < 1e-28);
    }

    #[test]
    fn global_step_with_exact_data_is_affine() {
        let (p, w) = patch();
        let z = exact_state(&w);
        let mut s = p.initial_state(z);
        let r = p
            .solve_global(&mut s, 1.0, &NewtonConfig::default())
            .unwrap();
        assert!(r.iterations <= 6, "{r:?}");
        assert_affine(&p, |i| s.displacement(i));
        for l in 0..s.physical.len() {
            for k in 0..3 {
                assert!((s.physical[l].strain[k] - z.strain[k]).abs() < 1e-6);
                assert!((s.physical[l].stress[k] - z.stress[k]).abs() < 1e-6 * w.c()[0][0]);
            }
            assert!(s.multiplier(l)[0].abs() < 1e-9 && s.multiplier(l)[1].abs() < 1e-9);
        }
        assert!(s.distance < 1e-10);
    }

    #[test]
    fn reference_patch_test() {
        let (p, w) = patch();
        let steps = p.reference_solve(2, &NewtonConfig::default()).unwrap();
        let last = steps.last().unwrap();
        assert_affine(&p, |i| last.displacement(i));
        let z = exact_state(&w);
        for e in &last.strain {
            for k in 0..3 {
                assert!((e[k] - z.strain[k]).abs() < 1e-6);
            }
        }
    }

    /// Collocated displacements on the whole boundary leave the RK test
    /// functions nonzero between boundary nodes, so the affine state is only
    /// reproduced to discretization accuracy.
    #[test]
    fn reference_patch_with_boundary_displacements() {
        let disc = patch_disc();
        let dirichlet = (0..disc.num_nodes())
            .filter(|&i| {
                let x = disc.nodes.coord(i);
                x[0] == 0.0 || x[0] == 1.0 || x[1] == 0.0 || x[1] == 1.0
            })
            .flat_map(|i| pin(&disc, i))
            .collect();
        let w = build_weight_matrix_isotropic(1000.0, 0.25).unwrap();
        let bcs = BoundaryConditions {
            dirichlet,
            ..Default::default()
        };
        let p = Problem::new(disc, bcs, w).unwrap();
        let steps = p.reference_solve(1, &NewtonConfig::default()).unwrap();
        let err = affine_error(&p, |i| steps[0].displacement(i));
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn fixed_point_with_exact_dataset_reaches_zero_distance() {
        let (p, w) = patch();
        let z = exact_state(&w);
        let points = [0.0, 0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|&t| PhaseState::new(z.strain.map(|v| t * v), z.stress.map(|v| t * v)))
            .collect();
        let ds = MaterialDataset::from_points(points, "scaled exact states").unwrap();
        let local = LocalSolver::new(LocalSolverChoice::dmdd(), &ds, &w).unwrap();
        let cfg = FixedPointConfig {
            distance_floor: 0.0,
            ..Default::default()
        };
        let run = p.fixed_point_solve(&local, 1, &cfg).unwrap();
        assert!(run.completed(), "{:?}", run.failure);
        let st = &run.steps[0].state;
        assert!(st.distance < 1e-10, "distance {}", st.distance);
        assert_affine(&p, |i| st.displacement(i));
        for (a, b) in st.physical.iter().zip(&st.material) {
            for k in 0..3 {
                assert!((a.strain[k] - b.strain[k]).abs() < 1e-6);
            }
        }
        // identical inputs give identical runs apart from timings
        let again = p.fixed_point_solve(&local, 1, &cfg).unwrap();
        assert_eq!(run.steps, again.steps);
        let strip = |r: &FixedPointRun| {
            r.log
                .iter()
                .map(|e| IterationRecord {
                    local_step_ms: None,
                    ..e.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&run), strip(&again));
    }
}
