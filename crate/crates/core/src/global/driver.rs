//! Problem setup, the model-based reference solve and the global–local
//! fixed-point driver with incremental loading.

use std::time::Instant;

use super::assembly::{node_fields, Dirichlet, DofLayout};
use super::kinematics::{green_strain, stress_update, Mat2, NodalPotential};
use super::newton::{newton_solve, NewtonConfig, NewtonReport};
use crate::error::{Error, Result};
use crate::local::{dmdd_local, LocalSolver};
use crate::meshfree::{Discretization, Point};
use crate::phase::{phase_distance_sq, PhaseState, Vec3, WeightMatrix};

/// Traction `t` (force per length, at full load) on the straight segment `a → b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Traction {
    pub a: Point,
    pub b: Point,
    pub traction: Point,
}

/// Essential and natural conditions at full load; the multiplier is held at
/// zero wherever a displacement component is prescribed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryConditions {
    pub dirichlet: Vec<Dirichlet>,
    pub tractions: Vec<Traction>,
    pub body_force: Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    /// Relative change of the total distance that ends the iteration.
    pub rtol: f64,
    /// The iteration also ends once the distance falls to this fraction of
    /// `Σ V_L d(z_L, 0)`, the distance of the physical states from the origin.
    pub distance_floor: f64,
    pub max_iter: usize,
    /// Carry on to the next load step after a fixed point fails to converge.
    pub continue_on_fail: bool,
    pub newton: NewtonConfig,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            distance_floor: 1e-6,
            max_iter: 200,
            continue_on_fail: false,
            newton: NewtonConfig::default(),
        }
    }
}

/// Nodal coefficients and phase states of a data-driven solution.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDrivenState {
    pub load_factor: f64,
    /// `[d_x, d_y, Λ_x, Λ_y]` per node.
    pub coefficients: Vec<f64>,
    /// Physical states `(E, S)` at the nodes.
    pub physical: Vec<PhaseState>,
    /// Optimal material states `ẑ*` at the nodes.
    pub material: Vec<PhaseState>,
    /// Dataset points each material state was built from.
    pub neighbors: Vec<Vec<usize>>,
    /// `Σ_L V_L d²(z_L, ẑ*_L)`.
    pub distance: f64,
}

impl DataDrivenState {
    pub fn displacement(&self, node: usize) -> Point {
        [self.coefficients[4 * node], self.coefficients[4 * node + 1]]
    }

    pub fn multiplier(&self, node: usize) -> Point {
        [
            self.coefficients[4 * node + 2],
            self.coefficients[4 * node + 3],
        ]
    }
}

/// One row of the fixed-point iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub load_step: usize,
    pub fp_iter: usize,
    pub load_factor: f64,
    pub distance: f64,
    pub newton_iters: usize,
    /// Wall time of the local step that followed this global step, if one ran.
    pub local_step_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadStepOutcome {
    pub load_step: usize,
    pub fp_iterations: usize,
    /// False if the iteration limit was hit (only kept with `continue_on_fail`).
    pub converged: bool,
    /// The increment was split in two after a Newton failure.
    pub halved: bool,
    pub state: DataDrivenState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub load_step: usize,
    pub load_factor: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRun {
    pub steps: Vec<LoadStepOutcome>,
    pub log: Vec<IterationRecord>,
    pub failure: Option<StepFailure>,
}

impl FixedPointRun {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// Mean wall time over every local step of the run.
    pub fn mean_local_step_ms(&self) -> Option<f64> {
        let times: Vec<f64> = self.log.iter().filter_map(|r| r.local_step_ms).collect();
        (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
    }
}

/// Converged model-based solution at one load level.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStep {
    pub load_factor: f64,
    /// `[d_x, d_y]` per node.
    pub coefficients: Vec<f64>,
    pub strain: Vec<Vec3>,
    pub stress: Vec<Vec3>,
    pub newton: NewtonReport,
}

impl ReferenceStep {
    pub fn displacement(&self, node: usize) -> Point {
        [self.coefficients[2 * node], self.coefficients[2 * node + 1]]
    }
}

/// A discretized boundary-value problem with a fixed weight matrix `Ĉ`.
#[derive(Debug, Clone)]
pub struct Problem {
    disc: Discretization,
    bcs: BoundaryConditions,
    w: WeightMatrix,
    dd_layout: DofLayout,
    model_layout: DofLayout,
    /// External nodal forces at full load.
    forces: Vec<Point>,
}

fn is_newton_failure(e: &Error) -> bool {
    matches!(e, Error::NewtonFailure { .. } | Error::Singular { .. })
}

impl Problem {
    pub fn new(disc: Discretization, bcs: BoundaryConditions, w: WeightMatrix) -> Result<Self> {
        let dd_layout = DofLayout::new(&disc, &bcs.dirichlet, 2)?;
        let model_layout = DofLayout::new(&disc, &bcs.dirichlet, 1)?;
        let forces = nodal_forces(&disc, &bcs)?;
        Ok(Self {
            disc,
            bcs,
            w,
            dd_layout,
            model_layout,
            forces,
        })
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bcs
    }

    pub fn weight(&self) -> &WeightMatrix {
        &self.w
    }

    /// External nodal forces `∫ Ψ_I t dΓ + ∫ Ψ_I b dΩ` at full load.
    pub fn nodal_forces(&self) -> &[Point] {
        &self.forces
    }

    /// Interpolated value of a two-component field with nodal coefficients
    /// `coef(I)` at `x`.
    pub fn interpolate(&self, x: Point, coef: impl Fn(usize) -> Point) -> Result<Point> {
        let sv = self.disc.nodes.shape_functions(x)?;
        Ok([
            sv.interpolate(|i| coef(i)[0]),
            sv.interpolate(|i| coef(i)[1]),
        ])
    }

    fn field_gradients(&self, per_node: usize, q: &[f64], l: usize) -> [Mat2; 2] {
        node_fields(&self.disc, per_node, q, l)
    }

    /// Deformation gradient and Green strain at node `l` for data-driven coefficients.
    pub fn green_strain_at(&self, state: &DataDrivenState, l: usize) -> (Mat2, Vec3) {
        let x = self.field_gradients(4, &state.coefficients, l);
        (x[0], green_strain(&x[0]))
    }

    /// Zero-load state with every material state set to `initial`.
    pub fn initial_state(&self, initial: PhaseState) -> DataDrivenState {
        let n = self.disc.num_nodes();
        DataDrivenState {
            load_factor: 0.0,
            coefficients: vec![0.0; 4 * n],
            physical: vec![PhaseState::ZERO; n],
            material: vec![initial; n],
            neighbors: vec![Vec::new(); n],
            distance: 0.0,
        }
    }

    /// Global step: Newton solve for `(d, Λ)` at fixed material states, then the
    /// nodal strain and stress update and the distance.
    pub fn solve_global(
        &self,
        state: &mut DataDrivenState,
        load_factor: f64,
        cfg: &NewtonConfig,
    ) -> Result<NewtonReport> {
        let c = *self.w.c();
        let pots: Vec<NodalPotential> = state
            .material
            .iter()
            .map(|m| NodalPotential::DataDriven {
                c,
                e_hat: m.strain,
                s_hat: m.stress,
            })
            .collect();
        let mut linear = vec![0.0; 4 * self.disc.num_nodes()];
        for (i, f) in self.forces.iter().enumerate() {
            linear[4 * i + 2] = load_factor * f[0];
            linear[4 * i + 3] = load_factor * f[1];
        }
        let mut q = state.coefficients.clone();
        let report = newton_solve(
            &self.disc,
            &self.dd_layout,
            &mut q,
            &pots,
            &linear,
            load_factor,
            cfg,
        )?;
        state.coefficients = q;
        state.load_factor = load_factor;
        self.update_physical(state);
        Ok(report)
    }

    /// `Σ V_L d(z_L, 0)` over the physical states.
    fn phase_norm(&self, state: &DataDrivenState) -> f64 {
        state
            .physical
            .iter()
            .zip(&self.disc.shapes.volumes)
            .map(|(z, v)| v * phase_distance_sq(z, &PhaseState::ZERO, &self.w))
            .sum()
    }

    fn update_physical(&self, state: &mut DataDrivenState) {
        let c = *self.w.c();
        let mut distance = 0.0;
        for l in 0..self.disc.num_nodes() {
            let x = self.field_gradients(4, &state.coefficients, l);
            let m = &state.material[l];
            let z = PhaseState::new(
                green_strain(&x[0]),
                stress_update(&x[0], &x[1], &c, &m.stress),
            );
            distance += self.disc.shapes.volumes[l] * phase_distance_sq(&z, m, &self.w);
            state.physical[l] = z;
        }
        state.distance = distance;
    }

    /// Model-based solution with `S = Ĉ E` in `load_steps` equal increments.
    pub fn reference_solve(
        &self,
        load_steps: usize,
        cfg: &NewtonConfig,
    ) -> Result<Vec<ReferenceStep>> {
        if load_steps == 0 {
            return Err(Error::InvalidParameter(
                "at least one load step is required".into(),
            ));
        }
        let n = self.disc.num_nodes();
        let c = *self.w.c();
        let pots = vec![NodalPotential::Model { c }; n];
        let mut q = vec![0.0; 2 * n];
        let mut out = Vec::with_capacity(load_steps);
        let mut prev = 0.0;
        for s in 1..=load_steps {
            let lf = s as f64 / load_steps as f64;
            let saved = q.clone();
            let report = match self.reference_increment(&mut q, &pots, lf, cfg) {
                Ok(r) => r,
                Err(e) if is_newton_failure(&e) => {
                    q = saved;
                    self.reference_increment(&mut q, &pots, 0.5 * (prev + lf), cfg)?;
                    self.reference_increment(&mut q, &pots, lf, cfg)?
                }
                Err(e) => return Err(e),
            };
            let mut strain = Vec::with_capacity(n);
            let mut stress = Vec::with_capacity(n);
            for l in 0..n {
                let e = green_strain(&self.field_gradients(2, &q, l)[0]);
                strain.push(e);
                stress.push(self.w.apply(&e));
            }
            out.push(ReferenceStep {
                load_factor: lf,
                coefficients: q.clone(),
                strain,
                stress,
                newton: report,
            });
            prev = lf;
        }
        Ok(out)
    }

    fn reference_increment(
        &self,
        q: &mut [f64],
        pots: &[NodalPotential],
        lf: f64,
        cfg: &NewtonConfig,
    ) -> Result<NewtonReport> {
        let mut linear = vec![0.0; q.len()];
        for (i, f) in self.forces.iter().enumerate() {
            linear[2 * i] = -lf * f[0];
            linear[2 * i + 1] = -lf * f[1];
        }
        newton_solve(&self.disc, &self.model_layout, q, pots, &linear, lf, cfg)
    }

    /// Alternates global and local steps in `load_steps` equal increments.
    /// The first step starts from each node's nearest data point to the zero
    /// state; later steps warm-start from the previous material states.
    pub fn fixed_point_solve(
        &self,
        local: &LocalSolver,
        load_steps: usize,
        cfg: &FixedPointConfig,
    ) -> Result<FixedPointRun> {
        if load_steps == 0 {
            return Err(Error::InvalidParameter(
                "at least one load step is required".into(),
            ));
        }
        let start = dmdd_local(&PhaseState::ZERO, local.dataset(), local.weight());
        let mut state = self.initial_state(start);
        let mut run = FixedPointRun {
            steps: Vec::with_capacity(load_steps),
            log: Vec::new(),
            failure: None,
        };
        for s in 1..=load_steps {
            let lf = s as f64 / load_steps as f64;
            let prev_lf = state.load_factor;
            let saved = state.clone();
            let mut halved = false;
            let mut result = self.fixed_point_step(local, &mut state, s, lf, cfg, &mut run.log);
            if matches!(&result, Err(e) if is_newton_failure(e)) {
                halved = true;
                state = saved;
                result = self
                    .fixed_point_step(
                        local,
                        &mut state,
                        s,
                        0.5 * (prev_lf + lf),
                        cfg,
                        &mut run.log,
                    )
                    .and_then(|_| {
                        self.fixed_point_step(local, &mut state, s, lf, cfg, &mut run.log)
                    });
            }
            match result {
                Ok((iters, converged)) => {
                    run.steps.push(LoadStepOutcome {
                        load_step: s,
                        fp_iterations: iters,
                        converged,
                        halved,
                        state: state.clone(),
                    });
                    if !converged && !cfg.continue_on_fail {
                        run.failure = Some(StepFailure {
                            load_step: s,
                            load_factor: lf,
                            reason: format!(
                                "fixed point not converged in {} iterations",
                                cfg.max_iter
                            ),
                        });
                        break;
                    }
                }
                Err(e) => {
                    run.failure = Some(StepFailure {
                        load_step: s,
                        load_factor: lf,
                        reason: e.to_string(),
                    });
                    break;
                }
            }
        }
        Ok(run)
    }

    fn fixed_point_step(
        &self,
        local: &LocalSolver,
        state: &mut DataDrivenState,
        load_step: usize,
        lf: f64,
        cfg: &FixedPointConfig,
        log: &mut Vec<IterationRecord>,
    ) -> Result<(usize, bool)> {
        let mut prev: Option<f64> = None;
        for it in 1..=cfg.max_iter {
            let report = self.solve_global(state, lf, &cfg.newton)?;
            let d = state.distance;
            log.push(IterationRecord {
                load_step,
                fp_iter: it,
                load_factor: lf,
                distance: d,
                newton_iters: report.iterations,
                local_step_ms: None,
            });
            let stalled = prev.is_some_and(|p| (d - p).abs() <= cfg.rtol * d.max(p));
            if stalled || d <= cfg.distance_floor * self.phase_norm(state) {
                return Ok((it, true));
            }
            let t = Instant::now();
            let mut material = Vec::with_capacity(state.physical.len());
            let mut neighbors = Vec::with_capacity(state.physical.len());
            for z in &state.physical {
                let r = local.solve(z)?;
                material.push(r.state);
                neighbors.push(r.neighbors);
            }
            log.last_mut().unwrap().local_step_ms = Some(t.elapsed().as_secs_f64() * 1e3);
            let unchanged = material == state.material;
            state.material = material;
            state.neighbors = neighbors;
            if unchanged {
                return Ok((it, true));
            }
            prev = Some(d);
        }
        Ok((cfg.max_iter, false))
    }
}

/// `∫ Ψ_I t dΓ` plus the nodal integral of the body force. Tractions use the
/// trapezoidal rule of the smoothed gradients, so a constant stress state is
/// balanced exactly.
fn nodal_forces(disc: &Discretization, bcs: &BoundaryConditions) -> Result<Vec<Point>> {
    let n = disc.num_nodes();
    let mut f = vec![[0.0; 2]; n];
    for t in &bcs.tractions {
        let len = ((t.b[0] - t.a[0]).powi(2) + (t.b[1] - t.a[1]).powi(2)).sqrt();
        let m = disc.subdivisions;
        for k in 0..=m {
            let s = k as f64 / m as f64;
            let w = if k == 0 || k == m { 0.5 } else { 1.0 } / m as f64;
            let x = [
                t.a[0] + s * (t.b[0] - t.a[0]),
                t.a[1] + s * (t.b[1] - t.a[1]),
            ];
            let sv = disc.nodes.shape_functions(x)?;
            for (&i, &v) in sv.indices.iter().zip(&sv.values) {
                f[i][0] += w * len * v * t.traction[0];
                f[i][1] += w * len * v * t.traction[1];
            }
        }
    }
    if bcs.body_force != [0.0, 0.0] {
        for (l, sv) in disc.shapes.nodal.iter().enumerate() {
            let vol = disc.shapes.volumes[l];
            for (&i, &v) in sv.indices.iter().zip(&sv.values) {
                f[i][0] += vol * v * bcs.body_force[0];
                f[i][1] += vol * v * bcs.body_force[1];
            }
        }
    }
    Ok(f)
}
