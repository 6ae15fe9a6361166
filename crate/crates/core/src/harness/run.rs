//! Case runners and their result files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::autoencoder::{save_model, TrainedAutoencoder};
use crate::error::{Error, Result};
use crate::global::{FixedPointRun, Problem};
use crate::local::{LocalSolver, LocalSolverChoice, LocalSolverKind};
use crate::meshfree::Discretization;
use crate::phase::{build_weight_matrix_from_data, save_dataset, MaterialDataset, WeightMatrix};

use super::beam::{beam_nrmsd, data_driven_curve, reference_curve, DeflectionCurve};
use super::config::{CaseKind, RunConfig, SolverKind};
use super::patch::PatchReport;
use super::tissue::{predicted_curve, protocol_nrmsd, ProtocolRecord, StressStrainCurve};

pub const DATASET_FILE: &str = "dataset.csv";
pub const MODEL_FILE: &str = "model.txt";
pub const DEFLECTION_FILE: &str = "deflection.csv";
pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const NRMSD_FILE: &str = "nrmsd.txt";
pub const VORONOI_FILE: &str = "voronoi.csv";
pub const PROTOCOL_NRMSD_FILE: &str = "protocol_nrmsd.csv";
pub const PATCH_FILE: &str = "patch.txt";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::file(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::file(path, e))
}

fn check_case(cfg: &RunConfig, case: CaseKind) -> Result<()> {
    if cfg.case != case {
        return Err(Error::Config(format!(
            "config describes a {:?} run, not {case:?}",
            cfg.case
        )));
    }
    cfg.validate()
}

/// Trains or loads the model if the solver needs one and builds the local solver.
fn local_solver(
    cfg: &RunConfig,
    kind: LocalSolverKind,
    dataset: &MaterialDataset,
    w: &WeightMatrix,
    base: &Path,
) -> Result<(LocalSolver, Option<TrainedAutoencoder>)> {
    let k = cfg.solver.k;
    let (choice, model) = match kind {
        LocalSolverKind::Dmdd => (LocalSolverChoice::dmdd(), None),
        LocalSolverKind::Lcdd => (LocalSolverChoice::lcdd(k), None),
        _ => {
            let model = cfg.autoencoder.obtain(dataset, w, base)?;
            (LocalSolverChoice::aedd(kind, k, model.clone()), Some(model))
        }
    };
    Ok((LocalSolver::new(choice, dataset, w)?, model))
}

/// Writes `iterations.csv` rows of one run.
pub fn write_iterations(run: Option<&FixedPointRun>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "load_step,fp_iter,distance,newton_iters,local_step_ms")?;
    for r in run.iter().flat_map(|r| &r.log) {
        let ms = r
            .local_step_ms
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{:.16e},{},{ms}",
            r.load_step, r.fp_iter, r.distance, r.newton_iters
        )?;
    }
    finish(w, path)
}

fn write_number(v: f64, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{v:.16e}")?;
    finish(w, path)
}

/// Writes every Voronoi cell as `node_id,vertices` with the vertices as
/// `x y` pairs separated by `;`, counterclockwise.
pub fn write_voronoi(disc: &Discretization, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "node_id,vertices")?;
    let p = &disc.partition;
    for (i, cell) in p.cells.iter().enumerate() {
        let verts: Vec<String> = cell
            .vertices
            .iter()
            .map(|&v| format!("{:.16e} {:.16e}", p.vertices[v][0], p.vertices[v][1]))
            .collect();
        writeln!(w, "{i},{}", verts.join(";"))?;
    }
    finish(w, path)
}

/// Everything a beam run produces.
#[derive(Debug, Clone)]
pub struct BeamResult {
    pub dataset: Option<MaterialDataset>,
    pub model: Option<TrainedAutoencoder>,
    pub reference: DeflectionCurve,
    pub predicted: DeflectionCurve,
    /// `None` when the model-based solver was selected.
    pub run: Option<FixedPointRun>,
    /// Only for runs that completed every load step.
    pub nrmsd: Option<f64>,
    pub max_load: f64,
    pub load_steps: usize,
}

impl BeamResult {
    pub fn completed(&self) -> bool {
        self.run.as_ref().is_none_or(|r| r.completed())
    }

    /// `deflection.csv`, `iterations.csv`, `nrmsd.txt` (completed runs only),
    /// `dataset.csv` and `model.txt` when they were used.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let path = dir.join(DEFLECTION_FILE);
        let mut w = create(&path)?;
        writeln!(w, "load_factor,tip_deflection_normalized,reference")?;
        for (i, (&load, &r)) in self
            .reference
            .load
            .iter()
            .zip(&self.reference.deflection)
            .enumerate()
        {
            let dd = self
                .predicted
                .deflection
                .get(i)
                .map(|v| format!("{v:.16e}"))
                .unwrap_or_default();
            writeln!(w, "{:.16e},{dd},{r:.16e}", load / self.max_load)?;
        }
        finish(w, &path)?;
        write_iterations(self.run.as_ref(), &dir.join(ITERATIONS_FILE))?;
        match self.nrmsd {
            Some(v) => write_number(v, &dir.join(NRMSD_FILE))?,
            None => remove_stale(&dir.join(NRMSD_FILE))?,
        }
        if let Some(ds) = &self.dataset {
            save_dataset(ds, &dir.join(DATASET_FILE))?;
        }
        if let Some(m) = &self.model {
            save_model(m, &dir.join(MODEL_FILE))?;
        }
        Ok(())
    }
}

fn remove_stale(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::file(path, e)),
        _ => Ok(()),
    }
}

/// Model-based reference and, unless the model solver is selected, the
/// data-driven beam solution. Relative paths resolve against `base`.
pub fn run_beam_case(cfg: &RunConfig, base: &Path) -> Result<BeamResult> {
    check_case(cfg, CaseKind::Beam)?;
    let spec = &cfg.beam;
    let problem = spec.problem()?;
    let steps = problem.reference_solve(spec.load_steps, &cfg.tolerances.newton())?;
    let reference = reference_curve(spec, &problem, &steps)?;
    let mut out = BeamResult {
        dataset: None,
        model: None,
        predicted: reference.clone(),
        reference,
        run: None,
        nrmsd: Some(0.0),
        max_load: spec.max_load,
        load_steps: spec.load_steps,
    };
    let SolverKind::Data(kind) = cfg.solver.kind else {
        return Ok(out);
    };
    let w = spec.weight()?;
    let dataset = cfg.dataset.build(&w, base)?;
    let (local, model) = local_solver(cfg, kind, &dataset, &w, base)?;
    let run = problem.fixed_point_solve(&local, spec.load_steps, &cfg.tolerances.fixed_point())?;
    out.predicted = data_driven_curve(spec, &problem, &run)?;
    out.nrmsd = if run.completed() {
        Some(beam_nrmsd(spec, &out.predicted, &out.reference)?)
    } else {
        None
    };
    out.run = Some(run);
    out.dataset = Some(dataset);
    out.model = model;
    Ok(out)
}

/// Prediction for one protocol.
#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub id: usize,
    pub curve: StressStrainCurve,
    pub run: FixedPointRun,
    /// Only for runs that completed every load step.
    pub nrmsd: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TissueResult {
    pub training: Vec<usize>,
    pub weight: WeightMatrix,
    pub dataset: MaterialDataset,
    pub model: Option<TrainedAutoencoder>,
    pub protocols: Vec<ProtocolResult>,
}

impl TissueResult {
    pub fn completed(&self) -> bool {
        self.protocols.iter().all(|p| p.run.completed())
    }

    /// Mean NRMSD over the testing protocols, if all of them completed.
    pub fn mean_nrmsd(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.protocols.iter().map(|p| p.nrmsd).collect();
        v.filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `curve_<id>.csv` and `iterations_<id>.csv` per testing protocol,
    /// `protocol_nrmsd.csv`, `nrmsd.txt` (mean, all protocols completed),
    /// `dataset.csv` with the training data and `model.txt` when trained.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        for p in &self.protocols {
            let path = dir.join(format!("curve_{}.csv", p.id));
            let mut w = create(&path)?;
            writeln!(w, "load_factor,E11,E22,G12,S11,S22,S12")?;
            for ((lf, e), s) in p
                .curve
                .load_factor
                .iter()
                .zip(&p.curve.strain)
                .zip(&p.curve.stress)
            {
                writeln!(
                    w,
                    "{lf:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    e[0], e[1], e[2], s[0], s[1], s[2]
                )?;
            }
            finish(w, &path)?;
            write_iterations(Some(&p.run), &dir.join(format!("iterations_{}.csv", p.id)))?;
        }
        let path = dir.join(PROTOCOL_NRMSD_FILE);
        let mut w = create(&path)?;
        writeln!(w, "protocol,training,completed,nrmsd")?;
        for p in &self.protocols {
            let v = p.nrmsd.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{v}",
                p.id,
                self.training.contains(&p.id),
                p.run.completed()
            )?;
        }
        finish(w, &path)?;
        match self.mean_nrmsd() {
            Some(v) => write_number(v, &dir.join(NRMSD_FILE))?,
            None => remove_stale(&dir.join(NRMSD_FILE))?,
        }
        save_dataset(&self.dataset, &dir.join(DATASET_FILE))?;
        if let Some(m) = &self.model {
            save_model(m, &dir.join(MODEL_FILE))?;
        }
        Ok(())
    }
}

/// Protocol records of a tissue run. Without explicit records or a data
/// directory the surrogate files are written into `scratch/protocols`.
pub fn tissue_protocols(
    cfg: &RunConfig,
    base: &Path,
    scratch: &Path,
) -> Result<Vec<ProtocolRecord>> {
    let t = &cfg.tissue;
    if !t.protocols.is_empty() {
        return Ok(t
            .protocols
            .iter()
            .map(|r| ProtocolRecord {
                data: base.join(&r.data),
                ..r.clone()
            })
            .collect());
    }
    let (train, test) = t.split();
    match &t.data_dir {
        Some(dir) => {
            let dir = base.join(dir);
            let mut ids: Vec<usize> = train.iter().chain(&test).copied().collect();
            ids.sort_unstable();
            ids.dedup();
            ids.into_iter()
                .map(|id| ProtocolRecord::from_table(id, dir.join(format!("protocol_{id}.csv"))))
                .collect()
        }
        None => t.surrogate.write_protocol_files(&scratch.join("protocols")),
    }
}

/// Trains on the training protocols and solves every testing protocol on the
/// quarter model. Missing protocol files fail before any training or solve.
pub fn run_tissue_case(cfg: &RunConfig, base: &Path, scratch: &Path) -> Result<TissueResult> {
    check_case(cfg, CaseKind::Tissue)?;
    let SolverKind::Data(kind) = cfg.solver.kind else {
        return Err(Error::Config(
            "the tissue case has no model-based solver; choose a data-driven one".into(),
        ));
    };
    let records = tissue_protocols(cfg, base, scratch)?;
    let (train, test) = cfg.tissue.split();
    let find = |id: usize| {
        records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::Config(format!("no protocol record with id {id}")))
    };
    for &id in train.iter().chain(&test) {
        find(id)?.validate()?;
    }
    let parts = train
        .iter()
        .map(|&id| find(id)?.load())
        .collect::<Result<Vec<_>>>()?;
    let dataset = MaterialDataset::concat(&parts, "training protocols")?;
    let weight = build_weight_matrix_from_data(&dataset)?;
    let (local, model) = local_solver(cfg, kind, &dataset, &weight, base)?;
    let spec = &cfg.tissue.model;
    let fp = cfg.tolerances.fixed_point();
    let mut protocols = Vec::with_capacity(test.len());
    for &id in &test {
        let record = find(id)?;
        let problem: Problem = spec.problem(record, weight.clone())?;
        let run = problem.fixed_point_solve(&local, spec.load_steps, &fp)?;
        let curve = predicted_curve(&problem, &run);
        let nrmsd = if run.completed() {
            Some(protocol_nrmsd(&curve, &record.load()?)?)
        } else {
            None
        };
        protocols.push(ProtocolResult {
            id,
            curve,
            run,
            nrmsd,
        });
    }
    Ok(TissueResult {
        training: train,
        weight,
        dataset,
        model,
        protocols,
    })
}

/// Runs the patch case with the configured local solver.
pub fn run_patch_case(cfg: &RunConfig) -> Result<PatchReport> {
    check_case(cfg, CaseKind::Patch)?;
    let SolverKind::Data(kind) = cfg.solver.kind else {
        return Err(Error::Config(
            "the patch case runs a data-driven solver".into(),
        ));
    };
    let spec = &cfg.patch;
    let w = spec.weight()?;
    let dataset = spec.dataset(&w)?;
    let (local, _) = local_solver(cfg, kind, &dataset, &w, Path::new("."))?;
    spec.run(&local, &cfg.tolerances.fixed_point())
}

impl PatchReport {
    /// `patch.txt` with one `key value` line per field.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let path = dir.join(PATCH_FILE);
        let mut w = create(&path)?;
        writeln!(w, "displacement_error {:.16e}", self.displacement_error)?;
        writeln!(w, "strain_error {:.16e}", self.strain_error)?;
        writeln!(w, "distance {:.16e}", self.distance)?;
        finish(w, &path)
    }
}

/// Discretization of the configured case, for `voronoi.csv`.
pub fn case_discretization(cfg: &RunConfig) -> Result<Discretization> {
    cfg.validate()?;
    match cfg.case {
        CaseKind::Beam => Ok(cfg.beam.problem()?.discretization().clone()),
        CaseKind::Patch => Ok(cfg.patch.problem()?.discretization().clone()),
        CaseKind::Tissue => cfg.tissue.model.discretization(),
    }
}
