//! `aedd`: data generation, autoencoder training and the beam, tissue and
//! patch runs from the command line.
//!
//! Exit status: 0 on success, 1 when a solver fails, 2 on configuration,
//! input or usage errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aedd_core::autoencoder::{save_model, train, Architecture, InputScaling, TrainConfig};
use aedd_core::harness::{
    beam_nrmsd, case_discretization, protocol_nrmsd, run_beam_case, run_patch_case,
    run_tissue_case, write_voronoi, BeamSpec, CaseKind, CasePreset, DeflectionCurve, RunConfig,
    StressStrainCurve, DATASET_FILE, MODEL_FILE, NRMSD_FILE, VORONOI_FILE,
};
use aedd_core::phase::{
    add_noise, build_weight_matrix_from_data, build_weight_matrix_isotropic,
    generate_sparse_path_dataset, generate_svk_grid_dataset, load_dataset, save_dataset,
};
use aedd_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "aedd",
    version,
    about = "Autoencoder-embedded data-driven solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a linear-elastic material dataset.
    GenData(GenData),
    /// Train an autoencoder on a dataset.
    TrainAe(TrainAe),
    /// Run the cantilever beam case.
    RunBeam(RunArgs),
    /// Run the biaxial tissue case.
    RunTissue(RunTissue),
    /// Run the linear patch case.
    RunPatch(RunArgs),
    /// NRMSD of a beam deflection file or a tissue curve against its data.
    EvalNrmsd(EvalNrmsd),
    /// Write the Voronoi cells of the configured discretization.
    DumpVoronoi(RunArgs),
    /// Print the default configuration of a case.
    ShowConfig {
        #[arg(long, value_parser = parse_case)]
        case: CaseKind,
    },
}

#[derive(Args)]
struct GenData {
    /// Grid points per strain axis (`grid³` points).
    #[arg(long, conflicts_with = "paths", required_unless_present = "paths")]
    grid: Option<usize>,
    /// Number of radial strain paths instead of a grid.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, default_value_t = 50)]
    points_per_path: usize,
    /// Strain half-width of the sampled box.
    #[arg(long, default_value_t = 0.02)]
    bound: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4800.0)]
    young: f64,
    #[arg(long, default_value_t = 0.0)]
    poisson: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainAe {
    #[arg(long)]
    data: PathBuf,
    /// Encoder layer sizes, e.g. `6-4-3`.
    #[arg(long, default_value = "6-4-3")]
    arch: String,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    /// Mini-batch size; 0 trains full batch.
    #[arg(long, default_value_t = 512)]
    batch: usize,
    #[arg(long, default_value_t = 1e-5)]
    beta: f64,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale inputs by the data-derived weight matrix.
    #[arg(long)]
    metric_scaling: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the autoencoder training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunTissue {
    #[command(flatten)]
    run: RunArgs,
    /// Named train/test split, e.g. `case1`.
    #[arg(long, value_parser = parse_preset)]
    case: Option<CasePreset>,
}

#[derive(Args)]
struct EvalNrmsd {
    /// `deflection.csv` of a beam run.
    #[arg(long, conflicts_with_all = ["curve", "data"], required_unless_present = "curve")]
    deflection: Option<PathBuf>,
    #[arg(long, default_value_t = BeamSpec::default().max_load)]
    max_load: f64,
    #[arg(long, default_value_t = BeamSpec::default().n_eval)]
    n_eval: usize,
    /// `curve_<id>.csv` of a tissue run.
    #[arg(long, requires = "data")]
    curve: Option<PathBuf>,
    /// Measured protocol data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Also write `nrmsd.txt` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_case(s: &str) -> std::result::Result<CaseKind, String> {
    match s {
        "beam" => Ok(CaseKind::Beam),
        "tissue" => Ok(CaseKind::Tissue),
        "patch" => Ok(CaseKind::Patch),
        _ => Err(format!(
            "unknown case `{s}` (expected beam, tissue or patch)"
        )),
    }
}

fn parse_preset(s: &str) -> std::result::Result<CasePreset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Outcome of a command that ran to the end, possibly with a failed solve.
enum Status {
    Done,
    SolverFailed(String),
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::File {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

fn gen_data(a: &GenData) -> Result<Status> {
    let w = build_weight_matrix_isotropic(a.young, a.poisson)?;
    let clean = match (a.grid, a.paths) {
        (Some(m), _) => generate_svk_grid_dataset(m, a.bound, &w, a.seed)?,
        (None, Some(n)) => generate_sparse_path_dataset(n, a.points_per_path, a.bound, &w, a.seed)?,
        (None, None) => unreachable!("clap requires --grid or --paths"),
    };
    let ds = if a.noise > 0.0 {
        add_noise(&clean, a.noise, a.seed)?
    } else {
        clean
    };
    create_dir(&a.out)?;
    save_dataset(&ds, &a.out.join(DATASET_FILE))?;
    println!(
        "{} points written to {}",
        ds.len(),
        a.out.join(DATASET_FILE).display()
    );
    Ok(Status::Done)
}

fn train_ae(a: &TrainAe) -> Result<Status> {
    let sizes = a
        .arch
        .split('-')
        .map(|v| v.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("architecture `{}` is not like 6-4-3", a.arch)))?;
    let arch = Architecture::for_material(sizes)?;
    let ds = load_dataset(&a.data)?;
    let scaling = if a.metric_scaling {
        let c = *build_weight_matrix_from_data(&ds)?.c();
        InputScaling::Metric([c[0][0], c[1][1], c[2][2]])
    } else {
        InputScaling::PerComponent
    };
    let cfg = TrainConfig {
        beta: a.beta,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        seed: a.seed,
        batch_size: (a.batch > 0).then_some(a.batch),
        scaling,
        ..TrainConfig::default()
    };
    let model = train(&ds, &arch, &cfg)?;
    create_dir(&a.out)?;
    save_model(&model, &a.out.join(MODEL_FILE))?;
    let mut loss = String::from("epoch,loss\n");
    for (i, l) in model.record.loss_history.iter().enumerate() {
        loss.push_str(&format!("{},{l:.16e}\n", i + 1));
    }
    write_file(&a.out.join("loss.csv"), &loss)?;
    println!(
        "final loss {:.6e} (reconstruction {:.6e})",
        model.record.final_loss, model.record.final_reconstruction
    );
    Ok(Status::Done)
}

/// Loads the config, applies overrides and resolves the output directory.
fn prepare(a: &RunArgs, case: CaseKind) -> Result<(RunConfig, PathBuf, PathBuf)> {
    let mut cfg = RunConfig::load(&a.config)?;
    if cfg.case != case {
        return Err(Error::Config(format!(
            "{} describes a {:?} run",
            a.config.display(),
            cfg.case
        )));
    }
    if let Some(seed) = a.seed {
        cfg.autoencoder.seed = seed;
    }
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&a.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => {
            return Err(Error::Config(
                "no output directory: pass --out or set output_dir".into(),
            ))
        }
    };
    Ok((cfg, base, out))
}

fn run_beam(a: &RunArgs) -> Result<Status> {
    let (cfg, base, out) = prepare(a, CaseKind::Beam)?;
    let r = run_beam_case(&cfg, &base)?;
    r.write(&out)?;
    if let Some(f) = r.run.as_ref().and_then(|run| run.failure.as_ref()) {
        return Ok(Status::SolverFailed(format!(
            "load step {} (load factor {}): {}",
            f.load_step, f.load_factor, f.reason
        )));
    }
    println!("nrmsd {:.6e}", r.nrmsd.unwrap_or(f64::NAN));
    Ok(Status::Done)
}

fn run_tissue(a: &RunTissue) -> Result<Status> {
    let (mut cfg, base, out) = prepare(&a.run, CaseKind::Tissue)?;
    if let Some(p) = a.case {
        cfg.tissue.preset = Some(p);
        cfg.tissue.training.clear();
        cfg.tissue.testing.clear();
    }
    let r = run_tissue_case(&cfg, &base, &out)?;
    r.write(&out)?;
    for p in &r.protocols {
        match p.nrmsd {
            Some(v) => println!("protocol {}: nrmsd {v:.6e}", p.id),
            None => println!("protocol {}: not converged", p.id),
        }
    }
    if !r.completed() {
        let failed: Vec<String> = r
            .protocols
            .iter()
            .filter(|p| !p.run.completed())
            .map(|p| p.id.to_string())
            .collect();
        return Ok(Status::SolverFailed(format!(
            "protocols {} did not complete",
            failed.join(", ")
        )));
    }
    Ok(Status::Done)
}

fn run_patch(a: &RunArgs) -> Result<Status> {
    let (cfg, _, out) = prepare(a, CaseKind::Patch)?;
    let r = run_patch_case(&cfg)?;
    r.write(&out)?;
    println!(
        "max displacement error {:.6e}, max strain error {:.6e}",
        r.displacement_error, r.strain_error
    );
    Ok(Status::Done)
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let mut rd = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let bad = |e: String| Error::Config(format!("{}: {e}", path.display()));
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = rec
            .iter()
            .map(|v| {
                let v = v.trim();
                if v.is_empty() {
                    Ok(None)
                } else {
                    v.parse()
                        .map(Some)
                        .map_err(|_| bad(format!("`{v}` is not a number")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Config(format!("{}: no `{name}` column", path.display())))
}

fn eval_nrmsd(a: &EvalNrmsd) -> Result<Status> {
    let value = if let Some(path) = &a.deflection {
        let (header, rows) = read_table(path)?;
        let cols = ["load_factor", "tip_deflection_normalized", "reference"]
            .map(|n| column(&header, n, path));
        let [lf, dd, rf] = [cols[0].as_ref(), cols[1].as_ref(), cols[2].as_ref()]
            .map(|c| c.map(|&i| i).map_err(|e| Error::Config(e.to_string())));
        let (lf, dd, rf) = (lf?, dd?, rf?);
        let mut pred = DeflectionCurve {
            load: Vec::new(),
            deflection: Vec::new(),
        };
        let mut reference = DeflectionCurve {
            load: Vec::new(),
            deflection: Vec::new(),
        };
        for row in &rows {
            let (Some(l), Some(r)) = (row[lf], row[rf]) else {
                return Err(Error::Config(format!("{}: incomplete row", path.display())));
            };
            reference.load.push(l * a.max_load);
            reference.deflection.push(r);
            if let Some(d) = row[dd] {
                pred.load.push(l * a.max_load);
                pred.deflection.push(d);
            }
        }
        let spec = BeamSpec {
            max_load: a.max_load,
            n_eval: a.n_eval,
            ..BeamSpec::default()
        };
        beam_nrmsd(&spec, &pred, &reference)?
    } else {
        let (Some(path), Some(data)) = (&a.curve, &a.data) else {
            unreachable!("clap requires --deflection or --curve with --data");
        };
        let (header, rows) = read_table(path)?;
        let names = ["load_factor", "E11", "E22", "G12", "S11", "S22", "S12"];
        let idx = names
            .iter()
            .map(|n| column(&header, n, path))
            .collect::<Result<Vec<_>>>()?;
        let mut curve = StressStrainCurve {
            load_factor: Vec::new(),
            strain: Vec::new(),
            stress: Vec::new(),
        };
        for row in &rows {
            let v = idx
                .iter()
                .map(|&i| row[i])
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Config(format!("{}: incomplete row", path.display())))?;
            curve.load_factor.push(v[0]);
            curve.strain.push([v[1], v[2], v[3]]);
            curve.stress.push([v[4], v[5], v[6]]);
        }
        protocol_nrmsd(&curve, &load_dataset(data)?)?
    };
    println!("{value:.16e}");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_file(&dir.join(NRMSD_FILE), &format!("{value:.16e}\n"))?;
    }
    Ok(Status::Done)
}

fn dump_voronoi(a: &RunArgs) -> Result<Status> {
    let cfg = RunConfig::load(&a.config)?;
    let out = a
        .out
        .clone()
        .or_else(|| {
            cfg.output_dir
                .as_ref()
                .map(|o| a.config.parent().unwrap_or(Path::new("")).join(o))
        })
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
    let disc = case_discretization(&cfg)?;
    create_dir(&out)?;
    write_voronoi(&disc, &out.join(VORONOI_FILE))?;
    println!(
        "{} cells written to {}",
        disc.num_nodes(),
        out.join(VORONOI_FILE).display()
    );
    Ok(Status::Done)
}

fn show_config(case: CaseKind) -> Result<Status> {
    let text = RunConfig::preset(case).to_toml()?;
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(Status::Done)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainAe(a) => train_ae(a),
        Command::RunBeam(a) => run_beam(a),
        Command::RunTissue(a) => run_tissue(a),
        Command::RunPatch(a) => run_patch(a),
        Command::EvalNrmsd(a) => eval_nrmsd(a),
        Command::DumpVoronoi(a) => dump_voronoi(a),
        Command::ShowConfig { case } => show_config(*case),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::SolverFailed(m)) => {
            eprintln!("error: solver failed: {m}");
            ExitCode::from(1)
        }
        Err(e) if e.is_solver_failure() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
