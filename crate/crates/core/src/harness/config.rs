//! TOML run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::autoencoder::{
    load_model, train, Architecture, InputScaling, TrainConfig, TrainedAutoencoder,
};
use crate::error::{Error, Result};
use crate::global::{FixedPointConfig, NewtonConfig};
use crate::local::LocalSolverKind;
use crate::phase::{
    add_noise, generate_sparse_path_dataset, generate_svk_grid_dataset, load_dataset,
    MaterialDataset, WeightMatrix,
};

use super::beam::BeamSpec;
use super::patch::PatchSpec;
use super::tissue::{CasePreset, FungSurrogate, ProtocolRecord, TissueSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Beam,
    Tissue,
    Patch,
}

/// Where the material dataset of a beam or patch run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// Tensor grid of `points_per_axis³` linear states, optionally noisy.
    Grid {
        points_per_axis: usize,
        strain_bound: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Radial strain paths with linear stresses, optionally noisy.
    Paths {
        n_paths: usize,
        points_per_path: usize,
        strain_bound: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Grid {
            points_per_axis: 40,
            strain_bound: 0.02,
            noise: 0.4,
            seed: 1,
        }
    }
}

impl DatasetSource {
    /// Builds the dataset; generated stresses follow `S = Ĉ E` for `w`.
    /// Relative file paths are resolved against `base`.
    pub fn build(&self, w: &WeightMatrix, base: &Path) -> Result<MaterialDataset> {
        let noisy = |ds: MaterialDataset, noise: f64, seed: u64| {
            if noise > 0.0 {
                add_noise(&ds, noise, seed)
            } else {
                Ok(ds)
            }
        };
        match self {
            DatasetSource::Grid {
                points_per_axis,
                strain_bound,
                noise,
                seed,
            } => noisy(
                generate_svk_grid_dataset(*points_per_axis, *strain_bound, w, *seed)?,
                *noise,
                *seed,
            ),
            DatasetSource::Paths {
                n_paths,
                points_per_path,
                strain_bound,
                noise,
                seed,
            } => noisy(
                generate_sparse_path_dataset(*n_paths, *points_per_path, *strain_bound, w, *seed)?,
                *noise,
                *seed,
            ),
            DatasetSource::File { path } => load_dataset(&base.join(path)),
        }
    }
}

/// Local solver selection. `model` skips the data-driven solve and reports
/// the model-based reference as the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Model,
    Data(LocalSolverKind),
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "model" | "direct" => Ok(SolverKind::Model),
            other => other.parse().map(SolverKind::Data),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Model => f.write_str("model"),
            SolverKind::Data(k) => k.fmt(f),
        }
    }
}

impl Serialize for SolverKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SolverKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub kind: SolverKind,
    /// Neighbors used by LCDD and AEDD.
    pub k: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            kind: SolverKind::Data(LocalSolverKind::AeddII),
            k: 6,
        }
    }
}

/// Autoencoder architecture and training, or a saved model to load instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSpec {
    /// Encoder layer sizes from the input to the embedding.
    pub architecture: Vec<usize>,
    pub epochs: usize,
    pub beta: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Mini-batch size; 0 trains full batch.
    pub batch_size: usize,
    /// Scale inputs by the weight matrix instead of per component.
    pub metric_scaling: bool,
    pub model: Option<PathBuf>,
}

impl Default for AutoencoderSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            architecture: vec![6, 4, 3],
            epochs: t.epochs,
            beta: t.beta,
            learning_rate: t.learning_rate,
            seed: 1,
            batch_size: 512,
            metric_scaling: false,
            model: None,
        }
    }
}

impl AutoencoderSpec {
    pub fn train_config(&self, w: &WeightMatrix) -> TrainConfig {
        let c = w.c();
        TrainConfig {
            beta: self.beta,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
            batch_size: (self.batch_size > 0).then_some(self.batch_size),
            scaling: if self.metric_scaling {
                InputScaling::Metric([c[0][0], c[1][1], c[2][2]])
            } else {
                InputScaling::PerComponent
            },
            ..TrainConfig::default()
        }
    }

    /// Loads the configured model, or trains one on `dataset`.
    pub fn obtain(
        &self,
        dataset: &MaterialDataset,
        w: &WeightMatrix,
        base: &Path,
    ) -> Result<TrainedAutoencoder> {
        match &self.model {
            Some(path) => load_model(&base.join(path)),
            None => {
                let arch = Architecture::for_material(self.architecture.clone())?;
                train(dataset, &arch, &self.train_config(w))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub fixed_point_rtol: f64,
    pub distance_floor: f64,
    pub fixed_point_max_iter: usize,
    /// Keep loading after a load step that did not converge.
    pub continue_on_fail: bool,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let f = FixedPointConfig::default();
        Self {
            fixed_point_rtol: f.rtol,
            distance_floor: f.distance_floor,
            fixed_point_max_iter: f.max_iter,
            continue_on_fail: f.continue_on_fail,
            newton_tol: f.newton.tol,
            newton_max_iter: f.newton.max_iter,
        }
    }
}

impl Tolerances {
    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            ..NewtonConfig::default()
        }
    }

    pub fn fixed_point(&self) -> FixedPointConfig {
        FixedPointConfig {
            rtol: self.fixed_point_rtol,
            distance_floor: self.distance_floor,
            max_iter: self.fixed_point_max_iter,
            continue_on_fail: self.continue_on_fail,
            newton: self.newton(),
        }
    }
}

/// Protocol data and the train/test split of a tissue run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TissueCase {
    /// Named split, used instead of explicit `training` and `testing` lists.
    pub preset: Option<CasePreset>,
    pub training: Vec<usize>,
    pub testing: Vec<usize>,
    /// Directory holding `protocol_<id>.csv`. Without it the surrogate
    /// protocol files are generated into `<out>/protocols`.
    pub data_dir: Option<PathBuf>,
    /// Explicit protocol records; they take precedence over `data_dir`.
    pub protocols: Vec<ProtocolRecord>,
    pub surrogate: FungSurrogate,
    pub model: TissueSpec,
}

impl Default for TissueCase {
    fn default() -> Self {
        Self {
            preset: None,
            training: Vec::new(),
            testing: Vec::new(),
            data_dir: None,
            protocols: Vec::new(),
            surrogate: FungSurrogate::default(),
            model: TissueSpec::default(),
        }
    }
}

impl TissueCase {
    pub fn split(&self) -> (Vec<usize>, Vec<usize>) {
        match self.preset {
            Some(p) => (p.training().to_vec(), p.testing().to_vec()),
            None => (self.training.clone(), self.testing.clone()),
        }
    }
}

/// Everything a run depends on apart from referenced files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseKind,
    #[serde(default)]
    pub beam: BeamSpec,
    #[serde(default)]
    pub tissue: TissueCase,
    #[serde(default)]
    pub patch: PatchSpec,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default)]
    pub autoencoder: AutoencoderSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory, relative to the config file. The CLI `--out` flag overrides it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for one case. The tissue defaults use the metric-scaled
    /// 6-4-3 autoencoder and the coarser stop that suit the protocol data.
    pub fn preset(case: CaseKind) -> Self {
        let mut cfg = RunConfig {
            case,
            beam: BeamSpec::default(),
            tissue: TissueCase::default(),
            patch: PatchSpec::default(),
            dataset: DatasetSource::default(),
            autoencoder: AutoencoderSpec::default(),
            solver: SolverSpec::default(),
            tolerances: Tolerances::default(),
            output_dir: None,
        };
        match case {
            CaseKind::Tissue => {
                cfg.tissue.preset = Some(CasePreset::Case1);
                cfg.autoencoder.epochs = 20_000;
                cfg.autoencoder.batch_size = 32;
                cfg.autoencoder.metric_scaling = true;
                cfg.tolerances.distance_floor = 1e-4;
            }
            CaseKind::Patch => {
                cfg.solver.kind = SolverKind::Data(LocalSolverKind::Lcdd);
                cfg.solver.k = 2;
                cfg.tolerances.distance_floor = 0.0;
            }
            CaseKind::Beam => {}
        }
        cfg
    }

    /// Parses a config file. Omitted keys take the values of
    /// [`RunConfig::preset`] for the file's case.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let case: CaseKind = user
            .get("case")
            .ok_or_else(|| Error::Config("missing `case`".into()))?
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("case: {}", e.message())))?;
        let mut merged =
            toml::Table::try_from(Self::preset(case)).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(t) = user.get("tissue").and_then(toml::Value::as_table) {
            // an explicit split replaces the named one
            let explicit = t.contains_key("training") || t.contains_key("testing");
            if explicit && !t.contains_key("preset") {
                if let Some(toml::Value::Table(base)) = merged.get_mut("tissue") {
                    base.remove("preset");
                }
            }
        }
        if let Some(d) = user.get("dataset").and_then(toml::Value::as_table) {
            // fields of another source kind do not carry over
            if d.get("kind") != merged["dataset"].get("kind") {
                merged.remove("dataset");
            }
        }
        merge_tables(&mut merged, user);
        let cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.solver.k == 0 {
            return Err(Error::Config("solver.k must be at least 1".into()));
        }
        let t = &self.tolerances;
        if !(t.fixed_point_rtol >= 0.0 && t.distance_floor >= 0.0 && t.newton_tol > 0.0) {
            return Err(Error::Config(
                "tolerances must be non-negative and newton_tol positive".into(),
            ));
        }
        if t.fixed_point_max_iter == 0 || t.newton_max_iter == 0 {
            return Err(Error::Config("iteration limits must be at least 1".into()));
        }
        match self.case {
            CaseKind::Beam => self.beam.validate(),
            CaseKind::Patch => self.patch.validate(),
            CaseKind::Tissue => {
                self.tissue.model.validate()?;
                self.tissue.surrogate.validate()?;
                if self.tissue.preset.is_some()
                    && !(self.tissue.training.is_empty() && self.tissue.testing.is_empty())
                {
                    return Err(Error::Config(
                        "give either tissue.preset or tissue.training/testing, not both".into(),
                    ));
                }
                let (train, test) = self.tissue.split();
                if train.is_empty() || test.is_empty() {
                    return Err(Error::Config(
                        "tissue runs need non-empty training and testing protocol lists".into(),
                    ));
                }
                if self.tissue.protocols.is_empty() {
                    for &id in train.iter().chain(&test) {
                        super::tissue::protocol_spec(id)?;
                    }
                }
                Ok(())
            }
        }
    }
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
