use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, Network, TrainedAutoencoder, Workspace};
use crate::error::{Error, Result};
use crate::phase::{MaterialDataset, StandardizationStats, PHASE_DIM};

/// Mixed into the seed so batch shuffling does not reuse the initialization stream.
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Map from raw samples to network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InputScaling {
    /// Zero mean and unit variance per component.
    #[default]
    PerComponent,
    /// Distance-preserving scaling for a diagonal weight `Ĉ`, see
    /// [`StandardizationStats::metric`]. Only for phase-state samples.
    Metric([f64; 3]),
}

/// Adagrad settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Adagrad stabilizer added to `√G`.
    pub epsilon: f64,
    /// Samples per update. `None` takes one full-batch step per epoch;
    /// otherwise every epoch visits a fresh seeded permutation in batches.
    pub batch_size: Option<usize>,
    pub scaling: InputScaling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 1e-5,
            learning_rate: 0.1,
            epochs: 2000,
            seed: 0,
            epsilon: 1e-10,
            batch_size: None,
            scaling: InputScaling::PerComponent,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(
                "Adagrad epsilon must be positive".into(),
            ));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter(
                "batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Summary of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingRecord {
    pub epochs: usize,
    pub seed: u64,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
    /// Loss at the initial parameters.
    pub initial_loss: f64,
    /// Loss (reconstruction plus regularization) at the returned parameters.
    pub final_loss: f64,
    /// Reconstruction term of `final_loss`.
    pub final_reconstruction: f64,
    /// Loss at the start of every epoch (full batch), or the mean batch loss
    /// seen during the epoch (mini-batches).
    pub loss_history: Vec<f64>,
}

/// Trains on row-major raw samples of dimension `dim`, standardizing them first.
pub fn train_rows(
    rows: &[f64],
    dim: usize,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<TrainedAutoencoder> {
    config.validate()?;
    if arch.input_dim() != dim {
        return Err(Error::Shape(format!(
            "architecture input {} does not match data dimension {dim}",
            arch.input_dim()
        )));
    }
    let stats = match config.scaling {
        InputScaling::PerComponent => StandardizationStats::from_rows(rows, dim)?,
        InputScaling::Metric(c) if dim == PHASE_DIM => StandardizationStats::metric(rows, c)?,
        InputScaling::Metric(_) => {
            return Err(Error::InvalidParameter(format!(
                "metric scaling needs {PHASE_DIM} components, samples have {dim}"
            )))
        }
    };
    let mut data = rows.to_vec();
    for x in data.chunks_exact_mut(dim) {
        stats.apply_in_place(x);
    }

    let mut net = Network::init(arch, config.seed);
    let initial_loss = net.loss(&data, config.beta)?;
    let mut ws = Workspace::new(&net);
    let mut grad = vec![0.0; net.num_params()];
    let mut accum = vec![0.0; net.num_params()];
    let mut history = Vec::with_capacity(config.epochs);
    let m = data.len() / dim;
    let batch = config.batch_size.unwrap_or(m).min(m);
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut shuffled = Vec::new();
    for epoch in 0..config.epochs {
        let epoch_rows: &[f64] = if batch < m {
            order.shuffle(&mut rng);
            shuffled.clear();
            for &i in &order {
                shuffled.extend_from_slice(&data[i * dim..(i + 1) * dim]);
            }
            &shuffled
        } else {
            &data
        };
        let mut epoch_loss = 0.0;
        let batches = epoch_rows.chunks(batch * dim);
        let n_batches = batches.len();
        for rows in batches {
            let loss = net.loss_gradient_into(rows, config.beta, &mut ws, &mut grad)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss;
            for ((p, g), a) in net.params.iter_mut().zip(&grad).zip(accum.iter_mut()) {
                *a += g * g;
                *p -= config.learning_rate * g / (a.sqrt() + config.epsilon);
            }
        }
        history.push(epoch_loss / n_batches as f64);
    }
    let final_reconstruction = net.reconstruction_error(&data)?;
    let final_loss = final_reconstruction + net.regularization(config.beta);
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: config.epochs,
            loss: final_loss,
        });
    }
    let record = TrainingRecord {
        epochs: config.epochs,
        seed: config.seed,
        beta: config.beta,
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        initial_loss,
        final_loss,
        final_reconstruction,
        loss_history: history,
    };
    TrainedAutoencoder::new(net, stats, record)
}

/// Trains an autoencoder on a material dataset.
pub fn train(
    dataset: &MaterialDataset,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<TrainedAutoencoder> {
    if arch.input_dim() != PHASE_DIM {
        return Err(Error::InvalidParameter(format!(
            "material autoencoders need {PHASE_DIM} inputs, architecture is {arch}"
        )));
    }
    train_rows(&dataset.to_rows(), PHASE_DIM, arch, config)
}

/// Mean reconstruction error on standardized test points, using the model's statistics.
pub fn evaluate_test_loss(model: &TrainedAutoencoder, test: &MaterialDataset) -> Result<f64> {
    if model.stats.dim() != PHASE_DIM {
        return Err(Error::Shape("model does not take phase states".into()));
    }
    let mut rows = test.to_rows();
    for x in rows.chunks_exact_mut(PHASE_DIM) {
        model.stats.apply_in_place(x);
    }
    model.network.reconstruction_error(&rows)
}
