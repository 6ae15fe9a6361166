//! Dense autoencoder: `tanh` hidden layers, linear embedding and output layers.

mod io;
mod train;

pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT};
pub use train::{evaluate_test_loss, train, train_rows, InputScaling, TrainConfig, TrainingRecord};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::phase::{MaterialDataset, PhaseState, StandardizationStats, PHASE_DIM};

/// Encoder layer sizes `[d, n_1, …, p]`. The decoder mirrors them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    layer_sizes: Vec<usize>,
}

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidParameter(
                "architecture needs an input and an embedding size".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "layer sizes must be at least 1".into(),
            ));
        }
        let (d, p) = (layer_sizes[0], layer_sizes[layer_sizes.len() - 1]);
        if p >= d {
            return Err(Error::InvalidParameter(format!(
                "embedding size {p} must be smaller than the input size {d}"
            )));
        }
        Ok(Self { layer_sizes })
    }

    /// Architecture for plane phase-space data; the input size must be 6.
    pub fn for_material(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.first() != Some(&PHASE_DIM) {
            return Err(Error::InvalidParameter(format!(
                "input layer must have {PHASE_DIM} units, got {layer_sizes:?}"
            )));
        }
        Self::new(layer_sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn embedding_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Sizes along the full encoder–decoder chain.
    pub fn full_chain(&self) -> Vec<usize> {
        let mut sizes = self.layer_sizes.clone();
        sizes.extend(self.layer_sizes.iter().rev().skip(1));
        sizes
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: Vec<String> = self.layer_sizes.iter().map(|n| n.to_string()).collect();
        write!(f, "{}", s.join("-"))
    }
}

/// Weights and biases of every layer, stored in one flat vector.
///
/// Layer `l` maps `sizes[l]` to `sizes[l + 1]`; its weight matrix is stored
/// row-major (`n_out × n_in`) and followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    encoder_layers: usize,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

fn layer_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut o = 0;
    offsets.push(0);
    for w in sizes.windows(2) {
        o += w[0] * w[1] + w[1];
        offsets.push(o);
    }
    offsets
}

impl Network {
    /// Glorot-uniform weights `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let sizes = arch.full_chain();
        let offsets = layer_offsets(&sizes);
        let mut params = vec![0.0; *offsets.last().unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let a = (6.0 / (n_in + n_out) as f64).sqrt();
            for w in &mut params[offsets[l]..offsets[l] + n_in * n_out] {
                *w = rng.random_range(-a..=a);
            }
        }
        Self {
            sizes,
            encoder_layers: arch.layer_sizes().len() - 1,
            params,
            offsets,
        }
    }

    /// Network from explicit `(weights row-major, bias)` per layer. The first
    /// `encoder_layers` layers form the encoder.
    pub fn from_layers(
        sizes: Vec<usize>,
        encoder_layers: usize,
        layers: Vec<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        if sizes.len() < 2 || layers.len() != sizes.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layers given for a chain of {} sizes",
                layers.len(),
                sizes.len()
            )));
        }
        if encoder_layers == 0 || encoder_layers > sizes.len() - 1 {
            return Err(Error::Shape(format!(
                "invalid encoder layer count {encoder_layers}"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Shape("layer sizes must be at least 1".into()));
        }
        let offsets = layer_offsets(&sizes);
        let mut params = Vec::with_capacity(*offsets.last().unwrap());
        for (l, (w, b)) in layers.into_iter().enumerate() {
            if w.len() != sizes[l] * sizes[l + 1] || b.len() != sizes[l + 1] {
                return Err(Error::Shape(format!(
                    "layer {l}: expected {}x{} weights and {} biases, got {} and {}",
                    sizes[l + 1],
                    sizes[l],
                    sizes[l + 1],
                    w.len(),
                    b.len()
                )));
            }
            params.extend(w);
            params.extend(b);
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "network parameters must be finite".into(),
            ));
        }
        Ok(Self {
            sizes,
            encoder_layers,
            params,
            offsets,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn encoder_layers(&self) -> usize {
        self.encoder_layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn embedding_dim(&self) -> usize {
        self.sizes[self.encoder_layers]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        &self.params[self.offsets[l]..self.offsets[l] + self.sizes[l] * self.sizes[l + 1]]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let start = self.offsets[l] + self.sizes[l] * self.sizes[l + 1];
        &self.params[start..self.offsets[l + 1]]
    }

    /// Parameter range of layer `l` within the flat vector.
    pub fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    fn is_linear(&self, l: usize) -> bool {
        l + 1 == self.encoder_layers || l + 1 == self.num_layers()
    }

    fn max_width(&self) -> usize {
        *self.sizes.iter().max().unwrap()
    }

    fn layer_forward(&self, l: usize, input: &[f64], out: &mut [f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = self.weights(l);
        let b = self.bias(l);
        let linear = self.is_linear(l);
        for i in 0..n_out {
            let row = &w[i * n_in..(i + 1) * n_in];
            let mut s = b[i];
            for (wi, xi) in row.iter().zip(input) {
                s += wi * xi;
            }
            out[i] = if linear { s } else { s.tanh() };
        }
    }

    fn run_layers(&self, layers: std::ops::Range<usize>, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = vec![0.0; self.max_width()];
        for l in layers {
            let n_out = self.sizes[l + 1];
            self.layer_forward(l, &cur, &mut next[..n_out]);
            cur.clear();
            cur.extend_from_slice(&next[..n_out]);
        }
        cur
    }

    fn check_len(x: &[f64], n: usize, what: &str) -> Result<()> {
        if x.len() != n {
            return Err(Error::Shape(format!(
                "{what} has {} entries, expected {n}",
                x.len()
            )));
        }
        Ok(())
    }

    /// Encoder map on standardized coordinates.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(x, self.input_dim(), "encoder input")?;
        Ok(self.run_layers(0..self.encoder_layers, x))
    }

    /// Decoder map from the embedding to standardized coordinates.
    pub fn decode(&self, y: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(y, self.embedding_dim(), "decoder input")?;
        Ok(self.run_layers(self.encoder_layers..self.num_layers(), y))
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(x, self.input_dim(), "autoencoder input")?;
        Ok(self.run_layers(0..self.num_layers(), x))
    }

    /// `β Σ ‖W‖²_F` over every layer.
    pub fn regularization(&self, beta: f64) -> f64 {
        let mut s = 0.0;
        for l in 0..self.num_layers() {
            s += self.weights(l).iter().map(|w| w * w).sum::<f64>();
        }
        beta * s
    }

    fn check_rows(&self, rows: &[f64]) -> Result<usize> {
        let d = self.input_dim();
        if self.output_dim() != d || rows.len() % d != 0 || rows.is_empty() {
            return Err(Error::Shape(format!(
                "{} values do not form samples of dimension {d}",
                rows.len()
            )));
        }
        Ok(rows.len() / d)
    }

    /// Mean squared reconstruction error over row-major samples.
    pub fn reconstruction_error(&self, rows: &[f64]) -> Result<f64> {
        let m = self.check_rows(rows)?;
        let mut ws = Workspace::new(self);
        let mut total = 0.0;
        for block in rows.chunks(BLOCK * self.input_dim()) {
            total += ws.forward(self, block);
        }
        Ok(total / m as f64)
    }

    /// Reconstruction error plus `β Σ ‖W‖²_F`.
    pub fn loss(&self, rows: &[f64], beta: f64) -> Result<f64> {
        Ok(self.reconstruction_error(rows)? + self.regularization(beta))
    }

    /// Loss and its exact gradient (same layout as [`params`](Self::params)).
    pub fn loss_gradient(&self, rows: &[f64], beta: f64) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.loss_gradient_into(rows, beta, &mut Workspace::new(self), &mut grad)?;
        Ok((loss, grad))
    }

    pub(crate) fn loss_gradient_into(
        &self,
        rows: &[f64],
        beta: f64,
        ws: &mut Workspace,
        grad: &mut [f64],
    ) -> Result<f64> {
        let m = self.check_rows(rows)? as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 2.0 / m;
        let mut total = 0.0;
        for block in rows.chunks(BLOCK * self.input_dim()) {
            total += ws.forward(self, block);
            ws.backward(self, scale, grad);
        }
        for l in 0..self.num_layers() {
            let start = self.offsets[l];
            let n = self.sizes[l] * self.sizes[l + 1];
            for (g, w) in grad[start..start + n]
                .iter_mut()
                .zip(&self.params[start..start + n])
            {
                *g += 2.0 * beta * w;
            }
        }
        Ok(total / m + self.regularization(beta))
    }
}

/// Samples processed together by the batched forward and backward passes.
const BLOCK: usize = 256;

/// Feature-major activation buffers for one block of samples: entry `(i, b)`
/// of a layer is stored at `i·nb + b`.
pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    nb: usize,
}

impl Workspace {
    pub(crate) fn new(net: &Network) -> Self {
        let w = net.max_width();
        Self {
            acts: net.sizes.iter().map(|&n| vec![0.0; n * BLOCK]).collect(),
            delta: vec![0.0; w * BLOCK],
            delta_prev: vec![0.0; w * BLOCK],
            nb: 0,
        }
    }

    /// Runs a block of row-major samples through the network, leaving
    /// `h(x) − x` in `delta` and returning `Σ ‖h(x) − x‖²`.
    fn forward(&mut self, net: &Network, rows: &[f64]) -> f64 {
        let d = net.input_dim();
        let nb = rows.len() / d;
        self.nb = nb;
        for (b, x) in rows.chunks_exact(d).enumerate() {
            for (j, &v) in x.iter().enumerate() {
                self.acts[0][j * nb + b] = v;
            }
        }
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let w = net.weights(l);
            let bias = net.bias(l);
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let input = &head[l][..n_in * nb];
            let out = &mut tail[0][..n_out * nb];
            for (i, oi) in out.chunks_exact_mut(nb).enumerate() {
                oi.fill(bias[i]);
                for (&wij, xj) in w[i * n_in..(i + 1) * n_in]
                    .iter()
                    .zip(input.chunks_exact(nb))
                {
                    for (o, x) in oi.iter_mut().zip(xj) {
                        *o += wij * x;
                    }
                }
                if !net.is_linear(l) {
                    oi.iter_mut().for_each(|o| *o = o.tanh());
                }
            }
        }
        let out = &self.acts[net.num_layers()][..d * nb];
        let input = &self.acts[0][..d * nb];
        let mut total = 0.0;
        for ((r, o), x) in self.delta[..d * nb].iter_mut().zip(out).zip(input) {
            *r = o - x;
            total += *r * *r;
        }
        total
    }

    /// Accumulates `scale · ∂Σ‖h(x) − x‖²/2 / ∂θ` for the block last passed
    /// to [`forward`](Self::forward).
    fn backward(&mut self, net: &Network, scale: f64, grad: &mut [f64]) {
        let nb = self.nb;
        let nl = net.num_layers();
        let d = net.output_dim();
        self.delta[..d * nb].iter_mut().for_each(|r| *r *= scale);
        for l in (0..nl).rev() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let delta = &mut self.delta[..n_out * nb];
            if !net.is_linear(l) {
                for (dl, a) in delta.iter_mut().zip(&self.acts[l + 1][..n_out * nb]) {
                    *dl *= 1.0 - a * a;
                }
            }
            let off = net.offsets[l];
            let input = &self.acts[l][..n_in * nb];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (i, di) in delta.chunks_exact(nb).enumerate() {
                for (g, xj) in gw[i * n_in..(i + 1) * n_in]
                    .iter_mut()
                    .zip(input.chunks_exact(nb))
                {
                    *g += dot(di, xj);
                }
                gb[i] += di.iter().sum::<f64>();
            }
            if l > 0 {
                let w = net.weights(l);
                let prev = &mut self.delta_prev[..n_in * nb];
                prev.fill(0.0);
                for (i, di) in delta.chunks_exact(nb).enumerate() {
                    for (&wij, pj) in w[i * n_in..(i + 1) * n_in]
                        .iter()
                        .zip(prev.chunks_exact_mut(nb))
                    {
                        for (p, x) in pj.iter_mut().zip(di) {
                            *p += wij * x;
                        }
                    }
                }
                std::mem::swap(&mut self.delta, &mut self.delta_prev);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums so the loop vectorizes
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// A trained network bound to the standardization of its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAutoencoder {
    pub network: Network,
    pub stats: StandardizationStats,
    pub record: TrainingRecord,
}

impl TrainedAutoencoder {
    pub fn new(
        network: Network,
        stats: StandardizationStats,
        record: TrainingRecord,
    ) -> Result<Self> {
        if stats.dim() != network.input_dim() || network.output_dim() != network.input_dim() {
            return Err(Error::Shape(format!(
                "standardization has {} components but the network maps {} to {}",
                stats.dim(),
                network.input_dim(),
                network.output_dim()
            )));
        }
        Ok(Self {
            network,
            stats,
            record,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.network.embedding_dim()
    }

    /// Embedding of raw (unstandardized) coordinates.
    pub fn encode_raw(&self, z: &[f64]) -> Result<Vec<f64>> {
        Network::check_len(z, self.stats.dim(), "raw input")?;
        let mut x = z.to_vec();
        self.stats.apply_in_place(&mut x);
        self.network.encode(&x)
    }

    /// Raw coordinates decoded from an embedding.
    pub fn decode_raw(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.network.decode(y)?;
        self.stats.invert_in_place(&mut x);
        Ok(x)
    }

    pub fn encode_state(&self, z: &PhaseState) -> Result<Vec<f64>> {
        self.encode_raw(&z.to_array())
    }

    pub fn decode_to_state(&self, y: &[f64]) -> Result<PhaseState> {
        let x = self.decode_raw(y)?;
        let arr: [f64; PHASE_DIM] = x
            .try_into()
            .map_err(|_| Error::Shape("decoder output is not a phase state".into()))?;
        Ok(PhaseState::from_array(arr))
    }

    /// Row-major embeddings of every dataset point.
    pub fn embed_dataset(&self, dataset: &MaterialDataset) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(dataset.len() * self.embedding_dim());
        for p in dataset.points() {
            out.extend(self.encode_state(p)?);
        }
        Ok(out)
    }
}
