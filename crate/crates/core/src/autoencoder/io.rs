//! Plain-text model files.
//!
//! ```text
//! format aedd-ae 1
//! sizes 6 4 3 4 6
//! encoder_layers 2
//! mean <d values>
//! std <d values>
//! record <epochs> <seed> <batch_size, 0 = full batch> <beta> <learning_rate> <initial_loss> <final_loss> <final_reconstruction>
//! layer <index> <rows> <cols>
//! w <rows·cols values, row-major>
//! b <rows values>
//! ...
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so loading restores every
//! parameter bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Network, TrainedAutoencoder, TrainingRecord};
use crate::error::{Error, Result};
use crate::phase::StandardizationStats;

pub const MODEL_FORMAT: &str = "aedd-ae 1";

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_model<W: Write>(model: &TrainedAutoencoder, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    let net = &model.network;
    let r = &model.record;
    writeln!(w, "format {MODEL_FORMAT}")?;
    let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
    writeln!(w, "sizes {}", sizes.join(" "))?;
    writeln!(w, "encoder_layers {}", net.encoder_layers())?;
    writeln!(w, "mean {}", join(model.stats.mean()))?;
    writeln!(w, "std {}", join(model.stats.std()))?;
    writeln!(
        w,
        "record {} {} {} {:e} {:e} {:e} {:e} {:e}",
        r.epochs,
        r.seed,
        r.batch_size.unwrap_or(0),
        r.beta,
        r.learning_rate,
        r.initial_loss,
        r.final_loss,
        r.final_reconstruction
    )?;
    for l in 0..net.num_layers() {
        writeln!(w, "layer {l} {} {}", net.sizes()[l + 1], net.sizes()[l])?;
        writeln!(w, "w {}", join(net.weights(l)))?;
        writeln!(w, "b {}", join(net.bias(l)))?;
    }
    writeln!(w, "end")?;
    w.flush()?;
    Ok(())
}

struct Lines<R: BufRead> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next line split as `(keyword, rest)`, requiring `keyword == key`.
    fn expect(&mut self, key: &str) -> Result<Vec<String>> {
        loop {
            let line = match self.inner.next() {
                None => {
                    return Err(Error::ModelLoad(format!(
                        "unexpected end of file, expected `{key}` (model file truncated?)"
                    )))
                }
                Some(l) => l?,
            };
            self.line_no += 1;
            let mut parts = line.split_whitespace();
            let Some(k) = parts.next() else { continue };
            if k != key {
                return Err(Error::ModelLoad(format!(
                    "line {}: expected `{key}`, found `{k}`",
                    self.line_no
                )));
            }
            return Ok(parts.map(str::to_string).collect());
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::ModelLoad(format!("line {}: {msg}", self.line_no))
    }

    fn floats(&self, parts: &[String], n: usize) -> Result<Vec<f64>> {
        if parts.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", parts.len())));
        }
        parts
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| self.err(format!("`{p}` is not a number")))
            })
            .collect()
    }

    fn ints(&self, parts: &[String]) -> Result<Vec<usize>> {
        parts
            .iter()
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| self.err(format!("`{p}` is not an integer")))
            })
            .collect()
    }
}

pub fn read_model<R: Read>(input: R) -> Result<TrainedAutoencoder> {
    let mut lines = Lines {
        inner: BufReader::new(input).lines(),
        line_no: 0,
    };
    let format = lines.expect("format")?.join(" ");
    if format != MODEL_FORMAT {
        return Err(lines.err(format!(
            "unsupported model format `{format}`, expected `{MODEL_FORMAT}`"
        )));
    }
    let sizes = lines.expect("sizes")?;
    let sizes = lines.ints(&sizes)?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(lines.err(format!("invalid layer sizes {sizes:?}")));
    }
    let enc = lines.expect("encoder_layers")?;
    let enc = lines.ints(&enc)?;
    if enc.len() != 1 {
        return Err(lines.err("expected one encoder layer count"));
    }
    let d = sizes[0];
    let mean = lines.expect("mean")?;
    let mean = lines
        .floats(&mean, d)
        .map_err(|e| shape_context(e, "mean", d))?;
    let std = lines.expect("std")?;
    let std = lines
        .floats(&std, d)
        .map_err(|e| shape_context(e, "std", d))?;
    let rec = lines.expect("record")?;
    if rec.len() != 8 {
        return Err(lines.err("record needs 8 fields"));
    }
    let counts = lines.ints(&rec[..3])?;
    let vals = lines.floats(&rec[3..], 5)?;
    let record = TrainingRecord {
        epochs: counts[0],
        seed: counts[1] as u64,
        batch_size: (counts[2] > 0).then_some(counts[2]),
        beta: vals[0],
        learning_rate: vals[1],
        initial_loss: vals[2],
        final_loss: vals[3],
        final_reconstruction: vals[4],
        loss_history: Vec::new(),
    };
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for l in 0..sizes.len() - 1 {
        let head = lines.expect("layer")?;
        let head = lines.ints(&head)?;
        if head != [l, sizes[l + 1], sizes[l]] {
            return Err(lines.err(format!(
                "layer header {head:?} does not match sizes (expected [{l}, {}, {}])",
                sizes[l + 1],
                sizes[l]
            )));
        }
        let w = lines.expect("w")?;
        let w = lines.floats(&w, sizes[l] * sizes[l + 1])?;
        let b = lines.expect("b")?;
        let b = lines.floats(&b, sizes[l + 1])?;
        layers.push((w, b));
    }
    lines.expect("end")?;
    let network =
        Network::from_layers(sizes, enc[0], layers).map_err(|e| Error::ModelLoad(e.to_string()))?;
    let stats =
        StandardizationStats::new(mean, std).map_err(|e| Error::ModelLoad(e.to_string()))?;
    TrainedAutoencoder::new(network, stats, record).map_err(|e| Error::ModelLoad(e.to_string()))
}

fn shape_context(e: Error, what: &str, d: usize) -> Error {
    Error::ModelLoad(format!("{e} ({what} must match the input size {d})"))
}

pub fn save_model(model: &TrainedAutoencoder, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    write_model(model, f)
}

pub fn load_model(path: &Path) -> Result<TrainedAutoencoder> {
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_model(f)
}
