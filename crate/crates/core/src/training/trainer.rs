//! Mini-batch training over paired low/high-resolution streams.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamConfig, OptimState};
use super::backward::{backward, Gradients};
use super::loss::{LossBreakdown, LossState};
use crate::error::{Error, Result};
use crate::events::voxel::{from_voxel_grid, to_voxel_grid_at, SpikeTensor};
use crate::events::EventStream;
use crate::metrics::{rmse_st, EvalConfig};
use crate::model::{forward, Checkpoint, ExecMode, NetworkSpec, NetworkWeights, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Simulation steps per sample.
    pub steps: usize,
    pub dt_ms: f64,
    pub variant: Variant,
    pub mode: ExecMode,
    /// Share of pairs, taken from the end of the dataset, held out for validation.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch: 8,
            lr: 0.1,
            seed: 0,
            steps: 64,
            dt_ms: 1.0,
            variant: Variant::Ultralight,
            mode: ExecMode::DualSequential,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.steps == 0 {
            return Err(Error::Config(format!(
                "epochs, batch and steps must be >= 1 (got {}, {}, {})",
                self.epochs, self.batch, self.steps
            )));
        }
        if !(self.lr > 0.0) || !(self.dt_ms > 0.0) {
            return Err(Error::Config("lr and dt must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        NetworkSpec::for_variant(self.variant).check_mode(self.mode)
    }

    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            dt_ms: self.dt_ms,
            ..NetworkSpec::for_variant(self.variant)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub name: String,
    pub lr: EventStream,
    pub hr: EventStream,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total loss over the epoch's training samples.
    pub train_loss: f64,
    /// Loss-term weights after the epoch.
    pub w: [f64; 3],
    pub val_rmse_st: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Validation error of the initial weights.
    pub initial_val_rmse_st: f64,
    pub epochs: Vec<EpochRecord>,
    /// Final per-sample validation error, by pair name.
    pub val_samples: Vec<(String, f64)>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,w1,w2,w3,val_rmse_st";

    pub fn final_val_rmse_st(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_val_rmse_st, |e| e.val_rmse_st)
    }

    /// The epoch table, preceded by a comment line with the initial error.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# initial_val_rmse_st={}\n{}\n", self.initial_val_rmse_st, Self::CSV_HEADER);
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.w[0], e.w[1], e.w[2], e.val_rmse_st
            );
        }
        out
    }

    pub fn val_samples_csv(&self) -> String {
        let mut out = String::from("name,val_rmse_st\n");
        for (name, v) in &self.val_samples {
            let _ = writeln!(out, "{name},{v}");
        }
        out
    }
}

/// A pair binned onto a shared time axis.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub name: String,
    pub input: SpikeTensor,
    pub target: SpikeTensor,
    pub origin_us: u64,
    pub hr: EventStream,
}

pub fn prepare(pair: &SamplePair, steps: usize, dt_ms: f64) -> Result<PreparedSample> {
    let (lw, lh) = (pair.lr.width() as usize, pair.lr.height() as usize);
    let (hw, hh) = (pair.hr.width() as usize, pair.hr.height() as usize);
    if hw != 2 * lw || hh != 2 * lh {
        return Err(Error::Shape(format!(
            "pair '{}': low-res {lw}x{lh} is not half of high-res {hw}x{hh}",
            pair.name
        )));
    }
    let origin_us = pair.lr.t0();
    Ok(PreparedSample {
        name: pair.name.clone(),
        input: to_voxel_grid_at(&pair.lr, origin_us, steps, dt_ms)?.tensor,
        target: to_voxel_grid_at(&pair.hr, origin_us, steps, dt_ms)?.tensor,
        origin_us,
        hr: pair.hr.clone(),
    })
}

/// Runs the network on one prepared sample and scores it the way `eval` would.
pub fn validate_sample(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    mode: ExecMode,
    sample: &PreparedSample,
) -> Result<f64> {
    let (out, _) = forward(spec, weights, &sample.input, mode)?;
    let pred = from_voxel_grid(&out, sample.origin_us)?;
    let cfg = EvalConfig {
        dt_ms: out.dt_ms(),
        ..EvalConfig::new(out.shape().t)
    };
    Ok(rmse_st(&pred, &sample.hr, cfg)?.rmse_st)
}

/// Mean loss and mean gradients over a batch, reduced in sample order.
pub fn batch_gradients(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    mode: ExecMode,
    state: &LossState,
    samples: &[&PreparedSample],
) -> Result<(LossBreakdown, Gradients)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let (out, caches) = forward(spec, weights, &s.input, mode)?;
            backward(spec, weights, &caches, &out, &s.target, state)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = per_sample.len() as f64;
    let mut flat = vec![0.0; weights.param_count()];
    let mut log_var = [0.0; 3];
    let mut loss = [0.0; 4];
    for (l, g) in &per_sample {
        for (a, b) in flat.iter_mut().zip(g.weights.to_flat()) {
            *a += b;
        }
        for i in 0..3 {
            log_var[i] += g.log_var[i];
        }
        for (a, b) in loss.iter_mut().zip([l.temporal, l.spatial, l.polarity, l.total]) {
            *a += b;
        }
    }
    let mut mean_w = NetworkWeights::zeros(spec);
    mean_w.set_flat(&flat.iter().map(|v| v / n).collect::<Vec<_>>())?;
    let input = per_sample
        .into_iter()
        .next()
        .map(|(_, g)| g.input)
        .expect("non-empty batch");
    Ok((
        LossBreakdown {
            temporal: loss[0] / n,
            spatial: loss[1] / n,
            polarity: loss[2] / n,
            total: loss[3] / n,
        },
        Gradients {
            weights: mean_w,
            log_var: log_var.map(|v| v / n),
            input,
        },
    ))
}

/// Splits `n` pairs into training and validation index ranges.
pub fn split_indices(n: usize, val_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    if n < 2 {
        return ((0..n).collect(), (0..n).collect());
    }
    let n_val = ((n as f64 * val_fraction).ceil() as usize).clamp(1, n - 1);
    ((0..n - n_val).collect(), (n - n_val..n).collect())
}

/// Trains from seeded initial weights.
pub fn train(cfg: &TrainConfig, data: &[SamplePair]) -> Result<(Checkpoint, TrainReport)> {
    train_with(cfg, data, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    cfg: &TrainConfig,
    data: &[SamplePair],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Checkpoint, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let spec = cfg.spec();
    let prepared = data
        .par_iter()
        .map(|p| prepare(p, cfg.steps, cfg.dt_ms))
        .collect::<Result<Vec<_>>>()?;
    let (train_idx, val_idx) = split_indices(prepared.len(), cfg.val_fraction);
    let val: Vec<&PreparedSample> = val_idx.iter().map(|&i| &prepared[i]).collect();

    let mut weights = NetworkWeights::init(&spec, cfg.seed);
    let mut state = LossState::default();
    let n_weights = weights.param_count();
    let mut opt = OptimState::new(
        n_weights + 3,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let validation = |weights: &NetworkWeights| -> Result<Vec<(String, f64)>> {
        val.par_iter()
            .map(|s| Ok((s.name.clone(), validate_sample(&spec, weights, cfg.mode, s)?)))
            .collect()
    };
    let initial_val_rmse_st = mean_finite(&validation(&weights)?)?;

    let mut order = train_idx;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut val_samples = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(cfg.batch).enumerate() {
            let batch: Vec<&PreparedSample> = chunk.iter().map(|&i| &prepared[i]).collect();
            let (loss, grads) = batch_gradients(&spec, &weights, cfg.mode, &state, &batch)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {} at epoch {epoch}, batch {step}",
                    loss.total
                )));
            }
            loss_sum += loss.total * batch.len() as f64;

            let mut params = weights.to_flat();
            params.extend_from_slice(&state.log_var);
            let mut g = grads.weights.to_flat();
            g.extend_from_slice(&grads.log_var);
            adam_step(&mut params, &g, &mut opt).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("{m} (epoch {epoch}, batch {step})")),
                other => other,
            })?;
            weights.set_flat(&params[..n_weights])?;
            state.log_var.copy_from_slice(&params[n_weights..]);
        }
        val_samples = validation(&weights)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            w: state.weights(),
            val_rmse_st: mean_finite(&val_samples)?,
        };
        on_epoch(&record);
        epochs.push(record);
    }

    let checkpoint = Checkpoint {
        spec,
        weights,
        log_var: state.log_var,
        seed: cfg.seed,
        steps: Some(cfg.steps),
    };
    Ok((
        checkpoint,
        TrainReport {
            initial_val_rmse_st,
            epochs,
            val_samples,
        },
    ))
}

fn mean_finite(samples: &[(String, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sum: f64 = samples.iter().map(|(_, v)| v).sum();
    let mean = sum / samples.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite("validation error".to_string()));
    }
    Ok(mean)
}
