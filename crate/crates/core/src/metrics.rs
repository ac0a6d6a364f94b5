//! Stream-level evaluation: temporal and spatial (PSTH) error, the combined
//! RMSE_ST score, and polarity accuracy.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::events::voxel::to_voxel_grid_at;
use crate::events::EventStream;
use crate::tensor::Tensor4;

/// PSTH block length used by the spatial error.
pub const DEFAULT_BLOCK_MS: f64 = 50.0;

/// Sum of squared voxel differences.
pub fn mse_temporal(out: &Tensor4, gt: &Tensor4) -> Result<f64> {
    out.expect_shape(gt.shape())?;
    Ok(out
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Sum over pixels, channels and time blocks of squared PSTH differences.
///
/// Blocks hold `block_ms / dt_ms` steps (rounded, at least one); the last
/// block may be partial.
pub fn mse_spatial(out: &Tensor4, gt: &Tensor4, block_ms: f64, dt_ms: f64) -> Result<f64> {
    out.expect_shape(gt.shape())?;
    let block = block_steps(block_ms, dt_ms)?;
    let mut total = 0.0;
    for (o, g) in out.neurons().zip(gt.neurons()) {
        for (ob, gb) in o.chunks(block).zip(g.chunks(block)) {
            let d: f64 = ob.iter().sum::<f64>() - gb.iter().sum::<f64>();
            total += d * d;
        }
    }
    Ok(total)
}

pub(crate) fn block_steps(block_ms: f64, dt_ms: f64) -> Result<usize> {
    if !(block_ms > 0.0 && dt_ms > 0.0) {
        return Err(Error::Config(format!(
            "block ({block_ms} ms) and bin width ({dt_ms} ms) must be positive"
        )));
    }
    Ok(((block_ms / dt_ms).round() as usize).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub steps: usize,
    pub dt_ms: f64,
    pub block_ms: f64,
}

impl EvalConfig {
    pub fn new(steps: usize) -> Self {
        EvalConfig {
            steps,
            dt_ms: 1.0,
            block_ms: DEFAULT_BLOCK_MS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarityAccuracy {
    pub percent: f64,
    /// Size of the shared coordinate set.
    pub overlap: usize,
    pub matches: usize,
    /// No shared coordinates; `percent` is 100 by convention.
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mse_t_raw: f64,
    pub mse_s_raw: f64,
    /// Raw values divided by `n_p`.
    pub mse_t_norm: f64,
    pub mse_s_norm: f64,
    pub rmse_st: f64,
    pub pa_percent: f64,
    pub pa_vacuous: bool,
    /// Pixels with at least one ground-truth event.
    pub n_p: usize,
    pub span_ms: f64,
    pub dropped_pred: usize,
    pub dropped_gt: usize,
}

pub const REPORT_FIELDS: [&str; 11] = [
    "rmse_st",
    "mse_t_raw",
    "mse_s_raw",
    "mse_t_norm",
    "mse_s_norm",
    "pa_percent",
    "pa_vacuous",
    "n_p",
    "span_ms",
    "dropped_pred",
    "dropped_gt",
];

impl MetricsReport {
    fn values(&self) -> [String; 11] {
        [
            self.rmse_st.to_string(),
            self.mse_t_raw.to_string(),
            self.mse_s_raw.to_string(),
            self.mse_t_norm.to_string(),
            self.mse_s_norm.to_string(),
            self.pa_percent.to_string(),
            self.pa_vacuous.to_string(),
            self.n_p.to_string(),
            self.span_ms.to_string(),
            self.dropped_pred.to_string(),
            self.dropped_gt.to_string(),
        ]
    }

    /// One `name=value` line per field.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (k, v) in REPORT_FIELDS.iter().zip(self.values()) {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn csv_header() -> String {
        REPORT_FIELDS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.values().join(",")
    }

    /// Field-wise mean of several reports (`pa_vacuous` true only if all are).
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricsReport {
            mse_t_raw: avg(|r| r.mse_t_raw),
            mse_s_raw: avg(|r| r.mse_s_raw),
            mse_t_norm: avg(|r| r.mse_t_norm),
            mse_s_norm: avg(|r| r.mse_s_norm),
            rmse_st: avg(|r| r.rmse_st),
            pa_percent: avg(|r| r.pa_percent),
            pa_vacuous: reports.iter().all(|r| r.pa_vacuous),
            n_p: (reports.iter().map(|r| r.n_p).sum::<usize>() as f64 / n).round() as usize,
            span_ms: avg(|r| r.span_ms),
            dropped_pred: reports.iter().map(|r| r.dropped_pred).sum(),
            dropped_gt: reports.iter().map(|r| r.dropped_gt).sum(),
        })
    }
}

fn check_geometry(a: &EventStream, b: &EventStream) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Shape(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Both streams are binned from the ground truth's first timestamp.
fn common_origin(pred: &EventStream, gt: &EventStream) -> u64 {
    if gt.is_empty() {
        pred.t0()
    } else {
        gt.t0()
    }
}

/// Combined spatiotemporal error of a predicted stream against ground truth.
///
/// `rmse_st = sqrt((MSE_T + MSE_S) / (span_ms * N_p))` where `span_ms` is the
/// evaluation window `steps * dt` and `N_p` counts ground-truth-active pixels.
pub fn rmse_st(pred: &EventStream, gt: &EventStream, cfg: EvalConfig) -> Result<MetricsReport> {
    check_geometry(pred, gt)?;
    let origin = common_origin(pred, gt);
    let p = to_voxel_grid_at(pred, origin, cfg.steps, cfg.dt_ms)?;
    let g = to_voxel_grid_at(gt, origin, cfg.steps, cfg.dt_ms)?;
    let (pt, gt_t) = (p.tensor.grid(), g.tensor.grid());

    let n_p = active_pixels(gt_t);
    let span_ms = cfg.steps as f64 * cfg.dt_ms;
    if n_p == 0 {
        return Err(Error::Degenerate(
            "ground truth has no events in the evaluation window".to_string(),
        ));
    }
    let mse_t = mse_temporal(pt, gt_t)?;
    let mse_s = mse_spatial(pt, gt_t, cfg.block_ms, cfg.dt_ms)?;
    let pa = polarity_accuracy_at(pred, gt, origin, cfg.dt_ms)?;
    Ok(MetricsReport {
        mse_t_raw: mse_t,
        mse_s_raw: mse_s,
        mse_t_norm: mse_t / n_p as f64,
        mse_s_norm: mse_s / n_p as f64,
        rmse_st: ((mse_t + mse_s) / (span_ms * n_p as f64)).sqrt(),
        pa_percent: pa.percent,
        pa_vacuous: pa.vacuous,
        n_p,
        span_ms,
        dropped_pred: p.dropped,
        dropped_gt: g.dropped,
    })
}

fn active_pixels(vox: &Tensor4) -> usize {
    let s = vox.shape();
    (0..s.h)
        .flat_map(|y| (0..s.w).map(move |x| (y, x)))
        .filter(|&(y, x)| (0..s.c).any(|c| vox.series(c, y, x).iter().any(|v| *v > 0.0)))
        .count()
}

/// Share of shared `(x, y, 1 ms bin)` coordinates whose dominant polarity
/// agrees between the streams.
pub fn polarity_accuracy(pred: &EventStream, gt: &EventStream) -> Result<PolarityAccuracy> {
    check_geometry(pred, gt)?;
    polarity_accuracy_at(pred, gt, common_origin(pred, gt), 1.0)
}

fn polarity_accuracy_at(
    pred: &EventStream,
    gt: &EventStream,
    origin: u64,
    dt_ms: f64,
) -> Result<PolarityAccuracy> {
    check_geometry(pred, gt)?;
    let dt_us = dt_ms * 1000.0;
    let net = |s: &EventStream| {
        let mut m: HashMap<(u16, u16, i64), i64> = HashMap::new();
        for e in s.events() {
            let bin = ((e.t as f64 - origin as f64) / dt_us).floor() as i64;
            *m.entry((e.x, e.y, bin)).or_default() += e.p.sign() as i64;
        }
        m
    };
    let (pn, gn) = (net(pred), net(gt));
    let mut overlap = 0;
    let mut matches = 0;
    for (key, &g) in &gn {
        let Some(&p) = pn.get(key) else { continue };
        if p == 0 || g == 0 {
            continue;
        }
        overlap += 1;
        if p.signum() == g.signum() {
            matches += 1;
        }
    }
    let vacuous = overlap == 0;
    let percent = if vacuous {
        100.0
    } else {
        100.0 * matches as f64 / overlap as f64
    };
    Ok(PolarityAccuracy {
        percent,
        overlap,
        matches,
        vacuous,
    })
}
