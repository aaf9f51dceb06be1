//! Background reconstruction quality: AGE, pEPs and PSNR per frame.
//!
//! All three work on the 0-255 gray scale. AGE is the mean absolute error,
//! pEPs the fraction of pixels whose absolute error exceeds `tau`, and PSNR
//! uses a peak of 255. A frame with zero error has infinite PSNR; such frames
//! are left out of the PSNR average and counted instead.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{McurError, Result};
use crate::tensor::Tensor3;

pub const DEFAULT_TAU: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Error-pixel threshold in gray levels.
    pub tau: f64,
    /// Inputs are already on the 0-255 scale; otherwise they are in `[0, 1]`.
    pub scale255: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            tau: DEFAULT_TAU,
            scale255: false,
        }
    }
}

/// Metrics of one frame. Infinite PSNR serializes as JSON `null`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub age: f64,
    pub peps: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub tau: f64,
    pub per_frame: Vec<FrameMetrics>,
    /// PSNR average runs over finite frames only; infinite when none is.
    pub averages: FrameMetrics,
    pub infinite_psnr_frames: usize,
    pub runtime_seconds: f64,
}

/// Compares an estimated background sequence with the ground truth.
///
/// `gt` either has as many frames as `est` or a single frame that is used for
/// every frame. `runtime_seconds` is left at zero for the caller to fill.
pub fn evaluate(est: &Tensor3<f64>, gt: &Tensor3<f64>, opts: EvalOptions) -> Result<MetricReport> {
    let (m, n, p) = est.dims();
    let (gm, gn, gp) = gt.dims();
    if (m, n) != (gm, gn) {
        return Err(McurError::dims(format!(
            "estimate frames are {m}x{n}, ground truth frames are {gm}x{gn}"
        )));
    }
    if gp != p && gp != 1 {
        return Err(McurError::dims(format!(
            "estimate has {p} frames, ground truth has {gp}"
        )));
    }
    if m * n * p == 0 {
        return Err(McurError::dims("cannot evaluate an empty sequence"));
    }
    if opts.tau.is_nan() || opts.tau < 0.0 {
        return Err(McurError::config("tau must be non-negative"));
    }
    let scale = if opts.scale255 { 1.0 } else { 255.0 };

    let per_frame: Vec<FrameMetrics> = (0..p)
        .into_par_iter()
        .map(|k| {
            let e = est.slice_view(k);
            let g = gt.slice_view(if gp == 1 { 0 } else { k });
            let (mut abs_sum, mut sq_sum, mut over) = (0.0, 0.0, 0usize);
            for (a, b) in e.iter().zip(g.iter()) {
                let d = ((a - b) * scale).abs();
                abs_sum += d;
                sq_sum += d * d;
                if d > opts.tau {
                    over += 1;
                }
            }
            let count = (m * n) as f64;
            let mse = sq_sum / count;
            FrameMetrics {
                age: abs_sum / count,
                peps: over as f64 / count,
                psnr: psnr(mse),
            }
        })
        .collect();

    let finite: Vec<f64> = per_frame.iter().map(|f| f.psnr).filter(|v| v.is_finite()).collect();
    let mean = |vals: &mut dyn Iterator<Item = f64>| vals.sum::<f64>() / p as f64;
    let averages = FrameMetrics {
        age: mean(&mut per_frame.iter().map(|f| f.age)),
        peps: mean(&mut per_frame.iter().map(|f| f.peps)),
        psnr: if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        },
    };
    Ok(MetricReport {
        tau: opts.tau,
        infinite_psnr_frames: p - finite.len(),
        per_frame,
        averages,
        runtime_seconds: 0.0,
    })
}

/// `10 log10(255^2 / mse)`, infinite for a perfect frame.
pub fn psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

/// Runs `op` and returns its result with the elapsed wall-clock seconds.
pub fn time_block<R>(op: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let out = op();
    (out, start.elapsed().as_secs_f64())
}
