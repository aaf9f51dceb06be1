//! Robust low-rank plus sparse separation `X = L + S` with a `*_M`-CUR
//! low-rank step.
//!
//! The loop alternates a CUR approximation of `X - S` (indices from Q-DEIM)
//! with entrywise hard thresholding of `X - L`, shrinking the threshold
//! geometrically, until the relative residual stalls.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{McurError, Result};
use crate::mcur::{cur_approximation, qdeim_select};
use crate::tensor::{IndexSet, Scalar, Tensor3};
use crate::transforms::{build_transform, Transform, TransformSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationConfig {
    /// Target multirank bound `r` (also `|I| = |J|`).
    pub rank: usize,
    /// Transform to use; `p` must equal the number of frames. Its seed
    /// drives every randomized step of the run.
    pub transform: TransformSpec,
    /// Initial threshold; `None` picks the largest deviation of `X` from its
    /// per-pixel temporal median.
    pub zeta0: Option<f64>,
    /// Threshold decay per iteration, in `(0, 1)`.
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop when the relative residual changes by less than this.
    pub tol: f64,
    /// Re-run index selection every iteration instead of reusing the first.
    pub resample_indices: bool,
}

impl SeparationConfig {
    pub fn new(rank: usize, transform: TransformSpec) -> Self {
        SeparationConfig {
            rank,
            transform,
            zeta0: None,
            gamma: 0.7,
            max_iters: 50,
            tol: 1e-4,
            resample_indices: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(McurError::config("rank must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(McurError::config(format!("gamma = {} is not in (0, 1)", self.gamma)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(McurError::config("tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(McurError::config("max_iters must be at least 1"));
        }
        if let Some(z) = self.zeta0 {
            if z.is_nan() || z < 0.0 {
                return Err(McurError::config("zeta0 must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `||X - L - S||_F / ||X||_F`.
    pub residual: f64,
    pub threshold: f64,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SeparationResult {
    pub low_rank: Tensor3<f64>,
    pub sparse: Tensor3<f64>,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    pub rows: IndexSet,
    pub cols: IndexSet,
    pub zeta0: f64,
}

impl SeparationResult {
    /// `X - L - S`.
    pub fn residual_tensor(&self, x: &Tensor3<f64>) -> Tensor3<f64> {
        &(x - &self.low_rank) - &self.sparse
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Keeps entries with modulus strictly above `zeta`, zeroes the rest.
pub fn hard_threshold<T: Scalar>(t: &Tensor3<T>, zeta: f64) -> Tensor3<T> {
    t.map(|v| if v.modulus() > zeta { v } else { T::zero() })
}

/// `max |X(i,j,k) - median_k X(i,j,k)|`.
pub fn median_deviation(x: &Tensor3<f64>) -> f64 {
    let (m, n, p) = x.dims();
    let mut tube = vec![0.0; p];
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..m {
            for (k, v) in tube.iter_mut().enumerate() {
                *v = x.get(i, j, k);
            }
            let mut sorted = tube.clone();
            sorted.sort_by(f64::total_cmp);
            let median = if p % 2 == 1 {
                sorted[p / 2]
            } else {
                0.5 * (sorted[p / 2 - 1] + sorted[p / 2])
            };
            for v in &tube {
                worst = worst.max((v - median).abs());
            }
        }
    }
    worst
}

fn select(transform: &Transform, t: &Tensor3<f64>, rank: usize) -> Result<(IndexSet, IndexSet)> {
    match transform {
        Transform::Real(tm) => qdeim_select(t, tm, rank),
        Transform::Complex(tm) => qdeim_select(&t.to_complex(), tm, rank),
    }
}

/// CUR low-rank step. Complex transforms run on the promoted tensor and
/// return the real part.
fn low_rank_step(
    transform: &Transform,
    t: &Tensor3<f64>,
    rows: &IndexSet,
    cols: &IndexSet,
) -> Result<Tensor3<f64>> {
    match transform {
        Transform::Real(tm) => cur_approximation(t, tm, rows, cols),
        Transform::Complex(tm) => Ok(cur_approximation(&t.to_complex(), tm, rows, cols)?.real_part()),
    }
}

pub fn separate(x: &Tensor3<f64>, cfg: &SeparationConfig) -> Result<SeparationResult> {
    cfg.validate()?;
    let (m, n, p) = x.dims();
    if cfg.transform.p != p {
        return Err(McurError::config(format!(
            "transform expects p = {}, video has {p} frames",
            cfg.transform.p
        )));
    }
    if cfg.rank > m.min(n) {
        return Err(McurError::config(format!(
            "rank {} exceeds min(m, n) = {}",
            cfg.rank,
            m.min(n)
        )));
    }
    let start = Instant::now();
    let norm_x = x.frobenius_norm();
    let zeta0 = cfg.zeta0.unwrap_or_else(|| median_deviation(x));

    if norm_x == 0.0 {
        return Ok(SeparationResult {
            low_rank: Tensor3::zeros(m, n, p),
            sparse: Tensor3::zeros(m, n, p),
            trace: vec![IterationRecord {
                iter: 1,
                residual: 0.0,
                threshold: cfg.gamma * zeta0,
                elapsed_seconds: start.elapsed().as_secs_f64(),
            }],
            converged: true,
            rows: IndexSet::full(cfg.rank.min(m))?,
            cols: IndexSet::full(cfg.rank.min(n))?,
            zeta0,
        });
    }

    let transform = build_transform(&cfg.transform, Some(x))?;
    let mut sparse = Tensor3::zeros(m, n, p);
    let mut low_rank = Tensor3::zeros(m, n, p);
    let mut indices: Option<(IndexSet, IndexSet)> = None;
    let mut trace = Vec::new();
    let mut prev_residual = 1.0;
    let mut converged = false;

    for iter in 1..=cfg.max_iters {
        let target = x - &sparse;
        if indices.is_none() || cfg.resample_indices {
            indices = Some(select(&transform, &target, cfg.rank)?);
        }
        let (rows, cols) = indices.as_ref().expect("indices selected above");
        low_rank = low_rank_step(&transform, &target, rows, cols)?;

        let threshold = cfg.gamma.powi(iter as i32) * zeta0;
        sparse = hard_threshold(&(x - &low_rank), threshold);
        let residual = (&(x - &low_rank) - &sparse).frobenius_norm() / norm_x;
        trace.push(IterationRecord {
            iter,
            residual,
            threshold,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
        if (residual - prev_residual).abs() < cfg.tol {
            converged = true;
            break;
        }
        prev_residual = residual;
    }

    let (rows, cols) = indices.expect("at least one iteration ran");
    Ok(SeparationResult {
        low_rank,
        sparse,
        trace,
        converged,
        rows,
        cols,
        zeta0,
    })
}

/// Boolean tensor in the same slice-major layout as [`Tensor3`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameMask {
    dims: (usize, usize, usize),
    data: Vec<bool>,
}

impl FrameMask {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        let (m, n, _) = self.dims;
        self.data[k * m * n + j * m + i]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_tensor(&self) -> Tensor3<f64> {
        let (m, n, p) = self.dims;
        Tensor3::from_fn(m, n, p, |i, j, k| if self.get(i, j, k) { 1.0 } else { 0.0 })
    }
}

/// F1 score of the support `{|S| > 0}` against a ground-truth mask.
pub fn support_f1(sparse: &Tensor3<f64>, mask: &FrameMask) -> f64 {
    assert_eq!(sparse.dims(), mask.dims(), "mask dims differ");
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (v, &truth) in sparse.data().iter().zip(&mask.data) {
        match (*v != 0.0, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fneg == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Motion {
    /// Square stays in the top-left corner.
    Static,
    /// Square travels the main diagonal from top-left to bottom-right.
    Linear,
}

#[derive(Clone, Debug)]
pub struct SynthVideo {
    pub video: Tensor3<f64>,
    pub mask: FrameMask,
    pub background: DMatrix<f64>,
}

/// Seeded synthetic sequence: a rank-one background `u v^T` with values in
/// roughly `[0.12, 0.7]` plus a bright textured square in `[0.95, 1.0]`.
pub fn synth_video(
    m: usize,
    n: usize,
    p: usize,
    square: usize,
    motion: Motion,
    seed: u64,
) -> Result<SynthVideo> {
    if m == 0 || n == 0 || p == 0 {
        return Err(McurError::config("video dimensions must be positive"));
    }
    if square > m || square > n {
        return Err(McurError::config(format!(
            "square of side {square} does not fit a {m}x{n} frame"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fu, phu): (f64, f64) = (rng.random_range(0.5..2.0), rng.random_range(0.0..std::f64::consts::TAU));
    let (fv, phv): (f64, f64) = (rng.random_range(0.5..2.0), rng.random_range(0.0..std::f64::consts::TAU));
    let u: Vec<f64> = (0..m)
        .map(|i| 0.45 + 0.25 * (std::f64::consts::TAU * fu * i as f64 / m as f64 + phu).sin())
        .collect();
    let v: Vec<f64> = (0..n)
        .map(|j| 0.8 + 0.2 * (std::f64::consts::TAU * fv * j as f64 / n as f64 + phv).sin())
        .collect();
    let background = DMatrix::from_fn(m, n, |i, j| u[i] * v[j]);

    let offset = |k: usize, room: usize| -> usize {
        match motion {
            Motion::Static => 0,
            Motion::Linear if p == 1 => 0,
            Motion::Linear => (k * room + (p - 1) / 2) / (p - 1),
        }
    };
    let texture: Vec<f64> = (0..square * square).map(|_| rng.random_range(0.95..1.0)).collect();

    let mut video = Vec::with_capacity(m * n * p);
    let mut mask = Vec::with_capacity(m * n * p);
    for k in 0..p {
        let (r0, c0) = (offset(k, m - square), offset(k, n - square));
        for j in 0..n {
            for i in 0..m {
                let inside = square > 0 && (r0..r0 + square).contains(&i) && (c0..c0 + square).contains(&j);
                mask.push(inside);
                video.push(if inside {
                    texture[(j - c0) * square + (i - r0)]
                } else {
                    background[(i, j)]
                });
            }
        }
    }
    Ok(SynthVideo {
        video: Tensor3::new((m, n, p), video)?,
        mask: FrameMask {
            dims: (m, n, p),
            data: mask,
        },
        background,
    })
}
