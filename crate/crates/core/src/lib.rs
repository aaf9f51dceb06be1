//! Tensor CUR decomposition under linear-map-based tensor-tensor products.
//!
//! Third-order tensors are treated as stacks of frontal slices. A full-rank
//! matrix `M` acting on tubes defines the `*_M`-product; in the transformed
//! domain every frontal slice gets an independent matrix CUR factorization.
//! The crate also provides a robust low-rank plus sparse separation loop for
//! grayscale video built on that decomposition, background-quality metrics,
//! and the `mcur` command-line tool.

pub mod error;
pub mod io;
pub mod linalg;
pub mod mcur;
pub mod metrics;
pub mod separation;
pub mod tensor;
pub mod transforms;

pub use error::{McurError, Result};
pub use linalg::Tolerance;
pub use metrics::{evaluate, time_block, EvalOptions, FrameMetrics, MetricReport};
pub use mcur::{
    cur_approximation, m_product, mcur_decompose, mcur_reconstruct, qdeim_select,
    verify_exactness, CurFactors, ExactnessReport,
};
pub use separation::{separate, synth_video, Motion, SeparationConfig, SeparationResult};
pub use tensor::{
    hat_multirank, hat_spectral_norm, hat_threshold, multirank_m, spectral_norm_m, Complex64, IndexSet,
    Multirank, Scalar, ScalarKind, Tensor3,
};
pub use transforms::{build_transform, Family, Regime, Transform, TransformMatrix, TransformSpec};
