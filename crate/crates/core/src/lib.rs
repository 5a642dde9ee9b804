//! Matrix completion by singular value thresholding (SVT), with the partial
//! SVD at every iteration computed by an adaptive, fixed-precision randomized
//! QB sketch that recycles the previous iterate's left singular vectors.
//!
//! The crate is organised bottom-up:
//!
//! * [`dense`]: dense blocks, seeded Gaussian sampling, QR and small SVDs.
//! * [`sparse`]: matrices supported on the sample set and their kernels.
//! * [`sketch`]: fixed-rank RSVD, rank-revealing R3SVD and recycling R4SVD.
//! * [`svt`]: the thresholding driver, cooling schedule and traces.
//! * [`io`]: MatrixMarket, PGM, ratings files and trace export.
//! * [`monitor`]: held-out error and overfitting detection.
//! * [`synth`]: seeded synthetic instances (low-rank matrices, images, ratings).
//!
//! Kernels run on rayon when the `parallel` feature is enabled (the default).
//! Every kernel assigns each output value to exactly one task and sums in a
//! fixed order, so results are bit-identical for any thread count.

pub mod dense;
pub mod error;
pub mod io;
pub mod monitor;
pub mod par;
pub mod sketch;
pub mod sparse;
pub mod svt;
pub mod synth;

pub use dense::{DenseBlock, LowRankFactors};
pub use error::{Error, Result};
pub use sketch::{QbState, SketchOutcome, SketchParams};
pub use sparse::SampledMatrix;
pub use svt::{Backend, IterationRecord, StopRule, SvtConfig, SvtOutcome};
