//! File formats: MatrixMarket (coordinate and dense array), PGM grayscale
//! images, delimiter-separated rating triples, and convergence traces.
//!
//! Readers reject malformed input instead of repairing it; every writer's
//! output is accepted by the matching reader.

pub mod image;
pub mod mtx;
pub mod ratings;
pub mod trace;

pub use image::{read_pgm, sample_image, write_pgm, write_pgm_ascii, GrayImage};
pub use mtx::{read_dense_array, read_matrix_market, write_dense_array, write_matrix_market, write_vector_array};
pub use ratings::{read_ratings, split_ratings, write_ratings, RatingsDataset, DEFAULT_SEPARATOR};
pub use trace::{
    read_trace_csv, read_trace_json, write_trace_csv, write_trace_json, TRACE_CSV_COLUMNS, TRACE_SCHEMA_VERSION,
};
