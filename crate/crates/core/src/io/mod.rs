//! File formats: Matrix Market input, convergence CSV/SVG output, and the
//! benchmark system builders.

pub mod convergence;
pub mod experiment;
pub mod matrix_market;
pub mod sparse;
pub mod svg;

pub use convergence::{
    read_convergence_csv, write_convergence_csv, write_merged_csv_file, ConvergenceRecord, IterationRow,
};
pub use experiment::{build_experiment, build_from_matrices, Experiment};
pub use matrix_market::{parse_matrix_market, read_matrix_market, write_matrix_market};
pub use sparse::SparseMatrix;
pub use svg::write_svg;
