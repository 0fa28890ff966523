//! Chi-squared kernels, one-vs-rest SVMs and two-kernel combination.

pub mod kernel;
pub mod mkl;
pub mod svm;

pub use kernel::{chi2_distance, chi2_kernel_matrix, combine_kernels, Bandwidth, KernelMatrix};
pub use mkl::{alpha_grid, stratified_folds, train_fixed_alpha, train_mkl, MklModel, MklParams, Selection};
pub use svm::{predict, solve_binary, train_svm, BinarySolution, BinarySvm, Predictions, SvmModel, SvmParams};
