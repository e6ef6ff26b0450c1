//! Sparse binary classifiers built on least-squares SVMs with learnable
//! low-rank kernels.
//!
//! The kernel is a sum of M learnable basis functions (simplex basis
//! functions or robust RBFs), so the dual solve reduces to an M x M
//! inverse and the trained model evaluates in O(M D) per point. Training
//! alternates the closed-form dual solve with per-unit gradient ascent on
//! one of three kernel-adaptation objectives, starting from k-medoids
//! centers.

pub mod basis;
pub mod data;
pub mod error;
pub mod init;
pub mod kernel_opt;
pub mod solver;
pub mod trainer;

pub use basis::{BasisFamily, BasisUnit, LowRankKernel};
pub use data::{BenchmarkSuite, Dataset, LabelConvention, MixtureSpec, NormStats};
pub use error::{Error, Result};
pub use kernel_opt::Objective;
pub use solver::{DualSolution, GaussianKernelForm, GaussianModel, SparseModel};
pub use trainer::{BenchmarkReport, Metrics, TrainConfig, TrainHistory};
