//! Conditional censored graphical lasso.
//!
//! Joint estimation of a sparse coefficient matrix `B` and a sparse precision
//! matrix `Theta` for `y | x ~ N(B^T x~, Theta^{-1})` when the responses are
//! censored at known bounds. Fitting runs an EM algorithm whose E-step imputes
//! truncated Gaussian moments and whose M-step alternates a multivariate lasso
//! for `B` with a graphical lasso for `Theta`.
//!
//! Every solver is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the common double-precision instantiations.

pub mod dataio;
pub mod em;
pub mod error;
pub mod estep;
pub mod glasso;
pub mod linalg;
pub mod model;
pub mod multilasso;
mod scalar;
pub mod simbench;
pub mod truncmom;
pub mod tuning;

pub use dataio::{load_dataset, BoundSpec, CensorPartition, CensoredDataset};
pub use em::{fit_em, fit_impute_at_limit, EmOptions, FitResult};
pub use error::{Error, Result};
pub use estep::{impute_moments, ImputedMoments, MomentMode};
pub use glasso::{glasso_fit, GlassoOptions, GlassoSolution};
pub use model::ModelEstimate;
pub use scalar::Scalar;
pub use tuning::{fit_path, lambda_rho_max, make_grid, PathResult, TuningGrid};

pub type CensoredDataset64 = CensoredDataset<f64>;
pub type CensoredDataset32 = CensoredDataset<f32>;
pub type ModelEstimate64 = ModelEstimate<f64>;
pub type ModelEstimate32 = ModelEstimate<f32>;
pub type ImputedMoments64 = ImputedMoments<f64>;
pub type FitResult64 = FitResult<f64>;
pub type PathResult64 = PathResult<f64>;
pub type TuningGrid64 = TuningGrid<f64>;
pub type GlassoSolution64 = GlassoSolution<f64>;
