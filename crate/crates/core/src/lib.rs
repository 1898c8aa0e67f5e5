//! Two-sample testing of functional data with Maximum Mean Discrepancy.

pub mod error;
pub mod estimators;
pub mod features;
pub mod gaussian;
pub mod io;
pub mod ground;
pub mod kernels;
pub mod linalg;
pub mod reconstruction;
pub mod mesh;
pub mod seed;

pub use error::{Error, Result};
pub use ground::GroundKernel;
pub use mesh::{inner_product, sq_distance, FunctionSample, FunctionSet, Mesh};
pub use features::{fit_fpca, FeatureMap, IntegralOperator, MappedSample, SpectralBasis};
pub use kernels::{median_heuristic, FeatureFn, KernelRecipe, KernelSpec, RandomFeatureKernel};
pub use estimators::{mmd_linear, mmd_u, mmd_u_statistic, permutation_test, power_harness, KernelSelection, PowerReport, TestResult};
pub use gaussian::{
    closed_form_mmd, kernel_operator, mean_embedding, median_lemma, sample_gp, scaling_rhs,
    snr_ratio, xi_general, xi_mean_shift, GaussianSpec, GpSampler, OperatorTriple, ScalingCase,
};
pub use reconstruction::{approx_mmd_bound, discretise, Method, Observation, Reconstructor};
pub use io::{load_function_set, load_observations, read_function_set, read_observations, save_function_set, write_function_set, write_observations, LabelledSet};
