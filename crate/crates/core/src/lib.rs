//! Simulation and bound evaluation for classifying linear and affine
//! subspaces from noisy linear features `y = Phi x + z`.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the experiments and
//! the CLI use.

pub mod bounds;
pub mod classifier;
pub mod empirical;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod pgm;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use bounds::{
    bhattacharyya_bound, bhattacharyya_distance, c_affine_bounds, c_linear_bounds, ddt_eval,
    predicted_classes, wishart_min_eig_empirical, wishart_min_eig_limit, DdtCurve, DdtKind,
    GaussianPair,
};
pub use classifier::{
    classify, log_likelihood, pairwise_error_mc, project_class, ClassDensity, ClassificationResult,
    Classifier, ProjectedClass,
};
pub use empirical::{
    estimate_affine_subspace, estimate_noise_power, estimate_subspace, load_image_dir,
    run_face_experiment, split, synthetic_corpus, EstimatedClassModel, FaceConfig, FaceReport,
    LabeledImageSet,
};
pub use ensemble::{
    dims_for, draw_affine_class, draw_feature_matrix, draw_linear_class, num_classes_for,
    sample_signal, FeatureMatrix, ScalingParams, SubspaceClass,
};
pub use error::{Error, Result};
pub use experiments::{
    estimate_error, fit_slope, log_grid, run_capacity_sweep, run_ddt_sweep, RowStatus, SlopeFit,
    SweepConfig, SweepMode, SweepRow,
};
pub use rng::RngStream;
pub use scalar::Scalar;
pub use stats::ErrorEstimate;

pub type SubspaceClass64 = SubspaceClass<f64>;
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type ProjectedClass64 = ProjectedClass<f64>;
pub type GaussianPair64 = GaussianPair<f64>;
pub type LabeledImageSet64 = LabeledImageSet<f64>;
pub type EstimatedClassModel64 = EstimatedClassModel<f64>;

pub type SubspaceClass32 = SubspaceClass<f32>;
pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type ProjectedClass32 = ProjectedClass<f32>;
