#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curve;
pub mod derivative;
pub mod error;
pub mod func;
pub mod generator;
pub mod homogeneous;
pub mod linalg;
pub mod mc;
pub mod measure;
pub mod mittag_leffler;
pub mod paths;
pub mod potential;
pub mod psido;
pub mod quad;
pub mod timedep;

pub use curve::{CurveMeta, SolutionCurve};
pub use derivative::{caputo_beta, gen_caputo, gen_rl, residual, CaputoOperator, ResidualReport};
pub use error::{Error, ErrorKind, Result};
pub use func::GriddedFunction;
pub use generator::GeneratorFamily;
pub use homogeneous::{solve_const, solve_const_with, solve_scalar_relaxation, PathEstimator};
pub use mc::{Estimate, McOptions};
pub use measure::{parse_measure, Atom, JumpSampler, LevyMeasure};
pub use mittag_leffler::{
    classical_ml, gen_ml_operator, gen_ml_scalar, ml_norm_bound, MLValue, MatrixGenerator, MlMethod,
};
pub use paths::{
    path_sampler, ExitPath, GradedSubordinator, JumpPath, PathEnsemble, Subordinator, Truncation,
};
pub use potential::{potential_mass, PotentialEstimate, PotentialMethod};
pub use psido::{green_along_path, solve_psido, PsidoField, SpaceTimeField, SymbolFamily};
pub use timedep::{
    chron_exp, perturbation_series, resolvent, resolvent_curve, semigroup_apply, solve_boundary,
    solve_boundary_ladder, ChronExpAccumulator, EpsLadder, SeriesValue, VectorEstimate,
};
