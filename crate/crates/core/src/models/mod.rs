//! Dense kernels, the MLP predictor and its user-conditioning variants.

mod matrix;
mod mlp;
mod params;

pub use matrix::Matrix;
pub use mlp::{
    argmax, log_sum_exp, perplexity, BatchEval, Conditioning, ConditioningKind, Dense, Model, ModelConfig, ResidualMlp,
    SharedParams, UserEntry, UserTable,
};
pub use params::ParamVec;
