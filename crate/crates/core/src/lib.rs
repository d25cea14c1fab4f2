//! Bayesian optimal design of experiments by approximate coordinate exchange.
//!
//! Expected utilities are estimated by Monte Carlo, smoothed one coordinate at
//! a time by a Gaussian-process emulator, and proposals are accepted by a
//! two-sample comparison of fresh utility samples. The numeric core is
//! generic over [`Real`]; the aliases below fix it to `f64` or `f32`.

pub mod ace;
pub mod design;
pub mod error;
pub mod gp_emulator;
pub mod io;
pub mod linalg;
pub mod models;
pub mod sampling;
pub mod scalar;
pub mod special;
pub mod utilities;

pub use ace::{
    acceptance_probability, bayes_t_accept, multi_start, phase1_coordinate_step, phase1_sweep, phase2_point_exchange,
    run_ace, AceConfig, AceResult, Phase, StartResult, StartSummary, TraceRecord,
};
pub use design::{CoordinateDomain, DesignConstraint, DesignSpace, MinSpacing};
pub use error::{AceError, Result};
pub use gp_emulator::{fit_hyperparams, maximize_on_grid, standardize, EmulatorFit};
pub use models::{Model, Params};
pub use sampling::{RngStream, Marginal, PriorSpec};
pub use scalar::Real;
pub use utilities::{
    d_efficiency, nsel_ld50_model_averaged, nsel_nested, pseudo_bayes_a, pseudo_bayes_d, sig_nested, NestedMcConfig,
    Utility, UtilitySampleBatch,
};

pub type Design<T = f64> = design::Design<T>;
pub type Design64 = design::Design<f64>;
pub type Design32 = design::Design<f32>;
pub type Batch64 = UtilitySampleBatch<f64>;
pub type Batch32 = UtilitySampleBatch<f32>;
pub type Emulator64 = EmulatorFit<f64>;
pub type Emulator32 = EmulatorFit<f32>;
pub type AceResult64 = AceResult<f64>;
pub type AceResult32 = AceResult<f32>;
pub type DynUtility64 = dyn Utility<f64>;
pub type DynModel64 = dyn Model<f64>;
