//! Buyer-driven selection of seller data points.
//!
//! A buyer supplies unlabeled test covariates; the platform weights seller
//! points to minimize the V-optimal design loss (average prediction variance
//! of a linear model at the buyer's points) and buys the heaviest ones.
//!
//! - [`design`]: loss, gradient, and rank-1 maintenance of the inverse information matrix
//! - [`frank_wolfe`]: the iterative selection procedure and its single-step variant
//! - [`market`]: a lockstep simulator of the federated seller/platform protocol
//! - [`data`]: synthetic data, seller costs, and the CSV format
//! - [`eval`]: least-squares evaluation, baselines, budgets, and experiment sweeps

// negated comparisons reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod design;
pub mod error;
pub mod eval;
pub mod frank_wolfe;
pub mod market;

pub use design::{
    design_gradient, design_loss, feature_variance, fw_update_inverse, init_inverse_info, loss_after_step,
    BuyerCache, BuyerQuery, FeatureMatrix, InverseInfo, WeightVector,
};
pub use error::{Error, Result};
pub use frank_wolfe::{run_frank_wolfe, single_step_select, top_k, FwConfig, InitMode, SelectionResult, StepRule};
pub use market::{run_federated_selection, verify_replicas, CommLog, SellerNode};
