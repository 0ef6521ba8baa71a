//! Counterfactual evaluation, bandwidth tuning and payment-policy learning.

mod counterfactual;
mod optpal;
mod tune;

pub use counterfactual::*;
pub use optpal::{
    initial_network, train_optpal, train_optpal_sequential, train_optpal_with_retries, Convergence, LossKind,
    OptPalConfig, OptPalOutcome, ProfitObjective,
};
pub use tune::*;
