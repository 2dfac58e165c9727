pub mod error;
pub mod function_classes;
pub mod linalg;
pub mod problems;
pub mod optimizers;
pub mod supply_rates;
pub mod lmi_engine;
pub mod rate_bounds;
pub mod validation;
pub mod cli;
