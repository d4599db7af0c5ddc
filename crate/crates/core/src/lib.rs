pub mod autodiff;
pub mod builtins;
pub mod cli;
pub mod codegen;
pub mod config;
pub mod corpus;
pub mod dfg;
pub mod error;
pub mod executor;
pub mod guesser;
pub mod interp;
pub mod misuse;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod runtime;
pub mod syntax;
pub mod train;

#[cfg(test)]
mod testutil;

pub use config::Config;
pub use error::{Error, Result};
pub use model::Model;
