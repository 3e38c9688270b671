pub mod canonical;
pub mod connection;
pub mod error;
pub mod expr;
pub mod flow;
pub mod jet;
pub mod lq;
pub mod model;
pub mod report;
pub mod ode;
pub mod tensor;
pub mod twist;
pub mod zoo;

pub use error::{Error, Result};
