pub mod dgcn;
pub mod error;
pub mod graph;
pub mod matrix_io;
pub mod metrics;
pub mod node2vec;
pub mod pipeline;
pub mod semantic;

pub use error::{Error, Result};
