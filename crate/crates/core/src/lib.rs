pub mod data;
pub mod hw;
pub mod infer;
pub mod model;
pub mod nn;
pub mod quant;
pub mod search;
