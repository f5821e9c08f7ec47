pub mod cli;
pub mod config;
pub mod coverage;
pub mod gibbs;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod selection;
pub mod spatial;
pub mod synthetic;
