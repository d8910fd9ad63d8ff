pub mod antecedent_linker;
pub mod autodiff;
pub mod budget;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod experiment;
pub mod mention_detector;
pub mod metrics;
pub mod model;
pub mod training;
