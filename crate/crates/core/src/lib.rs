pub mod error;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod nonlinearity;
pub mod data;
pub mod training;
pub mod gridsearch;
pub mod experiments;
pub mod cli;
