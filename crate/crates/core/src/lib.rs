pub mod error;
pub mod filters;
pub mod cascade;
pub mod wavelet;
pub mod basis;
pub mod besov;
pub mod config;
pub mod ipm;
pub mod models;
pub mod synth;
pub mod train;
pub mod experiments;
