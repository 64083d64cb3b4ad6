pub mod analytic;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod model;
pub mod residual;
pub mod runner;
pub mod spectral;
pub mod yukawa_direct;
