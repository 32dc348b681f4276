pub mod autograd;
pub mod bbox;
pub mod data_synth;
pub mod error;
pub mod gradcheck;
pub mod params;
pub mod raster;
pub mod tensor;
pub mod model;
pub mod qfc;
pub mod gff;
pub mod baselines;
pub mod eval;
pub mod harness;
