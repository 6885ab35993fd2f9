pub mod ctensor;
pub mod dsp;
pub mod eval;
pub mod explain;
pub mod kv;
pub mod nn;
pub mod seeds;
pub mod train;
