pub mod ablate;
pub mod eval;
pub mod gradcheck;
pub mod refine;
pub mod synth;
pub mod train;
