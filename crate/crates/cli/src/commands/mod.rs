pub mod build;
pub mod eval;
pub mod featurize;
pub mod plot;
pub mod predict;
pub mod simulate;
pub mod train;
