pub mod diagnose;
pub mod evaluate;
pub mod render;
pub mod synth;
pub mod train;
