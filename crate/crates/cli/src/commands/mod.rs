pub mod explain;
pub mod regress;
pub mod report;
pub mod synth;
pub mod train;
pub mod tune;
pub mod windows;
