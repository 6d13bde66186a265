pub mod attribution;
pub mod compare;
pub mod explain;
pub mod necsuff;
pub mod oracle;
pub mod synth;
pub mod train;
