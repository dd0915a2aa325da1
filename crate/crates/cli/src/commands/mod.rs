pub mod demo;
pub mod eval;
pub mod fuse;
pub mod kernel;
pub mod recover;
pub mod simulate;
