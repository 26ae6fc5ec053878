pub mod cancel;
pub mod compile;
pub mod digest;
pub mod engine;
pub mod ids;
pub mod kernel;
pub mod protocol;
pub mod samples;
pub mod stm;
pub mod taskqueue;
pub mod vernac;
