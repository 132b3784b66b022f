pub mod eval;
pub mod matching;
pub mod report;
pub mod synth;
