pub mod assemble;
pub mod bench;
pub mod eval;
pub mod gen;
pub mod theorem;
