//! Infers platformer jump automata from sprite-table experiment logs.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod framelog;
pub mod kv;
pub mod spritemerge;
pub mod tracker;
pub mod automaton;
pub mod fit;
pub mod jumpseg;
pub mod svr;
pub mod harness;
pub mod analysis;
pub mod pipeline;
pub mod cli;
