//! A small functional language with nestable forward and reverse AD whose
//! reverse operator can run under divide-and-conquer checkpointing, built on
//! an evaluator that can interrupt any computation after a given number of
//! steps and resume it later.

pub mod ad;
pub mod ast;
pub mod convert;
pub mod corpus;
pub mod cps;
pub mod ctx;
pub mod direct;
pub mod drivers;
pub mod error;
pub mod harness;
pub mod interrupt;
pub mod prim;
pub mod selftest;
pub mod symbol;
pub mod syntax;
pub mod value;
pub mod walk;

pub use ctx::Ctx;
pub use error::{EvalError, EvalResult, ParseError};
pub use value::Value;
