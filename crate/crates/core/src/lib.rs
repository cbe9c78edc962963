pub mod copies;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod lang;
pub mod scalar;
pub mod state;
pub mod exec;
pub mod redex;
pub mod scheduler;
pub mod pretty;
pub mod trace;
pub mod session;
pub mod harness;

/// Integer type used when none is chosen.
pub type Int = num_bigint::BigInt;
pub type BigMachine = exec::Machine<Int>;
pub type BigSession = session::Session<Int>;
pub type BigTrace = trace::Trace<Int>;
pub type BigBundle = trace::Bundle<Int>;
/// Fixed-width variant; overflow is a runtime error.
pub type I64Machine = exec::Machine<i64>;
