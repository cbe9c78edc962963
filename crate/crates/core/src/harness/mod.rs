//! Cross-checks between the annotated machine and a plain interpreter.

pub mod equiv;
pub mod generate;
pub mod roundtrip;
pub mod traditional;
