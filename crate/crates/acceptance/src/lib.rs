//! Acceptance checks for `relboot`, run with `cargo test -p relboot-acceptance`.
//!
//! The checks live in `tests/acceptance.rs` and print one PASS or FAIL line
//! per criterion. They run after the core crate's own tests.
