//! Acceptance checks for `patchtooth`. Run with `cargo test -p patchtooth-validation`.
