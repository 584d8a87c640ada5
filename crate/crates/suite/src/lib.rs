//! Acceptance checks for `znsim` live in `tests/acceptance.rs`; run them
//! with `cargo test -p znsim-suite --test acceptance`.
