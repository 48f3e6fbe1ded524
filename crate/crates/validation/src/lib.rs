//! Acceptance checks for the search experiments; see `tests/acceptance.rs`.
