//! Holds the workspace acceptance suite (`cargo test -p asymshap-verify`).
//! It prints one PASS/FAIL line per criterion and exits nonzero on any
//! failure.
