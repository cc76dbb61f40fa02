//! Command implementations behind the `sisdp` binary.
