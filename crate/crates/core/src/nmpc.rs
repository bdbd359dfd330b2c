//! Closed-loop NMPC harness.
