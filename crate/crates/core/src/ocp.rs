//! Optimal control transcription and SQP solver.
