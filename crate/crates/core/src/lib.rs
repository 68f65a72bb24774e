//! Sensor selection and transmit power allocation that maximize the trace of
//! the Bayesian Fisher information matrix for a network of quantized sensors
//! reporting over fading BPSK channels.
//!
//! * [`model`]: Gaussian prior, sensors, random deployments, scenario files.
//! * [`quantcomm`]: quantizer, bit error probability, transition matrix and
//!   the Monte Carlo simulators that check them.
//! * [`fisher`]: per-sensor information `t_k(P)` and `tr(J)`.
//! * [`solvers`]: uniform (UFA), uniform-select-uniform (USU), greedy and
//!   multiple-choice knapsack allocations plus brute-force references.
//! * [`harness`]: the command implementations behind the `fimsel` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fisher;
pub mod harness;
pub mod model;
pub mod quadrature;
pub mod quantcomm;
pub mod solvers;
