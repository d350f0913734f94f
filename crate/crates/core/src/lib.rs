//! Compile small quantized neural networks into fixed-function LUT logic.
//!
//! The flow: train a fanin-constrained quantized MLP ([`qnn`], [`pruning`]),
//! enumerate every neuron into truth tables ([`truthtable`]), minimize them
//! ([`twolevel`]), map the covers onto K-input LUTs and emit Verilog
//! ([`netlist`]), then check the logic against the network ([`verify`]).
//! [`pipeline`] strings the stages together behind a single config file.

pub mod config;
pub mod dataset;
pub mod netlist;
pub mod pipeline;
pub mod pruning;
pub mod qnn;
pub mod truthtable;
pub mod twolevel;
pub mod verify;
