//! Bit-exact workbench for fault-tolerant quantized DNN arithmetic.
//!
//! - [`arith`]: exact, Mitchell and AdAM multipliers, MARE
//! - [`faults`]: reproducible fault plans and injection
//! - [`quant`]: symmetric quantization and MSB triplication
//! - [`net`]: MAC-level quantized inference with fault hooks
//! - [`metrics`]: vulnerability, SDC, fault coverage, P_drop, RAP
//! - [`campaign`]: BER and activation fault campaigns
//! - [`dse`]: bit-width search

pub mod arith;
pub mod campaign;
pub mod dse;
pub mod faults;
pub mod metrics;
pub mod net;
pub mod quant;
