// SPDX-License-Identifier: Apache-2.0

pub mod atpg;
pub mod attacks;
pub mod chip;
pub mod demo;
pub mod locking;
pub mod netlist;
pub mod report;
pub mod sat;
pub mod synth;
