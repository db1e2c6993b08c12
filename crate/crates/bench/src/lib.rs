//! Shared inputs for the benchmarks.

use fwpomdp::model::{build_machine_repair, MachineRepairParams};
use fwpomdp::PomdpModel;

pub fn machine_repair(case: u8) -> PomdpModel {
    build_machine_repair(&MachineRepairParams::case(case).expect("known case")).expect("valid model")
}
