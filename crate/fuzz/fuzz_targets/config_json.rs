#![no_main]

use libfuzzer_sys::fuzz_target;
use wiggle_core::arm::{ArmModel, WaypointPlan};
use wiggle_core::dataset::{DatasetConfig, DatasetManifest};
use wiggle_core::eval::{ImportanceConfig, SensitivityConfig, TransferConfig, WiggleAblationConfig};
use wiggle_core::params::{validate, ParamBounds, RopeParams};
use wiggle_core::pipeline::PipelineConfig;

// Every JSON document the command line reads. Validation may reject
// anything, but nothing may panic.
fuzz_target!(|data: &[u8]| {
    if let Ok(b) = serde_json::from_slice::<ParamBounds>(data) {
        let _ = b.check();
    }
    if let Ok(p) = serde_json::from_slice::<RopeParams>(data) {
        let _ = validate(&p);
    }
    if let Ok(plan) = serde_json::from_slice::<WaypointPlan>(data) {
        let _ = plan.check(&ArmModel::default());
    }
    if let Ok(c) = serde_json::from_slice::<DatasetConfig>(data) {
        let _ = c.check();
    }
    if let Ok(c) = serde_json::from_slice::<PipelineConfig>(data) {
        let _ = c.bounds.check();
        let _ = c.wiggle.base_motion(&c.arm);
    }
    let _ = serde_json::from_slice::<TransferConfig>(data);
    let _ = serde_json::from_slice::<ImportanceConfig>(data);
    let _ = serde_json::from_slice::<WiggleAblationConfig>(data);
    let _ = serde_json::from_slice::<SensitivityConfig>(data);
    let _ = serde_json::from_slice::<DatasetManifest>(data);
});
