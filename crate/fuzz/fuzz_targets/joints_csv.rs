#![no_main]

use libfuzzer_sys::fuzz_target;
use wiggle_core::arm::JointTrajectory;

fuzz_target!(|data: &[u8]| {
    let Ok(j) = JointTrajectory::read_csv(data) else { return };
    let mut once = Vec::new();
    j.write_csv(&mut once).expect("decoded joints re-encode");
    let mut twice = Vec::new();
    JointTrajectory::read_csv(once.as_slice())
        .expect("re-encoded joints decode")
        .write_csv(&mut twice)
        .unwrap();
    assert_eq!(once, twice);
});
