#![no_main]

use libfuzzer_sys::fuzz_target;
use wiggle_core::sim::{read_trajectory, write_trajectory};

fuzz_target!(|data: &[u8]| {
    let Ok(traj) = read_trajectory(data) else { return };
    let mut once = Vec::new();
    write_trajectory(&traj, &mut once).expect("decoded trajectory re-encodes");
    let again = read_trajectory(once.as_slice()).expect("re-encoded trajectory decodes");
    let mut twice = Vec::new();
    write_trajectory(&again, &mut twice).unwrap();
    assert_eq!(once, twice);
});
