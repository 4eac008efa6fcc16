#![no_main]

use libfuzzer_sys::fuzz_target;
use wiggle_core::observation::FeatureTensor;

fuzz_target!(|data: &[u8]| {
    let Ok(f) = FeatureTensor::read(data) else { return };
    let mut once = Vec::new();
    f.write(&mut once).expect("decoded features re-encode");
    let mut twice = Vec::new();
    FeatureTensor::read(once.as_slice()).unwrap().write(&mut twice).unwrap();
    assert_eq!(once, twice);
});
