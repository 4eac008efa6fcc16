#![no_main]

use libfuzzer_sys::fuzz_target;
use wiggle_core::observation::TrackedPoints;

fuzz_target!(|data: &[u8]| {
    let Ok(t) = TrackedPoints::read_csv(data, 60.0) else { return };
    assert_eq!(t.data().len(), t.num_frames() * t.num_points());
    let mut once = Vec::new();
    t.write_csv(&mut once).expect("decoded track re-encodes");
    let mut twice = Vec::new();
    TrackedPoints::read_csv(once.as_slice(), 60.0)
        .expect("re-encoded track decodes")
        .write_csv(&mut twice)
        .unwrap();
    assert_eq!(once, twice);
});
