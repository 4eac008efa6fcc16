#![no_main]

use libfuzzer_sys::fuzz_target;
use wiggle_core::nn::{read_weights, write_weights};

fuzz_target!(|data: &[u8]| {
    let Ok(net) = read_weights(data) else { return };
    let mut once = Vec::new();
    write_weights(&net, &mut once).expect("decoded weights re-encode");
    let again = read_weights(once.as_slice()).expect("re-encoded weights decode");
    assert_eq!(net.spec(), again.spec());
    let mut twice = Vec::new();
    write_weights(&again, &mut twice).unwrap();
    assert_eq!(once, twice);
});
