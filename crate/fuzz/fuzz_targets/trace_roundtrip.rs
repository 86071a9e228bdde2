#![no_main]

use libfuzzer_sys::fuzz_target;
use twinbeam::fit::{load_trace, write_trace};

fuzz_target!(|data: &[u8]| {
    let Ok(trace) = load_trace(data) else { return };
    let mut out = Vec::new();
    write_trace(&trace, &mut out).unwrap();
    let back = load_trace(out.as_slice()).unwrap();
    assert_eq!(back.frequencies_hz(), trace.frequencies_hz());
});
