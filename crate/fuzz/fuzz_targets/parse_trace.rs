#![no_main]

use libfuzzer_sys::fuzz_target;
use twinbeam::fit::load_trace;

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = load_trace(data) {
        let f = trace.frequencies_hz();
        assert!(f.windows(2).all(|w| w[0] < w[1]));
    }
});
