#![no_main]

use libfuzzer_sys::fuzz_target;
use twinbeam::config::Config;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = Config::parse_named(text, Some("fuzz.conf")) {
        for key in cfg.keys() {
            assert!(cfg.get(key).is_some());
            let _ = cfg.get_f64_list(key);
            let _ = cfg.get_bands(key);
        }
    }
});
