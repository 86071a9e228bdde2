#![no_main]

use libfuzzer_sys::fuzz_target;
use twinbeam::config::Config;
use twinbeam::fit::FitConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = Config::parse(text) {
        if let Ok(fit) = FitConfig::from_config(&cfg) {
            assert!(fit.validate().is_ok());
        }
    }
});
