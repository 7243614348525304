#![no_main]

use libfuzzer_sys::fuzz_target;
use synthforge_core::prompt::parse_observations;

fuzz_target!(|data: &str| {
    for o in parse_observations(data) {
        // spans must index the input
        assert!(data.get(o.span.clone()).is_some());
    }
});
