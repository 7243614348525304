#![no_main]

use libfuzzer_sys::fuzz_target;
use synthforge_core::tools::FixtureSearch;

fuzz_target!(|data: &str| {
    let _ = FixtureSearch::from_json(data);
});
