#![no_main]

use libfuzzer_sys::fuzz_target;
use synthforge_core::gateway::parse_transcript;

fuzz_target!(|data: &str| {
    let _ = parse_transcript(data);
});
