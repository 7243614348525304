#![no_main]

use libfuzzer_sys::fuzz_target;
use synthforge_core::checks::parse_port;

fuzz_target!(|data: &str| {
    let _ = parse_port(data);
});
