#![no_main]

use libfuzzer_sys::fuzz_target;
use synthforge_core::checks::source::scan;

fuzz_target!(|data: &str| {
    let _ = scan(data);
});
