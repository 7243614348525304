#![no_main]

use libfuzzer_sys::fuzz_target;
use synthforge_core::session::ScriptBook;

fuzz_target!(|data: &str| {
    let _ = ScriptBook::from_json(data);
});
