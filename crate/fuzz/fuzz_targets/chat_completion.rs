#![no_main]

use libfuzzer_sys::fuzz_target;
use synthforge_core::gateway::parse_chat_completion;

fuzz_target!(|data: &[u8]| {
    if let Ok(body) = serde_json::from_slice(data) {
        let _ = parse_chat_completion(&body);
    }
});
