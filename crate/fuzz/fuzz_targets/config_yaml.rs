#![no_main]

use libfuzzer_sys::fuzz_target;
use synthforge_cli::config::WorkspaceConfig;

fuzz_target!(|data: &str| {
    let _ = WorkspaceConfig::parse(data);
});
