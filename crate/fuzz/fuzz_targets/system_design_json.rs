#![no_main]

use libfuzzer_sys::fuzz_target;
use synthforge_core::checks::check_interfaces_graph;
use synthforge_core::design::{degrees, order_modules};
use synthforge_core::model::SystemDesignGraph;

fuzz_target!(|data: &[u8]| {
    if let Ok(graph) = serde_json::from_slice::<SystemDesignGraph>(data) {
        let _ = degrees(&graph);
        let _ = order_modules(&graph);
        let _ = check_interfaces_graph(&graph);
    }
});
