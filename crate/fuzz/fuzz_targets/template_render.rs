#![no_main]

use std::collections::BTreeMap;

use libfuzzer_sys::fuzz_target;
use synthforge_core::prompt::{render_template, PromptTemplate, RoleTag};

fuzz_target!(|data: &str| {
    let t = PromptTemplate::new("fuzz", RoleTag::Generation, data);
    let bindings: BTreeMap<String, String> = t.slots.iter().map(|s| (s.clone(), "x".to_string())).collect();
    render_template(&t, &bindings).expect("all slots bound");
    let _ = PromptTemplate::with_slots("fuzz", RoleTag::Generation, data, &[]);
});
