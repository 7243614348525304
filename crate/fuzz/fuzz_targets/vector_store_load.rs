#![no_main]

//! Input: two little-endian u32 lengths, then meta.json, chunks.jsonl and
//! the rest as vectors.bin.

use libfuzzer_sys::fuzz_target;
use synthforge_core::rag::{parse_store, HashedEmbedder};

fuzz_target!(|data: &[u8]| {
    if data.len() < 8 {
        return;
    }
    let meta_len = u32::from_le_bytes(data[0..4].try_into().unwrap()) as usize;
    let chunks_len = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let rest = &data[8..];
    let Some(chunks_end) = meta_len.checked_add(chunks_len).filter(|n| *n <= rest.len()) else { return };
    let Ok(store) = parse_store(&rest[..meta_len], &rest[meta_len..chunks_end], &rest[chunks_end..]) else { return };
    // the embedder allocates one bucket per dimension
    if store.dimension() <= 4096 {
        let e = HashedEmbedder::new(store.dimension());
        let _ = store.query(&e, "fft twiddle", 3, &[]);
    }
});
