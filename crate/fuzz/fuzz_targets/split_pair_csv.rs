#![no_main]

use abshrink::io::{read_split_pairs, write_split_pairs};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(pairs) = read_split_pairs(text) {
            let _ = read_split_pairs(&write_split_pairs(&pairs));
        }
    }
});
