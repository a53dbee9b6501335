#![no_main]

use abshrink::io::{read_adjusted, write_adjusted};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = read_adjusted(text) {
            let again = read_adjusted(&write_adjusted(&rows)).expect("written rows parse");
            assert_eq!(again.len(), rows.len());
        }
    }
});
