#![no_main]

use abshrink::io::{read_readouts, write_readouts};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = read_readouts(text) {
            let again = read_readouts(&write_readouts(&rows)).expect("written readouts parse");
            assert_eq!(again.len(), rows.len());
        }
    }
});
