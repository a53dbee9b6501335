#![no_main]

use abshrink::kv::KvDoc;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(doc) = KvDoc::parse(text) {
            assert_eq!(
                KvDoc::parse(&doc.to_text()).map(|d| d.to_text()).ok(),
                Some(doc.to_text())
            );
        }
    }
});
