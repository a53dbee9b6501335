#![no_main]

use abshrink::methods::Adjuster;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = Adjuster::parse(text) {
        let _ = Adjuster::parse(&model.to_text()).expect("round trip");
        let _ = model.adjust(0.5, 1.0, None, 0.05);
    }
});
