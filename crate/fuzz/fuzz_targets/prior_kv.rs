#![no_main]

use abshrink::PriorModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(prior) = PriorModel::parse(text) {
        assert_eq!(PriorModel::parse(&prior.to_text()).expect("round trip"), prior);
        let _ = abshrink::posterior::summarize(&prior, 1.0, 1.0, 0.05);
    }
});
