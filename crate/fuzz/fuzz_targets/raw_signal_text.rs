#![no_main]

use fmhash::signal::{preprocess, RawSignal};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(raw) = RawSignal::parse(text) {
        let again = RawSignal::parse(&raw.to_text()).expect("written signal parses");
        assert_eq!(again.len(), raw.len());
        let _ = preprocess(&raw);
    }
});
