#![no_main]

use fmhash::signal::ProcessedSignal;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = ProcessedSignal::parse(text) {
        let again = ProcessedSignal::parse(&x.to_text()).expect("written signal parses");
        assert_eq!(again.frames().len(), x.frames().len());
    }
});
