#![no_main]

use carpet_quant::carpet::parse_probability;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = parse_probability(text) {
        assert!(p.is_finite());
    }
});
