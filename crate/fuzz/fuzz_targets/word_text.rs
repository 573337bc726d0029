#![no_main]

use carpet_quant::Word;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(w) = text.parse::<Word>() {
        let back: Word = w.to_string().parse().unwrap();
        assert_eq!(back, w);
    }
});
