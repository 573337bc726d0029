#![no_main]

use carpet_quant::experiment::RunConfig;
use carpet_quant::CarpetSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = CarpetSpec::from_json(text) {
        let total: f64 = spec.entries().iter().map(|e| e.p).sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert!(spec.m() >= 2 && spec.m() < spec.n());
    }
    if let Ok(cfg) = serde_json::from_str::<RunConfig>(text) {
        assert!(serde_json::from_str::<RunConfig>(text).is_ok_and(|again| again.seed == cfg.seed));
    }
});
