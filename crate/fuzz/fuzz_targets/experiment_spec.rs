#![no_main]

use libfuzzer_sys::fuzz_target;
use sharpzo_cli::parse_spec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_spec(text) {
        assert!(!spec.methods.is_empty() && !spec.seeds.is_empty());
        for m in &spec.methods {
            assert!(m.config.validate().is_ok());
            assert_eq!(m.config.d, spec.objective.dim());
        }
    }
});
