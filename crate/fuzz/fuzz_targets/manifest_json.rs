#![no_main]

use libfuzzer_sys::fuzz_target;
use sharpzo_cli::logio::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::from_json(text) {
        let _ = m.objective.dim();
    }
});
