#![no_main]

use libfuzzer_sys::fuzz_target;
use sharpzo_cli::logio::write_log;
use sharpzo_cli::read_log;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_log(data) else { return };
    // Anything accepted must survive a write/read cycle unchanged.
    let mut buf = Vec::new();
    write_log(&rows, &mut buf).unwrap();
    let again = read_log(&buf).expect("re-read of written log");
    assert_eq!(rows.len(), again.len());
    for (a, b) in rows.iter().zip(&again) {
        assert_eq!((a.step, a.stage, a.queries, a.active_coords), (b.step, b.stage, b.queries, b.active_coords));
        assert!(a.train_loss.to_bits() == b.train_loss.to_bits() || (a.train_loss.is_nan() && b.train_loss.is_nan()));
    }
});
