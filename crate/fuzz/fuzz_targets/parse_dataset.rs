#![no_main]

use libfuzzer_sys::fuzz_target;
use pnl_core::dataset::{parse_dataset, write_dataset};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = parse_dataset(text, "fuzz") {
        let again = parse_dataset(&write_dataset(&d), "fuzz").expect("written dataset parses");
        assert_eq!(again, d);
    }
});
