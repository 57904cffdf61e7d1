#![no_main]

use libfuzzer_sys::fuzz_target;
use pnl_core::records::{parse_records, report_table, write_records, TableFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = parse_records(text) {
        let _ = report_table(&r).render(TableFormat::Csv);
        let again = parse_records(&write_records(&r)).expect("written records parse");
        assert_eq!(write_records(&again), write_records(&r));
    }
});
