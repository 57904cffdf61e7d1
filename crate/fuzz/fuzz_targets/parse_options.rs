#![no_main]

use libfuzzer_sys::fuzz_target;
use pnl_core::bench::ExperimentKind;
use pnl_core::metrics::Weighting;
use pnl_core::prenorm::PrenormLevel;
use pnl_core::records::TableFormat;
use pnl_core::synth::SingularMode;
use pnl_core::Method;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(mode) = s.parse::<SingularMode>() {
        assert!(mode.validate().is_ok());
        let _ = mode.to_string().parse::<SingularMode>().expect("displayed mode parses");
    }
    if let Ok(m) = s.parse::<Method>() {
        assert_eq!(m.name().parse::<Method>().ok(), Some(m));
    }
    if let Some(l) = PrenormLevel::parse(s) {
        assert_eq!(l.name(), s);
    }
    let _ = Weighting::parse(s);
    let _ = s.parse::<ExperimentKind>();
    let _ = s.parse::<TableFormat>();
});
