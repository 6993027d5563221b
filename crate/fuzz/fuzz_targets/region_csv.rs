#![no_main]

use libfuzzer_sys::fuzz_target;
use slip_core::regions::read_region_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_region_csv(data) {
        assert!(rows.iter().all(|r| r.member <= 1 && r.r.is_finite() && r.vy.is_finite()));
    }
});
