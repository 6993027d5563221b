#![no_main]

use libfuzzer_sys::fuzz_target;
use slip_core::signal::{read_series_csv, write_series_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = read_series_csv(data) {
        let mut buf = Vec::new();
        write_series_csv(&s, &mut buf).unwrap();
        let back = read_series_csv(buf.as_slice()).expect("written series reads back");
        assert_eq!(back.values, s.values);
    }
});
