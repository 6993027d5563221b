#![no_main]

use libfuzzer_sys::fuzz_target;
use slip_core::observables::{read_trajectory_csv, write_trajectory_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = read_trajectory_csv(data) {
        let mut buf = Vec::new();
        write_trajectory_csv(&t, &mut buf).unwrap();
        let back = read_trajectory_csv(buf.as_slice()).expect("written trajectory reads back");
        assert_eq!(back.samples, t.samples);
    }
});
