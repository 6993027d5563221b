#![no_main]

use libfuzzer_sys::fuzz_target;
use slip_core::regions::{read_region_json, write_region_json};

fuzz_target!(|data: &[u8]| {
    if let Ok((g, p)) = read_region_json(data) {
        let mut buf = Vec::new();
        write_region_json(&g, &p, &mut buf).unwrap();
        let (back, q) = read_region_json(buf.as_slice()).expect("written region reads back");
        assert_eq!(back, g);
        assert_eq!(q, p);
    }
});
