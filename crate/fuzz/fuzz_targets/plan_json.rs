#![no_main]

use libfuzzer_sys::fuzz_target;
use slip_core::transitions::{read_plan_json, write_plan_json};

fuzz_target!(|data: &[u8]| {
    if let Ok(plan) = read_plan_json(data) {
        let mut buf = Vec::new();
        write_plan_json(&plan, &mut buf).unwrap();
        assert_eq!(read_plan_json(buf.as_slice()).expect("written plan reads back"), plan);
    }
});
