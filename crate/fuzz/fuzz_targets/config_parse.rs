#![no_main]

use libfuzzer_sys::fuzz_target;
use slip_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::parse(text) {
        let again = RunConfig::parse(&c.to_text()).expect("rendered config parses");
        assert_eq!(again, c);
    }
});
