#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(battery) = igeh::io::parse_battery_json(text) {
        let again = igeh::io::parse_battery_json(&igeh::io::battery_to_json(&battery)).expect("written battery parses");
        assert_eq!(again, battery);
    }
});
