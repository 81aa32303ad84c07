#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = igeh::io::parse_model_json(text) {
        let again = igeh::io::parse_model_json(&igeh::io::model_to_json(&spec)).expect("written model parses");
        assert_eq!(again, spec);
    }
});
