#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = igeh::io::parse_fcurve_csv(text) {
        let again = igeh::io::parse_fcurve_csv(&igeh::io::write_fcurve_csv(&rows)).expect("written curve parses");
        assert_eq!(again, rows);
    }
});
